//! `revrank`: generate simulated auction logs, evaluate revenue-aware
//! metrics, fit ranking functions and replay them against latent CTRs.
//!
//! Every command echoes its effective configuration as one JSON line on
//! stderr and writes its result as JSON on stdout.

mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use revrank::explicit::{
    fit_sgd, fit_staged, grid_search_beta, Calibration, ExplicitRankerParams, FitTargets, FitTrace, GridConfig,
    LogScorer, SgdConfig, DEFAULT_KNOTS,
};
use revrank::implicit::{fit_implicit, Activation, ImplicitConfig, MlpRanker};
use revrank::metrics::DEFAULT_TEMPERATURE;
use revrank::simulator::{
    generate, replay, run_confusion_trials, tally, BiasFn, ConfusionConfig, LatentTruth, SimConfig, SimError,
};
use revrank::{evaluate, load_dataset, save_dataset, Dataset, Format, Metric, PairScope, RankingFunction};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{data_error, CliError};

#[derive(Parser, Debug)]
#[command(
    name = "revrank",
    version,
    about = "Revenue-aware ranking metrics and optimizers for ad auctions"
)]
struct Cli {
    /// Worker threads for internal parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated auction log and its latent-CTR sidecar.
    Gen(GenArgs),
    /// Evaluate one metric of a scorer on a log.
    Eval(EvalArgs),
    /// Fit the explicit ranker by grid search or gradient ascent.
    FitExplicit(FitExplicitArgs),
    /// Train the neural ranker on SAUC with AdaGrad.
    FitImplicit(FitImplicitArgs),
    /// Replay a scorer against the latent CTRs and report RPM.
    Replay(ReplayArgs),
    /// Offline/online sign-agreement experiment.
    Confusion(ConfusionArgs),
}

#[derive(Args, Debug)]
struct SimOverrides {
    /// Simulator config JSON; flags below override its fields.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    #[arg(long)]
    impressions: Option<usize>,
    #[arg(long)]
    ads: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    /// `identity`, `power:EXPONENT` or `power:EXPONENT:SCALE`.
    #[arg(long, value_parser = parse_bias)]
    bias: Option<BiasFn>,
    /// Standard deviation of log-normal noise on reported eCTRs.
    #[arg(long)]
    ectr_noise: Option<f64>,
    #[arg(long)]
    bid_correlation: Option<f64>,
}

impl SimOverrides {
    fn resolve(&self, base: SimConfig) -> Result<SimConfig, CliError> {
        let mut c = match &self.sim_config {
            Some(p) => read_json::<SimConfig>(p)?,
            None => base,
        };
        if let Some(v) = self.impressions {
            c.n_impressions = v;
        }
        if let Some(v) = self.ads {
            c.ads_per_impression = v;
        }
        if let Some(v) = self.slots {
            c.slots = v;
        }
        if let Some(v) = &self.bias {
            c.bias = v.clone();
        }
        if let Some(v) = self.ectr_noise {
            c.ectr_noise = v;
        }
        if let Some(v) = self.bid_correlation {
            c.bids.ctr_correlation = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_bias(s: &str) -> Result<BiasFn, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("bad number '{p}': {e}"));
    match parts.as_slice() {
        ["identity"] => Ok(BiasFn::Identity),
        ["power", e] => Ok(BiasFn::Power {
            exponent: num(e)?,
            scale: 1.0,
        }),
        ["power", e, k] => Ok(BiasFn::Power {
            exponent: num(e)?,
            scale: num(k)?,
        }),
        _ => Err(format!(
            "unknown bias '{s}' (expected identity, power:EXP or power:EXP:SCALE)"
        )),
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    sim: SimOverrides,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output log path.
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,
    /// Latent-CTR sidecar; defaults to `<out stem>.truth.jsonl`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Auction log to read.
    #[arg(long)]
    data: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<Format>,
}

impl DataArgs {
    fn format(&self) -> Format {
        self.format.unwrap_or_else(|| Format::from_path(&self.data))
    }

    fn load(&self) -> Result<Dataset, CliError> {
        load_dataset(&self.data, self.format()).map_err(|e| data_error(&self.data, e))
    }
}

#[derive(Args, Debug)]
struct ScorerArgs {
    /// Explicit ranker parameters JSON (`{beta, knots_x, knots_y}`).
    #[arg(long, conflicts_with = "model")]
    params: Option<PathBuf>,
    /// Neural ranker JSON written by `fit-implicit`.
    #[arg(long)]
    model: Option<PathBuf>,
}

enum Scorer {
    Explicit(ExplicitRankerParams),
    Implicit(MlpRanker),
}

impl Scorer {
    fn describe(&self, args: &ScorerArgs) -> Value {
        match (self, &args.params, &args.model) {
            (Scorer::Explicit(_), Some(p), _) => json!({"kind": "explicit", "path": p}),
            (Scorer::Implicit(_), _, Some(p)) => json!({"kind": "implicit", "path": p}),
            _ => json!({"kind": "baseline", "beta": 1.0, "calibration": "identity"}),
        }
    }
}

/// Explicit params rank on log scores, which preserves their ordering.
impl RankingFunction for Scorer {
    fn score(&self, rec: &revrank::AuctionRecord) -> f64 {
        match self {
            Scorer::Explicit(p) => LogScorer(p).score(rec),
            Scorer::Implicit(n) => n.score(rec),
        }
    }
}

impl ScorerArgs {
    fn load(&self) -> Result<Scorer, CliError> {
        if let Some(p) = &self.params {
            return Ok(Scorer::Explicit(read_json(p)?));
        }
        if let Some(p) = &self.model {
            let net: MlpRanker = read_json(p)?;
            net.validate()?;
            return Ok(Scorer::Implicit(net));
        }
        Ok(Scorer::Explicit(ExplicitRankerParams::baseline()))
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scope {
    Pooled,
    Within,
}

impl From<Scope> for PairScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Pooled => PairScope::Pooled,
            Scope::Within => PairScope::WithinImpression,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// `auc`, `auc_r`, `auc_r_asym` or `sauc`.
    #[arg(long, default_value = "auc_r")]
    metric: String,
    /// SAUC temperature.
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long, value_enum, default_value_t = Scope::Pooled)]
    scope: Scope,
}

fn parse_metric(name: &str, temperature: f64) -> Result<Metric, CliError> {
    match name.parse::<Metric>().map_err(CliError::Usage)? {
        Metric::Sauc { .. } => Ok(Metric::Sauc { temperature }),
        m => Ok(m),
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FitMode {
    Grid,
    Sgd,
    Staged,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Targets {
    Joint,
    Beta,
    Calibration,
}

impl From<Targets> for FitTargets {
    fn from(t: Targets) -> Self {
        match t {
            Targets::Joint => FitTargets::Joint,
            Targets::Beta => FitTargets::BetaOnly,
            Targets::Calibration => FitTargets::CalibrationOnly,
        }
    }
}

#[derive(Args, Debug)]
struct FitExplicitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = FitMode::Grid)]
    mode: FitMode,
    /// Starting parameters; defaults to β = 1 with identity knots at eCTR quantiles.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_KNOTS)]
    knots: usize,
    #[arg(long, default_value_t = GridConfig::default().beta_min)]
    beta_min: f64,
    #[arg(long, default_value_t = GridConfig::default().beta_max)]
    beta_max: f64,
    #[arg(long, default_value_t = GridConfig::default().step)]
    step: f64,
    #[arg(long, value_enum, default_value_t = Scope::Pooled)]
    scope: Scope,
    #[arg(long, default_value_t = SgdConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = SgdConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = SgdConfig::default().temperature)]
    temperature: f64,
    #[arg(long, default_value_t = SgdConfig::default().max_epochs)]
    max_epochs: usize,
    #[arg(long, default_value_t = SgdConfig::default().rel_tol)]
    rel_tol: f64,
    #[arg(long, value_enum, default_value_t = Targets::Joint)]
    targets: Targets,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the fitted parameters JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the `step,param,objective,metric` trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Act {
    Tanh,
    Softplus,
    Linear,
}

impl From<Act> for Activation {
    fn from(a: Act) -> Self {
        match a {
            Act::Tanh => Activation::Tanh,
            Act::Softplus => Activation::Softplus,
            Act::Linear => Activation::Linear,
        }
    }
}

#[derive(Args, Debug)]
struct FitImplicitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Three hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = ImplicitConfig::default().hidden)]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Act::Tanh)]
    activation: Act,
    #[arg(long, default_value_t = ImplicitConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = ImplicitConfig::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = ImplicitConfig::default().temperature)]
    temperature: f64,
    #[arg(long, default_value_t = ImplicitConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = ImplicitConfig::default().max_epochs)]
    max_epochs: usize,
    #[arg(long, default_value_t = ImplicitConfig::default().rel_tol)]
    rel_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Latent-CTR sidecar; defaults to `<data stem>.truth.jsonl`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    slots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ConfusionArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    sim: SimOverrides,
    #[arg(long)]
    online_impressions: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Metrics to tally, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "auc,auc_r")]
    metrics: Vec<String>,
    /// SAUC temperature when `sauc` is among the metrics.
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long)]
    beta_jitter: Option<f64>,
    #[arg(long)]
    calibration_jitter: Option<f64>,
    #[arg(long)]
    baseline_calibration_jitter: Option<f64>,
    #[arg(long, value_enum)]
    scope: Option<Scope>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-trial deltas as CSV.
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_trace(path: &Path, trace: &FitTrace) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn truth_path_for(data: &Path) -> PathBuf {
    data.with_extension("truth.jsonl")
}

fn load_truth(path: &Path) -> Result<LatentTruth, CliError> {
    LatentTruth::load(path).map_err(|e| match e {
        SimError::Data(revrank::DataError::Io(source)) => CliError::io(path, source),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

fn echo_config(config: &Value) {
    eprintln!("{}", serde_json::to_string(config).expect("serializable"));
}

fn emit(result: &Value) {
    // A closed pipe downstream is not an error worth reporting.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(result).expect("serializable"));
}

fn cmd_gen(a: &GenArgs) -> Result<Value, CliError> {
    let mut sim = a.sim.resolve(SimConfig::default())?;
    sim.seed = a.seed;
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.out));
    let truth_path = a.truth.clone().unwrap_or_else(|| truth_path_for(&a.out));
    echo_config(&json!({
        "command": "gen",
        "sim": sim,
        "out": a.out,
        "truth": truth_path,
        "format": format,
    }));
    let (ds, truth) = generate(&sim)?;
    save_dataset(&ds, &a.out, format).map_err(|e| data_error(&a.out, e))?;
    truth.save(&truth_path).map_err(|e| match e {
        SimError::Data(revrank::DataError::Io(source)) => CliError::io(&truth_path, source),
        other => other.into(),
    })?;
    Ok(json!({
        "records": ds.len(),
        "impressions": ds.impressions().len(),
        "clicks": ds.n_clicks(),
        "data": a.out,
        "truth": truth_path,
    }))
}

fn cmd_eval(a: &EvalArgs) -> Result<Value, CliError> {
    let metric = parse_metric(&a.metric, a.temperature)?;
    let scorer = a.scorer.load()?;
    echo_config(&json!({
        "command": "eval",
        "data": a.data.data,
        "format": a.data.format(),
        "scorer": scorer.describe(&a.scorer),
        "metric": metric.name(),
        "temperature": a.temperature,
        "scope": PairScope::from(a.scope),
    }));
    let ds = a.data.load()?;
    let report = evaluate(&ds, &scorer, metric, a.scope.into()).map_err(error::metric_or_validation)?;
    Ok(serde_json::to_value(report).expect("serializable"))
}

fn cmd_fit_explicit(a: &FitExplicitArgs) -> Result<Value, CliError> {
    let grid = GridConfig {
        beta_min: a.beta_min,
        beta_max: a.beta_max,
        step: a.step,
        scope: a.scope.into(),
    };
    let sgd = SgdConfig {
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        temperature: a.temperature,
        max_epochs: a.max_epochs,
        rel_tol: a.rel_tol,
        seed: a.seed,
        targets: a.targets.into(),
    };
    let mut config = json!({
        "command": "fit-explicit",
        "data": a.data.data,
        "format": a.data.format(),
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "init": a.init,
        "knots": a.knots,
        "out": a.out,
        "trace": a.trace,
    });
    if a.mode == FitMode::Grid {
        config["grid"] = json!(grid);
    } else {
        config["sgd"] = json!(sgd);
    }
    echo_config(&config);

    let ds = a.data.load()?;
    let init = match &a.init {
        Some(p) => read_json::<ExplicitRankerParams>(p)?,
        None => {
            let ectrs: Vec<f64> = ds.records().iter().map(|r| r.ectr).collect();
            ExplicitRankerParams::new(1.0, Calibration::from_quantiles(&ectrs, a.knots)?)?
        }
    };
    let (params, trace, mut result) = match a.mode {
        FitMode::Grid => {
            let res = grid_search_beta(&ds, &init.calibration, &grid)?;
            let params = ExplicitRankerParams::new(res.beta, init.calibration.clone())?;
            let result = json!({"auc_r": res.report});
            (params, res.trace, result)
        }
        FitMode::Sgd | FitMode::Staged => {
            let (params, trace) = if a.mode == FitMode::Sgd {
                fit_sgd(&ds, &init, &sgd)?
            } else {
                fit_staged(&ds, &init, &sgd)?
            };
            let scorer = LogScorer(&params);
            let s = evaluate(
                &ds,
                &scorer,
                Metric::Sauc {
                    temperature: a.temperature,
                },
                PairScope::Pooled,
            )
            .map_err(error::metric_or_validation)?;
            let r = evaluate(&ds, &scorer, Metric::AucR, PairScope::Pooled).map_err(error::metric_or_validation)?;
            (params, trace, json!({"sauc": s, "auc_r": r}))
        }
    };
    if let Some(p) = &a.out {
        write_json(p, &params)?;
    }
    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    result["params"] = json!(params);
    result["trace_rows"] = json!(trace.iterations.len());
    Ok(result)
}

fn cmd_fit_implicit(a: &FitImplicitArgs) -> Result<Value, CliError> {
    let hidden: [usize; 3] = a
        .hidden
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Usage("--hidden needs exactly three widths".into()))?;
    let cfg = ImplicitConfig {
        hidden,
        activation: a.activation.into(),
        learning_rate: a.learning_rate,
        epsilon: a.epsilon,
        temperature: a.temperature,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        rel_tol: a.rel_tol,
        seed: a.seed,
    };
    echo_config(&json!({
        "command": "fit-implicit",
        "data": a.data.data,
        "format": a.data.format(),
        "config": cfg,
        "out": a.out,
        "trace": a.trace,
    }));
    let ds = a.data.load()?;
    let (net, trace) = fit_implicit(&ds, &cfg)?;
    if let Some(p) = &a.out {
        write_json(p, &net)?;
    }
    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    let s = evaluate(
        &ds,
        &net,
        Metric::Sauc {
            temperature: a.temperature,
        },
        PairScope::Pooled,
    )
    .map_err(error::metric_or_validation)?;
    let r = evaluate(&ds, &net, Metric::AucR, PairScope::Pooled).map_err(error::metric_or_validation)?;
    Ok(json!({
        "sauc": s,
        "auc_r": r,
        "epochs": trace.iterations.last().map_or(0, |r| r.step),
        "trace_rows": trace.iterations.len(),
    }))
}

fn cmd_replay(a: &ReplayArgs) -> Result<Value, CliError> {
    let scorer = a.scorer.load()?;
    let truth_path = a.truth.clone().unwrap_or_else(|| truth_path_for(&a.data.data));
    echo_config(&json!({
        "command": "replay",
        "data": a.data.data,
        "format": a.data.format(),
        "truth": truth_path,
        "scorer": scorer.describe(&a.scorer),
        "slots": a.slots,
        "seed": a.seed,
    }));
    let ds = a.data.load()?;
    let truth = load_truth(&truth_path)?;
    let res = replay(&ds, &truth, &scorer, a.slots, a.seed)?;
    Ok(serde_json::to_value(res).expect("serializable"))
}

fn cmd_confusion(a: &ConfusionArgs) -> Result<Value, CliError> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ConfusionConfig>(p)?,
        None => ConfusionConfig::default(),
    };
    cfg.sim = a.sim.resolve(cfg.sim)?;
    if let Some(v) = a.online_impressions {
        cfg.online_impressions = v;
    }
    if let Some(v) = a.trials {
        cfg.n_trials = v;
    }
    if let Some(v) = a.beta_jitter {
        cfg.beta_jitter = v;
    }
    if let Some(v) = a.calibration_jitter {
        cfg.calibration_jitter = v;
    }
    if let Some(v) = a.baseline_calibration_jitter {
        cfg.baseline_calibration_jitter = v;
    }
    if let Some(v) = a.scope {
        cfg.scope = v.into();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let metrics: Vec<Metric> = a
        .metrics
        .iter()
        .map(|m| parse_metric(m, a.temperature))
        .collect::<Result<_, _>>()?;
    if metrics.is_empty() {
        return Err(CliError::Usage("--metrics needs at least one metric".into()));
    }
    echo_config(&json!({
        "command": "confusion",
        "config": cfg,
        "metrics": metrics.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "temperature": a.temperature,
        "outcomes": a.outcomes,
    }));
    let outcomes = run_confusion_trials(&cfg, &metrics)?;
    if let Some(p) = &a.outcomes {
        let file = File::create(p).map_err(|e| CliError::io(p, e))?;
        let mut w = BufWriter::new(file);
        let mut rows = String::from("trial,metric,baseline_beta,candidate_beta,offline_delta,online_delta\n");
        for (m, per) in metrics.iter().zip(&outcomes) {
            for (t, o) in per.iter().enumerate() {
                rows.push_str(&format!(
                    "{t},{},{},{},{},{}\n",
                    m.name(),
                    o.baseline_beta,
                    o.candidate_beta,
                    o.offline_delta,
                    o.online_delta
                ));
            }
        }
        w.write_all(rows.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(p, e))?;
    }
    let mut result = serde_json::Map::new();
    for (m, per) in metrics.iter().zip(&outcomes) {
        let matrix = tally(per)?;
        result.insert(
            m.name().to_string(),
            json!({
                "matrix": matrix,
                "agreement_rate": matrix.agreement_rate(),
                "disagreement_rate": matrix.disagreement_rate(),
            }),
        );
    }
    Ok(Value::Object(result))
}

fn run(cli: &Cli) -> Result<Value, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Eval(a) => cmd_eval(a),
        Command::FitExplicit(a) => cmd_fit_explicit(a),
        Command::FitImplicit(a) => cmd_fit_implicit(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Confusion(a) => cmd_confusion(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(result) => {
            emit(&result);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
