//! End-to-end acceptance checks. Prints one PASS/FAIL line per check
//! and exits non-zero if any fails. Pass check numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 5 9`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::gradcheck::{explicit_max_error, implicit_max_error};
use common::*;
use rand::Rng;
use revrank::explicit::{
    beta_grid, fit_sgd, grid_search_beta, Calibration, ExplicitRankerParams, FitTargets, GridConfig, LogScorer,
    SgdConfig,
};
use revrank::implicit::{fit_implicit, Activation, ImplicitConfig};
use revrank::metrics::{auc, auc_r, auc_r_asym, sauc, Metric};
use revrank::simulator::{
    expected_rpm_beta_sweep, generate, replay, replay_beta_sweep, run_confusion_trials, tally, BiasFn, ConfusionConfig,
    SimConfig,
};
use revrank::{score_records, Dataset, RankingFunction};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn quantile_calibration(ds: &Dataset) -> Calibration {
    let ectrs: Vec<f64> = ds.records().iter().map(|r| r.ectr).collect();
    Calibration::from_quantiles(&ectrs, revrank::explicit::DEFAULT_KNOTS).unwrap()
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Mean over `k` click seeds of the paired RPM ratio `a / b`.
fn mean_replay_ratio(
    ds: &Dataset,
    truth: &revrank::simulator::LatentTruth,
    a: &dyn RankingFunction,
    b: &dyn RankingFunction,
    k: u64,
) -> f64 {
    let sum: f64 = (0..k)
        .map(|seed| replay(ds, truth, a, 1, seed).unwrap().rpm / replay(ds, truth, b, 1, seed).unwrap().rpm)
        .sum();
    sum / k as f64
}

/// Brute-force pair sums carried out in 256-bit arithmetic, so the
/// reference is far more accurate than any f64 evaluation.
mod exact {
    use astro_float::{BigFloat, Consts, RoundingMode};
    use revrank::ScoredRecord;

    const P: usize = 256;
    const RM: RoundingMode = RoundingMode::ToEven;

    fn big(x: f64) -> BigFloat {
        BigFloat::from_f64(x, P)
    }

    fn to_f64(x: &BigFloat) -> f64 {
        format!("{x}").parse().expect("decimal output")
    }

    /// `(auc_r, auc_r_asym, sauc)` for one temperature.
    pub fn real_valued(r: &[ScoredRecord], t: f64, cc: &mut Consts) -> [f64; 3] {
        let zero = big(0.0);
        let (mut g, mut asym, mut soft, mut z) = (zero.clone(), zero.clone(), zero.clone(), zero);
        let two_t = big(2.0 * t);
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                let dy = big(r[i].y).sub(&big(r[j].y), P, RM);
                if dy.is_zero() {
                    continue;
                }
                // orient each pair so the higher label comes first
                let (dy, ds) = if dy.is_negative() {
                    (dy.neg(), big(r[j].score).sub(&big(r[i].score), P, RM))
                } else {
                    (dy, big(r[i].score).sub(&big(r[j].score), P, RM))
                };
                z = z.add(&dy, P, RM);
                if ds.is_positive() && !ds.is_zero() {
                    g = g.add(&dy, P, RM);
                    asym = asym.add(&dy, P, RM);
                } else if ds.is_negative() && !ds.is_zero() {
                    g = g.sub(&dy, P, RM);
                }
                let th = ds.div(&two_t, P, RM).tanh(P, RM, cc);
                soft = soft.add(&th.mul(&dy, P, RM), P, RM);
            }
        }
        [g, asym, soft].map(|v| to_f64(&v.div(&z, P, RM)))
    }
}

fn metric_oracles() -> Verdict {
    let mut cc = astro_float::Consts::new().unwrap();
    let mut rng = rng(101);
    let mut vs_f64 = [0.0f64; 4];
    let mut vs_exact = [0.0f64; 4];
    let mut slowest = Duration::ZERO;
    let datasets = 150;
    for i in 0..datasets {
        let n = rng.random_range(2..=200);
        let recs = scored_defined(&mut rng, n, i % 2 == 0);
        let t = [0.3, 1.0, 2.0][i % 3];
        let start = Instant::now();
        let got = [
            auc(&recs).unwrap().value,
            auc_r(&recs).unwrap().value,
            auc_r_asym(&recs).unwrap().value,
            sauc(&recs, t).unwrap().value,
        ];
        slowest = slowest.max(start.elapsed());
        let brute = [
            brute_auc(&recs),
            brute_auc_r(&recs),
            brute_auc_r_asym(&recs),
            brute_sauc(&recs, t),
        ];
        let [g, asym, soft] = exact::real_valued(&recs, t, &mut cc);
        let reference = [brute[0], g, asym, soft];
        for k in 0..4 {
            vs_f64[k] = vs_f64[k].max(rel_err(got[k], brute[k]));
            vs_exact[k] = vs_exact[k].max(rel_err(got[k], reference[k]));
        }
    }
    let max = vs_exact.iter().cloned().fold(0.0, f64::max);
    let fmt = |w: &[f64; 4]| {
        format!(
            "auc {:.1e} auc_r {:.1e} auc_r_asym {:.1e} sauc {:.1e}",
            w[0], w[1], w[2], w[3]
        )
    };
    verdict(
        max < 1e-12 && slowest < Duration::from_secs(1),
        format!(
            "{datasets} datasets, max rel err vs 256-bit brute force: {}; vs f64 brute force: {}; slowest {:.2}ms",
            fmt(&vs_exact),
            fmt(&vs_f64),
            slowest.as_secs_f64() * 1e3
        ),
    )
}

fn boundedness() -> Verdict {
    let mut rng = rng(102);
    let datasets = 10_000;
    let (mut out_of_range, mut not_perfect, mut not_reversed) = (0, 0, 0);
    for _ in 0..datasets {
        let n = rng.random_range(2..=60);
        let tie_free = rng.random_bool(0.5);
        let mut recs = scored_defined(&mut rng, n, tie_free);
        let v = auc_r(&recs).unwrap().value;
        if !(-1.0..=1.0).contains(&v) {
            out_of_range += 1;
        }
        for r in recs.iter_mut() {
            r.y = rng.random_range(0.0..10.0);
            r.score = r.y;
        }
        if auc_r(&recs).unwrap().value != 1.0 {
            not_perfect += 1;
        }
        for r in recs.iter_mut() {
            r.score = -r.y;
        }
        if auc_r(&recs).unwrap().value != -1.0 {
            not_reversed += 1;
        }
    }
    verdict(
        out_of_range + not_perfect + not_reversed == 0,
        format!(
            "{datasets} datasets: {out_of_range} outside [-1,1], {not_perfect} perfect orders != 1, \
             {not_reversed} reversed orders != -1"
        ),
    )
}

fn sauc_limit() -> Verdict {
    let mut rng = rng(103);
    let datasets = 60;
    let mut worst: f64 = 0.0;
    for _ in 0..datasets {
        let n = rng.random_range(10..=300);
        let recs = scored_defined(&mut rng, n, true);
        let hard = auc_r(&recs).unwrap().value;
        let soft = sauc(&recs, 1e-4).unwrap().value;
        worst = worst.max((soft - hard).abs());
    }
    verdict(
        worst < 1e-3,
        format!("{datasets} tie-free datasets, max |sauc(T=1e-4) - auc_r| = {worst:.2e}"),
    )
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let seeds = 24;
    let mut explicit: f64 = 0.0;
    let mut implicit: f64 = 0.0;
    for seed in 0..seeds {
        for t in [1.0, 0.3] {
            explicit = explicit.max(explicit_max_error(seed, t));
        }
        for hidden in [[3, 3, 2], [8, 6, 4]] {
            for act in [Activation::Tanh, Activation::Softplus] {
                implicit = implicit.max(implicit_max_error(seed, hidden, act));
            }
        }
    }
    let took = start.elapsed();
    verdict(
        explicit < 1e-5 && implicit < 1e-4 && took < Duration::from_secs(30),
        format!(
            "{seeds} seeds: explicit max rel err {explicit:.2e}, implicit {implicit:.2e}; {}",
            secs(took)
        ),
    )
}

fn optimizer_equivalence() -> Verdict {
    let start = Instant::now();
    let (ds, _) = generate(&SimConfig::default()).unwrap();
    let cal = quantile_calibration(&ds);
    let grid = grid_search_beta(&ds, &cal, &GridConfig::default()).unwrap();
    let init = ExplicitRankerParams::new(1.0, cal).unwrap();
    let cfg = SgdConfig {
        targets: FitTargets::BetaOnly,
        ..SgdConfig::default()
    };
    let (fit, trace) = fit_sgd(&ds, &init, &cfg).unwrap();
    let sgd_auc_r = auc_r(&score_records(&ds, &LogScorer(&fit))).unwrap().value;
    let took = start.elapsed();
    let db = (fit.beta - grid.beta).abs();
    let da = (sgd_auc_r - grid.report.value).abs();
    verdict(
        db <= 0.04 && da <= 1e-2 && took < Duration::from_secs(120),
        format!(
            "grid beta {:.2} auc_r {:.5}; sgd beta {:.4} auc_r {:.5} after {} epochs; |dbeta| {db:.4}, |dauc_r| {da:.2e}; {}",
            grid.beta,
            grid.report.value,
            fit.beta,
            sgd_auc_r,
            trace.iterations.iter().map(|r| r.step).max().unwrap_or(0),
            secs(took)
        ),
    )
}

fn explicit_implicit_convergence() -> Verdict {
    let start = Instant::now();
    let (train, _) = generate(&SimConfig::default()).unwrap();
    let (test, truth) = generate(&SimConfig {
        seed: 1000,
        ..SimConfig::default()
    })
    .unwrap();
    let cal = quantile_calibration(&train);
    let grid = grid_search_beta(&train, &cal, &GridConfig::default()).unwrap();
    let explicit = ExplicitRankerParams::new(grid.beta, cal).unwrap();
    let (net, _) = fit_implicit(&train, &ImplicitConfig::default()).unwrap();
    let e = auc_r(&score_records(&test, &LogScorer(&explicit))).unwrap().value;
    let i = auc_r(&score_records(&test, &net)).unwrap().value;
    let ratio = mean_replay_ratio(&test, &truth, &net, &LogScorer(&explicit), 20);
    let took = start.elapsed();
    verdict(
        (i - e).abs() <= 1e-2 && (ratio - 1.0).abs() <= 0.02 && took < Duration::from_secs(300),
        format!(
            "held-out auc_r explicit {e:.5} (grid beta {:.2}) implicit {i:.5}, gap {:.2e}; \
             replay RPM implicit/explicit {ratio:.4} (20 click seeds); {}",
            grid.beta,
            i - e,
            secs(took)
        ),
    )
}

fn confusion_direction() -> Verdict {
    let start = Instant::now();
    let cfg = ConfusionConfig {
        sim: SimConfig {
            bias: BiasFn::Power {
                exponent: 2.0,
                scale: 1.0,
            },
            ..SimConfig::default()
        },
        online_impressions: 200_000,
        n_trials: 1120,
        ..ConfusionConfig::default()
    };
    let outcomes = run_confusion_trials(&cfg, &[Metric::Auc, Metric::AucR]).unwrap();
    let hard = tally(&outcomes[0]).unwrap();
    let real = tally(&outcomes[1]).unwrap();
    let (d_auc, d_auc_r) = (hard.disagreement_rate(), real.disagreement_rate());
    let took = start.elapsed();
    verdict(
        d_auc_r < d_auc && d_auc_r < 0.05 && took < Duration::from_secs(600),
        format!(
            "1120 trials: disagreement auc {:.2}% auc_r {:.2}%; auc cells {:?}, auc_r cells {:?}; {}",
            100.0 * d_auc,
            100.0 * d_auc_r,
            hard.cells(),
            real.cells(),
            secs(took)
        ),
    )
}

fn revenue_lift() -> Verdict {
    let start = Instant::now();
    let sim = |seed| SimConfig {
        seed,
        bias: BiasFn::Power {
            exponent: 2.0,
            scale: 1.0,
        },
        ..SimConfig::default()
    };
    let baseline = ExplicitRankerParams::baseline();
    let mut lifts = Vec::new();
    for seed in 0..30 {
        let (train, _) = generate(&sim(seed)).unwrap();
        let (test, truth) = generate(&sim(seed + 1000)).unwrap();
        let cal = quantile_calibration(&train);
        let grid = grid_search_beta(&train, &cal, &GridConfig::default()).unwrap();
        let fitted = ExplicitRankerParams::new(grid.beta, cal).unwrap();
        lifts.push(mean_replay_ratio(&test, &truth, &LogScorer(&fitted), &LogScorer(&baseline), 10) - 1.0);
    }
    let positive = lifts.iter().filter(|&&l| l > 0.0).count();
    let mean = lifts.iter().sum::<f64>() / lifts.len() as f64;
    let min = lifts.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        positive >= 28,
        format!(
            "RPM lift over baseline positive in {positive}/30 seeds; mean {:+.2}%, min {:+.2}%; {}",
            100.0 * mean,
            100.0 * min,
            secs(start.elapsed())
        ),
    )
}

fn beta_under_noise() -> Verdict {
    let start = Instant::now();
    let betas = beta_grid(0.1, 2.0, 0.02).unwrap();
    let identity = Calibration::identity();
    let mut clean_expected = Vec::new();
    let mut clean_sampled = Vec::new();
    let mut noisy_expected = Vec::new();
    let mut noisy_sampled = Vec::new();
    for seed in 0..30 {
        let (ds, truth) = generate(&SimConfig {
            seed,
            ..SimConfig::default()
        })
        .unwrap();
        clean_expected.push(betas[argmax(&expected_rpm_beta_sweep(&ds, &truth, &identity, &betas, 1).unwrap())]);
        let sampled: Vec<f64> = replay_beta_sweep(&ds, &truth, &identity, &betas, 1, seed)
            .unwrap()
            .iter()
            .map(|r| r.rpm)
            .collect();
        clean_sampled.push(betas[argmax(&sampled)]);

        let (ds, truth) = generate(&SimConfig {
            seed,
            ectr_noise: 0.5,
            ..SimConfig::default()
        })
        .unwrap();
        noisy_expected.push(betas[argmax(&expected_rpm_beta_sweep(&ds, &truth, &identity, &betas, 1).unwrap())]);
        let sampled: Vec<f64> = replay_beta_sweep(&ds, &truth, &identity, &betas, 1, seed)
            .unwrap()
            .iter()
            .map(|r| r.rpm)
            .collect();
        noisy_sampled.push(betas[argmax(&sampled)]);
    }
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:.2}, {hi:.2}]")
    };
    let clean_ok = clean_expected
        .iter()
        .filter(|b| (*b - 1.0).abs() <= 0.06 + 1e-9)
        .count();
    let noisy_ok = noisy_expected
        .iter()
        .chain(&noisy_sampled)
        .filter(|&&b| b < 1.0)
        .count();
    verdict(
        clean_ok == 30 && noisy_ok == 60,
        format!(
            "noiseless expected-replay beta* {} ({clean_ok}/30 within 0.06 of 1); noise 0.5 beta* expected {} \
             sampled {} ({noisy_ok}/60 below 1); noiseless sampled beta* {} (not asserted); {}",
            range(&clean_expected),
            range(&noisy_expected),
            range(&noisy_sampled),
            range(&clean_sampled),
            secs(start.elapsed())
        ),
    )
}

/// Runs every stochastic command in `dir`, returning stdout text per command.
fn cli_pass(dir: &Path, threads: Option<&str>) -> Vec<(String, Vec<u8>)> {
    let run = |args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_revrank"));
        cmd.current_dir(dir);
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        let out = cmd.args(args).output().expect("binary runs");
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        (args.join(" "), out.stdout)
    };
    vec![
        run(&[
            "gen",
            "--impressions",
            "2000",
            "--seed",
            "7",
            "--bias",
            "power:2",
            "--out",
            "d.csv",
        ]),
        run(&["eval", "--data", "d.csv", "--metric", "sauc", "--temperature", "0.1"]),
        run(&[
            "fit-explicit",
            "--data",
            "d.csv",
            "--out",
            "grid.json",
            "--trace",
            "grid.csv",
        ]),
        run(&[
            "fit-explicit",
            "--data",
            "d.csv",
            "--mode",
            "staged",
            "--max-epochs",
            "3",
            "--seed",
            "3",
            "--out",
            "sgd.json",
            "--trace",
            "sgd.csv",
        ]),
        run(&[
            "fit-implicit",
            "--data",
            "d.csv",
            "--max-epochs",
            "3",
            "--seed",
            "5",
            "--out",
            "net.json",
            "--trace",
            "net.csv",
        ]),
        run(&["replay", "--data", "d.csv", "--params", "sgd.json", "--seed", "11"]),
        run(&[
            "replay", "--data", "d.csv", "--model", "net.json", "--seed", "11", "--slots", "2",
        ]),
        run(&[
            "confusion",
            "--impressions",
            "300",
            "--online-impressions",
            "2000",
            "--trials",
            "16",
            "--metrics",
            "auc,auc_r,sauc",
            "--seed",
            "4",
            "--outcomes",
            "trials.csv",
        ]),
    ]
}

const CLI_FILES: &[&str] = &[
    "d.csv",
    "d.truth.jsonl",
    "grid.json",
    "grid.csv",
    "sgd.json",
    "sgd.csv",
    "net.json",
    "net.csv",
    "trials.csv",
];

fn cli_determinism() -> Verdict {
    let start = Instant::now();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let passes = [
        cli_pass(dirs[0].path(), None),
        cli_pass(dirs[1].path(), None),
        cli_pass(dirs[2].path(), Some("4")),
    ];
    let mut mismatches = Vec::new();
    for (k, (name, stdout)) in passes[0].iter().enumerate() {
        for (p, pass) in passes.iter().enumerate().skip(1) {
            if &pass[k].1 != stdout {
                mismatches.push(format!("stdout of `{name}` (run {p})"));
            }
        }
    }
    for file in CLI_FILES {
        let first = std::fs::read(dirs[0].path().join(file)).unwrap();
        for (p, dir) in dirs.iter().enumerate().skip(1) {
            if std::fs::read(dir.path().join(file)).unwrap() != first {
                mismatches.push(format!("{file} (run {p})"));
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{} commands, {} files compared across default, repeat and --threads 4 runs; mismatches: {}; {}",
            passes[0].len(),
            CLI_FILES.len(),
            if mismatches.is_empty() {
                "none".to_string()
            } else {
                mismatches.join(", ")
            },
            secs(start.elapsed())
        ),
    )
}

type Check = fn() -> Verdict;

const CRITERIA: &[(u32, &str, Check)] = &[
    (1, "metric oracle equivalence", metric_oracles),
    (2, "boundedness fuzz", boundedness),
    (3, "SAUC low-temperature limit", sauc_limit),
    (4, "gradient checks", gradients),
    (5, "grid search and SGD agree", optimizer_equivalence),
    (
        6,
        "explicit and implicit rankers converge",
        explicit_implicit_convergence,
    ),
    (7, "offline/online confusion direction", confusion_direction),
    (8, "revenue lift under miscalibration", revenue_lift),
    (9, "squashing exponent under eCTR noise", beta_under_noise),
    (10, "CLI determinism", cli_determinism),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for &(id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let v = check();
        println!(
            "[{}] {id:>2} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
