//! Synthetic auction logs and a replay evaluator standing in for live traffic.
//!
//! Every impression gets its own ChaCha stream keyed by `(seed, domain,
//! impression)`, so output never depends on how work is split across threads.
//! Replay draws one uniform per candidate ad before ranking, which means two
//! ranking functions replayed with the same seed see the same click outcome
//! for any ad they both show.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};
use thiserror::Error;

use crate::domain::{AuctionRecord, DataError, Dataset};
use crate::explicit::{Calibration, ExplicitRankerParams, LogScorer, DEFAULT_KNOTS};
use crate::metrics::{CompensatedSum, ConfusionMatrix, Metric, MetricError};
use crate::{evaluate, PairScope, RankingFunction};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("latent truth covers {truth} records but the dataset has {dataset}")]
    TruthMismatch { truth: usize, dataset: usize },
    #[error("slots ({slots}) exceed the candidates of impression '{impression}' ({ads})")]
    TooManySlots {
        slots: usize,
        impression: String,
        ads: usize,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("truth file line {line}: {message}")]
    TruthParse { line: u64, message: String },
}

/// Latent click-through-rate distribution of candidate ads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CtrDistribution {
    Beta { alpha: f64, beta: f64 },
}

/// Monotone distortion from true CTR to reported eCTR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasFn {
    Identity,
    /// `ectr = scale · ctr^exponent`, capped at 1.
    Power {
        exponent: f64,
        scale: f64,
    },
    /// Linear interpolation through `(x, y)` breakpoints, clamped outside.
    Piecewise {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

impl BiasFn {
    pub fn apply(&self, ctr: f64) -> f64 {
        let v = match self {
            BiasFn::Identity => ctr,
            BiasFn::Power { exponent, scale } => scale * ctr.powf(*exponent),
            BiasFn::Piecewise { x, y } => {
                let last = x.len() - 1;
                if ctr <= x[0] {
                    y[0]
                } else if ctr >= x[last] {
                    y[last]
                } else {
                    let hi = x.partition_point(|&k| k <= ctr);
                    let lo = hi - 1;
                    let w = (ctr - x[lo]) / (x[hi] - x[lo]);
                    y[lo] + w * (y[hi] - y[lo])
                }
            }
        };
        v.clamp(MIN_RATE, 1.0)
    }

    fn validate(&self) -> Result<(), SimError> {
        match self {
            BiasFn::Identity => Ok(()),
            BiasFn::Power { exponent, scale } => {
                if *exponent > 0.0 && *scale > 0.0 && exponent.is_finite() && scale.is_finite() {
                    Ok(())
                } else {
                    Err(SimError::InvalidConfig(
                        "power bias needs exponent > 0 and scale > 0".into(),
                    ))
                }
            }
            BiasFn::Piecewise { x, y } => {
                let ok = x.len() >= 2
                    && x.len() == y.len()
                    && x.windows(2).all(|w| w[0] < w[1])
                    && y.windows(2).all(|w| w[0] <= w[1])
                    && y.iter().all(|v| *v > 0.0 && *v <= 1.0);
                if ok {
                    Ok(())
                } else {
                    Err(SimError::InvalidConfig(
                        "piecewise bias needs >= 2 increasing breakpoints with values in (0,1]".into(),
                    ))
                }
            }
        }
    }
}

/// Log-normal bids whose latent normal is correlated with the latent normal
/// driving the true CTR (Gaussian copula).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidModel {
    pub log_mean: f64,
    pub log_sd: f64,
    pub ctr_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_impressions: usize,
    pub ads_per_impression: usize,
    pub true_ctr: CtrDistribution,
    pub bias: BiasFn,
    /// Standard deviation of multiplicative log-normal noise on eCTR.
    pub ectr_noise: f64,
    pub bids: BidModel,
    pub slots: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_impressions: 5_000,
            ads_per_impression: 10,
            true_ctr: CtrDistribution::Beta { alpha: 2.0, beta: 38.0 },
            bias: BiasFn::Identity,
            ectr_noise: 0.0,
            bids: BidModel {
                log_mean: 0.0,
                log_sd: 0.5,
                ctr_correlation: 0.2,
            },
            slots: 1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.n_impressions == 0 || self.ads_per_impression == 0 || self.slots == 0 {
            return bad("counts must be >= 1");
        }
        if self.slots > self.ads_per_impression {
            return bad("slots must not exceed ads_per_impression");
        }
        match self.true_ctr {
            CtrDistribution::Beta { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return bad("beta distribution needs alpha, beta > 0");
                }
            }
        }
        self.bias.validate()?;
        if !(self.ectr_noise >= 0.0 && self.ectr_noise.is_finite()) {
            return bad("ectr_noise must be >= 0");
        }
        let b = &self.bids;
        if !(b.log_sd >= 0.0 && b.log_sd.is_finite() && b.log_mean.is_finite()) {
            return bad("bid log_sd must be >= 0");
        }
        if !(-1.0..=1.0).contains(&b.ctr_correlation) {
            return bad("bid correlation must lie in [-1, 1]");
        }
        Ok(())
    }
}

/// True CTR of every record, by pooled position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub true_ctr: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    position: usize,
    true_ctr: f64,
}

impl LatentTruth {
    pub fn len(&self) -> usize {
        self.true_ctr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_ctr.is_empty()
    }

    /// Truth restricted to the given impressions, aligned with
    /// [`Dataset::select_impressions`].
    pub fn select_impressions(&self, ds: &Dataset, which: &[usize]) -> LatentTruth {
        LatentTruth {
            true_ctr: which
                .iter()
                .flat_map(|&g| ds.impressions()[g].members.iter())
                .map(|&i| self.true_ctr[i])
                .collect(),
        }
    }

    /// Sidecar JSONL: `{"position":i,"true_ctr":p}` per record.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let mut w = BufWriter::new(File::create(path).map_err(DataError::from)?);
        for (position, &true_ctr) in self.true_ctr.iter().enumerate() {
            serde_json::to_writer(&mut w, &TruthRow { position, true_ctr }).map_err(|e| DataError::Io(e.into()))?;
            w.write_all(b"\n").map_err(DataError::from)?;
        }
        w.flush().map_err(DataError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let reader = BufReader::new(File::open(path).map_err(DataError::from)?);
        let mut true_ctr = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(DataError::from)?;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i as u64 + 1;
            let row: TruthRow = serde_json::from_str(&line).map_err(|e| SimError::TruthParse {
                line: line_no,
                message: e.to_string(),
            })?;
            if row.position != true_ctr.len() {
                return Err(SimError::TruthParse {
                    line: line_no,
                    message: format!("expected position {}, got {}", true_ctr.len(), row.position),
                });
            }
            if !(row.true_ctr >= 0.0 && row.true_ctr <= 1.0) {
                return Err(SimError::TruthParse {
                    line: line_no,
                    message: format!("true_ctr out of [0,1]: {}", row.true_ctr),
                });
            }
            true_ctr.push(row.true_ctr);
        }
        Ok(LatentTruth { true_ctr })
    }
}

const MIN_RATE: f64 = 1e-6;

const GEN_DOMAIN: u64 = 0x67656e5f6c6f6773;
const REPLAY_DOMAIN: u64 = 0x7265706c61795f31;
const TRIAL_DOMAIN: u64 = 0x747269616c735f31;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent RNG for `(seed, domain, key)`.
pub fn derived_rng(seed: u64, domain: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ domain) ^ key))
}

/// Sub-seed for `(seed, domain, key)`.
pub fn derived_seed(seed: u64, domain: u64, key: u64) -> u64 {
    splitmix64(splitmix64(seed ^ domain).wrapping_add(key))
}

/// Draws the synthetic log and its latent CTRs.
pub fn generate(config: &SimConfig) -> Result<(Dataset, LatentTruth), SimError> {
    config.validate()?;
    let CtrDistribution::Beta { alpha, beta } = config.true_ctr;
    let ctr_dist = Beta::new(alpha, beta).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let normal = Normal::standard();
    let rho = config.bids.ctr_correlation;
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();

    let per_imp: Vec<Vec<(AuctionRecord, f64)>> = (0..config.n_impressions)
        .into_par_iter()
        .map(|imp| {
            let mut rng = derived_rng(config.seed, GEN_DOMAIN, imp as u64);
            let id = imp.to_string();
            (0..config.ads_per_impression)
                .map(|_| {
                    let z_ctr: f64 = rng.sample(StandardNormal);
                    let z_bid: f64 = rng.sample(StandardNormal);
                    let z_noise: f64 = rng.sample(StandardNormal);
                    let u_click: f64 = rng.random();
                    let q = normal.cdf(z_ctr).clamp(1e-12, 1.0 - 1e-12);
                    let ctr = ctr_dist.inverse_cdf(q).clamp(MIN_RATE, 1.0 - MIN_RATE);
                    let bid = (config.bids.log_mean + config.bids.log_sd * (rho * z_ctr + rho_c * z_bid)).exp();
                    let ectr = (config.bias.apply(ctr) * (config.ectr_noise * z_noise).exp()).clamp(MIN_RATE, 1.0);
                    let click = u8::from(u_click < ctr);
                    let rec = AuctionRecord::new(id.clone(), ectr, bid, click)
                        .expect("simulated record satisfies invariants");
                    (rec, ctr)
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(config.n_impressions * config.ads_per_impression);
    let mut true_ctr = Vec::with_capacity(records.capacity());
    for (rec, ctr) in per_imp.into_iter().flatten() {
        records.push(rec);
        true_ctr.push(ctr);
    }
    Ok((Dataset::from_records(records)?, LatentTruth { true_ctr }))
}

/// Revenue accounting of one replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub rpm: f64,
    pub ctr: f64,
    pub cpc: f64,
    pub revenue: f64,
    pub n_impressions: u64,
    pub n_shown: u64,
    pub n_clicks: u64,
}

impl ReplayResult {
    fn from_totals(revenue: f64, n_impressions: u64, n_shown: u64, n_clicks: u64) -> Self {
        ReplayResult {
            rpm: 1000.0 * revenue / n_impressions as f64,
            ctr: n_clicks as f64 / n_shown as f64,
            cpc: if n_clicks > 0 { revenue / n_clicks as f64 } else { 0.0 },
            revenue,
            n_impressions,
            n_shown,
            n_clicks,
        }
    }
}

fn check_replay_inputs(ds: &Dataset, truth: &LatentTruth, slots: usize) -> Result<(), SimError> {
    if truth.len() != ds.len() {
        return Err(SimError::TruthMismatch {
            truth: truth.len(),
            dataset: ds.len(),
        });
    }
    if slots == 0 {
        return Err(SimError::InvalidConfig("slots must be >= 1".into()));
    }
    if let Some(g) = ds.impressions().iter().find(|g| g.members.len() < slots) {
        return Err(SimError::TooManySlots {
            slots,
            impression: g.impression_id.clone(),
            ads: g.members.len(),
        });
    }
    Ok(())
}

/// Member positions of `members` ranked by score descending, ties by input order.
fn top_slots(members: &[usize], scores: &[f64], slots: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(slots);
    order
}

/// Re-runs every auction under `scorer`, shows the top `slots` ads and
/// samples fresh clicks from the latent CTRs. Price per click is the bid.
pub fn replay<R: RankingFunction + ?Sized>(
    ds: &Dataset,
    truth: &LatentTruth,
    scorer: &R,
    slots: usize,
    seed: u64,
) -> Result<ReplayResult, SimError> {
    check_replay_inputs(ds, truth, slots)?;
    let records = ds.records();
    let per_imp: Vec<(f64, u64)> = ds
        .impressions()
        .par_iter()
        .map(|g| {
            let uniforms = impression_uniforms(seed, &g.impression_id, g.members.len());
            let scores: Vec<f64> = g.members.iter().map(|&i| scorer.score(&records[i])).collect();
            shown_outcome(ds, truth, &g.members, &scores, &uniforms, slots)
        })
        .collect();
    Ok(aggregate_replay(&per_imp, slots))
}

/// Click uniforms of one auction, one per candidate in member order, so every
/// scorer replayed with the same seed faces the same click outcomes.
fn impression_uniforms(seed: u64, impression_id: &str, n: usize) -> Vec<f64> {
    let mut rng = derived_rng(seed, REPLAY_DOMAIN, fnv1a(impression_id.as_bytes()));
    (0..n).map(|_| rng.random()).collect()
}

fn shown_outcome(
    ds: &Dataset,
    truth: &LatentTruth,
    members: &[usize],
    scores: &[f64],
    uniforms: &[f64],
    slots: usize,
) -> (f64, u64) {
    let mut revenue = 0.0;
    let mut clicks = 0;
    for k in top_slots(members, scores, slots) {
        let i = members[k];
        if uniforms[k] < truth.true_ctr[i] {
            revenue += ds.records()[i].bid;
            clicks += 1;
        }
    }
    (revenue, clicks)
}

fn aggregate_replay(per_imp: &[(f64, u64)], slots: usize) -> ReplayResult {
    let mut revenue = CompensatedSum::default();
    let mut clicks = 0;
    for &(r, c) in per_imp {
        revenue.add(r);
        clicks += c;
    }
    let n_imp = per_imp.len() as u64;
    ReplayResult::from_totals(revenue.value(), n_imp, n_imp * slots as u64, clicks)
}

fn sweep_features(ds: &Dataset, calibration: &Calibration, betas: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(SimError::InvalidConfig(format!(
            "beta must be finite and >= 0, got {b}"
        )));
    }
    let records = ds.records();
    let log_ectr = records.iter().map(|r| calibration.apply(r.ectr).ln()).collect();
    let log_bid = records.iter().map(|r| r.bid.ln()).collect();
    Ok((log_ectr, log_bid))
}

/// [`expected_rpm`] of the explicit ranker at every β in `betas`.
pub fn expected_rpm_beta_sweep(
    ds: &Dataset,
    truth: &LatentTruth,
    calibration: &Calibration,
    betas: &[f64],
    slots: usize,
) -> Result<Vec<f64>, SimError> {
    check_replay_inputs(ds, truth, slots)?;
    let (log_ectr, log_bid) = sweep_features(ds, calibration, betas)?;
    let records = ds.records();
    Ok(betas
        .iter()
        .map(|&beta| {
            let per_imp: Vec<f64> = ds
                .impressions()
                .par_iter()
                .map(|g| {
                    let scores: Vec<f64> = g.members.iter().map(|&i| beta * log_ectr[i] + log_bid[i]).collect();
                    top_slots(&g.members, &scores, slots)
                        .into_iter()
                        .map(|k| {
                            let i = g.members[k];
                            truth.true_ctr[i] * records[i].bid
                        })
                        .sum()
                })
                .collect();
            let mut total = CompensatedSum::default();
            for v in per_imp {
                total.add(v);
            }
            1000.0 * total.value() / ds.impressions().len() as f64
        })
        .collect())
}

/// Replays the explicit ranker at every β in `betas` with `calibration`
/// fixed. Each entry equals `replay(ds, truth, &LogScorer(&params), slots,
/// seed)` for the matching parameters; logs and click draws are computed once.
pub fn replay_beta_sweep(
    ds: &Dataset,
    truth: &LatentTruth,
    calibration: &Calibration,
    betas: &[f64],
    slots: usize,
    seed: u64,
) -> Result<Vec<ReplayResult>, SimError> {
    check_replay_inputs(ds, truth, slots)?;
    let (log_ectr, log_bid) = sweep_features(ds, calibration, betas)?;
    let uniforms: Vec<Vec<f64>> = ds
        .impressions()
        .par_iter()
        .map(|g| impression_uniforms(seed, &g.impression_id, g.members.len()))
        .collect();
    Ok(betas
        .iter()
        .map(|&beta| {
            let per_imp: Vec<(f64, u64)> = ds
                .impressions()
                .par_iter()
                .zip(&uniforms)
                .map(|(g, u)| {
                    let scores: Vec<f64> = g.members.iter().map(|&i| beta * log_ectr[i] + log_bid[i]).collect();
                    shown_outcome(ds, truth, &g.members, &scores, u, slots)
                })
                .collect();
            aggregate_replay(&per_imp, slots)
        })
        .collect())
}

/// Expected RPM of `scorer` under the latent CTRs (no click sampling).
pub fn expected_rpm<R: RankingFunction + ?Sized>(
    ds: &Dataset,
    truth: &LatentTruth,
    scorer: &R,
    slots: usize,
) -> Result<f64, SimError> {
    check_replay_inputs(ds, truth, slots)?;
    let records = ds.records();
    let per_imp: Vec<f64> = ds
        .impressions()
        .par_iter()
        .map(|g| {
            let scores: Vec<f64> = g.members.iter().map(|&i| scorer.score(&records[i])).collect();
            top_slots(&g.members, &scores, slots)
                .into_iter()
                .map(|k| {
                    let i = g.members[k];
                    truth.true_ctr[i] * records[i].bid
                })
                .sum()
        })
        .collect();
    let mut total = CompensatedSum::default();
    for v in per_imp {
        total.add(v);
    }
    Ok(1000.0 * total.value() / ds.impressions().len() as f64)
}

/// Perturbation scheme of the offline/online agreement experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfusionConfig {
    /// Generator of the offline log; its logged clicks feed the offline metric.
    pub sim: SimConfig,
    /// Size of the separately generated traffic that candidate and baseline
    /// are replayed on. The other generator settings come from `sim`.
    pub online_impressions: usize,
    pub n_trials: usize,
    /// Baseline β is drawn uniformly from this range.
    pub baseline_beta: (f64, f64),
    /// Baseline knot values are `x · exp(U(−a, a))`.
    pub baseline_calibration_jitter: f64,
    /// Candidate β is baseline β plus `U(−a, a)`.
    pub beta_jitter: f64,
    /// Candidate knot values are baseline values times `exp(U(−a, a))`.
    pub calibration_jitter: f64,
    pub scope: PairScope,
    pub seed: u64,
}

impl Default for ConfusionConfig {
    fn default() -> Self {
        ConfusionConfig {
            sim: SimConfig::default(),
            online_impressions: 50_000,
            n_trials: 1120,
            baseline_beta: (0.5, 1.5),
            baseline_calibration_jitter: 0.0,
            beta_jitter: 0.5,
            calibration_jitter: 0.05,
            scope: PairScope::Pooled,
            seed: 0,
        }
    }
}

/// One offline/online comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub baseline_beta: f64,
    pub candidate_beta: f64,
    pub offline_delta: f64,
    pub online_delta: f64,
}

fn jittered(cal: &Calibration, amount: f64, rng: &mut ChaCha8Rng) -> Calibration {
    if amount == 0.0 {
        return cal.clone();
    }
    let y: Vec<f64> = cal
        .knots_y()
        .iter()
        .map(|v| v * rng.random_range(-amount..=amount).exp())
        .collect();
    Calibration::from_knots(cal.knots_x().to_vec(), y).expect("jittered knots stay positive")
}

/// Runs the trials for each metric in `metrics` on shared scorers and shared
/// replays, returning per-metric outcomes.
pub fn run_confusion_trials(config: &ConfusionConfig, metrics: &[Metric]) -> Result<Vec<Vec<TrialOutcome>>, SimError> {
    if config.n_trials == 0 {
        return Err(SimError::InvalidConfig("n_trials must be >= 1".into()));
    }
    let (lo, hi) = config.baseline_beta;
    if !(lo > 0.0 && lo <= hi) {
        return Err(SimError::InvalidConfig(
            "baseline_beta must satisfy 0 < lo <= hi".into(),
        ));
    }
    let sim = SimConfig {
        seed: derived_seed(config.seed, TRIAL_DOMAIN, u64::MAX),
        ..config.sim.clone()
    };
    let (log, _) = generate(&sim)?;
    let online_sim = SimConfig {
        n_impressions: config.online_impressions,
        seed: derived_seed(config.seed, TRIAL_DOMAIN, u64::MAX - 1),
        ..config.sim.clone()
    };
    let (traffic, truth) = generate(&online_sim)?;
    let ectrs: Vec<f64> = log.records().iter().map(|r| r.ectr).collect();
    let knots =
        Calibration::from_quantiles(&ectrs, DEFAULT_KNOTS).map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let mut out = vec![Vec::with_capacity(config.n_trials); metrics.len()];
    for t in 0..config.n_trials {
        let mut rng = derived_rng(config.seed, TRIAL_DOMAIN, t as u64);
        let base_beta = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let base = ExplicitRankerParams::new(
            base_beta,
            jittered(&knots, config.baseline_calibration_jitter, &mut rng),
        )
        .expect("positive beta");
        let cand_beta = if config.beta_jitter > 0.0 {
            (base_beta + rng.random_range(-config.beta_jitter..=config.beta_jitter)).max(0.01)
        } else {
            base_beta
        };
        let cand = ExplicitRankerParams::new(
            cand_beta,
            jittered(&base.calibration, config.calibration_jitter, &mut rng),
        )
        .expect("positive beta");

        let replay_seed = derived_seed(config.seed, REPLAY_DOMAIN, t as u64);
        let on_base = replay(&traffic, &truth, &LogScorer(&base), sim.slots, replay_seed)?;
        let on_cand = replay(&traffic, &truth, &LogScorer(&cand), sim.slots, replay_seed)?;
        let online_delta = on_cand.rpm - on_base.rpm;
        for (m, metric) in metrics.iter().enumerate() {
            let off_base = evaluate(&log, &LogScorer(&base), *metric, config.scope)?.value;
            let off_cand = evaluate(&log, &LogScorer(&cand), *metric, config.scope)?.value;
            out[m].push(TrialOutcome {
                baseline_beta: base_beta,
                candidate_beta: cand_beta,
                offline_delta: off_cand - off_base,
                online_delta,
            });
        }
    }
    Ok(out)
}

/// Tallies offline-vs-online sign agreement of `metric` over the trials.
pub fn run_confusion_experiment(config: &ConfusionConfig, metric: Metric) -> Result<ConfusionMatrix, SimError> {
    let outcomes = run_confusion_trials(config, &[metric])?;
    tally(&outcomes[0])
}

pub fn tally(outcomes: &[TrialOutcome]) -> Result<ConfusionMatrix, SimError> {
    let pairs: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.offline_delta, o.online_delta)).collect();
    Ok(crate::metrics::confusion_matrix(&pairs)?)
}
