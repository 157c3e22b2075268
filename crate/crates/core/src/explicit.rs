//! Explicit ranking function `score = calibrate(ectr)^β · bid`.
//!
//! The calibration is piecewise linear in eCTR with knot values kept positive
//! through `y_k = exp(raw_k)`. Two fitters are provided: a grid search over β
//! maximizing AUC^R, and mini-batched gradient ascent on SAUC over β and the
//! knot parameters. Gradients are taken on [`log_score`], which induces the
//! same ordering as [`score`] but keeps score differences in a range where
//! the logistic does not saturate.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AuctionRecord, Dataset};
use crate::metrics::{sauc, CompensatedSum, Metric, MetricError, MetricName, MetricReport, ScoredRecord};
use crate::{PairScope, RankingFunction};

#[derive(Debug, Error)]
pub enum ExplicitError {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("optimizer diverged: objective became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub const DEFAULT_KNOTS: usize = 8;

/// Piecewise-linear map from eCTR to calibrated eCTR.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    knots_x: Vec<f64>,
    knots_raw: Vec<f64>,
    knots_y: Vec<f64>,
}

/// Interpolation support of one input: up to two knots and their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Support {
    lo: usize,
    w_lo: f64,
    hi: usize,
    w_hi: f64,
}

impl Calibration {
    /// `ectr' = ectr` for every input in (0, 1].
    pub fn identity() -> Self {
        let x = vec![f64::MIN_POSITIVE, 1.0];
        Calibration {
            knots_raw: x.iter().map(|v| v.ln()).collect(),
            knots_y: x.clone(),
            knots_x: x,
        }
    }

    /// Identity calibration with knots at empirical quantiles of `ectrs`:
    /// `k - 1` knots from the minimum to the maximum, plus a final knot at 1.
    /// Duplicate quantiles are merged, so fewer than `k` knots may result.
    pub fn from_quantiles(ectrs: &[f64], k: usize) -> Result<Self, ExplicitError> {
        if ectrs.is_empty() {
            return Err(ExplicitError::InvalidCalibration("no eCTR values".into()));
        }
        if k < 2 {
            return Err(ExplicitError::InvalidCalibration("need at least 2 knots".into()));
        }
        let mut sorted = ectrs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut x: Vec<f64> = (0..k - 1)
            .map(|j| {
                let pos = if k > 2 { j * (n - 1) / (k - 2) } else { 0 };
                sorted[pos]
            })
            .collect();
        x.push(1.0);
        x.dedup();
        if x.len() < 2 {
            // every eCTR equals 1
            x.insert(0, f64::MIN_POSITIVE);
        }
        Calibration::from_knots(x.clone(), x)
    }

    pub fn from_knots(knots_x: Vec<f64>, knots_y: Vec<f64>) -> Result<Self, ExplicitError> {
        Self::validate_x(&knots_x)?;
        if knots_y.len() != knots_x.len() {
            return Err(ExplicitError::InvalidCalibration(
                "knots_x and knots_y lengths differ".into(),
            ));
        }
        if let Some(v) = knots_y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(ExplicitError::InvalidCalibration(format!(
                "knot values must be finite and > 0, got {v}"
            )));
        }
        Ok(Calibration {
            knots_raw: knots_y.iter().map(|v| v.ln()).collect(),
            knots_y,
            knots_x,
        })
    }

    pub fn from_raw(knots_x: Vec<f64>, knots_raw: Vec<f64>) -> Result<Self, ExplicitError> {
        Self::validate_x(&knots_x)?;
        if knots_raw.len() != knots_x.len() {
            return Err(ExplicitError::InvalidCalibration(
                "knots_x and knots_raw lengths differ".into(),
            ));
        }
        let mut c = Calibration {
            knots_x,
            knots_y: vec![0.0; knots_raw.len()],
            knots_raw: vec![],
        };
        c.set_raw(knots_raw)?;
        Ok(c)
    }

    fn validate_x(x: &[f64]) -> Result<(), ExplicitError> {
        if x.len() < 2 {
            return Err(ExplicitError::InvalidCalibration("need at least 2 knots".into()));
        }
        if x.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(ExplicitError::InvalidCalibration("knots_x must lie in (0,1]".into()));
        }
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExplicitError::InvalidCalibration(
                "knots_x must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Replaces the unconstrained parameters.
    pub fn set_raw(&mut self, raw: Vec<f64>) -> Result<(), ExplicitError> {
        if raw.len() != self.knots_x.len() {
            return Err(ExplicitError::InvalidCalibration("wrong number of raw knots".into()));
        }
        let y: Vec<f64> = raw.iter().map(|r| r.exp()).collect();
        if y.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ExplicitError::InvalidCalibration(
                "raw knot parameters overflow the positivity transform".into(),
            ));
        }
        self.knots_raw = raw;
        self.knots_y = y;
        Ok(())
    }

    pub fn knots_x(&self) -> &[f64] {
        &self.knots_x
    }

    pub fn knots_y(&self) -> &[f64] {
        &self.knots_y
    }

    pub fn knots_raw(&self) -> &[f64] {
        &self.knots_raw
    }

    pub fn len(&self) -> usize {
        self.knots_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots_x.is_empty()
    }

    fn support(&self, ectr: f64) -> Support {
        let x = &self.knots_x;
        let last = x.len() - 1;
        if ectr <= x[0] {
            return Support {
                lo: 0,
                w_lo: 1.0,
                hi: 0,
                w_hi: 0.0,
            };
        }
        if ectr >= x[last] {
            return Support {
                lo: last,
                w_lo: 1.0,
                hi: last,
                w_hi: 0.0,
            };
        }
        // first knot strictly greater than ectr
        let hi = x.partition_point(|&k| k <= ectr);
        let lo = hi - 1;
        let w_hi = (ectr - x[lo]) / (x[hi] - x[lo]);
        Support {
            lo,
            w_lo: 1.0 - w_hi,
            hi,
            w_hi,
        }
    }

    /// Calibrated eCTR; linear between knots, clamped outside.
    pub fn apply(&self, ectr: f64) -> f64 {
        let s = self.support(ectr);
        s.w_lo * self.knots_y[s.lo] + s.w_hi * self.knots_y[s.hi]
    }

    /// Knot values increase with eCTR.
    pub fn is_monotone(&self) -> bool {
        self.knots_y.windows(2).all(|w| w[0] <= w[1])
    }
}

/// β and calibration of the explicit ranking function.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRankerParams {
    pub beta: f64,
    pub calibration: Calibration,
}

impl ExplicitRankerParams {
    pub fn new(beta: f64, calibration: Calibration) -> Result<Self, ExplicitError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(ExplicitError::InvalidParameter(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        Ok(ExplicitRankerParams { beta, calibration })
    }

    /// `eCTR · bid`.
    pub fn baseline() -> Self {
        ExplicitRankerParams {
            beta: 1.0,
            calibration: Calibration::identity(),
        }
    }
}

impl RankingFunction for ExplicitRankerParams {
    fn score(&self, rec: &AuctionRecord) -> f64 {
        score(self, rec)
    }
}

/// `calibrate(ectr)^β · bid`.
pub fn score(params: &ExplicitRankerParams, rec: &AuctionRecord) -> f64 {
    params.calibration.apply(rec.ectr).powf(params.beta) * rec.bid
}

/// `β · ln(calibrate(ectr)) + ln(bid)`.
pub fn log_score(params: &ExplicitRankerParams, rec: &AuctionRecord) -> f64 {
    params.beta * params.calibration.apply(rec.ectr).ln() + rec.bid.ln()
}

/// Log-score ranking function, used wherever only the ordering matters.
#[derive(Debug, Clone, Copy)]
pub struct LogScorer<'a>(pub &'a ExplicitRankerParams);

impl RankingFunction for LogScorer<'_> {
    fn score(&self, rec: &AuctionRecord) -> f64 {
        log_score(self.0, rec)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    beta: f64,
    knots_x: Vec<f64>,
    knots_y: Vec<f64>,
}

impl Serialize for ExplicitRankerParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ParamsJson {
            beta: self.beta,
            knots_x: self.calibration.knots_x.clone(),
            knots_y: self.calibration.knots_y.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExplicitRankerParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = ParamsJson::deserialize(d)?;
        let cal = Calibration::from_knots(j.knots_x, j.knots_y).map_err(serde::de::Error::custom)?;
        ExplicitRankerParams::new(j.beta, cal).map_err(serde::de::Error::custom)
    }
}

/// One logged optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// β for the explicit ranker; parameter L2 norm for the network.
    pub param: f64,
    pub objective: f64,
    pub metric: MetricName,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub iterations: Vec<TraceRow>,
}

impl FitTrace {
    pub fn push(&mut self, step: usize, param: f64, report: &MetricReport) {
        self.iterations.push(TraceRow {
            step,
            param,
            objective: report.value,
            metric: report.name,
        });
    }

    /// Rows of one metric, in logging order.
    pub fn series(&self, metric: MetricName) -> impl Iterator<Item = &TraceRow> {
        self.iterations.iter().filter(move |r| r.metric == metric)
    }

    /// CSV with header `step,param,objective,metric`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "step,param,objective,metric")?;
        for r in &self.iterations {
            writeln!(w, "{},{},{},{}", r.step, r.param, r.objective, r.metric)?;
        }
        Ok(())
    }
}

/// β grid `min + k·step` for `k = 0..=⌊(max − min)/step⌋`, generated by
/// integer index so the endpoint is kept despite float accumulation.
pub fn beta_grid(beta_min: f64, beta_max: f64, step: f64) -> Result<Vec<f64>, ExplicitError> {
    if !(beta_min.is_finite() && beta_max.is_finite() && beta_min < beta_max) {
        return Err(ExplicitError::InvalidParameter(format!(
            "need beta_min < beta_max, got [{beta_min}, {beta_max}]"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(ExplicitError::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let n = ((beta_max - beta_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| beta_min + k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub step: f64,
    pub scope: PairScope,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            beta_min: 0.1,
            beta_max: 2.0,
            step: 0.02,
            scope: PairScope::Pooled,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub beta: f64,
    pub report: MetricReport,
    pub trace: FitTrace,
}

/// Per-record `(ln ectr', ln bid)` under a fixed calibration.
fn log_features(ds: &Dataset, cal: &Calibration) -> Vec<(f64, f64)> {
    ds.records()
        .iter()
        .map(|r| (cal.apply(r.ectr).ln(), r.bid.ln()))
        .collect()
}

fn evaluate_scored(
    ds: &Dataset,
    scored: &[ScoredRecord],
    metric: Metric,
    scope: PairScope,
) -> Result<MetricReport, MetricError> {
    match scope {
        PairScope::Pooled => metric.evaluate(scored),
        PairScope::WithinImpression => {
            let groups: Vec<Vec<ScoredRecord>> = ds
                .impressions()
                .iter()
                .map(|g| g.members.iter().map(|&i| scored[i]).collect())
                .collect();
            metric.evaluate_grouped(groups.iter().map(Vec::as_slice))
        }
    }
}

/// Grid search over β maximizing AUC^R with the calibration held fixed.
/// The first (smallest) β attaining the maximum wins.
pub fn grid_search_beta(
    ds: &Dataset,
    calibration: &Calibration,
    config: &GridConfig,
) -> Result<GridResult, ExplicitError> {
    let grid = beta_grid(config.beta_min, config.beta_max, config.step)?;
    let feats = log_features(ds, calibration);
    let mut trace = FitTrace::default();
    let mut best: Option<(f64, MetricReport)> = None;
    let mut scored: Vec<ScoredRecord> = ds
        .records()
        .iter()
        .map(|r| ScoredRecord::new(0.0, r.y, r.click))
        .collect();
    for (k, &beta) in grid.iter().enumerate() {
        for (s, &(le, lb)) in scored.iter_mut().zip(&feats) {
            s.score = beta * le + lb;
        }
        let report = evaluate_scored(ds, &scored, Metric::AucR, config.scope)?;
        trace.push(k, beta, &report);
        if best.as_ref().is_none_or(|(_, b)| report.value > b.value) {
            best = Some((beta, report));
        }
    }
    let (beta, report) = best.expect("grid is never empty");
    Ok(GridResult { beta, report, trace })
}

/// Gradient of batch SAUC with respect to β and the raw knot parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitGradient {
    pub beta: f64,
    pub knots_raw: Vec<f64>,
}

impl ExplicitGradient {
    pub fn zeros(n_knots: usize) -> Self {
        ExplicitGradient {
            beta: 0.0,
            knots_raw: vec![0.0; n_knots],
        }
    }

    fn is_finite(&self) -> bool {
        self.beta.is_finite() && self.knots_raw.iter().all(|g| g.is_finite())
    }
}

/// SAUC of `batch` scored by [`log_score`], normalized by the batch `Z`.
pub fn batch_sauc(
    params: &ExplicitRankerParams,
    batch: &[AuctionRecord],
    temperature: f64,
) -> Result<f64, MetricError> {
    let scored: Vec<ScoredRecord> = batch
        .iter()
        .map(|r| ScoredRecord::new(log_score(params, r), r.y, r.click))
        .collect();
    Ok(sauc(&scored, temperature)?.value)
}

/// `dSAUC/ds_i` for every record of a batch, already divided by the batch `Z`.
/// Returns zeros when all labels are equal.
pub(crate) fn sauc_score_gradient(scores: &[f64], labels: &[f64], temperature: f64) -> Vec<f64> {
    let n = scores.len();
    let mut upstream = vec![0.0; n];
    let mut z = CompensatedSum::default();
    for i in 0..n {
        for j in i + 1..n {
            let dy = labels[i] - labels[j];
            if dy == 0.0 {
                continue;
            }
            z.add(dy.abs());
            // d/ds_i of tanh(d/2)·dy with d = (s_i − s_j)/T
            let t = (0.5 * (scores[i] - scores[j]) / temperature).tanh();
            let c = dy * 0.5 * (1.0 - t * t) / temperature;
            upstream[i] += c;
            upstream[j] -= c;
        }
    }
    let z = z.value();
    if z > 0.0 {
        for u in &mut upstream {
            *u /= z;
        }
    }
    upstream
}

/// Analytic gradient of [`batch_sauc`] with respect to `(β, knots_raw)`.
pub fn sauc_gradient(
    params: &ExplicitRankerParams,
    batch: &[AuctionRecord],
    temperature: f64,
) -> Result<ExplicitGradient, ExplicitError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(MetricError::InvalidTemperature(temperature).into());
    }
    let cal = &params.calibration;
    let mut grad = ExplicitGradient::zeros(cal.len());
    if batch.len() < 2 {
        return Ok(grad);
    }
    let supports: Vec<Support> = batch.iter().map(|r| cal.support(r.ectr)).collect();
    let calibrated: Vec<f64> = supports
        .iter()
        .map(|s| s.w_lo * cal.knots_y[s.lo] + s.w_hi * cal.knots_y[s.hi])
        .collect();
    let scores: Vec<f64> = batch
        .iter()
        .zip(&calibrated)
        .map(|(r, c)| params.beta * c.ln() + r.bid.ln())
        .collect();
    let labels: Vec<f64> = batch.iter().map(|r| r.y).collect();
    let upstream = sauc_score_gradient(&scores, &labels, temperature);
    for ((u, s), c) in upstream.iter().zip(&supports).zip(&calibrated) {
        if *u == 0.0 {
            continue;
        }
        grad.beta += u * c.ln();
        // ds/draw_k = β · w_k · y_k / ectr'
        let scale = u * params.beta / c;
        grad.knots_raw[s.lo] += scale * s.w_lo * cal.knots_y[s.lo];
        if s.w_hi != 0.0 {
            grad.knots_raw[s.hi] += scale * s.w_hi * cal.knots_y[s.hi];
        }
    }
    if !grad.is_finite() {
        return Err(ExplicitError::NonFiniteGradient);
    }
    Ok(grad)
}

/// Which parameters the gradient fitter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitTargets {
    #[default]
    Joint,
    BetaOnly,
    CalibrationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub max_epochs: usize,
    /// Training stops once an epoch improves full-dataset SAUC by less than
    /// `rel_tol · |SAUC|`; that epoch is rolled back.
    pub rel_tol: f64,
    pub seed: u64,
    pub targets: FitTargets,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            batch_size: 100,
            learning_rate: 0.002,
            temperature: 0.03,
            max_epochs: 50,
            rel_tol: 1e-6,
            seed: 0,
            targets: FitTargets::Joint,
        }
    }
}

/// Smallest β the gradient fitter lets the parameter reach.
const MIN_BETA: f64 = 1e-3;

fn full_objectives(
    ds: &Dataset,
    params: &ExplicitRankerParams,
    temperature: f64,
) -> Result<(MetricReport, MetricReport), ExplicitError> {
    let scored = crate::score_records(ds, &LogScorer(params));
    let s = sauc(&scored, temperature)?;
    let a = crate::metrics::auc_r(&scored)?;
    Ok((s, a))
}

/// Splits record positions into contiguous batches after one seeded shuffle.
pub(crate) fn shuffled_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Mini-batched gradient ascent on SAUC (descent on −SAUC).
pub fn fit_sgd(
    ds: &Dataset,
    init: &ExplicitRankerParams,
    config: &SgdConfig,
) -> Result<(ExplicitRankerParams, FitTrace), ExplicitError> {
    if config.batch_size < 2 {
        return Err(ExplicitError::InvalidParameter("batch_size must be >= 2".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(ExplicitError::InvalidParameter("learning_rate must be > 0".into()));
    }
    let mut params = init.clone();
    let mut trace = FitTrace::default();
    let (mut best_sauc, auc_r0) = full_objectives(ds, &params, config.temperature)?;
    trace.push(0, params.beta, &best_sauc);
    trace.push(0, params.beta, &auc_r0);

    let batches = shuffled_batches(ds.len(), config.batch_size, config.seed);
    let records = ds.records();
    let mut batch_buf: Vec<AuctionRecord> = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.max_epochs {
        let before = params.clone();
        for b in &batches {
            batch_buf.clear();
            batch_buf.extend(b.iter().map(|&i| records[i].clone()));
            let g = sauc_gradient(&params, &batch_buf, config.temperature)?;
            // θ ← θ − η·Δ with Δ = −∂SAUC/∂θ
            let eta = config.learning_rate;
            if config.targets != FitTargets::CalibrationOnly {
                params.beta = (params.beta + eta * g.beta).max(MIN_BETA);
            }
            if config.targets != FitTargets::BetaOnly {
                let raw: Vec<f64> = params
                    .calibration
                    .knots_raw()
                    .iter()
                    .zip(&g.knots_raw)
                    .map(|(r, d)| r + eta * d)
                    .collect();
                params
                    .calibration
                    .set_raw(raw)
                    .map_err(|_| ExplicitError::Diverged { epoch })?;
            }
        }
        let (s, a) = full_objectives(ds, &params, config.temperature).map_err(|e| match e {
            ExplicitError::Metric(MetricError::NonFinite { .. }) => ExplicitError::Diverged { epoch },
            other => other,
        })?;
        if !s.value.is_finite() {
            return Err(ExplicitError::Diverged { epoch });
        }
        trace.push(epoch, params.beta, &s);
        trace.push(epoch, params.beta, &a);
        if s.value - best_sauc.value < config.rel_tol * best_sauc.value.abs().max(1e-12) {
            params = before;
            break;
        }
        best_sauc = s;
    }
    Ok((params, trace))
}

/// β first with the calibration frozen, then the calibration with β frozen.
pub fn fit_staged(
    ds: &Dataset,
    init: &ExplicitRankerParams,
    config: &SgdConfig,
) -> Result<(ExplicitRankerParams, FitTrace), ExplicitError> {
    let beta_cfg = SgdConfig {
        targets: FitTargets::BetaOnly,
        ..*config
    };
    let (stage1, mut trace) = fit_sgd(ds, init, &beta_cfg)?;
    let cal_cfg = SgdConfig {
        targets: FitTargets::CalibrationOnly,
        seed: config.seed.wrapping_add(1),
        ..*config
    };
    let (stage2, trace2) = fit_sgd(ds, &stage1, &cal_cfg)?;
    let offset = trace.iterations.last().map_or(0, |r| r.step + 1);
    trace.iterations.extend(trace2.iterations.into_iter().map(|mut r| {
        r.step += offset;
        r
    }));
    Ok((stage2, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ectr: f64, bid: f64, click: u8) -> AuctionRecord {
        AuctionRecord::new("", ectr, bid, click).unwrap()
    }

    #[test]
    fn identity_baseline_scores() {
        let p = ExplicitRankerParams::baseline();
        assert!((score(&p, &rec(0.2, 5.0, 0)) - 1.0).abs() < 1e-15);
        let p0 = ExplicitRankerParams::new(0.0, Calibration::identity()).unwrap();
        assert_eq!(score(&p0, &rec(0.37, 3.0, 0)), 3.0);
        let p = ExplicitRankerParams::new(1.0, Calibration::identity()).unwrap();
        assert_eq!(log_score(&p, &rec(1.0, 1.0, 0)), 0.0);
    }

    #[test]
    fn identity_calibration_is_exact() {
        let c = Calibration::identity();
        for &e in &[1e-9, 0.013, 0.5, 0.999, 1.0] {
            assert_eq!(c.apply(e), e);
        }
    }

    #[test]
    fn calibration_interpolates_and_clamps() {
        let c = Calibration::from_knots(vec![0.1, 0.2, 1.0], vec![0.3, 0.5, 0.9]).unwrap();
        assert!((c.apply(0.15) - 0.4).abs() < 1e-15);
        assert!((c.apply(0.6) - 0.7).abs() < 1e-15);
        assert_eq!(c.apply(0.01), 0.3);
        assert_eq!(c.apply(0.1), 0.3);
        assert_eq!(c.apply(1.0), 0.9);
        assert!(c.is_monotone());
    }

    #[test]
    fn calibration_validation() {
        assert!(Calibration::from_knots(vec![0.2, 0.1], vec![1.0, 1.0]).is_err());
        assert!(Calibration::from_knots(vec![0.1, 0.2], vec![1.0, 0.0]).is_err());
        assert!(Calibration::from_knots(vec![0.0, 0.2], vec![1.0, 1.0]).is_err());
        assert!(Calibration::from_knots(vec![0.5], vec![1.0]).is_err());
    }

    #[test]
    fn quantile_knots_start_at_min_and_end_at_one() {
        let e: Vec<f64> = (1..=1000).map(|i| i as f64 / 2000.0).collect();
        let c = Calibration::from_quantiles(&e, DEFAULT_KNOTS).unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(c.knots_x()[0], 0.0005);
        assert_eq!(*c.knots_x().last().unwrap(), 1.0);
        assert_eq!(c.knots_x()[6], 0.5);
        for &v in &e {
            assert!((c.apply(v) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_has_96_points_by_default() {
        let g = GridConfig::default();
        let grid = beta_grid(g.beta_min, g.beta_max, g.step).unwrap();
        assert_eq!(grid.len(), 96);
        assert_eq!(grid[0], 0.1);
        assert!((grid[95] - 2.0).abs() < 1e-12);
        assert!(beta_grid(2.0, 0.1, 0.02).is_err());
        assert!(beta_grid(0.1, 2.0, 0.0).is_err());
    }

    #[test]
    fn equal_labels_give_zero_gradient() {
        let p = ExplicitRankerParams::baseline();
        let b = [rec(0.1, 2.0, 1), rec(0.3, 2.0, 1)];
        let g = sauc_gradient(&p, &b, 1.0).unwrap();
        assert_eq!(g, ExplicitGradient::zeros(2));
    }

    #[test]
    fn symmetric_pair_has_no_beta_gradient() {
        let p = ExplicitRankerParams::new(0.7, Calibration::identity()).unwrap();
        let b = [rec(0.2, 3.0, 1), rec(0.2, 3.0, 0)];
        let g = sauc_gradient(&p, &b, 1.0).unwrap();
        assert_eq!(g.beta, 0.0);
    }

    #[test]
    fn params_json_shape() {
        let p =
            ExplicitRankerParams::new(0.43, Calibration::from_knots(vec![0.1, 1.0], vec![0.2, 0.8]).unwrap()).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["beta"], 0.43);
        assert_eq!(v["knots_x"][1], 1.0);
        assert_eq!(v["knots_y"][0], 0.2);
        let back: ExplicitRankerParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn trace_csv() {
        let mut t = FitTrace::default();
        let r = MetricReport {
            name: MetricName::AucR,
            value: 0.5,
            normalizer_z: Some(1.0),
            n_pairs: 1,
            n_score_ties: 0,
        };
        t.push(3, 0.9, &r);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,param,objective,metric\n3,0.9,0.5,auc_r\n"
        );
    }
}
