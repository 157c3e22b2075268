//! Offline evaluation metrics over scored auction records.
//!
//! * [`auc`]: classic click AUC, normalized by the M·N positive/negative pairs.
//! * [`auc_r`]: real-valued AUC. Every pair ordered by predicted score earns
//!   `y_hi - y_lo` (which is negative when the ordering is wrong), normalized
//!   by the total of the perfect revenue ordering. Bounded in `[-1, 1]`.
//! * [`auc_r_asym`]: the variant that rewards correct orderings with
//!   `max(0, y_hi - y_lo)` and never punishes wrong ones. Bounded in `[0, 1]`.
//! * [`sauc`]: [`auc_r`] with the hard indicator replaced by a logistic of
//!   the scaled score difference.
//!
//! The hard metrics run in `O(n log n)` by rewriting each pairwise sum as
//! `Σ_i y_i · (count_i)` with exact integer counts, summed with compensation.
//! SAUC is inherently pairwise; it skips pairs whose labels are both zero and
//! reduces fixed-size chunks in index order so the thread count never
//! changes the result.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no records to evaluate")]
    Empty,
    #[error("degenerate labels: AUC needs at least one clicked and one unclicked record")]
    DegenerateLabels,
    #[error("metric undefined: all revenue labels are equal (Z = 0)")]
    Undefined,
    #[error("non-finite score or label at record {index}")]
    NonFinite { index: usize },
    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
}

/// A record reduced to what the metrics need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub score: f64,
    pub y: f64,
    pub click: u8,
}

impl ScoredRecord {
    pub fn new(score: f64, y: f64, click: u8) -> Self {
        ScoredRecord { score, y, click }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Auc,
    AucR,
    AucRAsym,
    Sauc,
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricName::Auc => "auc",
            MetricName::AucR => "auc_r",
            MetricName::AucRAsym => "auc_r_asym",
            MetricName::Sauc => "sauc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: MetricName,
    pub value: f64,
    /// Perfect-order pair-gain total; `None` for classic AUC.
    pub normalizer_z: Option<f64>,
    pub n_pairs: u64,
    pub n_score_ties: u64,
}

/// Metric selector used by the fitting loops, the simulator and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Metric {
    Auc,
    AucR,
    AucRAsym,
    Sauc { temperature: f64 },
}

impl Metric {
    pub fn name(&self) -> MetricName {
        match self {
            Metric::Auc => MetricName::Auc,
            Metric::AucR => MetricName::AucR,
            Metric::AucRAsym => MetricName::AucRAsym,
            Metric::Sauc { .. } => MetricName::Sauc,
        }
    }

    pub fn evaluate(&self, records: &[ScoredRecord]) -> Result<MetricReport, MetricError> {
        self.evaluate_grouped(std::iter::once(records))
    }

    /// Evaluates with pairs restricted to records of the same group; the
    /// per-group gains and normalizers are summed before dividing.
    pub fn evaluate_grouped<'a, I>(&self, groups: I) -> Result<MetricReport, MetricError>
    where
        I: IntoIterator<Item = &'a [ScoredRecord]>,
    {
        let mut acc = PairTotals::default();
        let mut offset = 0usize;
        let mut any = false;
        for g in groups {
            any |= !g.is_empty();
            check_finite(g).map_err(|e| match e {
                MetricError::NonFinite { index } => MetricError::NonFinite { index: index + offset },
                other => other,
            })?;
            offset += g.len();
            let part = match self {
                Metric::Auc => auc_totals(g),
                Metric::AucR => auc_r_totals(g),
                Metric::AucRAsym => auc_r_asym_totals(g),
                Metric::Sauc { temperature } => {
                    check_temperature(*temperature)?;
                    sauc_totals(g, *temperature)
                }
            };
            acc.merge(&part);
        }
        if !any {
            return Err(MetricError::Empty);
        }
        acc.finish(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    /// Parses `auc`, `auc_r`, `auc_r_asym` or `sauc` (temperature 1).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auc" => Ok(Metric::Auc),
            "auc_r" => Ok(Metric::AucR),
            "auc_r_asym" => Ok(Metric::AucRAsym),
            "sauc" => Ok(Metric::Sauc {
                temperature: DEFAULT_TEMPERATURE,
            }),
            other => Err(format!(
                "unknown metric '{other}' (expected auc, auc_r, auc_r_asym or sauc)"
            )),
        }
    }
}

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Classic AUC: fraction of (clicked, unclicked) pairs ranked correctly,
/// score ties counting one half.
pub fn auc(records: &[ScoredRecord]) -> Result<MetricReport, MetricError> {
    Metric::Auc.evaluate(records)
}

pub fn auc_r(records: &[ScoredRecord]) -> Result<MetricReport, MetricError> {
    Metric::AucR.evaluate(records)
}

pub fn auc_r_asym(records: &[ScoredRecord]) -> Result<MetricReport, MetricError> {
    Metric::AucRAsym.evaluate(records)
}

pub fn sauc(records: &[ScoredRecord], temperature: f64) -> Result<MetricReport, MetricError> {
    Metric::Sauc { temperature }.evaluate(records)
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One SAUC pair term `σ(d)·Δy + σ(−d)·(−Δy)`, evaluated as `(2σ(d) − 1)·Δy`
/// (`2σ(d) − 1 = tanh(d/2)`).
#[inline]
pub fn soft_pair_term(d: f64, dy: f64) -> f64 {
    (0.5 * d).tanh() * dy
}

fn check_finite(records: &[ScoredRecord]) -> Result<(), MetricError> {
    match records.iter().position(|r| !r.score.is_finite() || !r.y.is_finite()) {
        Some(index) => Err(MetricError::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_temperature(t: f64) -> Result<(), MetricError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(MetricError::InvalidTemperature(t))
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds `a·b` together with the rounding error of the product.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.comp += a.mul_add(b, -p);
    }

    /// Adds `other · k` without first rounding `other` to one float.
    pub fn add_scaled(&mut self, other: &CompensatedSum, k: f64) {
        self.add_product(other.sum, k);
        self.comp += other.comp * k;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `a − b` as a rounded difference plus its exact error.
#[inline]
fn two_diff(a: f64, b: f64) -> (f64, f64) {
    let d = a - b;
    let bb = a - d;
    (d, (a - (d + bb)) + (bb - b))
}

/// Mergeable pair statistics for one group of records.
#[derive(Debug, Clone, Copy, Default)]
struct PairTotals {
    gain: CompensatedSum,
    z: CompensatedSum,
    /// AUC only: twice the number of correctly ordered pos/neg pairs plus ties.
    auc_twice_correct: u64,
    n_pairs: u64,
    n_score_ties: u64,
}

impl PairTotals {
    fn merge(&mut self, other: &PairTotals) {
        self.gain.merge(&other.gain);
        self.z.merge(&other.z);
        self.auc_twice_correct += other.auc_twice_correct;
        self.n_pairs += other.n_pairs;
        self.n_score_ties += other.n_score_ties;
    }

    fn finish(self, name: MetricName) -> Result<MetricReport, MetricError> {
        if name == MetricName::Auc {
            if self.n_pairs == 0 {
                return Err(MetricError::DegenerateLabels);
            }
            return Ok(MetricReport {
                name,
                value: self.auc_twice_correct as f64 / (2 * self.n_pairs) as f64,
                normalizer_z: None,
                n_pairs: self.n_pairs,
                n_score_ties: self.n_score_ties,
            });
        }
        let z = self.z.value();
        if z <= 0.0 {
            return Err(MetricError::Undefined);
        }
        let value = (self.gain.value() / z).clamp(-1.0, 1.0);
        Ok(MetricReport {
            name,
            value,
            normalizer_z: Some(z),
            n_pairs: self.n_pairs,
            n_score_ties: self.n_score_ties,
        })
    }
}

fn pairs_of(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Indices sorted by key ascending, ties kept in input order.
fn argsort_by<F: Fn(usize) -> f64>(n: usize, key: F) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap_or(Ordering::Equal));
    idx
}

/// Runs of equal keys in an ascending order: `(start, end)` half-open.
fn tie_runs<F: Fn(usize) -> f64>(order: &[usize], key: F) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=order.len() {
        if k == order.len() || key(order[k]) != key(order[start]) {
            runs.push((start, k));
            start = k;
        }
    }
    runs
}

/// `Σ_i y_i · (#{j: key_j < key_i} − #{j: key_j > key_i})`, i.e. the sum of
/// `y_hi − y_lo` over all pairs strictly ordered by `key`. Also returns the
/// number of tied pairs.
fn ordered_gain<F: Fn(usize) -> f64>(records: &[ScoredRecord], key: F) -> (CompensatedSum, u64) {
    let n = records.len();
    let order = argsort_by(n, &key);
    let mut coeff = vec![0i64; n];
    let mut ties = 0u64;
    for (start, end) in tie_runs(&order, &key) {
        let c = start as i64 - (n - end) as i64;
        ties += pairs_of(end - start);
        for &i in &order[start..end] {
            coeff[i] = c;
        }
    }
    // summed in input order, so mirrored orderings give exactly negated totals
    let mut gain = CompensatedSum::default();
    for (r, c) in records.iter().zip(coeff) {
        gain.add(r.y * c as f64);
    }
    (gain, ties)
}

fn auc_r_totals(records: &[ScoredRecord]) -> PairTotals {
    let (gain, ties) = ordered_gain(records, |i| records[i].score);
    let (z, _) = ordered_gain(records, |i| records[i].y);
    PairTotals {
        gain,
        z,
        n_pairs: pairs_of(records.len()),
        n_score_ties: ties,
        ..Default::default()
    }
}

/// Fenwick tree of counts over dense label ranks.
struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1] }
    }

    fn insert(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn count_below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn auc_r_asym_totals(records: &[ScoredRecord]) -> PairTotals {
    let n = records.len();
    // dense ranks of y
    let by_y = argsort_by(n, |i| records[i].y);
    let mut y_rank = vec![0usize; n];
    let y_runs = tie_runs(&by_y, |i| records[i].y);
    for (r, &(s, e)) in y_runs.iter().enumerate() {
        for &i in &by_y[s..e] {
            y_rank[i] = r;
        }
    }
    let n_ranks = y_runs.len();

    let by_score = argsort_by(n, |i| records[i].score);
    let runs = tie_runs(&by_score, |i| records[i].score);
    // below[i]: records with lower score and lower y; above[i]: higher score and higher y.
    let mut below = vec![0u64; n];
    let mut above = vec![0u64; n];
    let mut fw = Fenwick::new(n_ranks);
    for &(s, e) in &runs {
        for &i in &by_score[s..e] {
            below[i] = fw.count_below(y_rank[i]);
        }
        for &i in &by_score[s..e] {
            fw.insert(y_rank[i]);
        }
    }
    let mut fw = Fenwick::new(n_ranks);
    let mut inserted = 0u64;
    for &(s, e) in runs.iter().rev() {
        for &i in &by_score[s..e] {
            above[i] = inserted - fw.count_below(y_rank[i] + 1);
        }
        for &i in &by_score[s..e] {
            fw.insert(y_rank[i]);
        }
        inserted += (e - s) as u64;
    }
    let mut gain = CompensatedSum::default();
    for i in 0..n {
        gain.add(records[i].y * (below[i] as f64 - above[i] as f64));
    }
    let (z, _) = ordered_gain(records, |i| records[i].y);
    let ties = runs.iter().map(|&(s, e)| pairs_of(e - s)).sum();
    PairTotals {
        gain,
        z,
        n_pairs: pairs_of(n),
        n_score_ties: ties,
        ..Default::default()
    }
}

fn auc_totals(records: &[ScoredRecord]) -> PairTotals {
    let order = argsort_by(records.len(), |i| records[i].score);
    let mut neg_below = 0u64;
    let mut twice_correct = 0u64;
    let mut ties = 0u64;
    let (mut m, mut nn) = (0u64, 0u64);
    for (s, e) in tie_runs(&order, |i| records[i].score) {
        let pos = order[s..e].iter().filter(|&&i| records[i].click == 1).count() as u64;
        let neg = (e - s) as u64 - pos;
        twice_correct += 2 * pos * neg_below + pos * neg;
        ties += pos * neg;
        neg_below += neg;
        m += pos;
        nn += neg;
    }
    PairTotals {
        auc_twice_correct: twice_correct,
        n_pairs: m * nn,
        n_score_ties: ties,
        ..Default::default()
    }
}

const SAUC_CHUNK: usize = 64;
const TANH_SATURATION: f64 = 22.0;

fn sauc_totals(records: &[ScoredRecord], temperature: f64) -> PairTotals {
    // Dividing by 2T, rather than multiplying by a rounded 1/T, keeps each
    // tanh argument to a single rounding.
    let two_t = 2.0 * temperature;
    // Pairs with equal labels contribute exactly zero; in click logs most
    // labels are zero, so only pairs touching a nonzero label are visited.
    let nonzero: Vec<usize> = (0..records.len()).filter(|&i| records[i].y != 0.0).collect();
    let mut zero: Vec<f64> = records.iter().filter(|r| r.y == 0.0).map(|r| r.score).collect();
    zero.sort_by(f64::total_cmp);
    let partials: Vec<CompensatedSum> = nonzero
        .par_chunks(SAUC_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = CompensatedSum::default();
            for (k, &i) in chunk.iter().enumerate() {
                let a = records[i];
                let pos = c * SAUC_CHUNK + k;
                for &j in &nonzero[pos + 1..] {
                    let b = records[j];
                    let th = ((a.score - b.score) / two_t).tanh();
                    let (dy, dy_err) = two_diff(a.y, b.y);
                    acc.add_product(th, dy);
                    acc.comp += th * dy_err;
                }
                // tanh is exactly ±1 once |x| ≥ 22, so only the window of
                // zero-label scores near `a` needs evaluating.
                let x = |s: f64| (a.score - s) / two_t;
                let lo = zero.partition_point(|&s| x(s) >= TANH_SATURATION);
                let hi = lo + zero[lo..].partition_point(|&s| x(s) > -TANH_SATURATION);
                let mut inner = CompensatedSum::default();
                inner.add(lo as f64 - (zero.len() - hi) as f64);
                for &s in &zero[lo..hi] {
                    inner.add(x(s).tanh());
                }
                acc.add_scaled(&inner, a.y);
            }
            acc
        })
        .collect();
    let mut gain = CompensatedSum::default();
    for p in &partials {
        gain.merge(p);
    }
    let (z, _) = ordered_gain(records, |i| records[i].y);
    let order = argsort_by(records.len(), |i| records[i].score);
    let ties = tie_runs(&order, |i| records[i].score)
        .iter()
        .map(|&(s, e)| pairs_of(e - s))
        .sum();
    PairTotals {
        gain,
        z,
        n_pairs: pairs_of(records.len()),
        n_score_ties: ties,
        ..Default::default()
    }
}

/// Offline-vs-online sign agreement tally, laid out as
/// rows Offline+/Offline− by columns Online+/Online−.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub on_pos_off_pos: u64,
    pub on_pos_off_neg: u64,
    pub on_neg_off_pos: u64,
    pub on_neg_off_neg: u64,
}

impl ConfusionMatrix {
    /// Tallies one experiment. A delta counts as "+" only when strictly
    /// positive; zero means the candidate did not beat the baseline.
    pub fn record(&mut self, offline_delta: f64, online_delta: f64) {
        match (offline_delta > 0.0, online_delta > 0.0) {
            (true, true) => self.on_pos_off_pos += 1,
            (true, false) => self.on_neg_off_pos += 1,
            (false, true) => self.on_pos_off_neg += 1,
            (false, false) => self.on_neg_off_neg += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.on_pos_off_pos + self.on_pos_off_neg + self.on_neg_off_pos + self.on_neg_off_neg
    }

    pub fn disagreements(&self) -> u64 {
        self.on_neg_off_pos + self.on_pos_off_neg
    }

    pub fn disagreement_rate(&self) -> f64 {
        self.disagreements() as f64 / self.total() as f64
    }

    pub fn agreement_rate(&self) -> f64 {
        1.0 - self.disagreement_rate()
    }

    /// Cells in table reading order: (Off+,On+), (Off+,On−), (Off−,On+), (Off−,On−).
    pub fn cells(&self) -> [u64; 4] {
        [
            self.on_pos_off_pos,
            self.on_neg_off_pos,
            self.on_pos_off_neg,
            self.on_neg_off_neg,
        ]
    }
}

#[derive(Serialize, Deserialize)]
struct OnlineRow {
    #[serde(rename = "Online+")]
    online_pos: u64,
    #[serde(rename = "Online-")]
    online_neg: u64,
}

#[derive(Serialize, Deserialize)]
struct ConfusionJson {
    #[serde(rename = "Offline+")]
    offline_pos: OnlineRow,
    #[serde(rename = "Offline-")]
    offline_neg: OnlineRow,
}

impl Serialize for ConfusionMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ConfusionJson {
            offline_pos: OnlineRow {
                online_pos: self.on_pos_off_pos,
                online_neg: self.on_neg_off_pos,
            },
            offline_neg: OnlineRow {
                online_pos: self.on_pos_off_neg,
                online_neg: self.on_neg_off_neg,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfusionMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = ConfusionJson::deserialize(d)?;
        Ok(ConfusionMatrix {
            on_pos_off_pos: j.offline_pos.online_pos,
            on_neg_off_pos: j.offline_pos.online_neg,
            on_pos_off_neg: j.offline_neg.online_pos,
            on_neg_off_neg: j.offline_neg.online_neg,
        })
    }
}

/// Tallies `(offline_delta, online_delta)` pairs.
pub fn confusion_matrix(pairs: &[(f64, f64)]) -> Result<ConfusionMatrix, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for &(off, on) in pairs {
        m.record(off, on);
    }
    Ok(m)
}
