//! Revenue-aware offline metrics and ranking-function optimizers for
//! sponsored-search auctions, with a synthetic auction simulator used as a
//! stand-in for online traffic.

pub mod domain;
pub mod explicit;
pub mod implicit;
pub mod metrics;
pub mod simulator;

pub use domain::{load_dataset, save_dataset, AuctionRecord, DataError, Dataset, Format, ImpressionList};
pub use metrics::{
    auc, auc_r, auc_r_asym, confusion_matrix, sauc, ConfusionMatrix, Metric, MetricError, MetricName, MetricReport,
    ScoredRecord,
};

/// Anything that assigns a ranking score to a candidate ad.
pub trait RankingFunction: Sync {
    fn score(&self, rec: &AuctionRecord) -> f64;
}

impl<F: Fn(&AuctionRecord) -> f64 + Sync> RankingFunction for F {
    fn score(&self, rec: &AuctionRecord) -> f64 {
        self(rec)
    }
}

/// Scores every record of `ds` in pooled order.
pub fn score_records<R: RankingFunction + ?Sized>(ds: &Dataset, f: &R) -> Vec<ScoredRecord> {
    ds.records()
        .iter()
        .map(|r| ScoredRecord::new(f.score(r), r.y, r.click))
        .collect()
}

/// How pairs are formed when a metric is evaluated on a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// All records of the dataset form one sequence.
    #[default]
    Pooled,
    /// Only records of the same impression list are paired.
    WithinImpression,
}

/// Scores `ds` with `f` and evaluates `metric` under `scope`.
pub fn evaluate<R: RankingFunction + ?Sized>(
    ds: &Dataset,
    f: &R,
    metric: Metric,
    scope: PairScope,
) -> Result<MetricReport, MetricError> {
    let scored = score_records(ds, f);
    match scope {
        PairScope::Pooled => metric.evaluate(&scored),
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
