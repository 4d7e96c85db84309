use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MosReport, MosiReport};
use crate::error::{Error, Result};

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Evaluates `items` on a pool of `workers` threads, returning results in input order.
///
/// The first error in input order wins, so the outcome does not depend on
/// scheduling.
pub fn run_parallel<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<R>> = pool.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosSummary {
    #[serde(rename = "J_mean")]
    pub j_mean: Option<f64>,
    #[serde(rename = "F_mean")]
    pub f_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sr_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosDatasetReport {
    pub schema_version: u32,
    pub sequences: BTreeMap<String, MosReport>,
    pub dataset: MosSummary,
}

impl MosDatasetReport {
    /// Dataset means are taken over per-sequence means, in sequence-name order.
    pub fn from_sequences(sequences: BTreeMap<String, MosReport>) -> Self {
        let dataset = MosSummary {
            j_mean: mean_defined(sequences.values().map(|r| r.j)),
            f_mean: mean_defined(sequences.values().map(|r| r.f)),
            sr_mean: mean_defined(sequences.values().map(|r| r.sr)),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            sequences,
            dataset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosiSummary {
    pub j_mov: Option<f64>,
    pub fp_count: Option<f64>,
    pub mt_iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosiDatasetReport {
    pub schema_version: u32,
    pub sequences: BTreeMap<String, MosiReport>,
    pub dataset: MosiSummary,
}

impl MosiDatasetReport {
    /// Per-object → per-sequence → dataset averaging.
    pub fn from_sequences(sequences: BTreeMap<String, MosiReport>) -> Self {
        let dataset = MosiSummary {
            j_mov: mean_defined(sequences.values().map(|r| r.j_mov)),
            fp_count: mean_defined(sequences.values().map(|r| Some(r.fp_count))),
            mt_iou: mean_defined(sequences.values().map(|r| Some(r.mt_iou))),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            sequences,
            dataset,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_preserves_order_and_first_error() {
        let items: Vec<u32> = (0..50).collect();
        let serial = run_parallel(&items, 1, |&x| Ok(x * 2)).unwrap();
        let parallel = run_parallel(&items, 4, |&x| Ok(x * 2)).unwrap();
        assert_eq!(serial, parallel);
        let err = run_parallel(&items, 4, |&x| {
            if x % 10 == 7 {
                Err(Error::InvalidInput(format!("{x}")))
            } else {
                Ok(x)
            }
        })
        .unwrap_err();
        assert_eq!(err.to_string(), "invalid input: 7");
    }

    #[test]
    fn undefined_sequences_are_skipped() {
        let report = |j| MosiReport {
            j_mov: j,
            fp_count: 1.0,
            mt_iou: 50.0,
            tiou: vec![],
            per_object: BTreeMap::new(),
        };
        let all = BTreeMap::from([("a".to_string(), report(Some(80.0))), ("b".to_string(), report(None))]);
        let d = MosiDatasetReport::from_sequences(all);
        assert_eq!(d.dataset.j_mov, Some(80.0));
        assert_eq!(d.dataset.mt_iou, Some(50.0));
    }
}
