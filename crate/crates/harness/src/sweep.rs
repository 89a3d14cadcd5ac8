//! The replicate loop: seeded train/test split, every grid setting of every
//! method on the training side, one selected subgroup per method scored on
//! the test side.

use cox_subgroup::algos::{Method, MethodRunner, SubgroupResult};
use cox_subgroup::metrics::{c_index, empirical_epe, region_f1, rejection_fraction};
use cox_subgroup::{Region, SurvivalDataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Selection};
use crate::select::{select_best_f1, select_subgroup, SelectError};
use crate::HarnessError;

/// Level of the test-side rejection fraction.
pub const TEST_REJECTION_ALPHA: f64 = 0.1;

/// One (method, setting, replicate) outcome. Test metrics are filled only on
/// selected records. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub config: String,
    pub replicate: usize,
    pub region: Option<Region>,
    pub beta: Option<Vec<f64>>,
    pub n_train_in_region: usize,
    /// Training points in the region over training n.
    pub size_fraction: f64,
    pub train_epe: Option<f64>,
    pub n_test_in_region: Option<usize>,
    pub test_epe: Option<f64>,
    pub test_c_index: Option<f64>,
    pub test_rej10: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub failed: Option<String>,
}

impl RunRecord {
    pub fn empty(method: &str, config: &str, replicate: usize) -> Self {
        Self {
            method: method.into(),
            config: config.into(),
            replicate,
            region: None,
            beta: None,
            n_train_in_region: 0,
            size_fraction: 0.0,
            train_epe: None,
            n_test_in_region: None,
            test_epe: None,
            test_c_index: None,
            test_rej10: None,
            f1: None,
            precision: None,
            recall: None,
            failed: None,
        }
    }

    fn from_result(
        result: &SubgroupResult,
        replicate: usize,
        n_train: usize,
        truth: Option<(&Region, &Region)>,
    ) -> Self {
        let mut rec = Self::empty(
            result.config.method.name(),
            &result.config.to_string(),
            replicate,
        );
        rec.region = result.region.clone();
        rec.beta = result.model.as_ref().map(|m| m.beta.clone());
        rec.n_train_in_region = result.n_in_region;
        rec.size_fraction = result.n_in_region as f64 / n_train as f64;
        rec.train_epe = result.train_epe;
        rec.failed = result.failed.clone();
        if let (Some(region), Some((truth, bounds))) = (&result.region, truth) {
            if let Ok(score) = region_f1(region, truth, bounds) {
                rec.f1 = Some(score.f1);
                rec.precision = Some(score.precision);
                rec.recall = Some(score.recall);
            }
        }
        rec
    }
}

/// Row indices of one replicate's split, each side ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded split: replicate `r` draws from the master-seeded stream `r + 1`,
/// so replicates are independent of each other and of method randomness.
/// The test side holds `round(test_fraction * n)` rows, clamped to `[1, n-1]`.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64, replicate: usize) -> Split {
    assert!(n >= 2, "cannot split fewer than two rows");
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    let mut in_test = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, n_test) {
        in_test[i] = true;
    }
    let (test, train) = (0..n).partition(|&i| in_test[i]);
    Split { train, test }
}

/// Test-side scores of a region under a training-fit coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub n_in_region: usize,
    pub epe: Option<f64>,
    pub c_index: Option<f64>,
    pub rej10: Option<f64>,
}

/// Scores `beta` on the points of `data` inside `region`. No refitting.
/// Metrics are missing unless the region holds at least two points with at
/// least one comparable pair.
pub fn evaluate_region(region: &Region, beta: &[f64], data: &SurvivalDataset) -> TestMetrics {
    let rows = data.members(region);
    let mut out = TestMetrics {
        n_in_region: rows.len(),
        epe: None,
        c_index: None,
        rej10: None,
    };
    if rows.len() < 2 {
        return out;
    }
    let sub = data.subset(&rows);
    let Ok(epe) = empirical_epe(beta, &sub) else {
        return out;
    };
    out.epe = Some(epe);
    out.c_index = c_index(beta, &sub).ok();
    out.rej10 = rejection_fraction(&sub, beta, TEST_REJECTION_ALPHA).ok();
    out
}

/// Every run plus one selected record per (method, replicate). Both lists
/// are ordered by replicate, then method in configuration order, then grid
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub runs: Vec<RunRecord>,
    pub selected: Vec<RunRecord>,
}

pub fn run_sweep(
    config: &ExperimentConfig,
    data: &SurvivalDataset,
    truth: Option<&Region>,
) -> Result<SweepOutput, HarnessError> {
    config.validate()?;
    if config.selection == Selection::BestF1 && truth.is_none() {
        return Err(HarnessError::Config(
            "best-F1 selection needs a truth region".into(),
        ));
    }
    if data.n() < 2 {
        return Err(HarnessError::Config(
            "need at least two rows to split".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let per_replicate: Vec<(Vec<RunRecord>, Vec<RunRecord>)> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, data, truth, r))
            .collect()
    });
    let mut out = SweepOutput {
        runs: Vec::new(),
        selected: Vec::new(),
    };
    for (runs, selected) in per_replicate {
        out.runs.extend(runs);
        out.selected.extend(selected);
    }
    Ok(out)
}

fn run_replicate(
    config: &ExperimentConfig,
    data: &SurvivalDataset,
    truth: Option<&Region>,
    replicate: usize,
) -> (Vec<RunRecord>, Vec<RunRecord>) {
    let split = split_rows(data.n(), config.test_fraction, config.seed, replicate);
    let train = data.subset(&split.train);
    let test = data.subset(&split.test);
    let bounds = train.bounding_box();
    let truth = truth.map(|t| (t, &bounds));
    let mut runner = MethodRunner::new(&train, config.search);
    let mut runs = Vec::new();
    let mut selected = Vec::new();
    for &method in &config.methods {
        let records: Vec<RunRecord> = runner
            .run_grid(method)
            .iter()
            .map(|res| RunRecord::from_result(res, replicate, train.n(), truth))
            .collect();
        selected.push(select_and_score(config, &records, method, replicate, &test));
        runs.extend(records);
    }
    (runs, selected)
}

fn select_and_score(
    config: &ExperimentConfig,
    records: &[RunRecord],
    method: Method,
    replicate: usize,
    test: &SurvivalDataset,
) -> RunRecord {
    let pick = match config.selection {
        Selection::MinTrainEpe => select_subgroup(records, config.size_filter),
        Selection::BestF1 => select_best_f1(records),
    };
    let mut rec = match pick {
        Ok(i) => records[i].clone(),
        Err(err @ SelectError::NoEligibleSubgroup) => {
            let mut rec = RunRecord::empty(method.name(), "", replicate);
            rec.failed = Some(err.to_string());
            return rec;
        }
    };
    if let (Some(region), Some(beta)) = (&rec.region, &rec.beta) {
        let m = evaluate_region(region, beta, test);
        rec.n_test_in_region = Some(m.n_in_region);
        rec.test_epe = m.epe;
        rec.test_c_index = m.c_index;
        rec.test_rej10 = m.rej10;
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions_rows() {
        let s = split_rows(101, 0.2, 7, 3);
        assert_eq!(s.test.len(), 20);
        assert_eq!(s.train.len(), 81);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert!(s.test.is_sorted() && s.train.is_sorted());
        assert_eq!(s, split_rows(101, 0.2, 7, 3));
        assert_ne!(s, split_rows(101, 0.2, 7, 4));
        assert_ne!(s, split_rows(101, 0.2, 8, 3));
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        assert_eq!(split_rows(2, 0.01, 0, 0).test.len(), 1);
        assert_eq!(split_rows(2, 0.99, 0, 0).train.len(), 1);
    }
}
