//! Picking one subgroup per method and replicate from a sweep's records.

use thiserror::Error;

use crate::sweep::RunRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("no eligible subgroup")]
    NoEligibleSubgroup,
}

/// Drops failed records and those holding fewer than `size_filter` of the
/// training points, then returns the lowest training EPE (first on ties).
pub fn select_subgroup(records: &[RunRecord], size_filter: f64) -> Result<usize, SelectError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        if r.failed.is_some() || r.size_fraction < size_filter {
            continue;
        }
        let Some(epe) = r.train_epe.filter(|e| e.is_finite()) else {
            continue;
        };
        if best.is_none_or(|(_, b)| epe < b) {
            best = Some((i, epe));
        }
    }
    best.map(|(i, _)| i).ok_or(SelectError::NoEligibleSubgroup)
}

/// Returns the non-failed record with the highest F1 against the truth
/// (first on ties). Records without an F1 are skipped.
pub fn select_best_f1(records: &[RunRecord]) -> Result<usize, SelectError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        if r.failed.is_some() {
            continue;
        }
        let Some(f1) = r.f1.filter(|f| f.is_finite()) else {
            continue;
        };
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((i, f1));
        }
    }
    best.map(|(i, _)| i).ok_or(SelectError::NoEligibleSubgroup)
}
