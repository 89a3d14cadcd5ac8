//! Evaluation metrics: empirical expected prediction entropy (EPE), Harrell's
//! C-index, the CRS rejection fraction, and region precision/recall/F1.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cox::{risk_scores, FitError};
use crate::crs::SortedCore;
use crate::data::{Region, SurvivalDataset};
use crate::numerics::softplus;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("group of size {0} is too small (need at least 2)")]
    GroupTooSmall(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<FitError> for MetricError {
    fn from(err: FitError) -> Self {
        MetricError::InvalidArgument(err.to_string())
    }
}

/// Summary of how well one Cox model describes one group of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub epe: f64,
    pub c_index: f64,
    pub rejection_fraction: f64,
    pub n_points: usize,
    pub n_comparable_pairs: usize,
}

/// Computes EPE, C-index and the rejection fraction at level `alpha` together.
pub fn metric_report(
    beta: &[f64],
    data: &SurvivalDataset,
    alpha: f64,
) -> Result<MetricReport, MetricError> {
    let scores = scores_of(beta, data)?;
    let (epe, pairs) = epe_with_pairs(&scores, data)?;
    Ok(MetricReport {
        epe,
        c_index: c_index_from_scores(&scores, data)?,
        rejection_fraction: rejection_fraction(data, beta, alpha)?,
        n_points: data.n(),
        n_comparable_pairs: pairs,
    })
}

fn scores_of(beta: &[f64], data: &SurvivalDataset) -> Result<Vec<f64>, MetricError> {
    Ok(risk_scores(beta, data.x_adjust())?.to_vec())
}

/// Empirical EPE: the mean pairwise cross-entropy of "which unit fails
/// first" over all pairs `(i, j)` with `δ_i = 1` and `t_j > t_i`.
///
/// Each pair contributes `log(1 + exp(s_j - s_i))` with `s = x beta`. The
/// null model `beta = 0` scores exactly `log 2`.
pub fn empirical_epe(beta: &[f64], data: &SurvivalDataset) -> Result<f64, MetricError> {
    let scores = scores_of(beta, data)?;
    epe_with_pairs(&scores, data).map(|(epe, _)| epe)
}

/// Empirical EPE from precomputed risk scores (indexed like the dataset rows).
pub fn epe_from_scores(scores: &[f64], data: &SurvivalDataset) -> Result<f64, MetricError> {
    epe_with_pairs(scores, data).map(|(epe, _)| epe)
}

// Beyond this score spread the product kernel could overflow.
const PRODUCT_KERNEL_MAX_SPREAD: f64 = 200.0;
const FLUSH_AT: f64 = 1e100;

fn epe_with_pairs(scores: &[f64], data: &SurvivalDataset) -> Result<(f64, usize), MetricError> {
    let order = data.sort_index();
    let times = data.times();
    let events = data.events();
    let n = order.len();
    let s: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::InvalidArgument("non-finite risk score".into()));
    }
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let product_kernel = hi - lo <= PRODUCT_KERNEL_MAX_SPREAD;
    let mid = 0.5 * (hi + lo);
    let e: Vec<f64> = if product_kernel {
        s.iter().map(|v| (v - mid).exp()).collect()
    } else {
        Vec::new()
    };

    let mut total = 0.0;
    let mut pairs = 0usize;
    // `later` is the first sorted position with a strictly larger time.
    let mut later = 0;
    for p in 0..n {
        let i = order[p];
        if later <= p {
            later = p + 1;
            while later < n && times[order[later]] == times[i] {
                later += 1;
            }
        }
        if !events[i] || later == n {
            continue;
        }
        pairs += n - later;
        total += if product_kernel {
            sum_log1p_products(&e[later..], (mid - s[p]).exp())
        } else {
            s[later..].iter().map(|sj| softplus(sj - s[p])).sum()
        };
    }
    if pairs == 0 {
        return Err(MetricError::NoComparablePairs);
    }
    Ok((total / pairs as f64, pairs))
}

/// `sum_j log(1 + e_j * scale)`, accumulated as products of the factors with
/// one logarithm per flush. Factors are bounded by the spread check above.
fn sum_log1p_products(e: &[f64], scale: f64) -> f64 {
    let mut acc = [1.0f64; 4];
    let mut total = 0.0;
    let chunks = e.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            acc[k] *= 1.0 + c[k] * scale;
        }
        if acc.iter().any(|&a| a > FLUSH_AT) {
            for a in &mut acc {
                total += a.ln();
                *a = 1.0;
            }
        }
    }
    for &v in rest {
        total += (v * scale).ln_1p();
    }
    total + acc.iter().map(|a| a.ln()).sum::<f64>()
}

/// Harrell's C-index. Pairs `(i, j)` with `t_i < t_j` and `δ_i = 1` are
/// comparable; a pair scores 1 when `s_i > s_j`, 0.5 on a score tie, else 0.
pub fn c_index(beta: &[f64], data: &SurvivalDataset) -> Result<f64, MetricError> {
    let scores = scores_of(beta, data)?;
    c_index_from_scores(&scores, data)
}

pub fn c_index_from_scores(scores: &[f64], data: &SurvivalDataset) -> Result<f64, MetricError> {
    let order = data.sort_index();
    let times = data.times();
    let events = data.events();
    let n = order.len();
    let mut concordant = 0.0;
    let mut pairs = 0usize;
    let mut later = 0;
    for p in 0..n {
        let i = order[p];
        if later <= p {
            later = p + 1;
            while later < n && times[order[later]] == times[i] {
                later += 1;
            }
        }
        if !events[i] {
            continue;
        }
        let si = scores[i];
        for &j in &order[later..] {
            let sj = scores[j];
            if si > sj {
                concordant += 1.0;
            } else if si == sj {
                concordant += 0.5;
            }
        }
        pairs += n - later;
    }
    if pairs == 0 {
        return Err(MetricError::NoComparablePairs);
    }
    Ok(concordant / pairs as f64)
}

/// Fraction of a group's points whose rank tail score, computed against the
/// other `m - 1` points of the group, falls below `alpha`.
///
/// Censored points are tested on the right tail only.
pub fn rejection_fraction(
    data: &SurvivalDataset,
    beta: &[f64],
    alpha: f64,
) -> Result<f64, MetricError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricError::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let m = data.n();
    if m < 2 {
        return Err(MetricError::GroupTooSmall(m));
    }
    let scores = scores_of(beta, data)?;
    let order = data.sort_index();
    let times = data.times();
    let events = data.events();
    let rejected = (0..m)
        .filter(|&i| {
            let rest = order.iter().copied().filter(|&j| j != i);
            let core = SortedCore::from_sorted(
                rest.clone().map(|j| scores[j]),
                rest.clone().map(|j| times[j]),
                rest.map(|j| events[j]),
            );
            core.tail_score(scores[i], times[i], events[i]).tau < alpha
        })
        .count();
    Ok(rejected as f64 / m as f64)
}

/// Volume-based precision, recall and F1 of an estimated region against the
/// true one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RegionScore {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Volume precision/recall/F1. Both boxes are clipped to `bounds` first, so
/// unbounded sides are measured against the data bounding box.
pub fn region_f1(
    estimate: &Region,
    truth: &Region,
    bounds: &Region,
) -> Result<RegionScore, MetricError> {
    let Some(truth) = truth.intersect(bounds) else {
        return Err(MetricError::InvalidArgument(
            "truth region lies outside bounds".into(),
        ));
    };
    let truth_vol = truth.volume();
    if !(truth_vol > 0.0) {
        return Err(MetricError::InvalidArgument(
            "truth region has zero volume".into(),
        ));
    }
    let Some(estimate) = estimate.intersect(bounds) else {
        return Ok(RegionScore::from_pr(0.0, 0.0));
    };
    let overlap = estimate.intersect(&truth).map_or(0.0, |r| r.volume());
    let est_vol = estimate.volume();
    let precision = if est_vol > 0.0 {
        overlap / est_vol
    } else {
        0.0
    };
    Ok(RegionScore::from_pr(precision, overlap / truth_vol))
}

/// Point-count precision and recall: how many points inside `estimate` carry
/// a true label, over the points inside `estimate` and over all true points.
pub fn point_precision_recall(
    estimate: &Region,
    truth_labels: &[bool],
    x_subgp: ArrayView2<'_, f64>,
) -> Result<(f64, f64), MetricError> {
    if truth_labels.len() != x_subgp.nrows() {
        return Err(MetricError::InvalidArgument(format!(
            "{} labels for {} points",
            truth_labels.len(),
            x_subgp.nrows()
        )));
    }
    let n_true = truth_labels.iter().filter(|&&t| t).count();
    if n_true == 0 {
        return Err(MetricError::InvalidArgument("no true points".into()));
    }
    let mut inside = 0usize;
    let mut hits = 0usize;
    for (row, &label) in x_subgp.rows().into_iter().zip(truth_labels) {
        if estimate.contains(row) {
            inside += 1;
            hits += usize::from(label);
        }
    }
    let precision = if inside > 0 {
        hits as f64 / inside as f64
    } else {
        0.0
    };
    Ok((precision, hits as f64 / n_true as f64))
}
