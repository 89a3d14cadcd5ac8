//! DDGroup: find a core neighbourhood where one Cox model fits well, label the
//! points that do not conform to it, and grow a box from the core mean until
//! it runs into non-conforming points.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MethodError, SearchOptions};
use crate::cox::{fit_cox, risk_scores, CoxModel};
use crate::crs::SortedCore;
use crate::data::{bounding_box_of, Region, SurvivalDataset};
use crate::metrics::{c_index_from_scores, epe_from_scores};
use crate::numerics::{log_add_exp, mean_std, quantile};

/// How candidate core neighbourhoods are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoreQuality {
    /// Lowest empirical EPE.
    Epe,
    /// Highest C-index.
    CIndex,
    /// Highest log partial likelihood.
    PartialLikelihood,
}

/// Per-point conformity score against the core model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionScore {
    /// Rank tail score of the conditional rank statistics.
    Crs,
    /// Fraction of comparable core points concordant with the point.
    CIndex,
    /// The point's own partial-likelihood term (summed over possible failure
    /// positions when censored).
    PartialLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DDGroupVariant {
    Crs,
    CIndex,
    PartialLikelihood,
    /// Returns the bounding box of the core group without a rejection phase.
    NoExpand,
}

impl DDGroupVariant {
    pub fn core_quality(self) -> CoreQuality {
        match self {
            DDGroupVariant::Crs | DDGroupVariant::NoExpand => CoreQuality::Epe,
            DDGroupVariant::CIndex => CoreQuality::CIndex,
            DDGroupVariant::PartialLikelihood => CoreQuality::PartialLikelihood,
        }
    }

    pub fn rejection_score(self) -> Option<RejectionScore> {
        match self {
            DDGroupVariant::Crs => Some(RejectionScore::Crs),
            DDGroupVariant::CIndex => Some(RejectionScore::CIndex),
            DDGroupVariant::PartialLikelihood => Some(RejectionScore::PartialLikelihood),
            DDGroupVariant::NoExpand => None,
        }
    }
}

/// The selected neighbourhood and the Cox model fitted on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreGroup {
    /// Row indices, ascending.
    pub indices: Vec<usize>,
    pub model: CoxModel,
    /// Row whose neighbourhood this is.
    pub center_row: usize,
    /// Quality value in its natural orientation (EPE, C-index or log-PL).
    pub quality: f64,
}

/// Exhaustive core-group search: every row is tried as a centre.
pub fn core_group(
    data: &SurvivalDataset,
    core_frac: f64,
    quality: CoreQuality,
) -> Result<CoreGroup, MethodError> {
    core_group_with(data, core_frac, quality, &SearchOptions::default())
}

/// Neighbourhood size `round(core_frac n)`, at least `d_adjust + 2`, at most `n`.
pub fn core_size(data: &SurvivalDataset, core_frac: f64) -> Result<usize, MethodError> {
    if !(core_frac > 0.0 && core_frac <= 1.0) {
        return Err(MethodError::InvalidArgument(format!(
            "core_frac {core_frac} not in (0, 1]"
        )));
    }
    let floor = data.d_adjust() + 2;
    if data.n() < floor {
        return Err(MethodError::TooFewPoints {
            required: floor,
            available: data.n(),
        });
    }
    Ok(((core_frac * data.n() as f64).round() as usize).clamp(floor, data.n()))
}

/// Subgroup features centred and scaled to unit population variance per
/// column (constant columns are only centred).
fn standardized(x: ArrayView2<'_, f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, d) = x.dim();
    let mut scale = Vec::with_capacity(d);
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let col = x.column(j);
        let (mean, sd) = mean_std(col.iter().copied());
        let sd = if sd > 0.0 { sd } else { 1.0 };
        scale.push(sd);
        cols.push((0..n).map(|i| (col[i] - mean) / sd).collect());
    }
    (cols, scale)
}

/// `k` nearest rows to `center` (self included), ties broken by row index.
fn neighbours(cols: &[Vec<f64>], center: usize, k: usize) -> Vec<usize> {
    let n = cols[0].len();
    let mut dist: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let d2: f64 = cols.iter().map(|c| (c[i] - c[center]).powi(2)).sum();
            (d2, i)
        })
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        dist.select_nth_unstable_by(k - 1, by_key);
        dist.truncate(k);
    }
    let mut rows: Vec<usize> = dist.into_iter().map(|(_, i)| i).collect();
    rows.sort_unstable();
    rows
}

/// Quality oriented so that lower is better, or `None` when the
/// neighbourhood cannot be scored.
fn neighbourhood_loss(
    data: &SurvivalDataset,
    rows: &[usize],
    quality: CoreQuality,
) -> Option<(f64, CoxModel)> {
    let subset = data.subset(rows);
    let model = fit_cox(&subset, 0.0).ok().filter(|m| m.converged)?;
    let scores = risk_scores(&model.beta, subset.x_adjust()).ok()?.to_vec();
    let loss = match quality {
        CoreQuality::Epe => epe_from_scores(&scores, &subset).ok()?,
        CoreQuality::CIndex => -c_index_from_scores(&scores, &subset).ok()?,
        CoreQuality::PartialLikelihood => -model.log_pl,
    };
    loss.is_finite().then_some((loss, model))
}

/// Core-group search with an optional cap on pairwise work. When
/// `n k^2 / 2` exceeds `options.core_pair_budget`, every `stride`-th row is
/// tried as a centre instead of every row.
pub fn core_group_with(
    data: &SurvivalDataset,
    core_frac: f64,
    quality: CoreQuality,
    options: &SearchOptions,
) -> Result<CoreGroup, MethodError> {
    let n = data.n();
    let k = core_size(data, core_frac)?;
    let centers: Vec<usize> = if k == n {
        // Every neighbourhood is the whole dataset.
        vec![0]
    } else {
        let stride = match options.core_pair_budget {
            Some(budget) => {
                let pairs_per_center = (k as f64).powi(2) / 2.0;
                let allowed = (budget as f64 / pairs_per_center).floor().max(1.0);
                (n as f64 / allowed).ceil().max(1.0) as usize
            }
            None => 1,
        };
        (0..n).step_by(stride).collect()
    };
    let (cols, _) = standardized(data.x_subgp());
    let best = centers
        .par_iter()
        .filter_map(|&c| {
            let rows = neighbours(&cols, c, k);
            neighbourhood_loss(data, &rows, quality).map(|(loss, model)| (loss, c, rows, model))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (loss, center_row, indices, model) = best.ok_or(MethodError::NoValidCoreGroup)?;
    let quality_value = match quality {
        CoreQuality::Epe => loss,
        _ => -loss,
    };
    Ok(CoreGroup {
        indices,
        model,
        center_row,
        quality: quality_value,
    })
}

/// Conformity score of every row against the core group under `beta`.
/// Core members are scored against the core without themselves.
pub fn conformity_scores(
    data: &SurvivalDataset,
    core: &[usize],
    beta: &[f64],
    score: RejectionScore,
) -> Result<Vec<f64>, MethodError> {
    if core.len() < 2 {
        return Err(MethodError::TooFewPoints {
            required: 2,
            available: core.len(),
        });
    }
    let s = risk_scores(beta, data.x_adjust())?.to_vec();
    let times = data.times();
    let events = data.events();
    let mut sorted_core: Vec<usize> = core.to_vec();
    sorted_core.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    let mut in_core = vec![false; data.n()];
    for &i in core {
        in_core[i] = true;
    }
    let build = |skip: Option<usize>| {
        let rows = sorted_core
            .iter()
            .copied()
            .filter(move |&j| Some(j) != skip);
        SortedCore::from_sorted(
            rows.clone().map(|j| s[j]),
            rows.clone().map(|j| times[j]),
            rows.map(|j| events[j]),
        )
    };
    let full = build(None);
    let out = (0..data.n())
        .map(|i| {
            let loo;
            let group = if in_core[i] {
                loo = build(Some(i));
                &loo
            } else {
                &full
            };
            point_score(group, s[i], times[i], events[i], score)
        })
        .collect();
    Ok(out)
}

fn point_score(
    core: &SortedCore,
    s_star: f64,
    t_star: f64,
    delta_star: bool,
    score: RejectionScore,
) -> f64 {
    match score {
        RejectionScore::Crs => core.tail_score(s_star, t_star, delta_star).tau,
        RejectionScore::CIndex => ci_score(core, s_star, t_star, delta_star),
        RejectionScore::PartialLikelihood => pl_score(core, s_star, t_star, delta_star),
    }
}

/// Concordant fraction: earlier core failures should have higher risk, and
/// (for an observed test failure) later core units lower-or-equal risk. An
/// empty comparison set scores 1.
fn ci_score(core: &SortedCore, s_star: f64, t_star: f64, delta_star: bool) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for ((&s, &t), &e) in core.scores().iter().zip(core.times()).zip(core.events()) {
        if t < t_star {
            if e {
                total += 1;
                hits += usize::from(s > s_star);
            }
        } else if delta_star {
            total += 1;
            hits += usize::from(s <= s_star);
        }
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Partial-likelihood term of the test point. A censored point sums the
/// terms it would have at each later core failure, each against the risk
/// set (ties included) of that failure; one suffix sum per tie block.
fn pl_score(core: &SortedCore, s_star: f64, t_star: f64, delta_star: bool) -> f64 {
    let times = core.times();
    let log_suffix = core.log_suffix();
    let start = times.partition_point(|&t| t < t_star);
    if delta_star {
        return (s_star - log_add_exp(s_star, log_suffix[start])).exp();
    }
    let mut total = 0.0;
    let mut block_start = start;
    for p in start..times.len() {
        if times[p] != times[block_start] {
            block_start = p;
        }
        if core.events()[p] {
            total += (s_star - log_add_exp(s_star, log_suffix[block_start])).exp();
        }
    }
    total
}

/// Rows whose score falls strictly below the `rej_quantile` quantile of all
/// scores.
pub fn labels_from_scores(scores: &[f64], rej_quantile: f64) -> Vec<bool> {
    let threshold = quantile(scores, rej_quantile);
    scores.iter().map(|&s| s < threshold).collect()
}

pub(crate) fn validate_quantile(rej_quantile: f64) -> Result<(), MethodError> {
    if rej_quantile > 0.0 && rej_quantile <= 0.5 {
        Ok(())
    } else {
        Err(MethodError::InvalidArgument(format!(
            "rej_quantile {rej_quantile} not in (0, 0.5]"
        )))
    }
}

/// Rejection labels for every row of `data` against the given core.
pub fn rejection_labels(
    data: &SurvivalDataset,
    core: &[usize],
    beta: &[f64],
    score: RejectionScore,
    rej_quantile: f64,
) -> Result<Vec<bool>, MethodError> {
    validate_quantile(rej_quantile)?;
    let scores = conformity_scores(data, core, beta, score)?;
    Ok(labels_from_scores(&scores, rej_quantile))
}

/// Grows a box from `center` until each face meets a rejected point.
///
/// `speeds[2 j]` and `speeds[2 j + 1]` are the speeds of the lower and
/// upper face in dimension `j`: a face at "time" `τ` sits at
/// `center[j] ∓ speed τ`. The nearest rejected point in that clock fixes
/// its supporting face at the point's coordinate, rejected points on or
/// beyond the fixed face are discarded, and the process repeats. Faces never
/// reached stay at `bounds`. No rejected point lies in the open interior of
/// the result.
pub fn grow_box(
    x: ArrayView2<'_, f64>,
    rejected: &[bool],
    bounds: &Region,
    center: &[f64],
    speeds: &[f64],
) -> Result<Region, MethodError> {
    let d = bounds.dim();
    if x.ncols() != d || center.len() != d || speeds.len() != 2 * d || rejected.len() != x.nrows() {
        return Err(MethodError::InvalidArgument(
            "grow_box dimensions disagree".into(),
        ));
    }
    if !bounds.contains_point(center) {
        return Err(MethodError::InvalidArgument(
            "center lies outside bounds".into(),
        ));
    }
    if speeds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(MethodError::InvalidArgument(
            "speeds must be positive and finite".into(),
        ));
    }
    let mut lower = bounds.lower().to_vec();
    let mut upper = bounds.upper().to_vec();
    let mut open = vec![true; 2 * d];
    // Directed coordinate of row `i` along face `f`.
    let along = |i: usize, f: usize| {
        let (j, up) = (f / 2, f % 2 == 1);
        let y = x[[i, j]] - center[j];
        if up {
            y / speeds[f]
        } else {
            -y / speeds[f]
        }
    };
    let mut live: Vec<usize> = (0..x.nrows()).filter(|&i| rejected[i]).collect();
    while !live.is_empty() && open.iter().any(|&o| o) {
        let norm = |i: usize| {
            (0..2 * d)
                .filter(|&f| open[f])
                .map(|f| (along(i, f), f))
                .fold((f64::NEG_INFINITY, usize::MAX), |best, cur| {
                    if cur.0 > best.0 {
                        cur
                    } else {
                        best
                    }
                })
        };
        let mut best: Option<(f64, usize, usize)> = None;
        for &i in &live {
            let (value, face) = norm(i);
            if best.is_none_or(|(b, _, _)| value < b) {
                best = Some((value, face, i));
            }
        }
        let (level, face, row) = best.expect("live is non-empty");
        let j = face / 2;
        if face % 2 == 1 {
            upper[j] = x[[row, j]].clamp(bounds.lower()[j], bounds.upper()[j]);
        } else {
            lower[j] = x[[row, j]].clamp(bounds.lower()[j], bounds.upper()[j]);
        }
        open[face] = false;
        live.retain(|&i| along(i, face) < level);
    }
    for j in 0..d {
        if lower[j] > upper[j] {
            let mid = 0.5 * (lower[j] + upper[j]);
            lower[j] = mid;
            upper[j] = mid;
        }
    }
    Region::new(lower, upper).map_err(|e| MethodError::InvalidArgument(e.to_string()))
}

/// Per-feature population standard deviation of the subgroup features
/// (1 for constant columns), repeated for both faces of each dimension.
pub(crate) fn unit_speeds(data: &SurvivalDataset) -> Vec<f64> {
    let (_, scale) = standardized(data.x_subgp());
    scale.iter().flat_map(|&s| [s, s]).collect()
}

pub(crate) fn core_mean(data: &SurvivalDataset, core: &CoreGroup) -> Vec<f64> {
    let x = data.x_subgp();
    (0..data.d_subgp())
        .map(|j| core.indices.iter().map(|&i| x[[i, j]]).sum::<f64>() / core.indices.len() as f64)
        .collect()
}

/// Grows the final region from the core mean around the rejected rows.
pub(crate) fn expand(
    data: &SurvivalDataset,
    core: &CoreGroup,
    rejected: &[bool],
) -> Result<Region, MethodError> {
    let center = core_mean(data, core);
    grow_box(
        data.x_subgp(),
        rejected,
        &data.bounding_box(),
        &center,
        &unit_speeds(data),
    )
}

pub(crate) fn core_bounding_box(data: &SurvivalDataset, core: &CoreGroup) -> Region {
    bounding_box_of(data.x_subgp(), core.indices.iter().copied()).expect("core is non-empty")
}

/// Runs one DDGroup variant end to end with exhaustive core search.
pub fn ddgroup(
    data: &SurvivalDataset,
    core_frac: f64,
    rej_quantile: f64,
    variant: DDGroupVariant,
) -> Result<Region, MethodError> {
    let core = core_group(data, core_frac, variant.core_quality())?;
    match variant.rejection_score() {
        None => Ok(core_bounding_box(data, &core)),
        Some(score) => {
            let rejected =
                rejection_labels(data, &core.indices, &core.model.beta, score, rej_quantile)?;
            expand(data, &core, &rejected)
        }
    }
}
