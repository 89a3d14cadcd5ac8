//! Patient rule induction (peeling then pasting) with training EPE as the
//! objective to minimise.

use super::{FitCache, MethodError};
use crate::data::{bounding_box_of, Region, SurvivalDataset};

/// Runs PRIM with peel fraction `alpha` and minimum support `beta0`
/// (a fraction of `data.n()`).
pub fn prim(data: &SurvivalDataset, alpha: f64, beta0: f64) -> Result<Region, MethodError> {
    prim_cached(data, alpha, beta0, &mut FitCache::default())
}

pub(crate) fn prim_cached(
    data: &SurvivalDataset,
    alpha: f64,
    beta0: f64,
    fits: &mut FitCache,
) -> Result<Region, MethodError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MethodError::InvalidArgument(format!(
            "alpha {alpha} not in (0, 1)"
        )));
    }
    let min_support = beta0 * data.n() as f64;
    if !(min_support >= 1.0) {
        return Err(MethodError::InvalidArgument(format!(
            "beta0 * n = {min_support} is below one point"
        )));
    }
    let mut region = data.bounding_box();
    let mut rows: Vec<usize> = (0..data.n()).collect();
    let (_, mut metric) = fits
        .get(data, &rows)
        .map_err(|e| MethodError::NoValidRegion(e.to_string()))?;

    while let Some((epe, next_rows)) = best_peel(data, &rows, alpha, min_support, fits) {
        if epe >= metric {
            break;
        }
        metric = epe;
        region = bounding_box_of(data.x_subgp(), next_rows.iter().copied()).expect("non-empty");
        rows = next_rows;
    }

    while let Some((epe, next_region)) = best_paste(data, &region, alpha, fits) {
        if epe >= metric {
            break;
        }
        metric = epe;
        region = next_region;
    }
    Ok(region)
}

/// Best of the `2 d` candidate peels as (EPE, remaining rows). A peel drops
/// the `ceil(alpha m)` most extreme points on one face; ties at the new face
/// stay in.
fn best_peel(
    data: &SurvivalDataset,
    rows: &[usize],
    alpha: f64,
    min_support: f64,
    fits: &mut FitCache,
) -> Option<(f64, Vec<usize>)> {
    let x = data.x_subgp();
    let m = rows.len();
    let r = (alpha * m as f64).ceil() as usize;
    if r >= m {
        return None;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for j in 0..data.d_subgp() {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[[i, j]]).collect();
        values.sort_unstable_by(f64::total_cmp);
        for upper_side in [false, true] {
            let kept: Vec<usize> = if upper_side {
                let face = values[m - 1 - r];
                rows.iter()
                    .copied()
                    .filter(|&i| x[[i, j]] <= face)
                    .collect()
            } else {
                let face = values[r];
                rows.iter()
                    .copied()
                    .filter(|&i| x[[i, j]] >= face)
                    .collect()
            };
            if kept.len() == m || (kept.len() as f64) < min_support {
                continue;
            }
            if let Ok((_, epe)) = fits.get(data, &kept) {
                if best.as_ref().is_none_or(|(b, _)| epe < *b) {
                    best = Some((epe, kept));
                }
            }
        }
    }
    best
}

/// Best single-face extension as (EPE, enlarged box). Candidates on a face
/// are the points beyond it that lie inside the box in every other
/// dimension; the face moves out to admit the nearest `ceil(alpha c)` of
/// the `c` candidates.
fn best_paste(
    data: &SurvivalDataset,
    region: &Region,
    alpha: f64,
    fits: &mut FitCache,
) -> Option<(f64, Region)> {
    let x = data.x_subgp();
    let d = data.d_subgp();
    let mut best: Option<(f64, Region)> = None;
    for j in 0..d {
        let others_inside = |i: usize| {
            (0..d).all(|k| {
                k == j || (region.lower()[k] <= x[[i, k]] && x[[i, k]] <= region.upper()[k])
            })
        };
        for upper_side in [false, true] {
            let mut beyond: Vec<f64> = (0..data.n())
                .filter(|&i| {
                    let v = x[[i, j]];
                    (if upper_side {
                        v > region.upper()[j]
                    } else {
                        v < region.lower()[j]
                    }) && others_inside(i)
                })
                .map(|i| x[[i, j]])
                .collect();
            if beyond.is_empty() {
                continue;
            }
            if upper_side {
                beyond.sort_unstable_by(f64::total_cmp);
            } else {
                beyond.sort_unstable_by(|a, b| b.total_cmp(a));
            }
            let admit = ((alpha * beyond.len() as f64).ceil() as usize).clamp(1, beyond.len());
            let face = beyond[admit - 1];
            let mut lower = region.lower().to_vec();
            let mut upper = region.upper().to_vec();
            if upper_side {
                upper[j] = face;
            } else {
                lower[j] = face;
            }
            let candidate = Region::new(lower, upper).expect("extension keeps lower <= upper");
            let rows = data.members(&candidate);
            if let Ok((_, epe)) = fits.get(data, &rows) {
                if best.as_ref().is_none_or(|(b, _)| epe < *b) {
                    best = Some((epe, candidate));
                }
            }
        }
    }
    best
}
