//! Cox proportional hazards: log partial likelihood and Newton-Raphson fitting.
//!
//! Tied event times follow the Breslow convention: every failure in a tied
//! block uses the full risk set `{j : t_j >= t_i}`. The baseline hazard is
//! never estimated.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SurvivalDataset;

const GRAD_TOL: f64 = 1e-9;
const REL_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;
const RIDGE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{events} uncensored events, need at least {required}")]
    InsufficientEvents { events: usize, required: usize },
    #[error("information matrix is singular even with ridge {ridge}")]
    Singular { ridge: f64 },
    #[error("partial likelihood became non-finite")]
    NonFinite,
}

/// Fitted Cox coefficients plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    /// Unpenalised log partial likelihood at `beta`.
    pub log_pl: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Ridge actually used; differs from the requested one after a bump.
    pub ridge: f64,
    pub ridge_bumped: bool,
}

/// `x beta` for every row.
pub fn risk_scores(beta: &[f64], x: ArrayView2<'_, f64>) -> Result<Array1<f64>, FitError> {
    if beta.len() != x.ncols() {
        return Err(FitError::InvalidArgument(format!(
            "beta has length {} but x has {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(FitError::InvalidArgument("non-finite beta".into()));
    }
    Ok(x.rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect())
}

/// Log partial likelihood, computed in one backward pass over the time order
/// with a max-shifted running sum of `exp(x_j beta)`.
pub fn log_partial_likelihood(beta: &[f64], data: &SurvivalDataset) -> Result<f64, FitError> {
    let scores = risk_scores(beta, data.x_adjust())?;
    Ok(log_pl_from_scores(
        scores.as_slice().expect("contiguous"),
        data,
    ))
}

pub(crate) fn log_pl_from_scores(scores: &[f64], data: &SurvivalDataset) -> f64 {
    let order = data.sort_index();
    let times = data.times();
    let events = data.events();
    let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut risk = 0.0;
    let mut total = 0.0;
    let mut end = order.len();
    while end > 0 {
        let start = tie_block_start(order, &times, end);
        for &i in &order[start..end] {
            risk += (scores[i] - shift).exp();
        }
        let log_risk = shift + risk.ln();
        for &i in &order[start..end] {
            if events[i] {
                total += scores[i] - log_risk;
            }
        }
        end = start;
    }
    total
}

/// First position of the tied-time block ending (exclusively) at `end`.
fn tie_block_start(order: &[usize], times: &ndarray::ArrayView1<'_, f64>, end: usize) -> usize {
    let t = times[order[end - 1]];
    let mut start = end - 1;
    while start > 0 && times[order[start - 1]] == t {
        start -= 1;
    }
    start
}

struct Derivatives {
    log_pl: f64,
    gradient: DVector<f64>,
    information: DMatrix<f64>,
}

fn derivatives(beta: &[f64], data: &SurvivalDataset) -> Derivatives {
    let d = beta.len();
    let x = data.x_adjust();
    let scores = risk_scores(beta, x).expect("dimensions checked by caller");
    let order = data.sort_index();
    let times = data.times();
    let events = data.events();
    let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Centred covariates leave the derivatives unchanged but avoid
    // cancellation in the weighted second moments.
    let centre: Vec<f64> = (0..d).map(|a| x.column(a).mean().unwrap_or(0.0)).collect();
    let xc = |i: usize, a: usize| x[[i, a]] - centre[a];

    let mut w_sum = 0.0;
    let mut wx = vec![0.0; d];
    let mut wxx = vec![0.0; d * d];
    let mut log_pl = 0.0;
    let mut gradient = DVector::zeros(d);
    let mut information = DMatrix::zeros(d, d);
    let mut end = order.len();
    while end > 0 {
        let start = tie_block_start(order, &times, end);
        for &i in &order[start..end] {
            let w = (scores[i] - shift).exp();
            w_sum += w;
            for a in 0..d {
                let xa = xc(i, a);
                wx[a] += w * xa;
                for b in 0..d {
                    wxx[a * d + b] += w * xa * xc(i, b);
                }
            }
        }
        let n_fail = order[start..end].iter().filter(|&&i| events[i]).count();
        if n_fail > 0 {
            let log_risk = shift + w_sum.ln();
            let k = n_fail as f64;
            for &i in &order[start..end] {
                if events[i] {
                    log_pl += scores[i] - log_risk;
                    for a in 0..d {
                        gradient[a] += xc(i, a);
                    }
                }
            }
            for a in 0..d {
                let mean_a = wx[a] / w_sum;
                gradient[a] -= k * mean_a;
                for b in 0..d {
                    let mean_b = wx[b] / w_sum;
                    information[(a, b)] += k * (wxx[a * d + b] / w_sum - mean_a * mean_b);
                }
            }
        }
        end = start;
    }
    Derivatives {
        log_pl,
        gradient,
        information,
    }
}

fn penalised(log_pl: f64, beta: &[f64], ridge: f64) -> f64 {
    log_pl - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
}

/// Maximises the ridge-penalised log partial likelihood
/// `log_pl(beta) - ridge/2 * |beta|^2` by Newton-Raphson with step halving.
///
/// Stops when the gradient max-norm drops below 1e-9 or the relative change of
/// the objective below 1e-12, after at most 100 iterations. A singular
/// information matrix bumps the ridge to at least 1e-8 and retries; the bump
/// is recorded in the returned model. Non-convergence is not an error: the
/// last iterate is returned with `converged = false`.
pub fn fit_cox(data: &SurvivalDataset, ridge: f64) -> Result<CoxModel, FitError> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(FitError::InvalidArgument(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let d = data.d_adjust();
    let events = data.n_events();
    if events < d + 1 {
        return Err(FitError::InsufficientEvents {
            events,
            required: d + 1,
        });
    }

    let mut ridge = ridge;
    let mut ridge_bumped = false;
    let mut beta = vec![0.0; d];
    let mut current = derivatives(&beta, data);
    let mut objective = penalised(current.log_pl, &beta, ridge);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        let grad = &current.gradient - DVector::from_column_slice(&beta) * ridge;
        if grad.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;

        let step = loop {
            let system = &current.information + DMatrix::identity(d, d) * ridge;
            match system.cholesky() {
                Some(chol) => break chol.solve(&grad),
                None if ridge < 1.0 => {
                    ridge = (ridge * 10.0).max(RIDGE_FLOOR);
                    ridge_bumped = true;
                    objective = penalised(current.log_pl, &beta, ridge);
                }
                None => return Err(FitError::Singular { ridge }),
            }
        };
        let grad = &current.gradient - DVector::from_column_slice(&beta) * ridge;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            if candidate.iter().all(|b| b.is_finite()) {
                let next = derivatives(&candidate, data);
                let next_objective = penalised(next.log_pl, &candidate, ridge);
                if next_objective.is_finite() && next_objective >= objective {
                    accepted = Some((candidate, next, next_objective));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((candidate, next, next_objective)) = accepted else {
            // No ascent along the Newton direction: at the optimum up to
            // rounding.
            converged = grad.amax() < GRAD_TOL.sqrt();
            break;
        };
        let change = (next_objective - objective).abs() / objective.abs().max(1e-300);
        beta = candidate;
        current = next;
        objective = next_objective;
        if change < REL_TOL {
            converged = true;
            break;
        }
    }

    if !current.log_pl.is_finite() {
        return Err(FitError::NonFinite);
    }
    Ok(CoxModel {
        beta,
        log_pl: current.log_pl,
        converged,
        iterations,
        ridge,
        ridge_bumped,
    })
}
