//! Conditional rank statistics (CRS).
//!
//! For a test point `x*` and a core group sorted by event time, the
//! unconditional rank probability `r_k` is the Cox partial likelihood of the
//! ordering obtained by inserting `x*` as the `k`-th event (`k = 1..=n+1`),
//! with the test point always counted as a failure. The CRS `r^c` is `r`
//! normalised to sum to one.
//!
//! [`fast_log_rank_probs`] computes all `n + 1` values in `O(n)` using the
//! ratio recursion
//!
//! ```text
//! r_{k+1} / r_k = (S_k + (1 - δ_k) e^{s*}) / (S_{k+1} + e^{s*}),   S_k = Σ_{i>=k} e^{s_i}
//! ```
//!
//! with every suffix sum held as a log-sum-exp accumulator, so no
//! subtraction of exponentials ever happens. [`naive_log_rank_probs`]
//! evaluates the product directly and exists as a test oracle.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cox::risk_scores;
use crate::data::SurvivalDataset;
use crate::numerics::{log_add_exp, log_sum_exp, softmax};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Log unconditional rank probabilities and the normalised CRS, both of
/// length `n + 1`. Index `k - 1` holds rank `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProbabilities {
    pub log_r: Vec<f64>,
    pub crs: Vec<f64>,
}

impl RankProbabilities {
    fn from_log(log_r: Vec<f64>) -> Self {
        let crs = softmax(&log_r);
        Self { log_r, crs }
    }
}

/// Rank tail score of one test point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailScore {
    pub tau: f64,
    /// 1-based insertion rank of the test time among the core times; the
    /// test point goes after core points with an equal time.
    pub rank: usize,
    pub censored: bool,
}

/// A core group reduced to what the rank statistics need: risk scores, times
/// and event flags in time order, plus log suffix sums of `exp(score)`.
#[derive(Debug, Clone)]
pub(crate) struct SortedCore {
    scores: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    /// `log_suffix[k] = log Σ_{i>=k} exp(scores[i])`, with `log_suffix[n] = -inf`.
    log_suffix: Vec<f64>,
    /// `Σ_{i: δ_i = 1} (s_i - log S_i)`: the part of `log r_1` that does not
    /// involve the test point.
    core_term: f64,
}

impl SortedCore {
    /// Builds from sequences already in non-decreasing time order.
    pub(crate) fn from_sorted(
        scores: impl IntoIterator<Item = f64>,
        times: impl IntoIterator<Item = f64>,
        events: impl IntoIterator<Item = bool>,
    ) -> Self {
        let scores: Vec<f64> = scores.into_iter().collect();
        let times: Vec<f64> = times.into_iter().collect();
        let events: Vec<bool> = events.into_iter().collect();
        let n = scores.len();
        let mut log_suffix = vec![f64::NEG_INFINITY; n + 1];
        for k in (0..n).rev() {
            log_suffix[k] = log_add_exp(scores[k], log_suffix[k + 1]);
        }
        let core_term = (0..n)
            .filter(|&k| events[k])
            .map(|k| scores[k] - log_suffix[k])
            .sum();
        Self {
            scores,
            times,
            events,
            log_suffix,
            core_term,
        }
    }

    pub(crate) fn from_dataset(scores: &[f64], core: &SurvivalDataset) -> Self {
        let order = core.sort_index();
        let times = core.times();
        Self::from_sorted(
            order.iter().map(|&i| scores[i]),
            order.iter().map(|&i| times[i]),
            order.iter().map(|&i| core.events()[i]),
        )
    }

    pub(crate) fn len(&self) -> usize {
        self.scores.len()
    }

    pub(crate) fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub(crate) fn times(&self) -> &[f64] {
        &self.times
    }

    pub(crate) fn events(&self) -> &[bool] {
        &self.events
    }

    pub(crate) fn log_suffix(&self) -> &[f64] {
        &self.log_suffix
    }

    /// `log r_1, ..., log r_{n+1}` for a test point with risk score `s_star`.
    pub(crate) fn log_rank_probs(&self, s_star: f64) -> Vec<f64> {
        let n = self.len();
        let mut log_r = Vec::with_capacity(n + 1);
        let mut current = s_star - log_add_exp(self.log_suffix[0], s_star) + self.core_term;
        log_r.push(current);
        for k in 0..n {
            let numerator = if self.events[k] {
                self.log_suffix[k]
            } else {
                log_add_exp(self.log_suffix[k], s_star)
            };
            let denominator = log_add_exp(self.log_suffix[k + 1], s_star);
            current += numerator - denominator;
            log_r.push(current);
        }
        log_r
    }

    /// 1-based insertion rank: one more than the number of core times `<= t`.
    pub(crate) fn insertion_rank(&self, t_star: f64) -> usize {
        1 + self.times.partition_point(|&t| t <= t_star)
    }

    pub(crate) fn tail_score(&self, s_star: f64, t_star: f64, delta_star: bool) -> TailScore {
        let crs = softmax(&self.log_rank_probs(s_star));
        let rank = self.insertion_rank(t_star);
        let right: f64 = crs[rank - 1..].iter().sum();
        let tau = if delta_star {
            let left: f64 = crs[..rank].iter().sum();
            left.min(right)
        } else {
            right
        };
        TailScore {
            tau: tau.clamp(0.0, 1.0),
            rank,
            censored: !delta_star,
        }
    }
}

fn validate(
    beta: &[f64],
    core: &SurvivalDataset,
    x_star: ArrayView1<'_, f64>,
) -> Result<(Vec<f64>, f64), CrsError> {
    if x_star.len() != beta.len() {
        return Err(CrsError::InvalidArgument(format!(
            "x_star has length {} but beta has {}",
            x_star.len(),
            beta.len()
        )));
    }
    let scores = risk_scores(beta, core.x_adjust())
        .map_err(|e| CrsError::InvalidArgument(e.to_string()))?
        .to_vec();
    let s_star: f64 = x_star.iter().zip(beta).map(|(a, b)| a * b).sum();
    if !s_star.is_finite() || scores.iter().any(|s| !s.is_finite()) {
        return Err(CrsError::InvalidArgument("non-finite risk score".into()));
    }
    Ok((scores, s_star))
}

/// Log rank probabilities of `x_star` against `core` in `O(n)`.
///
/// `core` may be given in any row order; its time order is used. Tied core
/// times are ranked in the dataset's stable sort order.
pub fn fast_log_rank_probs(
    beta: &[f64],
    core: &SurvivalDataset,
    x_star: ArrayView1<'_, f64>,
) -> Result<RankProbabilities, CrsError> {
    let (scores, s_star) = validate(beta, core, x_star)?;
    let sorted = SortedCore::from_dataset(&scores, core);
    Ok(RankProbabilities::from_log(sorted.log_rank_probs(s_star)))
}

/// Direct evaluation of the insertion product for every rank; `O(n^3)`.
pub fn naive_log_rank_probs(
    beta: &[f64],
    core: &SurvivalDataset,
    x_star: ArrayView1<'_, f64>,
) -> Result<RankProbabilities, CrsError> {
    let (scores, s_star) = validate(beta, core, x_star)?;
    let order = core.sort_index();
    let n = order.len();
    let mut log_r = Vec::with_capacity(n + 1);
    for k in 0..=n {
        // Sequence with x_star inserted at 0-based position k.
        let mut seq: Vec<(f64, bool)> = order
            .iter()
            .map(|&i| (scores[i], core.events()[i]))
            .collect();
        seq.insert(k, (s_star, true));
        let mut total = 0.0;
        for i in 0..seq.len() {
            if seq[i].1 {
                let tail: Vec<f64> = seq[i..].iter().map(|(s, _)| *s).collect();
                total += seq[i].0 - log_sum_exp(&tail);
            }
        }
        log_r.push(total);
    }
    Ok(RankProbabilities::from_log(log_r))
}

/// Rank tail score `τ*` of a test observation `(x_star, t_star, delta_star)`.
///
/// For a failure, `τ*` is the smaller of the left tail `Σ_{k<=k*} r^c_k` and
/// the right tail `Σ_{k>=k*} r^c_k` (both include `k*`). A censored point
/// only bounds its failure time from below, so only the right tail is used.
pub fn rank_tail_score(
    beta: &[f64],
    core: &SurvivalDataset,
    x_star: ArrayView1<'_, f64>,
    t_star: f64,
    delta_star: bool,
) -> Result<TailScore, CrsError> {
    if !(t_star >= 0.0) {
        return Err(CrsError::InvalidArgument(format!(
            "t_star must be >= 0, got {t_star}"
        )));
    }
    let (scores, s_star) = validate(beta, core, x_star)?;
    let sorted = SortedCore::from_dataset(&scores, core);
    Ok(sorted.tail_score(s_star, t_star, delta_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn uncensored_core(n: usize) -> SurvivalDataset {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let times = Array1::from_iter((0..n).map(|i| i as f64 + 1.0));
        SurvivalDataset::with_shared_features(x, times, vec![true; n]).unwrap()
    }

    #[test]
    fn null_model_is_uniform() {
        for n in 1..=100 {
            let core = uncensored_core(n);
            let probs = fast_log_rank_probs(&[0.0, 0.0], &core, array![0.3, -1.0].view()).unwrap();
            assert_eq!(probs.crs.len(), n + 1);
            for p in &probs.crs {
                assert!((p - 1.0 / (n + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_point_symmetry() {
        let core = uncensored_core(1);
        let probs = naive_log_rank_probs(&[0.0, 0.0], &core, array![1.0, 1.0].view()).unwrap();
        assert!((probs.crs[0] - 0.5).abs() < 1e-15);
        assert!((probs.crs[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fully_censored_core_is_monotone() {
        // Only the test point's own term survives:
        // crs_k ∝ e^{s*} / (e^{s*} + S_k), increasing in k.
        let n = 8;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| (i as f64 * 0.37).sin());
        let times = Array1::from_iter((0..n).map(|i| i as f64));
        let core = SurvivalDataset::with_shared_features(x.clone(), times, vec![false; n]).unwrap();
        let beta = [1.5];
        let x_star = array![0.2];
        let naive = naive_log_rank_probs(&beta, &core, x_star.view()).unwrap();
        let s_star: f64 = 0.3;
        let suffix = |k: usize| (k..n).map(|i| (1.5 * x[[i, 0]]).exp()).sum::<f64>();
        let weights: Vec<f64> = (0..=n)
            .map(|k| s_star.exp() / (s_star.exp() + suffix(k)))
            .collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in naive.crs.iter().zip(&weights) {
            assert!((p - w / total).abs() < 1e-12);
        }
        assert!(naive.crs.windows(2).all(|w| w[0] < w[1]));
        let fast = fast_log_rank_probs(&beta, &core, x_star.view()).unwrap();
        for k in 0..=n {
            assert!((fast.log_r[k] - naive.log_r[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let n = 30;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let times = Array1::from_iter((0..n).map(|i| i as f64));
        let core = SurvivalDataset::with_shared_features(x, times, vec![true; n]).unwrap();
        let probs = fast_log_rank_probs(&[80.0], &core, array![3.5].view()).unwrap();
        assert!(probs.log_r.iter().all(|v| v.is_finite()));
        assert!((probs.crs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tail_score_examples() {
        let n = 6;
        let core = uncensored_core(n);
        // k* = 1 → left tail is a single uniform cell.
        let tail = rank_tail_score(&[0.0, 0.0], &core, array![0.0, 0.0].view(), 0.5, true).unwrap();
        assert_eq!(tail.rank, 1);
        assert!((tail.tau - 1.0 / 7.0).abs() < 1e-12);
        // Middle rank: both tails overlap at k*.
        let tail = rank_tail_score(&[0.0, 0.0], &core, array![0.0, 0.0].view(), 3.5, true).unwrap();
        assert_eq!(tail.rank, (n + 2) / 2);
        assert!((tail.tau - (n as f64 / 2.0 + 1.0) / (n as f64 + 1.0)).abs() < 1e-12);
        // Censored → right tail only.
        let tail =
            rank_tail_score(&[0.0, 0.0], &core, array![0.0, 0.0].view(), 0.5, false).unwrap();
        assert!((tail.tau - 1.0).abs() < 1e-12);
        assert!(tail.censored);
        // Ties: inserted after equal core times.
        let tail = rank_tail_score(&[0.0, 0.0], &core, array![0.0, 0.0].view(), 2.0, true).unwrap();
        assert_eq!(tail.rank, 3);
    }

    #[test]
    fn errors() {
        let core = uncensored_core(3);
        assert!(fast_log_rank_probs(&[0.0], &core, array![0.0].view()).is_err());
        assert!(fast_log_rank_probs(&[f64::NAN, 0.0], &core, array![0.0, 0.0].view()).is_err());
        assert!(rank_tail_score(&[0.0, 0.0], &core, array![0.0, 0.0].view(), -1.0, true).is_err());
    }
}
