//! Synthetic survival benchmarks.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` split into
//! sub-streams with `set_stream`: feature column `j` uses stream `j`, event
//! times use [`TIME_STREAM`] and censoring times use [`CENSOR_STREAM`]. The
//! output is therefore identical across platforms for identical arguments.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Region, SurvivalDataset};

pub const TIME_STREAM: u64 = 1000;
pub const CENSOR_STREAM: u64 = 1001;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `n × bounds.dim()` matrix, uniform on `bounds`, one stream per column.
fn uniform_features(n: usize, bounds: &Region, seed: u64) -> Array2<f64> {
    let d = bounds.dim();
    let mut x = Array2::zeros((n, d));
    for j in 0..d {
        let mut rng = stream(seed, j as u64);
        let (lo, hi) = (bounds.lower()[j], bounds.upper()[j]);
        for i in 0..n {
            x[[i, j]] = lo + (hi - lo) * rng.random::<f64>();
        }
    }
    x
}

/// Exponential draws with the given log-rates.
fn exponential_times(log_rates: impl Iterator<Item = f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    log_rates
        .map(|lr| {
            let e: f64 = Exp1.sample(rng);
            e * (-lr).exp()
        })
        .collect()
}

/// Piecewise hazard on `[0, 1]`: `e^{m x}` below `c`, `e^{m x - b}` from `c` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterParams {
    pub m: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for CounterParams {
    fn default() -> Self {
        Self {
            m: 10.0,
            b: 2.0,
            c: 0.4,
        }
    }
}

/// One-dimensional benchmark where the whole interval has lower EPE than the
/// region `[c, 1]` on which the Cox model actually holds. Returns the data and
/// that region. All events are observed.
pub fn gen_counter(
    params: &CounterParams,
    n: usize,
    seed: u64,
) -> Result<(SurvivalDataset, Region), SynthError> {
    let CounterParams { m, b, c } = *params;
    if !(c > 0.0 && c < 1.0) {
        return Err(SynthError::InvalidArgument(format!(
            "c = {c} not in (0, 1)"
        )));
    }
    if !m.is_finite() || !b.is_finite() {
        return Err(SynthError::InvalidArgument("m and b must be finite".into()));
    }
    let bounds = Region::new(vec![0.0], vec![1.0])?;
    let x = uniform_features(n, &bounds, seed);
    let log_rates = x
        .column(0)
        .iter()
        .map(|&v| if v < c { m * v } else { m * v - b })
        .collect::<Vec<_>>();
    let times = exponential_times(log_rates.into_iter(), &mut stream(seed, TIME_STREAM));
    let data = SurvivalDataset::with_shared_features(x, times, vec![true; n])?;
    Ok((data, Region::new(vec![c], vec![1.0])?))
}

/// Benchmark on `[-1, 1]^d` with a central box where the hazard is
/// `exp(inside_coef * sum(x))`; outside it the first feature is replaced by
/// `10 sin(100 x_1^2)` and the hazard is `exp(outside_coef * sum(x~))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub d: usize,
    pub inside_coef: f64,
    pub outside_coef: f64,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self {
            d: 2,
            inside_coef: 10.0,
            outside_coef: 0.5,
        }
    }
}

impl NonlinearParams {
    /// The central box `[-h, h]^d` with `h = 6^{-1/d}`, which occupies one
    /// sixth of the feature space in every dimension count.
    pub fn truth(&self) -> Region {
        let h = 6f64.powf(-1.0 / self.d as f64);
        Region::new(vec![-h; self.d], vec![h; self.d]).expect("valid box")
    }
}

pub fn gen_nonlinear(
    params: &NonlinearParams,
    n: usize,
    seed: u64,
) -> Result<(SurvivalDataset, Region), SynthError> {
    let d = params.d;
    if d == 0 {
        return Err(SynthError::InvalidArgument("d must be positive".into()));
    }
    let bounds = Region::new(vec![-1.0; d], vec![1.0; d])?;
    let truth = params.truth();
    let x = uniform_features(n, &bounds, seed);
    let log_rates: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| {
            if truth.contains(row) {
                params.inside_coef * row.sum()
            } else {
                let warped = 10.0 * (100.0 * row[0] * row[0]).sin();
                params.outside_coef * (warped + row.sum() - row[0])
            }
        })
        .collect();
    let times = exponential_times(log_rates.into_iter(), &mut stream(seed, TIME_STREAM));
    let data = SurvivalDataset::with_shared_features(x, times, vec![true; n])?;
    Ok((data, truth))
}

/// Well-specified Cox data: uniform features on `bounds`, unit baseline
/// hazard, and independent exponential censoring whose rate is tuned so the
/// expected censored fraction over the drawn features equals `censor_rate`.
pub fn gen_plain_cox(
    n: usize,
    beta: &[f64],
    bounds: &Region,
    censor_rate: f64,
    seed: u64,
) -> Result<SurvivalDataset, SynthError> {
    if beta.len() != bounds.dim() {
        return Err(SynthError::InvalidArgument(format!(
            "beta has {} entries, bounds {} dimensions",
            beta.len(),
            bounds.dim()
        )));
    }
    if !(0.0..1.0).contains(&censor_rate) {
        return Err(SynthError::InvalidArgument(format!(
            "censor_rate {censor_rate} not in [0, 1)"
        )));
    }
    if bounds
        .lower()
        .iter()
        .chain(bounds.upper())
        .any(|v| !v.is_finite())
    {
        return Err(SynthError::InvalidArgument("bounds must be finite".into()));
    }
    let x = uniform_features(n, bounds, seed);
    let log_rates: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let mut times = exponential_times(log_rates.iter().copied(), &mut stream(seed, TIME_STREAM));
    let mut events = vec![true; n];
    if censor_rate > 0.0 {
        let log_c = censoring_log_rate(&log_rates, censor_rate)?;
        let censor = exponential_times(
            std::iter::repeat_n(log_c, n),
            &mut stream(seed, CENSOR_STREAM),
        );
        for i in 0..n {
            if censor[i] < times[i] {
                times[i] = censor[i];
                events[i] = false;
            }
        }
    }
    Ok(SurvivalDataset::with_shared_features(x, times, events)?)
}

/// Log censoring rate `l` with `mean_i 1 / (1 + exp(s_i - l)) = target`, the
/// probability that an exponential censoring time precedes the event time.
fn censoring_log_rate(log_rates: &[f64], target: f64) -> Result<f64, SynthError> {
    let frac = |l: f64| {
        log_rates
            .iter()
            .map(|&s| 1.0 / (1.0 + (s - l).exp()))
            .sum::<f64>()
            / log_rates.len() as f64
    };
    let (mut lo, mut hi) = (-200.0, 200.0);
    if !(frac(lo) < target && target < frac(hi)) {
        return Err(SynthError::InvalidArgument(format!(
            "censoring fraction {target} cannot be bracketed"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frac(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    Counter(CounterParams),
    Nonlinear(NonlinearParams),
    PlainCox {
        beta: Vec<f64>,
        bounds: Region,
        censor_rate: f64,
    },
}

/// A complete recipe for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn counter(n: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::Counter(CounterParams::default()),
            n,
            seed,
        }
    }

    pub fn nonlinear(n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind: SynthKind::Nonlinear(NonlinearParams {
                d,
                ..Default::default()
            }),
            n,
            seed,
        }
    }

    /// The dataset and, for benchmarks that have one, its ground-truth region.
    pub fn generate(&self) -> Result<(SurvivalDataset, Option<Region>), SynthError> {
        match &self.kind {
            SynthKind::Counter(p) => gen_counter(p, self.n, self.seed).map(|(d, t)| (d, Some(t))),
            SynthKind::Nonlinear(p) => {
                gen_nonlinear(p, self.n, self.seed).map(|(d, t)| (d, Some(t)))
            }
            SynthKind::PlainCox {
                beta,
                bounds,
                censor_rate,
            } => gen_plain_cox(self.n, beta, bounds, *censor_rate, self.seed).map(|d| (d, None)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::fit_cox;

    #[test]
    fn counter_is_deterministic_and_uncensored() {
        let p = CounterParams::default();
        let (a, truth) = gen_counter(&p, 300, 5).unwrap();
        let (b, _) = gen_counter(&p, 300, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_events(), 300);
        assert_eq!(truth.lower(), &[0.4]);
        assert!(a.x_subgp().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let (c, _) = gen_counter(&p, 300, 6).unwrap();
        assert_ne!(a, c);
        assert!(gen_counter(&CounterParams { c: 1.0, ..p }, 10, 0).is_err());
    }

    #[test]
    fn counter_conditional_mean_matches_rate() {
        let (data, _) = gen_counter(&CounterParams::default(), 100_000, 11).unwrap();
        let x = data.x_subgp();
        let sel: Vec<f64> = (0..data.n())
            .filter(|&i| (0.39..0.4).contains(&x[[i, 0]]))
            .map(|i| data.times()[i] * (10.0 * x[[i, 0]]).exp())
            .collect();
        // Rescaled by the exact hazard every draw is Exp(1).
        let mean = sel.iter().sum::<f64>() / sel.len() as f64;
        let se = 1.0 / (sel.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn counter_without_jump_recovers_slope() {
        let p = CounterParams {
            b: 0.0,
            ..Default::default()
        };
        let (data, _) = gen_counter(&p, 4000, 3).unwrap();
        let model = fit_cox(&data, 0.0).unwrap();
        assert!((model.beta[0] - 10.0).abs() < 0.6, "{:?}", model.beta);
    }

    #[test]
    fn nonlinear_truth_is_one_sixth() {
        for d in 1..=4 {
            let p = NonlinearParams {
                d,
                ..Default::default()
            };
            let ratio = p.truth().volume() / 2f64.powi(d as i32);
            assert!((ratio - 1.0 / 6.0).abs() < 1e-12);
        }
        let (data, truth) = gen_nonlinear(&NonlinearParams::default(), 2000, 1).unwrap();
        assert!(data.x_subgp().iter().all(|v| v.abs() <= 1.0));
        let inside = data.members(&truth).len() as f64 / 2000.0;
        assert!((inside - 1.0 / 6.0).abs() < 0.03);
    }

    #[test]
    fn nonlinear_inside_ranks_follow_linear_score() {
        let (data, truth) = gen_nonlinear(&NonlinearParams::default(), 12_000, 2).unwrap();
        let rows = data.members(&truth);
        let x = data.x_subgp();
        let (mut conc, mut disc) = (0u64, 0u64);
        for (a, &i) in rows.iter().enumerate() {
            for &j in &rows[a + 1..] {
                let ds = (x[[i, 0]] + x[[i, 1]]) - (x[[j, 0]] + x[[j, 1]]);
                let dt = data.times()[j] - data.times()[i];
                if ds * dt > 0.0 {
                    conc += 1;
                } else if ds * dt < 0.0 {
                    disc += 1;
                }
            }
        }
        let tau = (conc as f64 - disc as f64) / (conc + disc) as f64;
        assert!(tau >= 0.5, "kendall {tau}");
    }

    #[test]
    fn plain_cox_censoring_calibrates() {
        let bounds = Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let d = gen_plain_cox(100, &[1.0, -1.0], &bounds, 0.0, 0).unwrap();
        assert_eq!(d.n_events(), 100);
        for &rate in &[0.2, 0.5, 0.8] {
            let d = gen_plain_cox(10_000, &[1.0, -1.0], &bounds, rate, 4).unwrap();
            let frac = 1.0 - d.n_events() as f64 / 10_000.0;
            assert!((frac - rate).abs() < 0.03, "{rate}: {frac}");
        }
        assert!(gen_plain_cox(10, &[1.0], &bounds, 0.1, 0).is_err());
        assert!(gen_plain_cox(10, &[1.0, 1.0], &bounds, 1.0, 0).is_err());
    }

    #[test]
    fn plain_cox_null_times_have_unit_mean() {
        let bounds = Region::new(vec![0.0], vec![1.0]).unwrap();
        let d = gen_plain_cox(100_000, &[0.0], &bounds, 0.0, 9).unwrap();
        let mean = d.times().mean().unwrap();
        assert!((mean - 1.0).abs() < 3.0 / (1e5f64).sqrt());
    }

    #[test]
    fn recipe_generates_requested_shape() {
        let spec = SynthSpec::nonlinear(100, 3, 8);
        let (data, truth) = spec.generate().unwrap();
        assert_eq!(data.d_subgp(), 3);
        assert_eq!(truth.unwrap().dim(), 3);
    }
}
