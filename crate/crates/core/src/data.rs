//! Survival datasets and axis-aligned regions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset must contain at least one row")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative event time {time} at row {row}")]
    NegativeTime { row: usize, time: f64 },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

/// Right-censored survival data.
///
/// Rows keep the order they were supplied in; `sort_index` lists the rows by
/// non-decreasing event time (stable, so tied rows keep their relative order).
/// The Cox model sees `x_adjust`; regions are defined over `x_subgp`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    x_adjust: Array2<f64>,
    x_subgp: Array2<f64>,
    times: Array1<f64>,
    events: Vec<bool>,
    sort_index: Vec<usize>,
}

impl SurvivalDataset {
    pub fn new(
        x_adjust: Array2<f64>,
        x_subgp: Array2<f64>,
        times: Array1<f64>,
        events: Vec<bool>,
    ) -> Result<Self, DataError> {
        let n = times.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if x_adjust.nrows() != n || x_subgp.nrows() != n || events.len() != n {
            return Err(DataError::DimensionMismatch(format!(
                "x_adjust has {} rows, x_subgp {}, events {}, times {n}",
                x_adjust.nrows(),
                x_subgp.nrows(),
                events.len()
            )));
        }
        if x_adjust.ncols() == 0 || x_subgp.ncols() == 0 {
            return Err(DataError::DimensionMismatch(
                "feature matrices need at least one column".into(),
            ));
        }
        if x_adjust.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite("x_adjust"));
        }
        if x_subgp.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite("x_subgp"));
        }
        for (row, &time) in times.iter().enumerate() {
            if !time.is_finite() {
                return Err(DataError::NonFinite("times"));
            }
            if time < 0.0 {
                return Err(DataError::NegativeTime { row, time });
            }
        }
        let mut sort_index: Vec<usize> = (0..n).collect();
        sort_index.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        Ok(Self {
            x_adjust,
            x_subgp,
            times,
            events,
            sort_index,
        })
    }

    /// Dataset whose Cox and subgroup features are the same matrix, as in the
    /// synthetic benchmarks.
    pub fn with_shared_features(
        x: Array2<f64>,
        times: Array1<f64>,
        events: Vec<bool>,
    ) -> Result<Self, DataError> {
        Self::new(x.clone(), x, times, events)
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn d_adjust(&self) -> usize {
        self.x_adjust.ncols()
    }

    pub fn d_subgp(&self) -> usize {
        self.x_subgp.ncols()
    }

    pub fn x_adjust(&self) -> ArrayView2<'_, f64> {
        self.x_adjust.view()
    }

    pub fn x_subgp(&self) -> ArrayView2<'_, f64> {
        self.x_subgp.view()
    }

    pub fn times(&self) -> ArrayView1<'_, f64> {
        self.times.view()
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn sort_index(&self) -> &[usize] {
        &self.sort_index
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let x_adjust = self.x_adjust.select(Axis(0), rows);
        let x_subgp = self.x_subgp.select(Axis(0), rows);
        let times = self.times.select(Axis(0), rows);
        let events = rows.iter().map(|&r| self.events[r]).collect();
        let mut sort_index: Vec<usize> = (0..rows.len()).collect();
        sort_index.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        Self {
            x_adjust,
            x_subgp,
            times,
            events,
            sort_index,
        }
    }

    /// Rows whose subgroup features fall inside `region` (closed box).
    pub fn members(&self, region: &Region) -> Vec<usize> {
        self.x_subgp
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, row)| region.contains(*row))
            .map(|(i, _)| i)
            .collect()
    }

    /// Componentwise min/max box of the subgroup features.
    pub fn bounding_box(&self) -> Region {
        bounding_box_of(self.x_subgp.view(), 0..self.n())
            .expect("dataset is non-empty by construction")
    }
}

/// Bounding box of the selected rows of `x`; `None` when no rows are given.
pub fn bounding_box_of(
    x: ArrayView2<'_, f64>,
    rows: impl IntoIterator<Item = usize>,
) -> Option<Region> {
    let d = x.ncols();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    let mut any = false;
    for r in rows {
        any = true;
        for j in 0..d {
            lower[j] = lower[j].min(x[[r, j]]);
            upper[j] = upper[j].max(x[[r, j]]);
        }
    }
    any.then_some(Region { lower, upper })
}

/// Closed axis-aligned box `{x : lower[j] <= x[j] <= upper[j]}`. Infinite
/// bounds are allowed on either side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DataError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(DataError::InvalidRegion(format!(
                "bound lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(DataError::InvalidRegion(format!(
                    "dimension {j}: lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole space in `d` dimensions.
    pub fn unbounded(d: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: ArrayView1<'_, f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.contains(ArrayView1::from(x))
    }

    /// Strict interior membership.
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo < v && v < hi)
    }

    /// Intersection with another box, or `None` when they are disjoint.
    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let lo = self.lower[j].max(other.lower[j]);
            let hi = self.upper[j].min(other.upper[j]);
            if lo > hi {
                return None;
            }
            lower.push(lo);
            upper.push(hi);
        }
        Some(Region { lower, upper })
    }

    /// Product of side lengths (infinite if any side is unbounded).
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        (0..self.dim()).all(|j| other.lower[j] <= self.lower[j] && self.upper[j] <= other.upper[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> SurvivalDataset {
        SurvivalDataset::with_shared_features(
            array![[0.0, 1.0], [2.0, -1.0], [1.0, 0.5]],
            array![3.0, 1.0, 2.0],
            vec![true, false, true],
        )
        .unwrap()
    }

    #[test]
    fn sort_index_orders_times() {
        let data = tiny();
        assert_eq!(data.sort_index(), &[1, 2, 0]);
        assert_eq!(data.n_events(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let err = SurvivalDataset::with_shared_features(array![[0.0]], array![-1.0], vec![true]);
        assert!(matches!(err, Err(DataError::NegativeTime { row: 0, .. })));
        let err =
            SurvivalDataset::with_shared_features(array![[f64::NAN]], array![1.0], vec![true]);
        assert_eq!(err, Err(DataError::NonFinite("x_adjust")));
        let err =
            SurvivalDataset::with_shared_features(Array2::zeros((0, 1)), Array1::zeros(0), vec![]);
        assert_eq!(err, Err(DataError::Empty));
    }

    #[test]
    fn bounding_box_and_members() {
        let data = tiny();
        let bb = data.bounding_box();
        assert_eq!(bb.lower(), &[0.0, -1.0]);
        assert_eq!(bb.upper(), &[2.0, 1.0]);
        assert_eq!(data.members(&bb), vec![0, 1, 2]);
        let r = Region::new(vec![0.5, -2.0], vec![2.0, 0.9]).unwrap();
        assert_eq!(data.members(&r), vec![1, 2]);
    }

    #[test]
    fn subset_resorts() {
        let data = tiny();
        let sub = data.subset(&[0, 2]);
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.sort_index(), &[1, 0]);
        assert_eq!(sub.times()[1], 2.0);
    }

    #[test]
    fn region_geometry() {
        let a = Region::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let b = Region::new(vec![1.0, 1.0], vec![3.0, 3.0]).unwrap();
        assert_eq!(a.intersect(&b).unwrap().volume(), 1.0);
        let c = Region::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap();
        assert!(a.intersect(&c).is_none());
        assert!(Region::new(vec![1.0], vec![0.0]).is_err());
        assert!(a.contains_point(&[2.0, 0.0]));
        assert!(!a.interior_contains(&[2.0, 1.0]));
        assert!(Region::unbounded(2).volume().is_infinite());
    }
}
