//! Baselines: the whole-data box and the box around random points.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MethodError;
use crate::data::{bounding_box_of, Region, SurvivalDataset};

/// Bounding box of all subgroup features.
pub fn base_method(data: &SurvivalDataset) -> Region {
    data.bounding_box()
}

/// Bounding box of `2 d` distinct rows drawn with the given seed.
pub fn random_method(data: &SurvivalDataset, seed: u64) -> Result<Region, MethodError> {
    let k = 2 * data.d_subgp();
    if data.n() < k {
        return Err(MethodError::TooFewPoints {
            required: k,
            available: data.n(),
        });
    }
    let rows = random_rows(data.n(), k, seed);
    Ok(bounding_box_of(data.x_subgp(), rows).expect("k >= 2"))
}

pub(crate) fn random_rows(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, n, k).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn lcg_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        Array2::from_shape_fn((n, d), |_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn dataset(x: Array2<f64>) -> SurvivalDataset {
        let n = x.nrows();
        SurvivalDataset::with_shared_features(x, Array1::linspace(1.0, 2.0, n), vec![true; n])
            .unwrap()
    }

    #[test]
    fn base_matches_scan() {
        let x = lcg_matrix(100, 3, 1);
        let data = dataset(x.clone());
        let region = base_method(&data);
        for j in 0..3 {
            let col = x.column(j);
            assert_eq!(region.lower()[j], col.fold(f64::INFINITY, |a, &b| a.min(b)));
            assert_eq!(
                region.upper()[j],
                col.fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            );
        }
        let single = dataset(array![[0.3, -0.2]]);
        assert_eq!(base_method(&single).lower(), base_method(&single).upper());
    }

    #[test]
    fn random_is_deterministic_and_distinct() {
        let data = dataset(lcg_matrix(50, 3, 2));
        assert_eq!(
            random_method(&data, 4).unwrap(),
            random_method(&data, 4).unwrap()
        );
        for seed in 0..100 {
            let mut rows = random_rows(50, 6, seed);
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.len(), 6);
        }
        let tiny = dataset(array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]);
        assert_eq!(
            random_method(&tiny, 0),
            Err(MethodError::TooFewPoints {
                required: 4,
                available: 3
            })
        );
    }

    #[test]
    fn random_two_points_in_one_dimension() {
        let data = dataset(array![[0.2], [0.8]]);
        let region = random_method(&data, 9).unwrap();
        assert_eq!(region.lower(), &[0.2]);
        assert_eq!(region.upper(), &[0.8]);
    }
}
