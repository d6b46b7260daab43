//! Fuzzy classes over reaction times.
//!
//! `R` boundaries sit at the `100 r / (R + 1)` percentiles of the training
//! reaction times. Class `r` has a triangular membership that peaks at its own
//! boundary and reaches zero at the neighbouring ones; the outer classes
//! saturate (shoulders), so memberships always sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyPartition {
    boundaries: Vec<f64>,
}

/// Membership degree of one reaction time in each fuzzy class.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVector(pub Vec<f64>);

impl MembershipVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Percentile levels `100 r / (R + 1)` for `r = 1..=R`.
pub fn percentile_levels(r_classes: usize) -> Vec<f64> {
    (1..=r_classes)
        .map(|r| 100.0 * r as f64 / (r_classes + 1) as f64)
        .collect()
}

/// Empirical percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], level: f64) -> f64 {
    let pos = level / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl FuzzyPartition {
    pub fn fit(rts: &[f64], r_classes: usize) -> Result<Self> {
        if r_classes == 0 {
            return Err(Error::param("need at least one fuzzy class"));
        }
        if rts.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite reaction time"));
        }
        let mut sorted = rts.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < r_classes + 1 {
            return Err(Error::data(format!(
                "{} distinct reaction times cannot support {r_classes} fuzzy classes",
                distinct.len()
            )));
        }
        let range = sorted[sorted.len() - 1] - sorted[0];
        let mut boundaries: Vec<f64> = percentile_levels(r_classes)
            .into_iter()
            .map(|p| percentile(&sorted, p))
            .collect();
        for r in 1..boundaries.len() {
            if boundaries[r] <= boundaries[r - 1] {
                let jittered = boundaries[r - 1] + 1e-9 * range;
                log::warn!(
                    "tied percentile boundaries {} and {}; moving upper to {jittered}",
                    boundaries[r - 1],
                    boundaries[r]
                );
                boundaries[r] = jittered;
            }
        }
        Ok(Self { boundaries })
    }

    /// Partition with explicit boundaries, which must be strictly increasing.
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() || boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("boundaries must be nonempty and strictly increasing"));
        }
        Ok(Self { boundaries })
    }

    pub fn r_classes(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn membership(&self, rt: f64) -> MembershipVector {
        let b = &self.boundaries;
        let r = b.len();
        let mut mu = vec![0.0; r];
        if rt <= b[0] {
            mu[0] = 1.0;
        } else if rt >= b[r - 1] {
            mu[r - 1] = 1.0;
        } else {
            // rt lies in [b[i], b[i+1])
            let i = b.partition_point(|&x| x <= rt) - 1;
            let frac = (rt - b[i]) / (b[i + 1] - b[i]);
            mu[i] = 1.0 - frac;
            mu[i + 1] = frac;
        }
        MembershipVector(mu)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn three_classes_use_quartiles() {
        assert_eq!(percentile_levels(3), vec![25.0, 50.0, 75.0]);
    }

    #[test]
    fn single_class_is_median() {
        let p = FuzzyPartition::fit(&[5.0, 1.0, 3.0, 2.0, 4.0], 1).unwrap();
        assert_eq!(p.boundaries(), &[3.0]);
    }

    #[test]
    fn uniform_rts_give_quartiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rts: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let p = FuzzyPartition::fit(&rts, 3).unwrap();
        for (b, want) in p.boundaries().iter().zip([0.25, 0.5, 0.75]) {
            assert!((b - want).abs() < 0.02);
        }
    }

    #[test]
    fn too_few_distinct_values() {
        let err = FuzzyPartition::fit(&[1.0, 1.0, 2.0, 2.0, 3.0], 3);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn ties_are_jittered_apart() {
        // 25th and 50th percentiles coincide
        let rts = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0];
        let p = FuzzyPartition::fit(&rts, 3).unwrap();
        let b = p.boundaries();
        assert!(b[0] < b[1] && b[1] < b[2]);
        assert!((b[1] - b[0] - 3e-9).abs() < 1e-12);
    }

    #[test]
    fn triangle_peak_midpoint_and_shoulders() {
        let p = FuzzyPartition::from_boundaries(vec![0.8, 1.0, 1.4]).unwrap();
        assert_eq!(p.membership(1.0).0, vec![0.0, 1.0, 0.0]);
        let mid = p.membership(0.9).0;
        assert!((mid[0] - 0.5).abs() < 1e-12 && (mid[1] - 0.5).abs() < 1e-12 && mid[2] == 0.0);
        assert_eq!(p.membership(0.3).0, vec![1.0, 0.0, 0.0]);
        assert_eq!(p.membership(3.0).0, vec![0.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn memberships_partition_unity(rt in 0.01f64..5.0) {
            let p = FuzzyPartition::from_boundaries(vec![0.7, 1.0, 1.3, 2.0]).unwrap();
            let mu = p.membership(rt).0;
            prop_assert!(mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
            prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn memberships_are_continuous(rt in 0.01f64..5.0) {
            let p = FuzzyPartition::from_boundaries(vec![0.7, 1.0, 1.3, 2.0]).unwrap();
            let a = p.membership(rt).0;
            let b = p.membership(rt + 1e-9).0;
            for (x, y) in a.iter().zip(&b) {
                // steepest slope is 1 / 0.3
                prop_assert!((x - y).abs() <= 1e-8);
            }
        }
    }
}
