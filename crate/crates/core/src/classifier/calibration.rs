//! Monotone (isotonic) mapping from raw logistic scores to probabilities.

use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Piecewise-linear nondecreasing map through `knots`, constant beyond the
/// first and last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    knots: Vec<(f64, f64)>,
}

impl Calibration {
    pub fn identity() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self, ClassifierError> {
        if knots.is_empty() {
            return Err(ClassifierError::ModelFormat("calibration has no knots".into()));
        }
        for (x, y) in &knots {
            if !x.is_finite() || !(0.0..=1.0).contains(y) {
                return Err(ClassifierError::ModelFormat(format!(
                    "calibration knot ({x}, {y}) out of range"
                )));
            }
        }
        let monotone = knots.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        if !monotone {
            return Err(ClassifierError::ModelFormat(
                "calibration knots must be nondecreasing in both coordinates".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Pool-adjacent-violators fit on `(raw score, 0/1 label)` pairs.
    pub fn fit_isotonic(pairs: &[(f64, bool)]) -> Result<Self, ClassifierError> {
        if pairs.is_empty() {
            return Err(ClassifierError::DegenerateTraining(
                "no scores to calibrate".into(),
            ));
        }
        let mut sorted: Vec<(f64, f64)> = pairs
            .iter()
            .map(|(x, y)| (*x, if *y { 1.0 } else { 0.0 }))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

        // Equal raw scores must share one fitted value, so start from one
        // block per distinct score.
        struct Block {
            lo: f64,
            hi: f64,
            sum: f64,
            n: f64,
        }
        let mut blocks: Vec<Block> = Vec::new();
        for (x, y) in sorted {
            match blocks.last_mut() {
                Some(b) if b.hi == x => {
                    b.sum += y;
                    b.n += 1.0;
                }
                _ => blocks.push(Block {
                    lo: x,
                    hi: x,
                    sum: y,
                    n: 1.0,
                }),
            }
            while blocks.len() >= 2 {
                let k = blocks.len();
                let (prev, last) = (&blocks[k - 2], &blocks[k - 1]);
                if prev.sum / prev.n <= last.sum / last.n {
                    break;
                }
                let last = blocks.pop().expect("len >= 2");
                let prev = blocks.last_mut().expect("len >= 1");
                prev.hi = last.hi;
                prev.sum += last.sum;
                prev.n += last.n;
            }
        }
        let mut knots = Vec::with_capacity(blocks.len() * 2);
        for b in &blocks {
            let v = b.sum / b.n;
            knots.push((b.lo, v));
            if b.hi > b.lo {
                knots.push((b.hi, v));
            }
        }
        Self::from_knots(knots)
    }

    pub fn apply(&self, raw: f64) -> f64 {
        let k = &self.knots;
        if raw <= k[0].0 {
            return k[0].1;
        }
        let last = k[k.len() - 1];
        if raw >= last.0 {
            return last.1;
        }
        // First knot strictly right of raw; k[i-1].0 <= raw < k[i].0.
        let i = k.partition_point(|(x, _)| *x <= raw);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        if x1 == x0 {
            return y1;
        }
        y0 + (y1 - y0) * (raw - x0) / (x1 - x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_maps_unit_interval_to_itself() {
        let c = Calibration::identity();
        for x in [0.0, 0.25, 0.5, 0.9, 1.0] {
            assert_eq!(c.apply(x), x);
        }
    }

    #[test]
    fn pav_pools_violations() {
        // Scores 0.1..0.4 with labels 0,1,0,1: the middle pair is pooled.
        let c = Calibration::fit_isotonic(&[(0.1, false), (0.2, true), (0.3, false), (0.4, true)])
            .unwrap();
        assert_eq!(c.apply(0.1), 0.0);
        assert_eq!(c.apply(0.2), 0.5);
        assert_eq!(c.apply(0.3), 0.5);
        assert_eq!(c.apply(0.4), 1.0);
        assert_eq!(c.apply(2.0), 1.0);
    }

    #[test]
    fn ties_share_a_value() {
        let c = Calibration::fit_isotonic(&[(0.5, false), (0.5, true), (0.9, true)]).unwrap();
        assert_eq!(c.apply(0.5), 0.5);
    }

    #[test]
    fn non_monotone_knots_rejected() {
        assert!(Calibration::from_knots(vec![(0.0, 0.5), (1.0, 0.2)]).is_err());
    }

    proptest! {
        #[test]
        fn fitted_map_is_monotone(
            pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..60),
            probes in prop::collection::vec(-0.5f64..1.5, 2..40),
        ) {
            let c = Calibration::fit_isotonic(&pairs).unwrap();
            let mut probes = probes;
            probes.sort_by(f64::total_cmp);
            let mapped: Vec<f64> = probes.iter().map(|x| c.apply(*x)).collect();
            prop_assert!(mapped.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(mapped.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
