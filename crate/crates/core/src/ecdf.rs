//! Weighted marginal empirical CDFs, signed accumulation across levels,
//! and generalized inverses.
//!
//! Multifidelity weights can be negative, so a raw weighted CDF need not be
//! monotone. Inversion therefore goes through a running-maximum envelope
//! clipped to `[0, 1]`. Accumulation across levels stays raw (signed) and
//! is enveloped only when a level needs to invert it.

use crate::error::{Error, Result};

/// A raw step function: `values[k]` holds the function on
/// `[points[k], points[k+1])`; the function is zero before `points[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFn {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFn {
    /// Normalized weighted empirical CDF of `(value, weight)` pairs.
    /// Zero-weight samples are dropped; the total weight must be positive.
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        assert_eq!(values.len(), weights.len());
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(&v, &w)| (v, w))
            .collect();
        if pairs.is_empty() {
            return Err(Error::DegenerateWeights { level: None });
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut points = Vec::with_capacity(pairs.len());
        let mut sums = Vec::with_capacity(pairs.len());
        let mut running = 0.0f64;
        for (v, w) in pairs {
            running += w;
            if points.last() == Some(&v) {
                *sums.last_mut().unwrap() = running;
            } else {
                points.push(v);
                sums.push(running);
            }
        }
        let total = *sums.last().unwrap();
        if total <= 0.0 {
            return Err(Error::DegenerateWeights { level: None });
        }
        let values = sums.into_iter().map(|s| s / total).collect();
        Ok(StepFn { points, values })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let idx = self.points.partition_point(|&p| p <= s);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    /// Pointwise `self + sign * other`, merging breakpoints.
    pub fn add_scaled(&self, other: &StepFn, sign: f64) -> StepFn {
        let mut points = Vec::with_capacity(self.points.len() + other.points.len());
        let mut values = Vec::with_capacity(points.capacity());
        let (mut i, mut j) = (0usize, 0usize);
        let (mut va, mut vb) = (0.0f64, 0.0f64);
        while i < self.points.len() || j < other.points.len() {
            let pa = self.points.get(i).copied().unwrap_or(f64::INFINITY);
            let pb = other.points.get(j).copied().unwrap_or(f64::INFINITY);
            let p = pa.min(pb);
            if pa == p {
                va = self.values[i];
                i += 1;
            }
            if pb == p {
                vb = other.values[j];
                j += 1;
            }
            points.push(p);
            values.push(va + sign * vb);
        }
        StepFn { points, values }
    }

    /// Monotone envelope: running maximum clipped to `[0, 1]`, with the
    /// terminal value snapped to 1 when it is within rounding of it.
    pub fn envelope(&self) -> WeightedMarginalCdf {
        let mut cum = Vec::with_capacity(self.values.len());
        let mut best = 0.0f64;
        for &v in &self.values {
            best = best.max(v);
            cum.push(best.clamp(0.0, 1.0));
        }
        if let Some(last) = cum.last_mut() {
            if (*last - 1.0).abs() < 1e-9 {
                *last = 1.0;
            }
        }
        WeightedMarginalCdf { points: self.points.clone(), cum }
    }
}

/// A monotone, right-continuous weighted marginal CDF on a finite support,
/// bounded in `[0, 1]`, with the generalized inverse
/// `F^{-1}(u) = inf { s in support : F(s) >= u }`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMarginalCdf {
    points: Vec<f64>,
    cum: Vec<f64>,
}

impl WeightedMarginalCdf {
    /// Build from weighted samples (envelope applied).
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        Ok(StepFn::from_weighted(values, weights)?.envelope())
    }

    pub fn support(&self) -> &[f64] {
        &self.points
    }

    pub fn eval(&self, s: f64) -> f64 {
        let idx = self.points.partition_point(|&p| p <= s);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }

    pub fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let idx = self.cum.partition_point(|&c| c < u);
        if idx >= self.points.len() {
            *self.points.last().expect("non-empty support")
        } else {
            self.points[idx]
        }
    }
}

/// Signed accumulated marginal CDFs across levels, one per dimension.
///
/// Level 1 installs its weighted CDFs directly; each later level adds the
/// difference between its sample CDF and the CDF of its coupled partners.
#[derive(Debug, Clone)]
pub struct CdfAccumulator {
    dims: Vec<StepFn>,
}

impl CdfAccumulator {
    pub fn from_level1(dims: Vec<StepFn>) -> Self {
        CdfAccumulator { dims }
    }

    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    /// Apply the signed update `F_hat += F_level - G_coupled` per dimension.
    pub fn add_level(&mut self, level: &[StepFn], coupled: &[StepFn]) {
        assert_eq!(level.len(), self.dims.len());
        assert_eq!(coupled.len(), self.dims.len());
        for ((acc, f), g) in self.dims.iter_mut().zip(level).zip(coupled) {
            *acc = acc.add_scaled(f, 1.0).add_scaled(g, -1.0);
        }
    }

    /// Monotone views suitable for inversion.
    pub fn envelopes(&self) -> Vec<WeightedMarginalCdf> {
        self.dims.iter().map(StepFn::envelope).collect()
    }

    pub fn raw(&self, dim: usize) -> &StepFn {
        &self.dims[dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weight_step_function() {
        let f = WeightedMarginalCdf::from_weighted(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((f.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((f.eval(2.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.inverse(0.5), 2.0);
    }

    #[test]
    fn inverse_boundary_conventions() {
        let f = WeightedMarginalCdf::from_weighted(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.inverse(0.0), 1.0);
        assert_eq!(f.inverse(1.0), 3.0);
    }

    #[test]
    fn signed_weights_get_running_max_envelope() {
        // raw cumulative (0.5, 0.3, 1.0) must correct to (0.5, 0.5, 1.0)
        let f = StepFn::from_weighted(&[1.0, 2.0, 3.0], &[0.5, -0.2, 0.7]).unwrap();
        assert_eq!(f.values, vec![0.5, 0.3 / 1.0, 1.0]);
        let env = f.envelope();
        assert_eq!(env.eval(1.0), 0.5);
        assert_eq!(env.eval(2.0), 0.5);
        assert_eq!(env.eval(3.0), 1.0);
    }

    #[test]
    fn ties_merge_into_one_support_point() {
        let f = WeightedMarginalCdf::from_weighted(&[2.0, 1.0, 2.0], &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.support(), &[1.0, 2.0]);
        assert!((f.eval(1.0) - 0.25).abs() < 1e-15);
        assert_eq!(f.eval(2.0), 1.0);
    }

    #[test]
    fn zero_and_negative_totals_are_degenerate() {
        assert!(WeightedMarginalCdf::from_weighted(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(WeightedMarginalCdf::from_weighted(&[1.0, 2.0], &[1.0, -2.0]).is_err());
    }

    #[test]
    fn step_fn_merge_adds_pointwise() {
        let a = StepFn { points: vec![1.0, 3.0], values: vec![0.5, 1.0] };
        let b = StepFn { points: vec![2.0, 3.0], values: vec![0.25, 1.0] };
        let sum = a.add_scaled(&b, 1.0);
        assert_eq!(sum.points, vec![1.0, 2.0, 3.0]);
        assert_eq!(sum.values, vec![0.5, 0.75, 2.0]);
        let diff = a.add_scaled(&b, -1.0);
        assert_eq!(diff.values, vec![0.5, 0.25, 0.0]);
        for s in [0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0] {
            assert!((sum.eval(s) - (a.eval(s) + b.eval(s))).abs() < 1e-15);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // envelope output is a genuine CDF for arbitrary signed weights
            #[test]
            fn envelope_is_monotone_and_bounded(
                pairs in proptest::collection::vec((-5.0f64..5.0, -1.0f64..2.0), 1..40)
            ) {
                let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                if let Ok(f) = WeightedMarginalCdf::from_weighted(&values, &weights) {
                    let mut prev = 0.0;
                    for &s in f.support() {
                        let v = f.eval(s);
                        prop_assert!((0.0..=1.0).contains(&v));
                        prop_assert!(v + 1e-15 >= prev);
                        prev = v;
                    }
                }
            }

            // with positive weights, inverse . eval is the identity on support
            #[test]
            fn inverse_of_eval_is_identity_on_support(
                pairs in proptest::collection::vec((-5.0f64..5.0, 0.01f64..2.0), 1..40)
            ) {
                let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                let f = WeightedMarginalCdf::from_weighted(&values, &weights).unwrap();
                for &s in f.support() {
                    prop_assert_eq!(f.inverse(f.eval(s)), s);
                }
            }
        }
    }
}
