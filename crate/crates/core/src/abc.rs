//! ABC problem definition, discrepancy, rejection sampling, and weighted
//! estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ReactionNetwork;
use crate::rng::{tag, RngStream};
use crate::sampler::{run_level, LevelSampling};
use crate::sim::{CostModel, ObservationModel, ObservationSet};

/// Independent uniform prior, one `(lo, hi)` interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub bounds: Vec<(f64, f64)>,
}

impl Prior {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.iter().any(|&(lo, hi)| lo >= hi) {
            return Err(Error::Config("prior bounds need lo < hi in every dimension".into()));
        }
        Ok(Prior { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn sample(&self, stream: &RngStream) -> Vec<f64> {
        use rand::Rng;
        let mut rng = stream.rng();
        self.bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>()).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.bounds).all(|(&t, &(lo, hi))| t >= lo && t <= hi)
    }
}

/// The inference target: model, observation process, observed data, prior,
/// and acceptance threshold.
#[derive(Debug, Clone)]
pub struct AbcProblem {
    pub network: ReactionNetwork,
    pub obs_model: ObservationModel,
    pub data: ObservationSet,
    pub prior: Prior,
    pub epsilon: f64,
    pub t0: f64,
    pub t_end: f64,
    pub cost_model: CostModel,
    /// Rejection gives up after this many attempts per accepted sample.
    pub max_attempts_per_accept: u64,
}

impl AbcProblem {
    pub fn new(
        network: ReactionNetwork,
        obs_model: ObservationModel,
        data: ObservationSet,
        prior: Prior,
        epsilon: f64,
    ) -> Result<Self> {
        let t0 = 0.0;
        let t_end = *obs_model
            .times
            .last()
            .ok_or_else(|| Error::Config("observation model has no times".into()))?;
        let p = AbcProblem {
            network,
            obs_model,
            data,
            prior,
            epsilon,
            t0,
            t_end,
            cost_model: CostModel::default(),
            max_attempts_per_accept: 10_000_000,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_cost_model(mut self, cost_model: CostModel) -> Self {
        self.cost_model = cost_model;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.obs_model.validate(self.network.species_count())?;
        if self.data.n_times != self.obs_model.times.len()
            || self.data.n_cols != self.obs_model.observed.len()
        {
            return Err(Error::Dimension("data dimensions do not match observation model".into()));
        }
        if self.prior.dim() != self.network.params.free_count() {
            return Err(Error::Dimension(format!(
                "prior has {} dimensions but the model has {} free parameters",
                self.prior.dim(),
                self.network.params.free_count()
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self
            .obs_model
            .times
            .iter()
            .any(|&t| t < self.t0 - 1e-12 || t > self.t_end + 1e-12)
        {
            return Err(Error::Config("observation times outside simulation horizon".into()));
        }
        Ok(())
    }
}

/// Euclidean distance over all matching entries of two observation sets.
pub fn discrepancy(a: &ObservationSet, b: &ObservationSet) -> Result<f64> {
    if a.n_times != b.n_times || a.n_cols != b.n_cols {
        return Err(Error::Dimension(format!(
            "observation sets are {}x{} vs {}x{}",
            a.n_times, a.n_cols, b.n_times, b.n_cols
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// One parameter draw with its multifidelity bookkeeping. Plain rejection
/// samples carry `w` of 0 or 1 and no approximate stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedSample {
    pub theta: Vec<f64>,
    pub w: f64,
    pub cost: f64,
    pub approx_accept: bool,
    pub exact_run: bool,
    pub exact_accept: Option<bool>,
    pub level: usize,
}

/// Self-normalized weighted mean of `f` over the samples.
pub fn weighted_estimate(samples: &[WeightedSample], f: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in samples {
        num += s.w * f(&s.theta);
        den += s.w;
    }
    if den == 0.0 {
        return Err(Error::DegenerateWeights { level: None });
    }
    Ok(num / den)
}

/// Self-normalized weighted mean of paired `(w, g)` values.
pub fn weighted_mean(weights: &[f64], values: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&w, &g) in weights.iter().zip(values) {
        num += w * g;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::DegenerateWeights { level: None });
    }
    Ok(num / den)
}

/// The function whose posterior expectation is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetFn {
    /// E[theta_dim | data]
    Mean { dim: usize },
    /// P(theta_dim <= threshold | data)
    Indicator { dim: usize, threshold: f64 },
}

impl TargetFn {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        match *self {
            TargetFn::Mean { dim } => theta[dim],
            TargetFn::Indicator { dim, threshold } => {
                if theta[dim] <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-level slice of an estimator report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub epsilon: f64,
    pub n_samples: usize,
    pub contribution: f64,
    pub mean_weight: f64,
    pub cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_hat: Option<f64>,
}

/// Estimate, per-level decomposition, variance estimate, and cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub variance_estimate: f64,
    pub total_cost: f64,
    /// Trial/pilot cost already included in `total_cost`.
    pub tuning_cost: f64,
    pub per_level: Vec<LevelReport>,
}

impl EstimatorReport {
    /// Assemble a report whose estimate is exactly the sum of the
    /// per-level contributions.
    pub fn from_levels(per_level: Vec<LevelReport>, variance_estimate: f64, tuning_cost: f64) -> Self {
        let estimate = per_level.iter().map(|l| l.contribution).sum();
        let total_cost = per_level.iter().map(|l| l.cost).sum::<f64>() + tuning_cost;
        EstimatorReport { estimate, variance_estimate, total_cost, tuning_cost, per_level }
    }
}

/// Delta-method variance estimate of a self-normalized weighted mean:
/// `sum w_i^2 (g_i - g_hat)^2 / (sum w_i)^2`.
pub fn self_normalized_variance(weights: &[f64], values: &[f64], estimate: f64) -> f64 {
    let num: f64 = weights
        .iter()
        .zip(values)
        .map(|(&w, &g)| {
            let d = g - estimate;
            w * w * d * d
        })
        .sum();
    let den: f64 = weights.iter().sum();
    num / (den * den)
}

/// ABC rejection sampling: draw from the prior and simulate exactly until
/// `n_accept` samples pass the threshold. Cost counts every attempt.
pub fn abc_rejection(
    problem: &AbcProblem,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_accept: usize,
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<WeightedSample>)> {
    if n_accept == 0 {
        return Err(Error::Config("need at least one accepted sample".into()));
    }
    let out = run_level(
        problem,
        1,
        problem.epsilon,
        stream.level(1),
        LevelSampling::RejectAccepted { n_accept },
        Some(f),
    )?;
    let estimate = weighted_estimate(&out.samples, f)?;
    let values: Vec<f64> = out.samples.iter().map(|s| f(&s.theta)).collect();
    let weights: Vec<f64> = out.samples.iter().map(|s| s.w).collect();
    let variance = self_normalized_variance(&weights, &values, estimate);
    let sum_w: f64 = weights.iter().sum();
    let report = EstimatorReport::from_levels(
        vec![LevelReport {
            level: 1,
            epsilon: problem.epsilon,
            n_samples: out.samples.len(),
            contribution: estimate,
            mean_weight: sum_w / out.samples.len() as f64,
            cost: out.total_cost,
            eta: None,
            phi_hat: None,
        }],
        variance,
        0.0,
    );
    Ok((report, out.samples))
}

/// Rejection restricted to a fixed budget of prior draws: every draw is
/// kept with weight equal to its acceptance indicator.
pub fn rejection_prior_draws(
    problem: &AbcProblem,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n_draws: usize,
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<WeightedSample>)> {
    let out = run_level(
        problem,
        1,
        problem.epsilon,
        stream.level(1),
        LevelSampling::RejectDraws { n_draws },
        Some(f),
    )?;
    let estimate = weighted_estimate(&out.samples, f)?;
    let values: Vec<f64> = out.samples.iter().map(|s| f(&s.theta)).collect();
    let weights: Vec<f64> = out.samples.iter().map(|s| s.w).collect();
    let variance = self_normalized_variance(&weights, &values, estimate);
    let sum_w: f64 = weights.iter().sum();
    let report = EstimatorReport::from_levels(
        vec![LevelReport {
            level: 1,
            epsilon: problem.epsilon,
            n_samples: out.samples.len(),
            contribution: estimate,
            mean_weight: sum_w / out.samples.len() as f64,
            cost: out.total_cost,
            eta: None,
            phi_hat: None,
        }],
        variance,
        0.0,
    );
    Ok((report, out.samples))
}

/// Data stream used when generating synthetic observations for a problem.
pub fn data_stream(seed: u64) -> RngStream {
    RngStream::new(seed).derive(tag::DATA)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(theta: f64, w: f64) -> WeightedSample {
        WeightedSample {
            theta: vec![theta],
            w,
            cost: 1.0,
            approx_accept: false,
            exact_run: true,
            exact_accept: Some(w > 0.0),
            level: 1,
        }
    }

    #[test]
    fn discrepancy_hand_values() {
        let a = ObservationSet { values: vec![1.0, 2.0, 3.0, 4.0], n_times: 2, n_cols: 2 };
        assert_eq!(discrepancy(&a, &a).unwrap(), 0.0);
        let b = ObservationSet { values: vec![4.0, 6.0, 3.0, 4.0], n_times: 2, n_cols: 2 };
        assert_eq!(discrepancy(&a, &b).unwrap(), 5.0);
        assert_eq!(discrepancy(&b, &a).unwrap(), 5.0);
        let c = ObservationSet { values: vec![0.0, 0.0], n_times: 1, n_cols: 2 };
        assert!(discrepancy(&a, &c).is_err());
    }

    #[test]
    fn weighted_estimate_hand_values() {
        let s = vec![sample(1.0, 1.0), sample(2.0, 3.0)];
        let f = |t: &[f64]| t[0];
        assert_eq!(weighted_estimate(&s, &f).unwrap(), 1.75);

        let eq = vec![sample(1.0, 1.0), sample(2.0, 1.0), sample(6.0, 1.0)];
        assert_eq!(weighted_estimate(&eq, &f).unwrap(), 3.0);

        // constant f is invariant under any valid weighting
        let signed = vec![sample(2.0, 1.0), sample(2.0, -0.5), sample(2.0, 1.0)];
        assert_eq!(weighted_estimate(&signed, &f).unwrap(), 2.0);
    }

    #[test]
    fn zero_weight_sum_is_an_error() {
        let s = vec![sample(1.0, 1.0), sample(2.0, -1.0)];
        let f = |t: &[f64]| t[0];
        assert!(matches!(
            weighted_estimate(&s, &f),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn prior_sampling_stays_in_bounds() {
        let prior = Prior::new(vec![(0.0, 0.003), (0.0, 0.0015), (0.0, 0.05)]).unwrap();
        for i in 0..500 {
            let theta = prior.sample(&RngStream::new(3).sample(i));
            assert!(prior.contains(&theta));
        }
        assert!(Prior::new(vec![(1.0, 1.0)]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // rescaling all weights by c > 0 leaves the estimate unchanged
            #[test]
            fn estimate_invariant_under_weight_rescaling(
                pairs in proptest::collection::vec((0.0f64..10.0, 0.01f64..5.0), 1..30),
                c in 0.01f64..100.0
            ) {
                let s: Vec<WeightedSample> = pairs.iter().map(|&(t, w)| sample(t, w)).collect();
                let rescaled: Vec<WeightedSample> =
                    pairs.iter().map(|&(t, w)| sample(t, c * w)).collect();
                let f = |t: &[f64]| t[0];
                let a = weighted_estimate(&s, &f).unwrap();
                let b = weighted_estimate(&rescaled, &f).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
