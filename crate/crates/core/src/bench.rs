//! Benchmark orchestration: run a method at a list of target variances
//! with replicates, measure variance across replicates against mean total
//! cost, and fit the convergence rate `V ~ C^-gamma`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{abc_rejection, AbcProblem, WeightedSample};
use crate::ecdf::WeightedMarginalCdf;
use crate::error::{Error, Result};
use crate::mf::{mf_abc, EtaMode, FidelityPair, TunerConfig};
use crate::mfmlmc::mfmlmc_pipeline;
use crate::mlmc::{mlmc_pipeline, AllocationTarget, ThresholdSchedule};
use crate::rng::{tag, RngStream};

/// Sampler selection plus its tuning knobs.
///
/// Plain rejection has no tuning step: a fixed reference variance converts
/// each target variance into a sample count. The other methods pay their
/// pilot or trial phases inside every replicate.
#[derive(Debug, Clone)]
pub enum MethodSpec {
    Rejection { ref_variance: f64 },
    Mf { tau: f64, ref_variance: f64, tuner: TunerConfig },
    Mlmc { schedule: ThresholdSchedule, trial_n: usize },
    MfMlmc { schedule: ThresholdSchedule, taus: Vec<f64>, trial_n: usize, tuner: TunerConfig },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Rejection { .. } => "rejection",
            MethodSpec::Mf { .. } => "mf",
            MethodSpec::Mlmc { .. } => "mlmc",
            MethodSpec::MfMlmc { .. } => "mfmlmc",
        }
    }
}

/// One replicate's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchPoint {
    pub h2: f64,
    pub replicate: usize,
    pub estimate: f64,
    pub variance_estimate: f64,
    pub cost: f64,
    pub tuning_cost: f64,
}

/// Variance across replicates and mean cost at one target variance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BenchSummary {
    pub h2: f64,
    pub variance: f64,
    pub mean_cost: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRun {
    pub method: String,
    pub replicates: usize,
    pub points: Vec<BenchPoint>,
    pub summaries: Vec<BenchSummary>,
}

/// Run one replicate of a method sized for target variance `h2`.
/// Tuning/pilot cost is included in the reported cost.
fn run_once(
    problem: &AbcProblem,
    method: &MethodSpec,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    h2: f64,
    stream: &RngStream,
) -> Result<(f64, f64, f64, f64)> {
    let h = h2.sqrt();
    match method {
        MethodSpec::Rejection { ref_variance } => {
            let n_needed = ((ref_variance / h2).ceil() as usize).max(2);
            let (report, _) =
                abc_rejection(problem, f, n_needed, &stream.derive(tag::PRODUCTION))?;
            Ok((report.estimate, report.variance_estimate, report.total_cost, 0.0))
        }
        MethodSpec::Mf { tau, ref_variance, tuner } => {
            // one adaptive run: the burn-in is the tuning step and scales
            // with the sample count
            let pair = FidelityPair::symmetric(*tau, problem.epsilon);
            let n_needed = ((ref_variance / h2).ceil() as usize).max(2);
            let (report, _, info) = mf_abc(
                problem,
                &pair,
                EtaMode::Adaptive(*tuner),
                f,
                n_needed,
                &stream.derive(tag::PRODUCTION),
            )?;
            let burn = tuner.burn_in_for(n_needed) as f64;
            let tuning_cost = report.total_cost * burn / n_needed as f64;
            let _ = info;
            Ok((report.estimate, report.variance_estimate, report.total_cost, tuning_cost))
        }
        MethodSpec::Mlmc { schedule, trial_n } => {
            let (report, _) = mlmc_pipeline(
                problem,
                schedule,
                *trial_n,
                AllocationTarget::StdDev(h),
                f,
                stream,
            )?;
            Ok((report.estimate, report.variance_estimate, report.total_cost, report.tuning_cost))
        }
        MethodSpec::MfMlmc { schedule, taus, trial_n, tuner } => {
            let (report, _) = mfmlmc_pipeline(
                problem,
                schedule,
                taus,
                *trial_n,
                AllocationTarget::StdDev(h),
                *tuner,
                f,
                stream,
            )?;
            Ok((report.estimate, report.variance_estimate, report.total_cost, report.tuning_cost))
        }
    }
}

/// Run `replicates` independent repetitions of `method` at each target
/// variance, and summarize variance-across-replicates against mean cost.
pub fn run_benchmark(
    problem: &AbcProblem,
    method: &MethodSpec,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    target_h2: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<BenchRun> {
    if replicates < 2 {
        return Err(Error::Config("need at least two replicates to estimate variance".into()));
    }
    if target_h2.is_empty() || target_h2.iter().any(|&h| h <= 0.0) {
        return Err(Error::Config("target variances must be positive".into()));
    }
    let root = RngStream::new(seed);
    let cells: Vec<(usize, usize)> = (0..target_h2.len())
        .flat_map(|t| (0..replicates).map(move |r| (t, r)))
        .collect();
    let points: Vec<BenchPoint> = cells
        .par_iter()
        .map(|&(t, r)| {
            let stream = root.derive(tag::REPLICATE).derive(t as u64).derive(r as u64);
            let (estimate, variance_estimate, cost, tuning_cost) =
                run_once(problem, method, f, target_h2[t], &stream)?;
            Ok(BenchPoint {
                h2: target_h2[t],
                replicate: r,
                estimate,
                variance_estimate,
                cost,
                tuning_cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::with_capacity(target_h2.len());
    for &h2 in target_h2 {
        let cell: Vec<&BenchPoint> = points.iter().filter(|p| p.h2 == h2).collect();
        let n = cell.len() as f64;
        let mean_est = cell.iter().map(|p| p.estimate).sum::<f64>() / n;
        let variance =
            cell.iter().map(|p| (p.estimate - mean_est).powi(2)).sum::<f64>() / (n - 1.0);
        let mean_cost = cell.iter().map(|p| p.cost).sum::<f64>() / n;
        summaries.push(BenchSummary { h2, variance, mean_cost, mean_estimate: mean_est });
    }
    Ok(BenchRun {
        method: method.name().into(),
        replicates,
        points,
        summaries,
    })
}

/// Least-squares power-law fit `V ~ C^-gamma` on log-log scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub gamma: f64,
    pub intercept: f64,
    pub points: Vec<(f64, f64)>,
}

impl ConvergenceFit {
    /// Fitted variance at a given cost.
    pub fn variance_at(&self, cost: f64) -> f64 {
        (self.intercept - self.gamma * cost.ln()).exp()
    }
}

/// Fit the convergence exponent from `(cost, variance)` points.
pub fn fit_convergence(points: &[(f64, f64)]) -> Result<ConvergenceFit> {
    if points.len() < 2 {
        return Err(Error::Config("need at least two points to fit a rate".into()));
    }
    if points.iter().any(|&(c, v)| c <= 0.0 || v <= 0.0) {
        return Err(Error::Config("convergence fit needs positive costs and variances".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("all costs identical; rate is undefined".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    Ok(ConvergenceFit { gamma: -slope, intercept, points: points.to_vec() })
}

/// Weighted histogram density over an interval, normalized to integrate
/// to one. Signed weights can produce locally negative values; the
/// integral is still exactly one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityTable {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
}

impl DensityTable {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.density.len()).map(|i| self.lo + w * i as f64).collect()
    }
}

/// Histogram estimate of one marginal posterior density.
pub fn estimate_marginal_density(
    samples: &[WeightedSample],
    dim: usize,
    bins: usize,
    support: (f64, f64),
) -> Result<DensityTable> {
    if bins == 0 || support.0 >= support.1 {
        return Err(Error::Config("density needs bins >= 1 and a proper support interval".into()));
    }
    let total: f64 = samples.iter().map(|s| s.w).sum();
    if total == 0.0 {
        return Err(Error::DegenerateWeights { level: None });
    }
    let (lo, hi) = support;
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0f64; bins];
    for s in samples {
        let x = s.theta[dim];
        let b = (((x - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        mass[b] += s.w;
    }
    let density = mass.into_iter().map(|m| m / total / width).collect();
    Ok(DensityTable { lo, hi, density })
}

/// Monotone posterior CDF of one marginal, for cumulative-probability
/// targets evaluated on a grid.
pub fn posterior_cdf(samples: &[WeightedSample], dim: usize) -> Result<WeightedMarginalCdf> {
    let values: Vec<f64> = samples.iter().map(|s| s.theta[dim]).collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.w).collect();
    WeightedMarginalCdf::from_weighted(&values, &weights)
}
