//! Multilevel ABC: a telescoping sum over a decreasing threshold sequence
//! with marginal inverse-CDF coupling between adjacent levels.
//!
//! Level 1 is a plain posterior mean at the loosest threshold; each later
//! level adds the mean of `f(theta_l) - f(theta~_{l-1})`, where the partner
//! `theta~` is produced by pushing the sample through the current level's
//! marginal CDF and the inverse of the accumulated CDF of all earlier
//! levels. Levels must therefore run strictly in order.

use serde::{Deserialize, Serialize};

use crate::abc::{
    self_normalized_variance, weighted_mean, AbcProblem, EstimatorReport, LevelReport,
    WeightedSample,
};
use crate::ecdf::{CdfAccumulator, StepFn, WeightedMarginalCdf};
use crate::error::{Error, Result};
use crate::mf::{ContinuationProbs, EtaMode, FidelityPair, RocCostSummary, TunerState};
use crate::rng::{tag, RngStream};
use crate::sampler::{run_level, LevelSampling};

/// Strictly decreasing acceptance thresholds, one per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    epsilons: Vec<f64>,
}

impl ThresholdSchedule {
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::Config("threshold schedule is empty".into()));
        }
        if epsilons.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("thresholds must be positive".into()));
        }
        if epsilons.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config("thresholds must be strictly decreasing".into()));
        }
        Ok(ThresholdSchedule { epsilons })
    }

    /// Used by tests to bypass the strictly-decreasing check.
    #[cfg(test)]
    pub(crate) fn new_unchecked(epsilons: Vec<f64>) -> Self {
        ThresholdSchedule { epsilons }
    }

    /// Geometric schedule from `eps1` down to `eps_last` in `levels` steps.
    pub fn geometric(eps1: f64, eps_last: f64, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("need at least one level".into()));
        }
        if levels == 1 {
            return ThresholdSchedule::new(vec![eps_last]);
        }
        if eps1 <= eps_last {
            return Err(Error::Config("eps1 must exceed the target threshold".into()));
        }
        let m = (eps1 / eps_last).powf(1.0 / (levels - 1) as f64);
        let eps = (0..levels)
            .map(|l| {
                if l == levels - 1 {
                    eps_last
                } else {
                    eps1 / m.powi(l as i32)
                }
            })
            .collect();
        ThresholdSchedule::new(eps)
    }

    /// Schedule with a requested scale factor; the level count is the
    /// nearest integer fit.
    pub fn from_scale_factor(eps1: f64, eps_last: f64, m: f64) -> Result<Self> {
        if m <= 1.0 {
            return Err(Error::Config("scale factor must exceed 1".into()));
        }
        if eps1 <= eps_last {
            return Err(Error::Config("eps1 must exceed the target threshold".into()));
        }
        let levels = (1.0 + (eps1 / eps_last).ln() / m.ln()).round().max(2.0) as usize;
        ThresholdSchedule::geometric(eps1, eps_last, levels)
    }

    /// Default level count: the smallest L whose geometric scale factor
    /// lands in [1.5, 2], or the closest achievable factor otherwise.
    pub fn auto(eps1: f64, eps_last: f64) -> Result<Self> {
        if eps1 <= eps_last {
            return Err(Error::Config("eps1 must exceed the target threshold".into()));
        }
        let r = eps1 / eps_last;
        let mut best: Option<(f64, usize)> = None;
        for levels in 2..=64usize {
            let m = r.powf(1.0 / (levels - 1) as f64);
            if (1.5..=2.0).contains(&m) {
                return ThresholdSchedule::geometric(eps1, eps_last, levels);
            }
            let dist = (m.ln() - 1.75f64.ln()).abs();
            if best.map_or(true, |(d, _)| dist < d) {
                best = Some((dist, levels));
            }
        }
        let (_, levels) = best.expect("candidate levels exist");
        ThresholdSchedule::geometric(eps1, eps_last, levels)
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn len(&self) -> usize {
        self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilons.is_empty()
    }

    pub fn target(&self) -> f64 {
        *self.epsilons.last().unwrap()
    }

    /// Geometric scale factor `(eps1/epsL)^(1/(L-1))`; `None` for L = 1.
    pub fn scale_factor(&self) -> Option<f64> {
        if self.epsilons.len() < 2 {
            None
        } else {
            let l = self.epsilons.len();
            Some((self.epsilons[0] / self.epsilons[l - 1]).powf(1.0 / (l - 1) as f64))
        }
    }
}

/// Variance proxy, per-sample cost, and mean weight of one level, from
/// trial runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelStats {
    pub v: f64,
    pub c: f64,
    pub mean_weight: f64,
}

/// How production sample counts are fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationTarget {
    /// Aim at estimator standard deviation `h`.
    StdDev(f64),
    /// Keep proportions, rescaled so the last level gets this many samples.
    AnchorLast(usize),
}

/// How many samples a level consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelBudget {
    /// Retry until this many acceptances (classic rejection).
    Accepted(usize),
    /// A fixed number of prior draws, weighted by acceptance indicators.
    Draws(usize),
}

pub(crate) enum LevelKind {
    Exact(LevelBudget),
    Mf { pair: FidelityPair, eta: EtaMode, n: usize },
}

/// Everything a level produced, for reporting and post-hoc estimation.
pub(crate) struct LevelData {
    pub report: LevelReport,
    pub samples: Vec<WeightedSample>,
    pub cost_split: Option<Vec<(f64, f64)>>,
    pub g_values: Vec<f64>,
    pub eta_final: Option<ContinuationProbs>,
    pub variance: f64,
}

/// Map level-`l` samples to coupled partners: per dimension j,
/// `theta~_j = Fhat_prev_j^{-1}( Fbar_level_j(theta_j) )`.
pub fn couple_down(
    samples: &[WeightedSample],
    current: &[WeightedMarginalCdf],
    previous: &[WeightedMarginalCdf],
) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            s.theta
                .iter()
                .enumerate()
                .map(|(j, &t)| previous[j].inverse(current[j].eval(t)))
                .collect()
        })
        .collect()
}

/// Sequentially process levels, coupling each against the accumulated
/// marginal CDFs of the levels before it.
pub(crate) fn run_multilevel(
    problem: &AbcProblem,
    specs: Vec<(f64, LevelKind)>,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<Vec<LevelData>> {
    let dims = problem.prior.dim();
    let mut acc: Option<CdfAccumulator> = None;
    let mut out = Vec::with_capacity(specs.len());

    for (idx, (epsilon, kind)) in specs.into_iter().enumerate() {
        let ell = idx + 1;
        debug_assert_eq!(
            acc.as_ref().map_or(0, |a| a.dim_count().min(usize::MAX)),
            if ell == 1 { 0 } else { dims },
            "level {ell} started before accumulation of earlier levels"
        );
        let sampling = match &kind {
            LevelKind::Exact(LevelBudget::Accepted(n)) => LevelSampling::RejectAccepted { n_accept: *n },
            LevelKind::Exact(LevelBudget::Draws(n)) => LevelSampling::RejectDraws { n_draws: *n },
            LevelKind::Mf { pair, eta, n } => {
                LevelSampling::Multifidelity { pair: *pair, eta: *eta, n_draws: *n }
            }
        };
        let outcome = run_level(problem, ell, epsilon, stream.level(ell), sampling, Some(f))?;
        let weights: Vec<f64> = outcome.samples.iter().map(|s| s.w).collect();
        let sum_w: f64 = weights.iter().sum();
        if sum_w <= 0.0 {
            return Err(Error::DegenerateWeights { level: Some(ell) });
        }

        let marginal = |values: Vec<f64>| -> Result<StepFn> {
            StepFn::from_weighted(&values, &weights)
                .map_err(|_| Error::DegenerateWeights { level: Some(ell) })
        };
        let level_raw: Vec<StepFn> = (0..dims)
            .map(|j| marginal(outcome.samples.iter().map(|s| s.theta[j]).collect()))
            .collect::<Result<Vec<_>>>()?;

        let coupled: Option<Vec<Vec<f64>>> = acc.as_ref().map(|acc| {
            let current: Vec<WeightedMarginalCdf> =
                level_raw.iter().map(StepFn::envelope).collect();
            couple_down(&outcome.samples, &current, &acc.envelopes())
        });
        let g_values: Vec<f64> = match &coupled {
            None => outcome.samples.iter().map(|s| f(&s.theta)).collect(),
            Some(coupled) => outcome
                .samples
                .iter()
                .zip(coupled)
                .map(|(s, t)| f(&s.theta) - f(t))
                .collect(),
        };
        let contribution = weighted_mean(&weights, &g_values)
            .map_err(|_| Error::DegenerateWeights { level: Some(ell) })?;
        let variance = self_normalized_variance(&weights, &g_values, contribution);

        match acc.as_mut() {
            None => acc = Some(CdfAccumulator::from_level1(level_raw)),
            Some(acc) => {
                let coupled = coupled.as_ref().expect("coupling exists past level 1");
                let coupled_raw: Vec<StepFn> = (0..dims)
                    .map(|j| marginal(coupled.iter().map(|t| t[j]).collect()))
                    .collect::<Result<Vec<_>>>()?;
                acc.add_level(&level_raw, &coupled_raw);
            }
        }

        let n_samples = outcome.samples.len();
        out.push(LevelData {
            report: LevelReport {
                level: ell,
                epsilon,
                n_samples,
                contribution,
                mean_weight: sum_w / n_samples as f64,
                cost: outcome.total_cost,
                eta: outcome.eta_final.map(|e| (e.eta1, e.eta2)),
                phi_hat: None,
            },
            samples: outcome.samples,
            cost_split: outcome.cost_split,
            g_values,
            eta_final: outcome.eta_final,
            variance,
        });
    }
    Ok(out)
}

pub(crate) fn report_from_levels(levels: &[LevelData], tuning_cost: f64) -> EstimatorReport {
    let variance = levels.iter().map(|l| l.variance).sum();
    EstimatorReport::from_levels(
        levels.iter().map(|l| l.report.clone()).collect(),
        variance,
        tuning_cost,
    )
}

/// MLMC-ABC with explicit per-level sample counts (classic
/// until-N-accepted budgets).
pub fn mlmc_abc(
    problem: &AbcProblem,
    schedule: &ThresholdSchedule,
    n_per_level: &[usize],
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<Vec<WeightedSample>>)> {
    let budgets: Vec<LevelBudget> = n_per_level.iter().map(|&n| LevelBudget::Accepted(n)).collect();
    mlmc_abc_with_budgets(problem, schedule, &budgets, f, stream)
}

/// MLMC-ABC where each level's budget is stated explicitly; `Draws`
/// budgets make runs comparable sample-for-sample with multifidelity runs.
pub fn mlmc_abc_with_budgets(
    problem: &AbcProblem,
    schedule: &ThresholdSchedule,
    budgets: &[LevelBudget],
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<Vec<WeightedSample>>)> {
    if budgets.len() != schedule.len() {
        return Err(Error::Config("one budget per level required".into()));
    }
    for b in budgets {
        let n = match b {
            LevelBudget::Accepted(n) | LevelBudget::Draws(n) => *n,
        };
        if n < 1 {
            return Err(Error::Config("level budgets must be at least 1".into()));
        }
    }
    let specs = schedule
        .epsilons()
        .iter()
        .zip(budgets)
        .map(|(&eps, &b)| (eps, LevelKind::Exact(b)))
        .collect();
    let levels = run_multilevel(problem, specs, f, stream)?;
    let report = report_from_levels(&levels, 0.0);
    Ok((report, levels.into_iter().map(|l| l.samples).collect()))
}

/// Trial runs at every level to estimate the variance proxy and cost that
/// drive the sample allocation. Returns the stats and the trial cost.
pub fn estimate_level_stats(
    problem: &AbcProblem,
    schedule: &ThresholdSchedule,
    trial_n: usize,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<(Vec<LevelStats>, f64)> {
    if trial_n < 2 {
        return Err(Error::Config("need at least two trial samples per level".into()));
    }
    let specs = schedule
        .epsilons()
        .iter()
        .map(|&eps| (eps, LevelKind::Exact(LevelBudget::Accepted(trial_n))))
        .collect();
    let levels = run_multilevel(problem, specs, f, stream)?;
    let mut stats = Vec::with_capacity(levels.len());
    let mut cost = 0.0;
    for l in &levels {
        let n = l.g_values.len() as f64;
        let mean = l.g_values.iter().sum::<f64>() / n;
        let v = l.g_values.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
        stats.push(LevelStats { v, c: l.report.cost / n, mean_weight: l.report.mean_weight });
        cost += l.report.cost;
    }
    Ok((stats, cost))
}

/// Optimal per-level sample counts `N_l ~ h^-2 sqrt(v_l/c_l) sum_m
/// sqrt(v_m c_m)`, ceiling-rounded with a floor of 2, optionally rescaled
/// to anchor the last level.
pub fn optimal_allocation(stats: &[LevelStats], target: AllocationTarget) -> Result<Vec<usize>> {
    if stats.is_empty() {
        return Err(Error::Allocation("no level statistics".into()));
    }
    if stats.iter().any(|s| s.v <= 0.0 || s.c <= 0.0) {
        return Err(Error::Allocation(
            "zero variance or cost estimate; draw more trial samples".into(),
        ));
    }
    let shape: Vec<f64> = stats.iter().map(|s| (s.v / s.c).sqrt()).collect();
    let raw: Vec<f64> = match target {
        AllocationTarget::StdDev(h) => {
            if h <= 0.0 {
                return Err(Error::Allocation("target standard deviation must be positive".into()));
            }
            let scale: f64 = stats.iter().map(|s| (s.v * s.c).sqrt()).sum();
            shape.iter().map(|u| u * scale / (h * h)).collect()
        }
        AllocationTarget::AnchorLast(n_last) => {
            if n_last < 2 {
                return Err(Error::Allocation("anchor must be at least 2".into()));
            }
            let last = *shape.last().unwrap();
            shape.iter().map(|u| u / last * n_last as f64).collect()
        }
    };
    Ok(raw.iter().map(|&x| (x.ceil() as usize).max(2)).collect())
}

/// Trial-then-production MLMC: estimate level stats, allocate, run, and
/// fold the trial cost into the report.
pub fn mlmc_pipeline(
    problem: &AbcProblem,
    schedule: &ThresholdSchedule,
    trial_n: usize,
    target: AllocationTarget,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<Vec<WeightedSample>>)> {
    let (stats, trial_cost) =
        estimate_level_stats(problem, schedule, trial_n, f, &stream.derive(tag::TRIAL))?;
    let mut ns = optimal_allocation(&stats, target)?;
    // later levels couple against the CDFs of earlier ones; keep the
    // pyramid monotone so those CDFs are never under-sampled
    for i in (0..ns.len().saturating_sub(1)).rev() {
        ns[i] = ns[i].max(ns[i + 1]);
    }
    let budgets: Vec<LevelBudget> = ns.iter().map(|&n| LevelBudget::Accepted(n)).collect();
    let specs = schedule
        .epsilons()
        .iter()
        .zip(&budgets)
        .map(|(&eps, &b)| (eps, LevelKind::Exact(b)))
        .collect();
    let levels = run_multilevel(problem, specs, f, &stream.derive(tag::PRODUCTION))?;
    let report = report_from_levels(&levels, trial_cost);
    Ok((report, levels.into_iter().map(|l| l.samples).collect()))
}

// re-exported for the multifidelity multilevel variant
pub(crate) fn posthoc_summary(
    samples: &[WeightedSample],
    g_values: &[f64],
    cost_split: &[(f64, f64)],
) -> Option<RocCostSummary> {
    let mut tuner = TunerState::new(Default::default(), samples.len());
    for ((s, &g), &(ca, ce)) in samples.iter().zip(g_values).zip(cost_split) {
        tuner.ingest(s, g, ca, ce);
    }
    tuner.summary()
}
