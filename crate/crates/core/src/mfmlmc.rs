//! Multifidelity weights inside every term of the multilevel telescoping
//! sum: each level screens its prior draws with tau-leaping, corrects with
//! probabilistic exact simulation, and couples to the previous levels
//! through weighted marginal CDFs.

use serde::{Deserialize, Serialize};

use crate::abc::{AbcProblem, EstimatorReport, WeightedSample};
use crate::error::{Error, Result};
use crate::mf::{mf_abc, optimal_continuation, phi, ContinuationProbs, EtaMode, FidelityPair, TunerConfig};
use crate::mlmc::{
    posthoc_summary, report_from_levels, run_multilevel, AllocationTarget, LevelKind,
    ThresholdSchedule,
};
use crate::rng::{tag, RngStream};

/// Per-level configuration: thresholds, tau-leap step, sample count, and
/// continuation probabilities (fixed or adaptive).
#[derive(Debug, Clone)]
pub struct LevelPlanEntry {
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    pub tau: f64,
    pub n: usize,
    pub eta: EtaMode,
}

/// The full sampler configuration, one entry per level.
#[derive(Debug, Clone)]
pub struct LevelPlan {
    pub levels: Vec<LevelPlanEntry>,
}

impl LevelPlan {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("level plan is empty".into()));
        }
        for e in &self.levels {
            if e.epsilon <= 0.0 || e.epsilon_tilde <= 0.0 {
                return Err(Error::Config("thresholds must be positive".into()));
            }
            if e.tau <= 0.0 {
                return Err(Error::Config("tau must be positive".into()));
            }
            if e.n < 1 {
                return Err(Error::Config("level sample counts must be at least 1".into()));
            }
        }
        // both threshold sequences strictly decreasing; tau unconstrained
        let dec = |get: fn(&LevelPlanEntry) -> f64| {
            self.levels.windows(2).all(|w| get(&w[0]) > get(&w[1]))
        };
        if !dec(|e| e.epsilon) || !dec(|e| e.epsilon_tilde) {
            return Err(Error::Config("threshold sequences must be strictly decreasing".into()));
        }
        Ok(())
    }

    /// Symmetric plan: screening thresholds equal to the exact ones and a
    /// single tau for every level.
    pub fn symmetric(schedule: &ThresholdSchedule, tau: f64, ns: &[usize], eta: EtaMode) -> Result<Self> {
        if ns.len() != schedule.len() {
            return Err(Error::Config("one sample count per level required".into()));
        }
        let levels = schedule
            .epsilons()
            .iter()
            .zip(ns)
            .map(|(&eps, &n)| LevelPlanEntry {
                epsilon: eps,
                epsilon_tilde: eps,
                tau,
                n,
                eta,
            })
            .collect();
        let plan = LevelPlan { levels };
        plan.validate()?;
        Ok(plan)
    }
}

/// Per-level quantities behind the sample allocation: the efficiency
/// objective at the tuned continuation probabilities, the expected
/// per-draw cost, and the mean weight.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelTuning {
    pub phi: f64,
    pub mean_cost: f64,
    pub mean_weight: f64,
    pub eta: (f64, f64),
    /// Weight dispersion `N sum(w^2) / (sum w)^2`: the factor by which
    /// signed weights shrink the level's effective sample count.
    pub ess_factor: f64,
}

/// Optimal sample counts
/// `N_l ~ h^-2 sqrt(phi_l)/(C_l w_l) sum_m sqrt(phi_m)/w_m`,
/// ceiling-rounded with a floor of 2.
pub fn mf_optimal_allocation(
    tunings: &[LevelTuning],
    target: AllocationTarget,
) -> Result<Vec<usize>> {
    if tunings.is_empty() {
        return Err(Error::Allocation("no level tunings".into()));
    }
    if tunings.iter().any(|t| t.mean_weight <= 0.0) {
        return Err(Error::Allocation("non-positive mean weight estimate".into()));
    }
    if tunings.iter().any(|t| t.phi <= 0.0 || t.mean_cost <= 0.0) {
        return Err(Error::Allocation(
            "zero efficiency or cost estimate; draw more trial samples".into(),
        ));
    }
    let shape: Vec<f64> = tunings
        .iter()
        .map(|t| t.phi.sqrt() / (t.mean_cost * t.mean_weight))
        .collect();
    let raw: Vec<f64> = match target {
        AllocationTarget::StdDev(h) => {
            if h <= 0.0 {
                return Err(Error::Allocation("target standard deviation must be positive".into()));
            }
            let scale: f64 = tunings.iter().map(|t| t.phi.sqrt() / t.mean_weight).sum();
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

/// Run the multifidelity multilevel sampler under an explicit plan.
pub fn mf_mlmc_abc(
    problem: &AbcProblem,
    plan: &LevelPlan,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<Vec<WeightedSample>>)> {
    plan.validate()?;
    let specs = plan
        .levels
        .iter()
        .map(|e| {
            (
                e.epsilon,
                LevelKind::Mf {
                    pair: FidelityPair {
                        tau: e.tau,
                        epsilon: e.epsilon,
                        epsilon_tilde: e.epsilon_tilde,
                    },
                    eta: e.eta,
                    n: e.n,
                },
            )
        })
        .collect();
    let mut levels = run_multilevel(problem, specs, f, stream)?;
    for l in &mut levels {
        if let (Some(split), Some(eta)) = (&l.cost_split, l.eta_final) {
            if let Some(summary) = posthoc_summary(&l.samples, &l.g_values, split) {
                l.report.phi_hat = Some(phi(eta, &summary));
            }
        }
    }
    let report = report_from_levels(&levels, 0.0);
    Ok((report, levels.into_iter().map(|l| l.samples).collect()))
}

/// Trial-phase output: tuned continuation probabilities and allocation
/// inputs per level.
#[derive(Debug, Clone)]
pub struct TrialPhase {
    pub tunings: Vec<LevelTuning>,
    pub cost: f64,
}

/// Adaptive trial runs at every level: tune eta, then re-estimate the
/// efficiency objective from the same trial samples using the actual
/// level corrections.
pub fn tune_levels(
    problem: &AbcProblem,
    schedule: &ThresholdSchedule,
    taus: &[f64],
    trial_n: usize,
    tuner: TunerConfig,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<TrialPhase> {
    if taus.len() != schedule.len() {
        return Err(Error::Config("one tau per level required".into()));
    }
    if trial_n < 2 {
        return Err(Error::Config("need at least two trial samples per level".into()));
    }
    let specs = schedule
        .epsilons()
        .iter()
        .zip(taus)
        .map(|(&eps, &tau)| {
            (
                eps,
                LevelKind::Mf {
                    pair: FidelityPair::symmetric(tau, eps),
                    eta: EtaMode::Adaptive(tuner),
                    n: trial_n,
                },
            )
        })
        .collect();
    let levels = run_multilevel(problem, specs, f, stream)?;
    let mut tunings = Vec::with_capacity(levels.len());
    let mut cost = 0.0;
    for l in &levels {
        let split = l.cost_split.as_ref().expect("multifidelity levels carry cost splits");
        let summary = posthoc_summary(&l.samples, &l.g_values, split)
            .ok_or_else(|| Error::Allocation("trial phase produced no usable summary".into()))?;
        // freeze the production continuation probabilities at the solved
        // optimum of the trial summary; the gradient iterate only guides
        // the trial itself. Fall back to always continuing when the screen
        // is useless or the predicted gain is within trial noise.
        let eta = match optimal_continuation(&summary, tuner.eta_min) {
            Ok(eta) if phi(eta, &summary) < 0.7 * phi(ContinuationProbs::ones(), &summary) => eta,
            Ok(_) => ContinuationProbs::ones(),
            Err(Error::ApproximationUseless) => ContinuationProbs::ones(),
            Err(e) => return Err(e),
        };
        let mean_cost = summary.c_tau + eta.eta1 * summary.c_p + eta.eta2 * summary.c_n;
        let n = l.samples.len() as f64;
        let sum_w: f64 = l.samples.iter().map(|s| s.w).sum();
        let sum_w2: f64 = l.samples.iter().map(|s| s.w * s.w).sum();
        tunings.push(LevelTuning {
            phi: phi(eta, &summary),
            mean_cost,
            mean_weight: l.report.mean_weight,
            eta: (eta.eta1, eta.eta2),
            ess_factor: (n * sum_w2 / (sum_w * sum_w)).max(1.0),
        });
        cost += l.report.cost;
    }
    Ok(TrialPhase { tunings, cost })
}

/// Coupling quality at a level depends on the effective sample counts of
/// the levels before it: every later level inverts this level's
/// accumulated CDF. Keep each level's effective count at least the next
/// level's nominal count.
fn enforce_pyramid(ns: &mut [usize], tunings: &[LevelTuning]) {
    // expected accepted count per level stays away from zero, or a level's
    // normalization can degenerate
    for (n, t) in ns.iter_mut().zip(tunings) {
        let floor = (24.0 / t.mean_weight.min(1.0)).ceil() as usize;
        *n = (*n).max(floor);
    }
    for i in (0..ns.len().saturating_sub(1)).rev() {
        let need = (ns[i + 1] as f64 * tunings[i].ess_factor).ceil() as usize;
        ns[i] = ns[i].max(ns[i + 1]).max(need);
    }
}

/// Full pipeline: adaptive trial phase per level, allocation, and a
/// production run with the tuned continuation probabilities frozen. The
/// trial cost is folded into the report.
#[allow(clippy::too_many_arguments)]
pub fn mfmlmc_pipeline(
    problem: &AbcProblem,
    schedule: &ThresholdSchedule,
    taus: &[f64],
    trial_n: usize,
    target: AllocationTarget,
    tuner: TunerConfig,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<Vec<WeightedSample>>)> {
    let trial = tune_levels(problem, schedule, taus, trial_n, tuner, f, &stream.derive(tag::TRIAL))?;
    let mut ns = mf_optimal_allocation(&trial.tunings, target)?;
    enforce_pyramid(&mut ns, &trial.tunings);
    let levels: Vec<LevelPlanEntry> = schedule
        .epsilons()
        .iter()
        .zip(taus)
        .zip(ns.iter().zip(&trial.tunings))
        .map(|((&eps, &tau), (&n, t))| LevelPlanEntry {
            epsilon: eps,
            epsilon_tilde: eps,
            tau,
            n,
            eta: EtaMode::Fixed(
                ContinuationProbs::new(t.eta.0, t.eta.1).expect("tuned eta is valid"),
            ),
        })
        .collect();
    let plan = LevelPlan { levels };
    let (mut report, samples) = mf_mlmc_abc(problem, &plan, f, &stream.derive(tag::PRODUCTION))?;
    report.tuning_cost = trial.cost;
    report.total_cost += trial.cost;
    Ok((report, samples))
}

/// Cost matrix of adaptive multifidelity runs over a grid of thresholds
/// and tau-leap steps, with per-threshold and shared recommendations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauSweep {
    pub taus: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// cost[i][j]: total cost at epsilons[i], taus[j]
    pub cost: Vec<Vec<f64>>,
    /// tuned continuation probabilities per cell
    pub eta: Vec<Vec<(f64, f64)>>,
    /// arg-min tau per threshold
    pub per_epsilon: Vec<f64>,
    /// tau minimizing the summed cost across thresholds
    pub shared: f64,
}

/// Sweep candidate tau values against candidate thresholds with the
/// adaptive sampler and recommend the cheapest choices.
pub fn tune_tau_sequence(
    problem: &AbcProblem,
    taus: &[f64],
    epsilons: &[f64],
    trial_n: usize,
    tuner: TunerConfig,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    stream: &RngStream,
) -> Result<TauSweep> {
    if taus.is_empty() || epsilons.is_empty() {
        return Err(Error::Config("tau and epsilon candidate lists must be non-empty".into()));
    }
    let mut cost = vec![vec![0.0; taus.len()]; epsilons.len()];
    let mut eta = vec![vec![(1.0, 1.0); taus.len()]; epsilons.len()];
    for (i, &eps) in epsilons.iter().enumerate() {
        let prob = problem.clone().with_epsilon(eps);
        for (j, &tau) in taus.iter().enumerate() {
            let cell = stream.derive(tag::TRIAL).derive(i as u64).derive(j as u64);
            let (report, _, info) = mf_abc(
                &prob,
                &FidelityPair::symmetric(tau, eps),
                EtaMode::Adaptive(tuner),
                f,
                trial_n,
                &cell,
            )?;
            cost[i][j] = report.total_cost;
            eta[i][j] = (info.eta_final.eta1, info.eta_final.eta2);
        }
    }
    let argmin = |row: &[f64]| -> usize {
        row.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap()
    };
    let per_epsilon: Vec<f64> = cost.iter().map(|row| taus[argmin(row)]).collect();
    let totals: Vec<f64> = (0..taus.len())
        .map(|j| cost.iter().map(|row| row[j]).sum())
        .collect();
    let shared = taus[argmin(&totals)];
    Ok(TauSweep { taus: taus.to_vec(), epsilons: epsilons.to_vec(), cost, eta, per_epsilon, shared })
}
