//! The shared per-level sampling engine.
//!
//! Every sampler (plain rejection, multifidelity, and their multilevel
//! variants) pulls samples through this module so that parameter draws and
//! simulator streams are functions of `(seed, level, sample index, purpose)`
//! alone. That discipline is what makes the reduction identities exact:
//! with continuation probabilities (1, 1) the multifidelity path sees the
//! same prior draws and exact-simulation randomness as plain rejection.

use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

use crate::abc::{discrepancy, AbcProblem, WeightedSample};
use crate::error::{Error, Result};
use crate::mf::{ContinuationProbs, EtaMode, FidelityPair, RocCostSummary, TunerState};
use crate::rng::{tag, RngStream};
use crate::sim::{observation_work, observe, simulate_exact, simulate_tau_leap, CostModel};

const PARALLEL_THRESHOLD: usize = 32;
const REJECTION_BLOCK: u64 = 256;

/// Budget and weighting scheme for one level.
#[derive(Debug, Clone, Copy)]
pub(crate) enum LevelSampling {
    /// Exact simulation, retry until this many acceptances (weight 1 each).
    RejectAccepted { n_accept: usize },
    /// Exact simulation of a fixed number of prior draws; weights are the
    /// acceptance indicators.
    RejectDraws { n_draws: usize },
    /// Multifidelity weighting of a fixed number of prior draws.
    Multifidelity { pair: FidelityPair, eta: EtaMode, n_draws: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct LevelOutcome {
    pub samples: Vec<WeightedSample>,
    /// (approx cost, exact cost) per emitted sample, multifidelity only.
    pub cost_split: Option<Vec<(f64, f64)>>,
    pub total_cost: f64,
    pub eta_final: Option<ContinuationProbs>,
    pub summary: Option<RocCostSummary>,
}

fn cost_units(model: CostModel, work: f64, seconds: f64) -> f64 {
    match model {
        CostModel::Work => work,
        CostModel::Seconds => seconds,
    }
}

/// One exact-simulation attempt: draw from the prior, simulate, observe,
/// and score against the data.
fn sample_exact_indicator(
    problem: &AbcProblem,
    level: usize,
    epsilon: f64,
    level_stream: &RngStream,
    index: u64,
) -> Result<WeightedSample> {
    // wall-clock timing only when it is the accounted unit
    let started = (problem.cost_model == CostModel::Seconds).then(Instant::now);
    let s = level_stream.sample(index);
    let theta = problem.prior.sample(&s.derive(tag::PRIOR));
    let traj = simulate_exact(
        &problem.network,
        &theta,
        problem.t0,
        problem.t_end,
        &s.derive(tag::EXACT_SIM),
    )?;
    let y = observe(&traj, &problem.obs_model, &s.derive(tag::EXACT_OBS))?;
    let rho = discrepancy(&problem.data, &y)?;
    let accept = rho <= epsilon;
    let work = traj.cost.work + observation_work(&problem.obs_model);
    let cost = cost_units(
        problem.cost_model,
        work,
        started.map_or(0.0, |t| t.elapsed().as_secs_f64()),
    );
    Ok(WeightedSample {
        theta,
        w: if accept { 1.0 } else { 0.0 },
        cost,
        approx_accept: false,
        exact_run: true,
        exact_accept: Some(accept),
        level,
    })
}

/// One multifidelity weighted sample for an already-drawn `theta`.
/// Returns the sample plus its (approx, exact) cost split.
pub(crate) fn sample_multifidelity(
    problem: &AbcProblem,
    level: usize,
    pair: &FidelityPair,
    eta: ContinuationProbs,
    theta: Vec<f64>,
    sample_stream: &RngStream,
) -> Result<(WeightedSample, f64, f64)> {
    let started = (problem.cost_model == CostModel::Seconds).then(Instant::now);
    let traj = simulate_tau_leap(
        &problem.network,
        &theta,
        problem.t0,
        problem.t_end,
        pair.tau,
        &sample_stream.derive(tag::APPROX_SIM),
    )?;
    let y_approx = observe(&traj, &problem.obs_model, &sample_stream.derive(tag::APPROX_OBS))?;
    let rho_approx = discrepancy(&problem.data, &y_approx)?;
    let approx_accept = rho_approx <= pair.epsilon_tilde;
    let w_tilde = if approx_accept { 1.0 } else { 0.0 };

    let u: f64 = sample_stream.derive(tag::CONTINUATION).rng().gen();
    let eta_val = eta.given(approx_accept);
    let approx_work = traj.cost.work + observation_work(&problem.obs_model) + 1.0;
    let approx_seconds = started.map_or(0.0, |t| t.elapsed().as_secs_f64());
    let cost_approx = cost_units(problem.cost_model, approx_work, approx_seconds);

    let (w, exact_run, exact_accept, cost_exact) = if u < eta_val {
        let exact_started = (problem.cost_model == CostModel::Seconds).then(Instant::now);
        let traj = simulate_exact(
            &problem.network,
            &theta,
            problem.t0,
            problem.t_end,
            &sample_stream.derive(tag::EXACT_SIM),
        )?;
        let y = observe(&traj, &problem.obs_model, &sample_stream.derive(tag::EXACT_OBS))?;
        let rho = discrepancy(&problem.data, &y)?;
        let accept = rho <= pair.epsilon;
        let b = if accept { 1.0 } else { 0.0 };
        let work = traj.cost.work + observation_work(&problem.obs_model);
        let cost = cost_units(
            problem.cost_model,
            work,
            exact_started.map_or(0.0, |t| t.elapsed().as_secs_f64()),
        );
        (w_tilde + (b - w_tilde) / eta_val, true, Some(accept), cost)
    } else {
        (w_tilde, false, None, 0.0)
    };

    Ok((
        WeightedSample {
            theta,
            w,
            cost: cost_approx + cost_exact,
            approx_accept,
            exact_run,
            exact_accept,
            level,
        },
        cost_approx,
        cost_exact,
    ))
}

fn mf_draw(
    problem: &AbcProblem,
    level: usize,
    pair: &FidelityPair,
    eta: ContinuationProbs,
    level_stream: &RngStream,
    index: u64,
) -> Result<(WeightedSample, f64, f64)> {
    let s = level_stream.sample(index);
    let theta = problem.prior.sample(&s.derive(tag::PRIOR));
    sample_multifidelity(problem, level, pair, eta, theta, &s)
}

fn collect_indexed<T: Send>(
    n: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if n >= PARALLEL_THRESHOLD {
        (0..n as u64).into_par_iter().map(f).collect()
    } else {
        (0..n as u64).map(f).collect()
    }
}

/// Run one level of sampling. `f` is required for multifidelity modes
/// (the tuner and summary need target values).
pub(crate) fn run_level(
    problem: &AbcProblem,
    level: usize,
    epsilon: f64,
    level_stream: RngStream,
    sampling: LevelSampling,
    f: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>,
) -> Result<LevelOutcome> {
    match sampling {
        LevelSampling::RejectDraws { n_draws } => {
            let samples = collect_indexed(n_draws, |i| {
                sample_exact_indicator(problem, level, epsilon, &level_stream, i)
            })?;
            let total_cost = samples.iter().map(|s| s.cost).sum();
            Ok(LevelOutcome { samples, cost_split: None, total_cost, eta_final: None, summary: None })
        }
        LevelSampling::RejectAccepted { n_accept } => {
            let cap = problem
                .max_attempts_per_accept
                .saturating_mul(n_accept as u64);
            let mut accepted = Vec::with_capacity(n_accept);
            let mut total_cost = 0.0;
            let mut next = 0u64;
            while accepted.len() < n_accept {
                if next >= cap {
                    return Err(Error::AcceptanceRateTooLow { attempts: next, level });
                }
                let block_len = REJECTION_BLOCK.min(cap - next) as usize;
                let block = if block_len >= PARALLEL_THRESHOLD {
                    (next..next + block_len as u64)
                        .into_par_iter()
                        .map(|i| sample_exact_indicator(problem, level, epsilon, &level_stream, i))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    (next..next + block_len as u64)
                        .map(|i| sample_exact_indicator(problem, level, epsilon, &level_stream, i))
                        .collect::<Result<Vec<_>>>()?
                };
                for s in block {
                    if accepted.len() == n_accept {
                        break;
                    }
                    total_cost += s.cost;
                    if s.exact_accept == Some(true) {
                        accepted.push(s);
                    }
                }
                next += block_len as u64;
            }
            Ok(LevelOutcome {
                samples: accepted,
                cost_split: None,
                total_cost,
                eta_final: None,
                summary: None,
            })
        }
        LevelSampling::Multifidelity { pair, eta, n_draws } => {
            pair.validate()?;
            let f = f.expect("multifidelity sampling needs the target function");
            match eta {
                EtaMode::Fixed(eta) => {
                    let drawn = collect_indexed(n_draws, |i| {
                        mf_draw(problem, level, &pair, eta, &level_stream, i)
                    })?;
                    let mut tuner = TunerState::new(Default::default(), n_draws);
                    let mut samples = Vec::with_capacity(n_draws);
                    let mut split = Vec::with_capacity(n_draws);
                    let mut total_cost = 0.0;
                    for (s, ca, ce) in drawn {
                        tuner.ingest(&s, f(&s.theta), ca, ce);
                        total_cost += s.cost;
                        split.push((ca, ce));
                        samples.push(s);
                    }
                    Ok(LevelOutcome {
                        samples,
                        cost_split: Some(split),
                        total_cost,
                        eta_final: Some(eta),
                        summary: tuner.summary(),
                    })
                }
                EtaMode::Adaptive(cfg) => {
                    let batch = cfg.batch.max(1);
                    let mut tuner = TunerState::new(cfg, n_draws);
                    let burn_in = tuner.burn_in();
                    let mut samples = Vec::with_capacity(n_draws);
                    let mut split = Vec::with_capacity(n_draws);
                    let mut total_cost = 0.0;
                    let mut start = 0usize;
                    while start < n_draws {
                        let end = (start + batch).min(n_draws);
                        let eta_now = tuner.eta;
                        let block: Vec<(WeightedSample, f64, f64)> = if end - start
                            >= PARALLEL_THRESHOLD
                        {
                            (start as u64..end as u64)
                                .into_par_iter()
                                .map(|i| mf_draw(problem, level, &pair, eta_now, &level_stream, i))
                                .collect::<Result<Vec<_>>>()?
                        } else {
                            (start as u64..end as u64)
                                .map(|i| mf_draw(problem, level, &pair, eta_now, &level_stream, i))
                                .collect::<Result<Vec<_>>>()?
                        };
                        for (s, ca, ce) in block {
                            tuner.ingest(&s, f(&s.theta), ca, ce);
                            total_cost += s.cost;
                            split.push((ca, ce));
                            samples.push(s);
                        }
                        if samples.len() > burn_in {
                            tuner.update();
                        }
                        start = end;
                    }
                    Ok(LevelOutcome {
                        samples,
                        cost_split: Some(split),
                        total_cost,
                        eta_final: Some(tuner.eta),
                        summary: tuner.summary(),
                    })
                }
            }
        }
    }
}
