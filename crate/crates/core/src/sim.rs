//! Forward simulation: exact event-by-event paths, fixed-step tau-leaping,
//! and the Gaussian observation process.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, State};
use crate::rng::RngStream;

/// Per-simulation cost, recorded in two units at once: wall-clock seconds
/// (what production reports use) and a deterministic work count (what
/// reproducible tests use). One work unit is one propensity evaluation or
/// one random draw; the count tracks wall-clock within a small factor
/// across models regardless of their reaction counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimCost {
    pub work: f64,
    pub seconds: f64,
}

impl SimCost {
    pub fn add(&mut self, other: SimCost) {
        self.work += other.work;
        self.seconds += other.seconds;
    }

    pub fn in_units(&self, model: CostModel) -> f64 {
        match model {
            CostModel::Work => self.work,
            CostModel::Seconds => self.seconds,
        }
    }
}

/// Which cost unit a sampler accounts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    /// Wall-clock seconds.
    Seconds,
    /// Deterministic count of propensity evaluations plus random draws.
    #[default]
    #[serde(alias = "draws")]
    Work,
}

/// A piecewise-constant sample path. `states` is row-major, one row of
/// `n_species` counts per entry of `times`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<i64>,
    pub n_species: usize,
    pub t_end: f64,
    pub cost: SimCost,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.states[i * self.n_species..(i + 1) * self.n_species]
    }

    fn push(&mut self, t: f64, counts: &[i64]) {
        self.times.push(t);
        self.states.extend_from_slice(counts);
    }

    /// State at time `t`: the last snapshot with time <= `t`
    /// (right-open piecewise constancy).
    pub fn state_at(&self, t: f64) -> Result<State> {
        let t0 = self.times[0];
        let tol = 1e-9 * (1.0 + t.abs());
        if t < t0 - tol || t > self.t_end + tol {
            return Err(Error::OutOfHorizon { t, t0, t1: self.t_end });
        }
        let idx = self.times.partition_point(|&s| s <= t + tol);
        let idx = idx.saturating_sub(1);
        Ok(State { counts: self.row(idx).to_vec(), time: self.times[idx] })
    }
}

/// Species observed, noise level, and observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub observed: Vec<usize>,
    pub sigma: f64,
    pub times: Vec<f64>,
}

impl ObservationModel {
    pub fn validate(&self, n_species: usize) -> Result<()> {
        if self.sigma <= 0.0 {
            return Err(Error::Config("observation sigma must be positive".into()));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("observation times must be strictly increasing".into()));
        }
        if self.observed.iter().any(|&i| i >= n_species) {
            return Err(Error::Config("observed species index out of range".into()));
        }
        if self.observed.is_empty() || self.times.is_empty() {
            return Err(Error::Config("observation model must name species and times".into()));
        }
        Ok(())
    }

    pub fn entries(&self) -> usize {
        self.observed.len() * self.times.len()
    }
}

/// Noisy observations: one row per observation time, one column per
/// observed species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub values: Vec<f64>,
    pub n_times: usize,
    pub n_cols: usize,
}

impl ObservationSet {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Gillespie direct method. Every reaction event is recorded; terminates
/// when the next event would land beyond `t_end` or the process absorbs.
pub fn simulate_exact(
    network: &ReactionNetwork,
    theta: &[f64],
    t0: f64,
    t_end: f64,
    stream: &RngStream,
) -> Result<Trajectory> {
    if t_end <= t0 {
        return Err(Error::Config(format!("empty horizon [{t0}, {t_end}]")));
    }
    if network.initial_state.iter().any(|&c| c < 0) {
        return Err(Error::Config("initial copy numbers must be non-negative".into()));
    }
    let started = Instant::now();
    let compiled = network.compile(theta)?;
    let m = compiled.reaction_count();
    let mut rng = stream.rng();

    let mut counts = network.initial_state.clone();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        n_species: network.species_count(),
        t_end,
        cost: SimCost::default(),
    };
    traj.push(t0, &counts);

    let mut t = t0;
    let mut work = 0.0f64;
    let mut propensities = vec![0.0f64; m];
    loop {
        let mut a0 = 0.0;
        for (j, slot) in propensities.iter_mut().enumerate() {
            *slot = compiled.propensity(&counts, j);
            a0 += *slot;
        }
        work += m as f64;
        if a0 <= 0.0 {
            break;
        }
        let u: f64 = rng.gen::<f64>();
        work += 1.0;
        let dt = -(1.0 - u).ln() / a0;
        if t + dt > t_end {
            break;
        }
        let pick = rng.gen::<f64>() * a0;
        work += 1.0;
        let mut acc = 0.0;
        let mut j = m - 1;
        for (idx, &a) in propensities.iter().enumerate() {
            acc += a;
            if pick < acc {
                j = idx;
                break;
            }
        }
        for (c, &d) in counts.iter_mut().zip(compiled.net_change(j)) {
            *c += d;
        }
        t += dt;
        traj.push(t, &counts);
    }
    traj.cost = SimCost { work, seconds: started.elapsed().as_secs_f64() };
    Ok(traj)
}

/// Tau-leaping with fixed step `tau` and Poisson event counts, plus a final
/// partial step so the path terminates exactly at `t_end`. States are
/// clamped to non-negative counts after every leap.
pub fn simulate_tau_leap(
    network: &ReactionNetwork,
    theta: &[f64],
    t0: f64,
    t_end: f64,
    tau: f64,
    stream: &RngStream,
) -> Result<Trajectory> {
    if t_end <= t0 {
        return Err(Error::Config(format!("empty horizon [{t0}, {t_end}]")));
    }
    if tau <= 0.0 {
        return Err(Error::Config("tau must be positive".into()));
    }
    let started = Instant::now();
    let compiled = network.compile(theta)?;
    let m = compiled.reaction_count();
    let mut rng = stream.rng();

    let mut counts = network.initial_state.clone();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        n_species: network.species_count(),
        t_end,
        cost: SimCost::default(),
    };
    traj.push(t0, &counts);

    let span = t_end - t0;
    let tol = 1e-9 * (1.0 + t_end.abs());
    let n_full = ((span + tol) / tau).floor() as u64;
    let n_full = n_full.min((span / tau).ceil() as u64); // guard against overshoot
    let remainder = span - n_full as f64 * tau;
    let has_partial = remainder > tol;

    let mut work = 0.0f64;
    let mut delta = vec![0i64; counts.len()];
    let mut leap = |counts: &mut Vec<i64>, dt: f64, rng: &mut rand_chacha::ChaCha8Rng, work: &mut f64| {
        delta.fill(0);
        *work += m as f64;
        for j in 0..m {
            let mean = compiled.propensity(counts, j) * dt;
            if mean > 0.0 {
                let events = Poisson::new(mean).expect("positive mean").sample(rng) as i64;
                *work += 1.0;
                if events > 0 {
                    for (d, &nu) in delta.iter_mut().zip(compiled.net_change(j)) {
                        *d += events * nu;
                    }
                }
            }
        }
        for (c, &d) in counts.iter_mut().zip(delta.iter()) {
            *c = (*c + d).max(0);
        }
    };

    for k in 1..=n_full {
        leap(&mut counts, tau, &mut rng, &mut work);
        let t = if k == n_full && !has_partial { t_end } else { t0 + k as f64 * tau };
        traj.push(t, &counts);
    }
    if has_partial {
        leap(&mut counts, remainder, &mut rng, &mut work);
        traj.push(t_end, &counts);
    }
    traj.cost = SimCost { work, seconds: started.elapsed().as_secs_f64() };
    Ok(traj)
}

/// Read the trajectory at the observation times and add independent
/// Gaussian noise to each observed species.
///
/// The caller passes a stream dedicated to observation noise, so the
/// dynamics draws are unchanged by observation settings.
pub fn observe(
    trajectory: &Trajectory,
    obs_model: &ObservationModel,
    stream: &RngStream,
) -> Result<ObservationSet> {
    obs_model.validate(trajectory.n_species)?;
    let mut rng = stream.rng();
    let mut values = Vec::with_capacity(obs_model.entries());
    for &t in &obs_model.times {
        let state = trajectory.state_at(t)?;
        for &sp in &obs_model.observed {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(state.counts[sp] as f64 + obs_model.sigma * z);
        }
    }
    Ok(ObservationSet { values, n_times: obs_model.times.len(), n_cols: obs_model.observed.len() })
}

/// Work cost of one observation pass (one normal draw per entry).
pub fn observation_work(obs_model: &ObservationModel) -> f64 {
    obs_model.entries() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Binding, ParamTable, RateLaw, Reaction, Stoichiometry};

    fn birth(k: f64) -> ReactionNetwork {
        ReactionNetwork {
            species: vec!["X".into()],
            initial_state: vec![0],
            reactions: vec![Reaction {
                stoich: Stoichiometry { reactants: vec![0], products: vec![1] },
                rate: RateLaw::MassAction { k: Binding::Value(k) },
            }],
            params: ParamTable::default(),
        }
    }

    fn death(k: f64, x0: i64) -> ReactionNetwork {
        ReactionNetwork {
            species: vec!["X".into()],
            initial_state: vec![x0],
            reactions: vec![Reaction {
                stoich: Stoichiometry { reactants: vec![1], products: vec![0] },
                rate: RateLaw::MassAction { k: Binding::Value(k) },
            }],
            params: ParamTable::default(),
        }
    }

    #[test]
    fn absorbed_network_keeps_initial_state() {
        let net = death(1.0, 0); // nothing to decay
        let traj = simulate_exact(&net, &[], 0.0, 5.0, &RngStream::new(1)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.state_at(5.0).unwrap().counts, vec![0]);
    }

    #[test]
    fn pure_birth_matches_poisson_mean() {
        // X_T ~ Poisson(k T) with k = 5, T = 2
        let net = birth(5.0);
        let n = 10_000;
        let mut sum = 0.0;
        for i in 0..n {
            let traj =
                simulate_exact(&net, &[], 0.0, 2.0, &RngStream::new(42).sample(i)).unwrap();
            sum += traj.state_at(2.0).unwrap().counts[0] as f64;
        }
        let mean = sum / n as f64;
        let tol = 3.0 * (10.0f64).sqrt() / (n as f64).sqrt();
        assert!((mean - 10.0).abs() < tol, "mean {mean} vs 10 +- {tol}");
    }

    #[test]
    fn pure_death_matches_exponential_decay() {
        // E[X_T] = X0 e^{-kT}
        let net = death(1.0, 100);
        let n = 10_000;
        let mut sum = 0.0;
        for i in 0..n {
            let traj =
                simulate_exact(&net, &[], 0.0, 1.0, &RngStream::new(7).sample(i)).unwrap();
            sum += traj.state_at(1.0).unwrap().counts[0] as f64;
        }
        let mean = sum / n as f64;
        let expect = 100.0 * (-1.0f64).exp();
        let var = 100.0 * (-1.0f64).exp() * (1.0 - (-1.0f64).exp());
        let tol = 3.0 * var.sqrt() / (n as f64).sqrt();
        assert!((mean - expect).abs() < tol, "mean {mean} vs {expect} +- {tol}");
    }

    #[test]
    fn tau_leap_single_step_when_tau_covers_horizon() {
        let net = birth(5.0);
        let traj =
            simulate_tau_leap(&net, &[], 0.0, 2.0, 4.0, &RngStream::new(3)).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.times[1], 2.0);
        let traj =
            simulate_tau_leap(&net, &[], 0.0, 2.0, 2.0, &RngStream::new(3)).unwrap();
        assert_eq!(traj.len(), 2, "tau == horizon is one full leap");
    }

    #[test]
    fn tau_leap_birth_matches_poisson_mean() {
        // constant propensity: the leap approximation is exact in law
        let net = birth(5.0);
        let n = 10_000;
        let mut sum = 0.0;
        for i in 0..n {
            let traj =
                simulate_tau_leap(&net, &[], 0.0, 2.0, 0.1, &RngStream::new(9).sample(i))
                    .unwrap();
            sum += traj.state_at(2.0).unwrap().counts[0] as f64;
        }
        let mean = sum / n as f64;
        let tol = 3.0 * (10.0f64).sqrt() / (n as f64).sqrt();
        assert!((mean - 10.0).abs() < tol, "mean {mean} vs 10 +- {tol}");
    }

    #[test]
    fn tau_leap_clamps_to_non_negative() {
        // aggressive dimerization with a huge step overdraws the pool
        let net = ReactionNetwork {
            species: vec!["X".into()],
            initial_state: vec![5],
            reactions: vec![Reaction {
                stoich: Stoichiometry { reactants: vec![2], products: vec![0] },
                rate: RateLaw::MassAction { k: Binding::Value(50.0) },
            }],
            params: ParamTable::default(),
        };
        for i in 0..200 {
            let traj =
                simulate_tau_leap(&net, &[], 0.0, 10.0, 5.0, &RngStream::new(11).sample(i))
                    .unwrap();
            assert!(traj.states.iter().all(|&c| c >= 0));
        }
    }

    #[test]
    fn state_at_piecewise_constant_lookup() {
        let traj = Trajectory {
            times: vec![0.0, 1.0, 3.0],
            states: vec![10, 20, 30],
            n_species: 1,
            t_end: 5.0,
            cost: SimCost::default(),
        };
        assert_eq!(traj.state_at(0.0).unwrap().counts, vec![10]);
        assert_eq!(traj.state_at(2.0).unwrap().counts, vec![20]);
        assert_eq!(traj.state_at(5.0).unwrap().counts, vec![30]);
        assert!(traj.state_at(-0.5).is_err());
        assert!(traj.state_at(5.5).is_err());
    }

    #[test]
    fn observe_zero_noise_recovers_counts() {
        let net = death(1.0, 50);
        let traj = simulate_exact(&net, &[], 0.0, 1.0, &RngStream::new(5)).unwrap();
        let obs_model =
            ObservationModel { observed: vec![0], sigma: 1e-12, times: vec![0.25, 0.5, 1.0] };
        let obs = observe(&traj, &obs_model, &RngStream::new(5).derive(99)).unwrap();
        for (i, &t) in obs_model.times.iter().enumerate() {
            let truth = traj.state_at(t).unwrap().counts[0] as f64;
            assert!((obs.row(i)[0] - truth).abs() < 1e-6);
        }
    }

    #[test]
    fn observe_noise_variance_matches_sigma() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![100],
            n_species: 1,
            t_end: 1.0,
            cost: SimCost::default(),
        };
        let obs_model = ObservationModel { observed: vec![0], sigma: 3.0, times: vec![0.5] };
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let obs = observe(&traj, &obs_model, &RngStream::new(21).sample(i)).unwrap();
            let d = obs.row(0)[0] - 100.0;
            sum += d;
            sumsq += d * d;
        }
        let var = sumsq / n as f64 - (sum / n as f64).powi(2);
        assert!((var - 9.0).abs() < 0.05 * 9.0, "var {var} vs 9 +- 5%");
    }

    #[test]
    fn observe_selects_requested_columns() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![1, 2, 3, 4, 5, 6],
            n_species: 6,
            t_end: 1.0,
            cost: SimCost::default(),
        };
        // protein columns only, as in a three-gene oscillator
        let obs_model =
            ObservationModel { observed: vec![3, 4, 5], sigma: 1e-12, times: vec![0.5] };
        let obs = observe(&traj, &obs_model, &RngStream::new(2)).unwrap();
        assert_eq!(obs.n_cols, 3);
        let row: Vec<i64> = obs.row(0).iter().map(|v| v.round() as i64).collect();
        assert_eq!(row, vec![4, 5, 6]);
    }

    #[test]
    fn identical_streams_reproduce_trajectories() {
        let net = death(0.8, 40);
        let s = RngStream::new(123).derive(4);
        let a = simulate_exact(&net, &[], 0.0, 2.0, &s).unwrap();
        let b = simulate_exact(&net, &[], 0.0, 2.0, &s).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
        assert_eq!(a.cost.work, b.cost.work);
        let c = simulate_tau_leap(&net, &[], 0.0, 2.0, 0.3, &s).unwrap();
        let d = simulate_tau_leap(&net, &[], 0.0, 2.0, 0.3, &s).unwrap();
        assert_eq!(c.states, d.states);
    }

    #[test]
    fn exact_states_never_negative() {
        let net = death(2.0, 25);
        for i in 0..200 {
            let traj =
                simulate_exact(&net, &[], 0.0, 4.0, &RngStream::new(31).sample(i)).unwrap();
            assert!(traj.states.iter().all(|&c| c >= 0));
        }
    }
}
