//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mfmlmc::abc::{AbcProblem, Prior};
use mfmlmc::network::{Binding, ParamTable, RateLaw, Reaction, ReactionNetwork, Stoichiometry};
use mfmlmc::rng::{tag, RngStream};
use mfmlmc::sim::{observe, simulate_exact, CostModel, ObservationModel};

/// Birth-death network with the birth rate inferred: the cheapest
/// identifiable ABC problem we have.
pub fn birth_death_network() -> ReactionNetwork {
    let mut fixed = BTreeMap::new();
    fixed.insert(1, 0.7);
    ReactionNetwork {
        species: vec!["X".into()],
        initial_state: vec![10],
        reactions: vec![
            Reaction {
                stoich: Stoichiometry { reactants: vec![0], products: vec![1] },
                rate: RateLaw::MassAction { k: Binding::Param { param: 0 } },
            },
            Reaction {
                stoich: Stoichiometry { reactants: vec![1], products: vec![0] },
                rate: RateLaw::MassAction { k: Binding::Param { param: 1 } },
            },
        ],
        params: ParamTable { count: 2, fixed },
    }
}

pub fn birth_death_problem(epsilon: f64, data_seed: u64) -> AbcProblem {
    let network = birth_death_network();
    let obs_model = ObservationModel { observed: vec![0], sigma: 0.8, times: vec![1.0, 2.0] };
    let true_theta = [3.0];
    let stream = RngStream::new(data_seed).derive(tag::DATA);
    let traj = simulate_exact(&network, &true_theta, 0.0, 2.0, &stream.derive(tag::EXACT_SIM))
        .expect("simulation succeeds");
    let data = observe(&traj, &obs_model, &stream.derive(tag::EXACT_OBS)).expect("observe");
    AbcProblem::new(network, obs_model, data, Prior::new(vec![(0.5, 8.0)]).unwrap(), epsilon)
        .expect("valid problem")
        .with_cost_model(CostModel::Work)
}

pub fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Least-squares slope of y against x.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    sxy / sxx
}

pub fn verdict(name: &str, pass: bool, detail: &str) {
    println!("{}: criterion {name} — {detail}", if pass { "PASS" } else { "FAIL" });
}
