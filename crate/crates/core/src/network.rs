//! Chemical reaction network models and propensity evaluation.
//!
//! A network is a list of species, an integer initial state, and a list of
//! reactions. Each reaction carries reactant/product stoichiometries and a
//! rate law (mass action or Hill repression). Rate-law coefficients are
//! bound either to fixed constants or to slots of a parameter table; the
//! free slots, in ascending order, form the inference vector `theta`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reactant and product counts per species for one reaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoichiometry {
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
}

impl Stoichiometry {
    /// Net state change when the reaction fires.
    pub fn net(&self) -> Vec<i64> {
        self.reactants
            .iter()
            .zip(&self.products)
            .map(|(&r, &p)| i64::from(p) - i64::from(r))
            .collect()
    }
}

/// A rate-law coefficient: a fixed value or a parameter-table slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binding {
    Value(f64),
    Param { param: usize },
}

impl Binding {
    fn resolve(&self, table: &[f64]) -> Result<f64> {
        match *self {
            Binding::Value(v) => Ok(v),
            Binding::Param { param } => table.get(param).copied().ok_or_else(|| {
                Error::Config(format!(
                    "rate law references parameter {param} but the table has {} slots",
                    table.len()
                ))
            }),
        }
    }

    fn max_param(&self) -> Option<usize> {
        match *self {
            Binding::Value(_) => None,
            Binding::Param { param } => Some(param),
        }
    }
}

/// Reaction rate law.
#[derive(Debug, Clone, PartialEq)]
pub enum RateLaw {
    /// Propensity `k * prod_i falling_factorial(X_i, nu_i)`.
    MassAction { k: Binding },
    /// Transcription under repression: `alpha0 + alpha * K^n / (K^n + P^n)`
    /// where `P` is the copy number of `repressor`.
    Hill {
        alpha0: Binding,
        alpha: Binding,
        k: Binding,
        n: Binding,
        repressor: usize,
    },
}

/// Parameter table: `count` slots, some pinned to constants. The free
/// slots in ascending order are the dimensions of `theta`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamTable {
    pub count: usize,
    pub fixed: BTreeMap<usize, f64>,
}

impl ParamTable {
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.count).filter(|i| !self.fixed.contains_key(i)).collect()
    }

    pub fn free_count(&self) -> usize {
        self.count - self.fixed.len()
    }

    /// Fill the full table from a free-parameter vector.
    pub fn resolve(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.free_count() {
            return Err(Error::Dimension(format!(
                "theta has {} entries but the model has {} free parameters",
                theta.len(),
                self.free_count()
            )));
        }
        let mut table = vec![0.0; self.count];
        let mut it = theta.iter();
        for (i, slot) in table.iter_mut().enumerate() {
            *slot = match self.fixed.get(&i) {
                Some(&v) => v,
                None => *it.next().expect("free count checked"),
            };
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub stoich: Stoichiometry,
    pub rate: RateLaw,
}

/// Integer copy-number state at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub counts: Vec<i64>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<String>,
    pub initial_state: Vec<i64>,
    pub reactions: Vec<Reaction>,
    pub params: ParamTable,
}

/// Falling factorial `x (x-1) ... (x-nu+1)`, the combinatorial count of
/// ordered reactant tuples. Zero whenever fewer than `nu` copies exist
/// (including negative transients). Exact integer arithmetic while the
/// product fits; floating point above that.
pub fn falling_factorial(x: i64, nu: u32) -> f64 {
    match nu {
        0 => 1.0,
        _ if x < i64::from(nu) => 0.0,
        1 => x as f64,
        2 if x < (1 << 31) => (x * (x - 1)) as f64,
        _ if nu <= 4 && x < (1 << 40) => {
            let mut acc: i128 = 1;
            for d in 0..i64::from(nu) {
                acc *= i128::from(x - d);
            }
            acc as f64
        }
        _ => {
            let mut acc = 1.0;
            for d in 0..i64::from(nu) {
                acc *= (x - d) as f64;
            }
            acc
        }
    }
}

enum CompiledRate {
    MassAction { k: f64 },
    // k^n precomputed; integer exponents take the fast pow path
    Hill { alpha0: f64, alpha: f64, k_pow_n: f64, n: HillExponent, repressor: usize },
}

#[derive(Clone, Copy)]
enum HillExponent {
    Int(i32),
    Float(f64),
}

impl HillExponent {
    #[inline]
    fn pow(self, p: f64) -> f64 {
        match self {
            HillExponent::Int(n) => p.powi(n),
            HillExponent::Float(n) => p.powf(n),
        }
    }
}

struct CompiledReaction {
    rate: CompiledRate,
    /// (species index, reactant count) for species with nonzero reactant count.
    reactants: Vec<(usize, u32)>,
}

/// A network bound to a concrete parameter vector, ready for repeated
/// propensity evaluation inside the simulators.
pub struct CompiledRates {
    reactions: Vec<CompiledReaction>,
    net: Vec<Vec<i64>>,
}

impl CompiledRates {
    pub fn reaction_count(&self) -> usize {
        self.reactions.len()
    }

    pub fn net_change(&self, j: usize) -> &[i64] {
        &self.net[j]
    }

    pub fn propensity(&self, counts: &[i64], j: usize) -> f64 {
        let r = &self.reactions[j];
        match r.rate {
            CompiledRate::MassAction { k } => {
                let mut a = k;
                for &(i, nu) in &r.reactants {
                    if a == 0.0 {
                        return 0.0;
                    }
                    a *= falling_factorial(counts[i], nu);
                }
                a
            }
            CompiledRate::Hill { alpha0, alpha, k_pow_n, n, repressor } => {
                let p = counts[repressor].max(0) as f64;
                let rate = alpha0 + alpha * k_pow_n / (k_pow_n + n.pow(p));
                let mut a = rate;
                for &(i, nu) in &r.reactants {
                    a *= falling_factorial(counts[i], nu);
                }
                a
            }
        }
    }

    pub fn total_propensity(&self, counts: &[i64]) -> f64 {
        (0..self.reactions.len()).map(|j| self.propensity(counts, j)).sum()
    }
}

impl ReactionNetwork {
    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn reaction_count(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Config(format!("unknown species: {name}")))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.species.len();
        if self.initial_state.len() != n {
            return Err(Error::Dimension(format!(
                "initial state has {} entries for {} species",
                self.initial_state.len(),
                n
            )));
        }
        if self.initial_state.iter().any(|&c| c < 0) {
            return Err(Error::Config("initial copy numbers must be non-negative".into()));
        }
        for (j, r) in self.reactions.iter().enumerate() {
            if r.stoich.reactants.len() != n || r.stoich.products.len() != n {
                return Err(Error::Dimension(format!(
                    "reaction {j} stoichiometry does not match species count {n}"
                )));
            }
            let mut params: Vec<usize> = Vec::new();
            match &r.rate {
                RateLaw::MassAction { k } => params.extend(k.max_param()),
                RateLaw::Hill { alpha0, alpha, k, n: hill_n, repressor } => {
                    if *repressor >= self.species.len() {
                        return Err(Error::Config(format!(
                            "reaction {j} repressor index {repressor} out of range"
                        )));
                    }
                    for b in [alpha0, alpha, k, hill_n] {
                        params.extend(b.max_param());
                    }
                }
            }
            if let Some(&p) = params.iter().max() {
                if p >= self.params.count {
                    return Err(Error::Config(format!(
                        "reaction {j} references parameter {p} but the table has {} slots",
                        self.params.count
                    )));
                }
            }
        }
        for (&i, _) in &self.params.fixed {
            if i >= self.params.count {
                return Err(Error::Config(format!(
                    "fixed parameter index {i} out of range ({} slots)",
                    self.params.count
                )));
            }
        }
        Ok(())
    }

    /// Bind a free-parameter vector and precompute per-reaction data.
    pub fn compile(&self, theta: &[f64]) -> Result<CompiledRates> {
        let table = self.params.resolve(theta)?;
        let mut reactions = Vec::with_capacity(self.reactions.len());
        let mut net = Vec::with_capacity(self.reactions.len());
        for r in &self.reactions {
            let rate = match &r.rate {
                RateLaw::MassAction { k } => {
                    let k = k.resolve(&table)?;
                    if k < 0.0 {
                        return Err(Error::Config(format!("negative mass-action rate {k}")));
                    }
                    CompiledRate::MassAction { k }
                }
                RateLaw::Hill { alpha0, alpha, k, n, repressor } => {
                    let (alpha0, alpha, k, n) = (
                        alpha0.resolve(&table)?,
                        alpha.resolve(&table)?,
                        k.resolve(&table)?,
                        n.resolve(&table)?,
                    );
                    if alpha0 < 0.0 || alpha < 0.0 || n < 0.0 {
                        return Err(Error::Config(
                            "Hill parameters alpha0, alpha, n must be non-negative".into(),
                        ));
                    }
                    if k <= 0.0 {
                        return Err(Error::Config("Hill half-occupancy constant must be positive".into()));
                    }
                    let exponent = if n.fract() == 0.0 && (0.0..=64.0).contains(&n) {
                        HillExponent::Int(n as i32)
                    } else {
                        HillExponent::Float(n)
                    };
                    CompiledRate::Hill {
                        alpha0,
                        alpha,
                        k_pow_n: k.powf(n),
                        n: exponent,
                        repressor: *repressor,
                    }
                }
            };
            let reactants: Vec<(usize, u32)> = r
                .stoich
                .reactants
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c))
                .collect();
            reactions.push(CompiledReaction { rate, reactants });
            net.push(r.stoich.net());
        }
        Ok(CompiledRates { reactions, net })
    }

    /// Propensity of reaction `j` in `state` under `theta`.
    pub fn propensity(&self, state: &State, theta: &[f64], j: usize) -> Result<f64> {
        if j >= self.reactions.len() {
            return Err(Error::Config(format!("reaction index {j} out of range")));
        }
        if state.counts.len() != self.species.len() {
            return Err(Error::Dimension("state length does not match species count".into()));
        }
        Ok(self.compile(theta)?.propensity(&state.counts, j))
    }

    /// Sum of all reaction propensities; zero means the process is absorbed.
    pub fn total_propensity(&self, state: &State, theta: &[f64]) -> Result<f64> {
        if state.counts.len() != self.species.len() {
            return Err(Error::Dimension("state length does not match species count".into()));
        }
        Ok(self.compile(theta)?.total_propensity(&state.counts))
    }

    pub fn initial(&self, t0: f64) -> State {
        State { counts: self.initial_state.clone(), time: t0 }
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile::from_network(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = self.to_model_file();
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.into_network()
    }
}

// --- model file (JSON schema) ---

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub species: Vec<String>,
    pub initial_state: Vec<i64>,
    pub params: ParamsFile,
    pub reactions: Vec<ReactionFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamsFile {
    pub count: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReactionFile {
    pub reactants: BTreeMap<String, u32>,
    pub products: BTreeMap<String, u32>,
    pub rate: RateFile,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type")]
pub enum RateFile {
    #[serde(rename = "mass_action")]
    MassAction { k: Binding },
    #[serde(rename = "hill")]
    Hill {
        alpha0: Binding,
        alpha: Binding,
        k: Binding,
        n: Binding,
        repressor: String,
    },
}

impl ModelFile {
    pub fn from_network(net: &ReactionNetwork) -> Self {
        let sparse = |v: &[u32]| -> BTreeMap<String, u32> {
            v.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (net.species[i].clone(), c))
                .collect()
        };
        ModelFile {
            species: net.species.clone(),
            initial_state: net.initial_state.clone(),
            params: ParamsFile {
                count: net.params.count,
                fixed: net.params.fixed.iter().map(|(&i, &v)| (i.to_string(), v)).collect(),
            },
            reactions: net
                .reactions
                .iter()
                .map(|r| ReactionFile {
                    reactants: sparse(&r.stoich.reactants),
                    products: sparse(&r.stoich.products),
                    rate: match &r.rate {
                        RateLaw::MassAction { k } => RateFile::MassAction { k: *k },
                        RateLaw::Hill { alpha0, alpha, k, n, repressor } => RateFile::Hill {
                            alpha0: *alpha0,
                            alpha: *alpha,
                            k: *k,
                            n: *n,
                            repressor: net.species[*repressor].clone(),
                        },
                    },
                })
                .collect(),
        }
    }

    pub fn into_network(self) -> Result<ReactionNetwork> {
        let species = self.species;
        let index = |name: &str| -> Result<usize> {
            species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Config(format!("unknown species: {name}")))
        };
        let dense = |m: &BTreeMap<String, u32>| -> Result<Vec<u32>> {
            let mut v = vec![0u32; species.len()];
            for (name, &c) in m {
                v[index(name)?] = c;
            }
            Ok(v)
        };
        let mut reactions = Vec::with_capacity(self.reactions.len());
        for r in &self.reactions {
            reactions.push(Reaction {
                stoich: Stoichiometry { reactants: dense(&r.reactants)?, products: dense(&r.products)? },
                rate: match &r.rate {
                    RateFile::MassAction { k } => RateLaw::MassAction { k: *k },
                    RateFile::Hill { alpha0, alpha, k, n, repressor } => RateLaw::Hill {
                        alpha0: *alpha0,
                        alpha: *alpha,
                        k: *k,
                        n: *n,
                        repressor: index(repressor)?,
                    },
                },
            });
        }
        let mut fixed = BTreeMap::new();
        for (key, &v) in &self.params.fixed {
            let i: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("fixed parameter key {key:?} is not an index")))?;
            fixed.insert(i, v);
        }
        let net = ReactionNetwork {
            species,
            initial_state: self.initial_state,
            reactions,
            params: ParamTable { count: self.params.count, fixed },
        };
        net.validate()?;
        Ok(net)
    }
}
