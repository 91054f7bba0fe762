//! Multifidelity ABC rejection sampling.
//!
//! A cheap tau-leaping simulation screens every prior draw; with a
//! continuation probability that depends on the screen's accept/reject
//! outcome, an exact simulation then corrects the weight. The resulting
//! signed weights leave the self-normalized estimator asymptotically
//! unbiased while most exact simulations are skipped.
//!
//! The continuation probabilities are either fixed, solved from a
//! classification/cost summary, or tuned online by exponentiated gradient
//! descent on the efficiency objective `phi` (variance proxy times
//! expected cost).

use serde::{Deserialize, Serialize};

use crate::abc::{
    self_normalized_variance, weighted_estimate, AbcProblem, EstimatorReport, LevelReport,
    WeightedSample,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampler::{run_level, sample_multifidelity, LevelSampling};

pub const DEFAULT_ETA_MIN: f64 = 0.01;

/// Continuation probabilities: `eta1` after an approximate acceptance,
/// `eta2` after an approximate rejection. Both in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationProbs {
    pub eta1: f64,
    pub eta2: f64,
}

impl ContinuationProbs {
    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta1) || !(0.0..=1.0).contains(&eta2) || eta1 == 0.0 || eta2 == 0.0
        {
            return Err(Error::Config(format!(
                "continuation probabilities must lie in (0, 1], got ({eta1}, {eta2})"
            )));
        }
        Ok(ContinuationProbs { eta1, eta2 })
    }

    pub fn ones() -> Self {
        ContinuationProbs { eta1: 1.0, eta2: 1.0 }
    }

    pub fn given(&self, approx_accept: bool) -> f64 {
        if approx_accept {
            self.eta1
        } else {
            self.eta2
        }
    }

    pub fn clamp(&self, eta_min: f64) -> Self {
        ContinuationProbs {
            eta1: self.eta1.clamp(eta_min, 1.0),
            eta2: self.eta2.clamp(eta_min, 1.0),
        }
    }
}

/// Low/high fidelity pairing for one sampler: tau-leap step, exact
/// threshold, and screening threshold (defaults to the exact one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPair {
    pub tau: f64,
    pub epsilon: f64,
    pub epsilon_tilde: f64,
}

impl FidelityPair {
    /// The default pairing: same threshold and metric on both fidelities.
    pub fn symmetric(tau: f64, epsilon: f64) -> Self {
        FidelityPair { tau, epsilon, epsilon_tilde: epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || self.epsilon <= 0.0 || self.epsilon_tilde <= 0.0 {
            return Err(Error::Config("fidelity pair needs positive tau and thresholds".into()));
        }
        Ok(())
    }
}

/// Classification masses and cost moments that determine the efficiency
/// objective. Masses are weighted by the squared centered target
/// `(f - mu)^2`; costs are joint expectations over the screening outcome:
/// `c_p = E[c * 1{approx accept}]`, `c_n = E[c * 1{approx reject}]`,
/// `c_tau = E[c_approx]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocCostSummary {
    pub p_tp: f64,
    pub p_fp: f64,
    pub p_fn: f64,
    pub c_tau: f64,
    pub c_p: f64,
    pub c_n: f64,
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl RocCostSummary {
    pub fn r0(&self) -> f64 {
        self.p_tp - self.p_fp
    }

    pub fn r_p(&self) -> f64 {
        ratio_or_zero(self.p_fp * self.c_tau, self.c_p)
    }

    pub fn r_n(&self) -> f64 {
        ratio_or_zero(self.p_fn * self.c_tau, self.c_n)
    }
}

/// The asymptotic efficiency objective
/// `(R0 + p_fp/eta1 + p_fn/eta2) * (c_tau + eta1 c_p + eta2 c_n)`.
pub fn phi(eta: ContinuationProbs, s: &RocCostSummary) -> f64 {
    (s.r0() + s.p_fp / eta.eta1 + s.p_fn / eta.eta2)
        * (s.c_tau + eta.eta1 * s.c_p + eta.eta2 * s.c_n)
}

/// Analytic partial derivatives of `phi` in `(eta1, eta2)`.
pub fn phi_gradient(eta: ContinuationProbs, s: &RocCostSummary) -> (f64, f64) {
    let (e1, e2) = (eta.eta1, eta.eta2);
    let d1 = (s.r0() + s.p_fn / e2) * s.c_p - (s.c_tau + e2 * s.c_n) * s.p_fp / (e1 * e1);
    let d2 = (s.r0() + s.p_fp / e1) * s.c_n - (s.c_tau + e1 * s.c_p) * s.p_fn / (e2 * e2);
    (d1, d2)
}

/// Minimize `phi` over `(0, 1]^2`: the interior stationary point when it is
/// feasible, else the better of the two boundary candidates. Output clamped
/// to `[eta_min, 1]^2`. Fails when the screen misclassifies so heavily that
/// `R0 <= 0`; the caller should fall back to always continuing.
pub fn optimal_continuation(s: &RocCostSummary, eta_min: f64) -> Result<ContinuationProbs> {
    let r0 = s.r0();
    if r0 <= 0.0 {
        return Err(Error::ApproximationUseless);
    }
    let (r_p, r_n) = (s.r_p(), s.r_n());
    let raw = if r_p.max(r_n) <= r0 {
        ContinuationProbs { eta1: (r_p / r0).sqrt(), eta2: (r_n / r0).sqrt() }
    } else {
        let eta1_bar = ((r_p + ratio_or_zero(s.p_fp * s.c_n, s.c_p)) / (r0 + s.p_fn))
            .sqrt()
            .min(1.0);
        let eta2_bar = ((r_n + ratio_or_zero(s.p_fn * s.c_p, s.c_n)) / (r0 + s.p_fp))
            .sqrt()
            .min(1.0);
        let cand1 = ContinuationProbs { eta1: 1.0, eta2: eta2_bar.max(eta_min) };
        let cand2 = ContinuationProbs { eta1: eta1_bar.max(eta_min), eta2: 1.0 };
        if phi(cand1, s) <= phi(cand2, s) {
            cand1
        } else {
            cand2
        }
    };
    Ok(raw.clamp(eta_min))
}

/// How the continuation probabilities are chosen during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EtaMode {
    Fixed(ContinuationProbs),
    Adaptive(TunerConfig),
}

/// Adaptive tuner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    /// Samples run at eta = (1, 1) before updates begin. `None` picks
    /// `min(1000, ceil(N / 10))`.
    pub burn_in: Option<usize>,
    pub eta_min: f64,
    /// Updates are applied at batch boundaries; 1 means per sample.
    pub batch: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig { burn_in: None, eta_min: DEFAULT_ETA_MIN, batch: 1 }
    }
}

impl TunerConfig {
    pub fn burn_in_for(&self, n: usize) -> usize {
        self.burn_in.unwrap_or_else(|| 1000.min(n.div_ceil(10)))
    }
}

/// Running estimates behind the adaptive tuner. All sums run over every
/// sample seen so far; continued-only quantities are reweighted by the
/// ratio of population to continued screening acceptance rates, undoing
/// the eta-dependent selection of the continued set.
#[derive(Debug, Clone)]
pub struct TunerState {
    pub eta: ContinuationProbs,
    cfg: TunerConfig,
    burn_in: usize,
    seen: u64,
    sum_w: f64,
    sum_wf: f64,
    approx_accepts: u64,
    sum_cost_approx: f64,
    continued: u64,
    continued_pos: u64,
    // sums over continued samples, split by screening outcome; the *_acc
    // variants are restricted to exact acceptances
    pos_acc: [f64; 3],
    pos_rej: [f64; 3],
    neg_acc: [f64; 3],
    cost_exact_pos: f64,
    cost_exact_neg: f64,
}

impl TunerState {
    pub fn new(cfg: TunerConfig, n: usize) -> Self {
        TunerState {
            eta: ContinuationProbs::ones(),
            burn_in: cfg.burn_in_for(n),
            cfg,
            seen: 0,
            sum_w: 0.0,
            sum_wf: 0.0,
            approx_accepts: 0,
            sum_cost_approx: 0.0,
            continued: 0,
            continued_pos: 0,
            pos_acc: [0.0; 3],
            pos_rej: [0.0; 3],
            neg_acc: [0.0; 3],
            cost_exact_pos: 0.0,
            cost_exact_neg: 0.0,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// Fold one weighted sample into the running sums. `fval` is the target
    /// evaluated at the sample's parameters; `cost_approx`/`cost_exact`
    /// split the sample's cost between the two fidelities.
    pub fn ingest(&mut self, sample: &WeightedSample, fval: f64, cost_approx: f64, cost_exact: f64) {
        self.seen += 1;
        self.sum_w += sample.w;
        self.sum_wf += sample.w * fval;
        if sample.approx_accept {
            self.approx_accepts += 1;
        }
        self.sum_cost_approx += cost_approx;
        if sample.exact_run {
            self.continued += 1;
            let acc = sample.exact_accept == Some(true);
            let moments = [fval * fval, fval, 1.0];
            if sample.approx_accept {
                self.continued_pos += 1;
                self.cost_exact_pos += cost_exact;
                let slot = if acc { &mut self.pos_acc } else { &mut self.pos_rej };
                for (s, m) in slot.iter_mut().zip(moments) {
                    *s += m;
                }
            } else {
                self.cost_exact_neg += cost_exact;
                if acc {
                    for (s, m) in self.neg_acc.iter_mut().zip(moments) {
                        *s += m;
                    }
                }
            }
        }
    }

    fn centered_mass(sums: &[f64; 3], mu: f64) -> f64 {
        sums[0] - 2.0 * mu * sums[1] + mu * mu * sums[2]
    }

    /// Current classification/cost summary, or `None` while the continued
    /// set lacks the data to form one.
    pub fn summary(&self) -> Option<RocCostSummary> {
        if self.seen == 0 || self.continued == 0 || self.sum_w == 0.0 {
            return None;
        }
        let mu = self.sum_wf / self.sum_w;
        if !mu.is_finite() {
            return None;
        }
        let m = self.seen as f64;
        let k = self.continued as f64;
        let rho_m = self.approx_accepts as f64 / m;
        let rho_k = self.continued_pos as f64 / k;

        let pos_scale = if self.continued_pos == 0 { 0.0 } else { rho_m / rho_k / k };
        let neg_scale = if self.continued_pos == self.continued {
            0.0
        } else {
            (1.0 - rho_m) / (1.0 - rho_k) / k
        };

        Some(RocCostSummary {
            p_tp: pos_scale * Self::centered_mass(&self.pos_acc, mu),
            p_fp: pos_scale * Self::centered_mass(&self.pos_rej, mu),
            p_fn: neg_scale * Self::centered_mass(&self.neg_acc, mu),
            c_tau: self.sum_cost_approx / m,
            c_p: pos_scale * self.cost_exact_pos,
            c_n: neg_scale * self.cost_exact_neg,
        })
    }

    pub fn mu_hat(&self) -> Option<f64> {
        if self.sum_w == 0.0 {
            None
        } else {
            Some(self.sum_wf / self.sum_w)
        }
    }

    /// One exponentiated-gradient step
    /// `eta <- min{1, eta * exp(-delta * eta * dphi/deta)}` with learning
    /// rate `delta = 0.1 / [(c_tau + c_p + c_n) * mu^2]`, clamped to
    /// `[eta_min, 1]`. Held fixed while `mu`, the masses, or the continued
    /// set are degenerate.
    pub fn update(&mut self) {
        let Some(summary) = self.summary() else { return };
        let Some(mu) = self.mu_hat() else { return };
        if mu == 0.0 || !mu.is_finite() {
            return;
        }
        if summary.p_tp + summary.p_fp + summary.p_fn == 0.0 {
            return;
        }
        let cost_scale = summary.c_tau + summary.c_p + summary.c_n;
        if cost_scale <= 0.0 {
            return;
        }
        let delta = 0.1 / (cost_scale * mu * mu);
        let (d1, d2) = phi_gradient(self.eta, &summary);
        let step = |eta: f64, d: f64| -> f64 {
            let next = eta * (-delta * eta * d).exp();
            next.min(1.0).max(self.cfg.eta_min)
        };
        self.eta = ContinuationProbs { eta1: step(self.eta.eta1, d1), eta2: step(self.eta.eta2, d2) };
    }
}

/// Draw one multifidelity weighted sample for `theta`: screen with the
/// tau-leaping model, then continue to the exact model with probability
/// `eta(screen outcome)` and correct the weight.
pub fn mf_weight(
    problem: &AbcProblem,
    pair: &FidelityPair,
    eta: ContinuationProbs,
    theta: Vec<f64>,
    sample_stream: &RngStream,
) -> Result<WeightedSample> {
    pair.validate()?;
    let (sample, _, _) = sample_multifidelity(problem, 1, pair, eta, theta, sample_stream)?;
    Ok(sample)
}

/// Outcome details of a multifidelity run beyond the report itself.
#[derive(Debug, Clone)]
pub struct MfRunInfo {
    pub eta_final: ContinuationProbs,
    pub summary: Option<RocCostSummary>,
}

/// Multifidelity ABC over `n` prior draws with fixed or adaptive
/// continuation probabilities.
pub fn mf_abc(
    problem: &AbcProblem,
    pair: &FidelityPair,
    eta: EtaMode,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
    stream: &RngStream,
) -> Result<(EstimatorReport, Vec<WeightedSample>, MfRunInfo)> {
    if n == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    pair.validate()?;
    let out = run_level(
        problem,
        1,
        pair.epsilon,
        stream.level(1),
        LevelSampling::Multifidelity { pair: *pair, eta, n_draws: n },
        Some(f),
    )?;
    let estimate = weighted_estimate(&out.samples, f)?;
    let values: Vec<f64> = out.samples.iter().map(|s| f(&s.theta)).collect();
    let weights: Vec<f64> = out.samples.iter().map(|s| s.w).collect();
    let variance = self_normalized_variance(&weights, &values, estimate);
    let sum_w: f64 = weights.iter().sum();
    let eta_final = out.eta_final.unwrap_or(ContinuationProbs::ones());
    let report = EstimatorReport::from_levels(
        vec![LevelReport {
            level: 1,
            epsilon: pair.epsilon,
            n_samples: out.samples.len(),
            contribution: estimate,
            mean_weight: sum_w / out.samples.len() as f64,
            cost: out.total_cost,
            eta: Some((eta_final.eta1, eta_final.eta2)),
            phi_hat: out.summary.as_ref().map(|s| phi(eta_final, s)),
        }],
        variance,
        0.0,
    );
    Ok((report, out.samples, MfRunInfo { eta_final, summary: out.summary }))
}

/// Plug-in estimates of the leading bias and MSE coefficients of the
/// self-normalized estimator: `(-E[w^2 D]/E[w]^2, E[w^2 D^2]/E[w]^2)` with
/// `D = f - f_hat`. Bias and MSE scale as these over the sample count.
pub fn bias_mse_diagnostic(
    samples: &[WeightedSample],
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<(f64, f64)> {
    let f_hat = weighted_estimate(samples, f)?;
    let n = samples.len() as f64;
    let mut w2d = 0.0;
    let mut w2d2 = 0.0;
    let mut w = 0.0;
    for s in samples {
        let d = f(&s.theta) - f_hat;
        w2d += s.w * s.w * d;
        w2d2 += s.w * s.w * d * d;
        w += s.w;
    }
    let mean_w = w / n;
    Ok((-(w2d / n) / (mean_w * mean_w), (w2d2 / n) / (mean_w * mean_w)))
}
