//! Exact computations on small finite MDPs: the augmented state-option
//! chain, option values by direct solve, discounted weightings, and the
//! intra-option policy and termination gradients, with finite-difference
//! counterparts for checking them.
//!
//! The policy over options enters every function as an explicit, frozen
//! conditional distribution `pi_omega[s * n_options + w]`. Gradients are
//! taken with respect to the intra-option and termination parameters only.
//!
//! Terminal states carry zero value, and their chain rows are zero: the
//! process stops there.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::FeatureVec;
use crate::mdp::TabularMdp;
use crate::policy::{argmax, IntraOptionPolicy, PolicyOverOptions, TerminationFunction};

/// Largest `|S| |Omega|` handled by the dense solver.
pub const MAX_PAIRS: usize = 2000;

/// Intra-option policies and terminations over per-state feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionParams {
    pub policy: IntraOptionPolicy,
    pub termination: TerminationFunction,
    pub features: Vec<FeatureVec>,
}

impl OptionParams {
    pub fn n_options(&self) -> usize {
        self.policy.n_options()
    }

    fn check(&self, mdp: &TabularMdp) {
        assert_eq!(self.features.len(), mdp.n_states, "one feature vector per state");
        assert_eq!(self.policy.n_actions(), mdp.n_actions, "policy action count");
        assert_eq!(self.policy.n_options(), self.termination.n_options(), "option count");
        assert!(
            mdp.n_states * self.n_options() <= MAX_PAIRS,
            "oracle limited to {MAX_PAIRS} state-option pairs"
        );
    }

    /// `pi[(s * n_o + w) * n_a + a]`.
    fn action_table(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for phi in &self.features {
            for w in 0..self.n_options() {
                out.extend(self.policy.action_probs(w, phi));
            }
        }
        out
    }

    /// `beta[s * n_o + w]`.
    fn beta_table(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for phi in &self.features {
            for w in 0..self.n_options() {
                out.push(self.termination.term_prob(w, phi));
            }
        }
        out
    }
}

/// Which time index the option in a pair refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// `(s_t, w_t) -> (s_{t+1}, w_{t+1})`.
    Same,
    /// `(s_t, w_{t-1}) -> (s_{t+1}, w_t)`.
    Shifted,
}

/// Discounted one-step transition matrices over pairs, indexed
/// `s * n_options + w`.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    pub n_states: usize,
    pub n_options: usize,
    pub gamma: f64,
    pub p1_same: DMatrix<f64>,
    pub p1_shifted: DMatrix<f64>,
}

impl AugmentedChain {
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_options
    }

    pub fn matrix(&self, conditioning: Conditioning) -> &DMatrix<f64> {
        match conditioning {
            Conditioning::Same => &self.p1_same,
            Conditioning::Shifted => &self.p1_shifted,
        }
    }

    /// The k-step discounted matrix `P^(k)`, built by the one-step recursion.
    pub fn k_step(&self, k: usize, conditioning: Conditioning) -> DMatrix<f64> {
        let p = self.matrix(conditioning);
        let mut out = DMatrix::identity(self.n_pairs(), self.n_pairs());
        for _ in 0..k {
            out = &out * p;
        }
        out
    }
}

pub fn build_chain(mdp: &TabularMdp, params: &OptionParams, pi_omega: &[f64]) -> AugmentedChain {
    params.check(mdp);
    let (ns, na, no) = (mdp.n_states, mdp.n_actions, params.n_options());
    assert_eq!(pi_omega.len(), ns * no, "pi_omega must be shaped (state, option)");
    let pi = params.action_table();
    let beta = params.beta_table();
    let gamma = mdp.discount;
    let n = ns * no;
    let mut same = DMatrix::zeros(n, n);
    let mut shifted = DMatrix::zeros(n, n);

    for s in 0..ns {
        if mdp.is_terminal(s) {
            continue;
        }
        for w in 0..no {
            let row = s * no + w;
            // Same conditioning: act with w, then maybe terminate at s'.
            for a in 0..na {
                let pa = pi[row * na + a];
                for (s2, &p) in mdp.row(s, a).iter().enumerate() {
                    let mass = gamma * pa * p;
                    if mass == 0.0 {
                        continue;
                    }
                    let b = beta[s2 * no + w];
                    for w2 in 0..no {
                        let keep = if w2 == w { 1.0 - b } else { 0.0 };
                        same[(row, s2 * no + w2)] += mass * (keep + b * pi_omega[s2 * no + w2]);
                    }
                }
            }
            // Shifted conditioning: w was running on arrival at s; it may end
            // here and the chosen w2 picks the action.
            let b = beta[row];
            for w2 in 0..no {
                let keep = if w2 == w { 1.0 - b } else { 0.0 };
                let choose = keep + b * pi_omega[s * no + w2];
                if choose == 0.0 {
                    continue;
                }
                for a in 0..na {
                    let pa = pi[(s * no + w2) * na + a];
                    for (s2, &p) in mdp.row(s, a).iter().enumerate() {
                        shifted[(row, s2 * no + w2)] += gamma * choose * pa * p;
                    }
                }
            }
        }
    }
    AugmentedChain {
        n_states: ns,
        n_options: no,
        gamma,
        p1_same: same,
        p1_shifted: shifted,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    pub n_states: usize,
    pub n_options: usize,
    pub n_actions: usize,
    /// `(s, w, a)`.
    pub q_u: Vec<f64>,
    /// `(s, w)`.
    pub q_omega: Vec<f64>,
    /// `(w, s)`: value of arriving in `s` with `w` running.
    pub u: Vec<f64>,
    pub v_omega: Vec<f64>,
    /// Expected return from the start distribution.
    pub rho: f64,
}

impl ExactValues {
    pub fn q_omega(&self, s: usize, w: usize) -> f64 {
        self.q_omega[s * self.n_options + w]
    }

    pub fn q_u(&self, s: usize, w: usize, a: usize) -> f64 {
        self.q_u[(s * self.n_options + w) * self.n_actions + a]
    }

    pub fn u(&self, w: usize, s: usize) -> f64 {
        self.u[w * self.n_states + s]
    }

    /// `A(s, w) = Q_Omega(s, w) - V_Omega(s)`.
    pub fn advantage(&self, s: usize, w: usize) -> f64 {
        self.q_omega(s, w) - self.v_omega[s]
    }
}

/// Solves `(I - P_same) Q_Omega = r_Omega` and derives the other values.
pub fn exact_values(mdp: &TabularMdp, params: &OptionParams, pi_omega: &[f64]) -> Result<ExactValues> {
    let chain = build_chain(mdp, params, pi_omega);
    exact_values_with_chain(mdp, params, pi_omega, &chain)
}

pub fn exact_values_with_chain(
    mdp: &TabularMdp,
    params: &OptionParams,
    pi_omega: &[f64],
    chain: &AugmentedChain,
) -> Result<ExactValues> {
    let (ns, na, no) = (mdp.n_states, mdp.n_actions, params.n_options());
    let n = ns * no;
    let pi = params.action_table();
    let beta = params.beta_table();
    let mut r = DVector::zeros(n);
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        for w in 0..no {
            let row = s * no + w;
            r[row] = (0..na).map(|a| pi[row * na + a] * mdp.reward(s, a)).sum();
        }
    }
    let system = DMatrix::identity(n, n) - &chain.p1_same;
    let q = system
        .lu()
        .solve(&r)
        .ok_or(Error::Singular("option-value system"))?;

    let mut v = vec![0.0; ns];
    for (s, vs) in v.iter_mut().enumerate() {
        *vs = (0..no).map(|w| pi_omega[s * no + w] * q[s * no + w]).sum();
    }
    let mut u = vec![0.0; no * ns];
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        for w in 0..no {
            let b = beta[s * no + w];
            u[w * ns + s] = (1.0 - b) * q[s * no + w] + b * v[s];
        }
    }
    let mut q_u = vec![0.0; n * na];
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        for w in 0..no {
            for a in 0..na {
                let future: f64 = mdp
                    .row(s, a)
                    .iter()
                    .enumerate()
                    .map(|(s2, p)| p * u[w * ns + s2])
                    .sum();
                q_u[(s * no + w) * na + a] = mdp.reward(s, a) + mdp.discount * future;
            }
        }
    }
    let q_omega: Vec<f64> = q.iter().copied().collect();
    let rho = (0..ns)
        .flat_map(|s| (0..no).map(move |w| (s, w)))
        .map(|(s, w)| mdp.start_dist[s] * pi_omega[s * no + w] * q_omega[s * no + w])
        .sum();
    Ok(ExactValues {
        n_states: ns,
        n_options: no,
        n_actions: na,
        q_u,
        q_omega,
        u,
        v_omega: v,
        rho,
    })
}

/// Largest absolute residuals of the three defining equations: `Q_Omega` as
/// the policy average of `Q_U`, `Q_U` as reward plus discounted arrival
/// value, and `U` as the termination mixture.
pub fn residuals(mdp: &TabularMdp, params: &OptionParams, pi_omega: &[f64], values: &ExactValues) -> [f64; 3] {
    let (ns, na, no) = (mdp.n_states, mdp.n_actions, params.n_options());
    let mut res = [0.0f64; 3];
    for s in 0..ns {
        let phi = &params.features[s];
        let terminal = mdp.is_terminal(s);
        let v: f64 = (0..no).map(|w| pi_omega[s * no + w] * values.q_omega(s, w)).sum();
        for w in 0..no {
            let probs = params.policy.action_probs(w, phi);
            let avg: f64 = (0..na).map(|a| probs[a] * values.q_u(s, w, a)).sum();
            res[0] = res[0].max((values.q_omega(s, w) - avg).abs());
            for a in 0..na {
                let expected = if terminal {
                    0.0
                } else {
                    let future: f64 = (0..ns).map(|s2| mdp.prob(s, a, s2) * values.u(w, s2)).sum();
                    mdp.reward(s, a) + mdp.discount * future
                };
                res[1] = res[1].max((values.q_u(s, w, a) - expected).abs());
            }
            let b = params.termination.term_prob(w, phi);
            let expected = if terminal { 0.0 } else { (1.0 - b) * values.q_omega(s, w) + b * v };
            res[2] = res[2].max((values.u(w, s) - expected).abs());
        }
    }
    res
}

/// Start weights `d(s) pi_Omega(w | s)` over pairs.
pub fn start_weights(mdp: &TabularMdp, pi_omega: &[f64], n_options: usize) -> Vec<f64> {
    (0..mdp.n_states)
        .flat_map(|s| (0..n_options).map(move |w| (s, w)))
        .map(|(s, w)| mdp.start_dist[s] * pi_omega[s * n_options + w])
        .collect()
}

/// Indicator weights for a single start pair.
pub fn pair_weights(n_states: usize, n_options: usize, state: usize, option: usize) -> Vec<f64> {
    let mut e = vec![0.0; n_states * n_options];
    e[state * n_options + option] = 1.0;
    e
}

/// `mu = e^T (I - P)^{-1}` for the chosen conditioning.
pub fn discounted_weighting(chain: &AugmentedChain, start: &[f64], conditioning: Conditioning) -> Result<Vec<f64>> {
    let n = chain.n_pairs();
    assert_eq!(start.len(), n, "start weights must cover every pair");
    let system = (DMatrix::identity(n, n) - chain.matrix(conditioning)).transpose();
    let mu = system
        .lu()
        .solve(&DVector::from_column_slice(start))
        .ok_or(Error::Singular("discounted weighting"))?;
    Ok(mu.iter().copied().collect())
}

/// `sum_{t <= horizon} e^T P^t`, the truncated series behind the weighting.
pub fn truncated_weighting(chain: &AugmentedChain, start: &[f64], conditioning: Conditioning, horizon: usize) -> Vec<f64> {
    let p = chain.matrix(conditioning);
    let mut term = DVector::from_column_slice(start).transpose();
    let mut sum = term.clone();
    for _ in 0..horizon {
        term = &term * p;
        sum += &term;
    }
    sum.iter().copied().collect()
}

/// Intra-option policy gradient of `rho`, shaped like the policy weights.
pub fn intra_option_gradient(
    mdp: &TabularMdp,
    params: &OptionParams,
    pi_omega: &[f64],
    start: &[f64],
) -> Result<Vec<f64>> {
    let chain = build_chain(mdp, params, pi_omega);
    let values = exact_values_with_chain(mdp, params, pi_omega, &chain)?;
    let mu = discounted_weighting(&chain, start, Conditioning::Same)?;
    let policy = &params.policy;
    let (no, na) = (params.n_options(), mdp.n_actions);
    let len = policy.option_len();
    let mut grad = vec![0.0; policy.weights.len()];
    for s in (0..mdp.n_states).filter(|&s| !mdp.is_terminal(s)) {
        let phi = &params.features[s];
        for w in 0..no {
            let weight = mu[s * no + w];
            if weight == 0.0 {
                continue;
            }
            let probs = policy.action_probs(w, phi);
            for a in 0..na {
                let scale = weight * probs[a] * values.q_u(s, w, a);
                let score = policy.logpi_grad(w, phi, a);
                for (g, x) in grad[w * len..(w + 1) * len].iter_mut().zip(&score) {
                    *g += scale * x;
                }
            }
        }
    }
    Ok(grad)
}

/// Termination gradient of `U(w0, s1)`, shaped like the termination weights.
pub fn termination_gradient(
    mdp: &TabularMdp,
    params: &OptionParams,
    pi_omega: &[f64],
    state: usize,
    option: usize,
) -> Result<Vec<f64>> {
    let chain = build_chain(mdp, params, pi_omega);
    let values = exact_values_with_chain(mdp, params, pi_omega, &chain)?;
    let no = params.n_options();
    let start = pair_weights(mdp.n_states, no, state, option);
    let mu = discounted_weighting(&chain, &start, Conditioning::Shifted)?;
    let tf = &params.termination;
    let nf = tf.n_features();
    let mut grad = vec![0.0; tf.weights.len()];
    for s in (0..mdp.n_states).filter(|&s| !mdp.is_terminal(s)) {
        let phi = &params.features[s];
        for w in 0..no {
            let scale = -mu[s * no + w] * values.advantage(s, w);
            if scale == 0.0 {
                continue;
            }
            for (g, x) in grad[w * nf..(w + 1) * nf].iter_mut().zip(tf.beta_grad(w, phi)) {
                *g += scale * x;
            }
        }
    }
    Ok(grad)
}

/// `rho` under start weights over pairs (the start-distribution value when
/// the weights come from [`start_weights`]).
pub fn weighted_value(values: &ExactValues, start: &[f64]) -> f64 {
    values.q_omega.iter().zip(start).map(|(q, w)| q * w).sum()
}

/// Central differences of `f` over each entry of `x`.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut work = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        work[i] = x[i] + h;
        let up = f(&work)?;
        work[i] = x[i] - h;
        let down = f(&work)?;
        work[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference counterpart of [`intra_option_gradient`].
pub fn intra_option_numeric(
    mdp: &TabularMdp,
    params: &OptionParams,
    pi_omega: &[f64],
    start: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut p = params.clone();
    central_differences(&params.policy.weights, h, |theta| {
        p.policy.weights.copy_from_slice(theta);
        Ok(weighted_value(&exact_values(mdp, &p, pi_omega)?, start))
    })
}

/// Finite-difference counterpart of [`termination_gradient`].
pub fn termination_numeric(
    mdp: &TabularMdp,
    params: &OptionParams,
    pi_omega: &[f64],
    state: usize,
    option: usize,
    h: f64,
) -> Result<Vec<f64>> {
    let mut p = params.clone();
    central_differences(&params.termination.weights, h, |vartheta| {
        p.termination.weights.copy_from_slice(vartheta);
        Ok(exact_values(mdp, &p, pi_omega)?.u(option, state))
    })
}

/// `max |a - n| / max(|a|_inf, |n|_inf, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / inf(analytic).max(inf(numeric)).max(1e-8)
}

/// Fixed point of the expected one-step off-policy target, with the greedy
/// maximum at termination. Returns `Q_U` shaped `(s, w, a)`.
pub fn intra_q_fixed_point(mdp: &TabularMdp, params: &OptionParams, tol: f64) -> Vec<f64> {
    params.check(mdp);
    let (ns, na, no) = (mdp.n_states, mdp.n_actions, params.n_options());
    let pi = params.action_table();
    let beta = params.beta_table();
    let mut q_u = vec![0.0; ns * no * na];
    let mut q_omega = vec![0.0; ns * no];
    let mut arrival = vec![0.0; no * ns];
    let max_iters = 1_000_000;
    for _ in 0..max_iters {
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            let row = &q_omega[s * no..(s + 1) * no];
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for w in 0..no {
                let b = beta[s * no + w];
                arrival[w * ns + s] = (1.0 - b) * row[w] + b * best;
            }
        }
        let mut change = 0.0f64;
        for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
            for w in 0..no {
                let pair = s * no + w;
                let mut agg = 0.0;
                for a in 0..na {
                    let future: f64 = mdp
                        .row(s, a)
                        .iter()
                        .enumerate()
                        .map(|(s2, p)| p * arrival[w * ns + s2])
                        .sum();
                    let new = mdp.reward(s, a) + mdp.discount * future;
                    change = change.max((new - q_u[pair * na + a]).abs());
                    q_u[pair * na + a] = new;
                    agg += pi[pair * na + a] * new;
                }
                q_omega[pair] = agg;
            }
        }
        if change <= tol {
            break;
        }
    }
    q_u
}

/// `Q_Omega(s, w)` aggregated from a `Q_U` table.
pub fn aggregate_q_omega(mdp: &TabularMdp, params: &OptionParams, q_u: &[f64]) -> Vec<f64> {
    let (na, no) = (mdp.n_actions, params.n_options());
    let pi = params.action_table();
    (0..mdp.n_states * no)
        .map(|pair| (0..na).map(|a| pi[pair * na + a] * q_u[pair * na + a]).sum())
        .collect()
}

/// Materializes epsilon-greedy selection over a `(s, w)` value table.
pub fn epsilon_greedy(q_omega: &[f64], n_options: usize, epsilon: f64) -> Vec<f64> {
    let over = PolicyOverOptions::new(epsilon);
    q_omega.chunks(n_options).flat_map(|row| over.probabilities(row)).collect()
}

/// One-hot greedy selection over a `(s, w)` value table.
pub fn greedy(q_omega: &[f64], n_options: usize) -> Vec<f64> {
    q_omega
        .chunks(n_options)
        .flat_map(|row| {
            let best = argmax(row);
            (0..n_options).map(move |w| if w == best { 1.0 } else { 0.0 })
        })
        .collect()
}

/// Uniform selection over options in every state.
pub fn uniform_selection(n_states: usize, n_options: usize) -> Vec<f64> {
    vec![1.0 / n_options as f64; n_states * n_options]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMap;

    fn one_hot_params(mdp: &TabularMdp, n_options: usize) -> OptionParams {
        let fm = FeatureMap::one_hot(mdp.n_states);
        OptionParams {
            policy: IntraOptionPolicy::zeros(n_options, mdp.n_actions, mdp.n_states, 1.0),
            termination: TerminationFunction::zeros(n_options, mdp.n_states),
            features: (0..mdp.n_states).map(|s| fm.state(s)).collect(),
        }
    }

    #[test]
    fn geometric_series_self_loop() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.5, vec![1.0], vec![false]).unwrap();
        let params = one_hot_params(&mdp, 1);
        let v = exact_values(&mdp, &params, &[1.0]).unwrap();
        assert!((v.q_omega(0, 0) - 2.0).abs() < 1e-12);
        assert!((v.rho - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_zero_weighting_is_indicator() {
        let mut rng = crate::rng::RngStream::new(4);
        let mdp = TabularMdp::random(3, 2, 0.0, false, &mut rng);
        let params = one_hot_params(&mdp, 2);
        let pi_omega = uniform_selection(3, 2);
        let chain = build_chain(&mdp, &params, &pi_omega);
        let e = pair_weights(3, 2, 1, 1);
        let mu = discounted_weighting(&chain, &e, Conditioning::Same).unwrap();
        assert_eq!(mu, e);
    }

    #[test]
    fn relative_error_metric() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0, 2.0], &[1.0, 2.2]) - 0.2 / 2.2).abs() < 1e-15);
    }
}
