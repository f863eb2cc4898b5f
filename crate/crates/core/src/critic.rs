//! Option-value estimation and intra-option Q-learning.
//!
//! Two storage variants exist. `QU` stores `Q_U(s, w, a)` (linear in the
//! features, one weight vector per option/action pair) and always derives
//! `Q_Omega(s, w) = sum_a pi(a|s, w) Q_U(s, w, a)` from it. `QOmega` stores only
//! `Q_Omega` and uses the one-step target as its per-transition sample of `Q_U`.

use crate::error::{Error, Result};
use crate::features::FeatureVec;
use crate::policy::{IntraOptionPolicy, PolicyOverOptions, TerminationFunction};

/// `|delta|` above this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticVariant {
    QU,
    QOmega,
}

impl CriticVariant {
    pub fn name(self) -> &'static str {
        match self {
            CriticVariant::QU => "qu",
            CriticVariant::QOmega => "qomega",
        }
    }
}

/// How `V_Omega(s)` is formed from the option values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueMode {
    /// `max_w Q_Omega(s, w)`, consistent with the max in the learning target.
    Greedy,
    /// Expectation under the epsilon-greedy policy over options.
    EpsilonSoft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Constant,
    /// `lr / (visits + 1)^power`, visits counted per updated weight slot.
    /// Only meaningful with one-hot features.
    Visits { power: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueBundle {
    pub q_row: Vec<f64>,
    pub v: f64,
    pub advantage: Vec<f64>,
}

/// One observed transition in the augmented state-option space.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub phi: &'a FeatureVec,
    pub option: usize,
    pub action: usize,
    pub reward: f64,
    pub next_phi: &'a FeatureVec,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    variant: CriticVariant,
    n_options: usize,
    n_actions: usize,
    n_features: usize,
    gamma: f64,
    lr: f64,
    step_size: StepSize,
    value_mode: ValueMode,
    lr_scaling: Option<Vec<f64>>,
    /// `QU`: `(option, action, feature)`; `QOmega`: `(option, feature)`.
    pub weights: Vec<f64>,
    visits: Vec<u64>,
    updates: usize,
}

impl Critic {
    pub fn new(
        variant: CriticVariant,
        n_options: usize,
        n_actions: usize,
        n_features: usize,
        gamma: f64,
        lr: f64,
    ) -> Self {
        let len = match variant {
            CriticVariant::QU => n_options * n_actions * n_features,
            CriticVariant::QOmega => n_options * n_features,
        };
        Critic {
            variant,
            n_options,
            n_actions,
            n_features,
            gamma,
            lr,
            step_size: StepSize::Constant,
            value_mode: ValueMode::Greedy,
            lr_scaling: None,
            weights: vec![0.0; len],
            visits: Vec::new(),
            updates: 0,
        }
    }

    pub fn with_step_size(mut self, step_size: StepSize) -> Self {
        if let StepSize::Visits { .. } = step_size {
            self.visits = vec![0; self.weights.len()];
        }
        self.step_size = step_size;
        self
    }

    pub fn with_value_mode(mut self, mode: ValueMode) -> Self {
        self.value_mode = mode;
        self
    }

    /// Per-feature learning-rate divisors (Fourier scaling).
    pub fn with_lr_scaling(mut self, divisors: Option<Vec<f64>>) -> Self {
        if let Some(d) = &divisors {
            assert_eq!(d.len(), self.n_features);
        }
        self.lr_scaling = divisors;
        self
    }

    pub fn variant(&self) -> CriticVariant {
        self.variant
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn value_mode(&self) -> ValueMode {
        self.value_mode
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    fn slot(&self, option: usize, action: usize) -> std::ops::Range<usize> {
        let n = self.n_features;
        let row = match self.variant {
            CriticVariant::QU => option * self.n_actions + action,
            CriticVariant::QOmega => option,
        };
        row * n..(row + 1) * n
    }

    /// Stored `Q_U(s, w, a)`. Panics for the `QOmega` variant, which keeps no
    /// such table.
    pub fn q_u(&self, phi: &FeatureVec, option: usize, action: usize) -> f64 {
        assert_eq!(self.variant, CriticVariant::QU, "Q_U is not stored by this critic");
        phi.dot(&self.weights[self.slot(option, action)])
    }

    pub fn q_omega(&self, phi: &FeatureVec, option: usize, policy: &IntraOptionPolicy) -> f64 {
        match self.variant {
            CriticVariant::QU => policy
                .action_probs(option, phi)
                .iter()
                .enumerate()
                .map(|(a, p)| p * self.q_u(phi, option, a))
                .sum(),
            CriticVariant::QOmega => phi.dot(&self.weights[self.slot(option, 0)]),
        }
    }

    pub fn q_omega_row(&self, phi: &FeatureVec, policy: &IntraOptionPolicy) -> Vec<f64> {
        (0..self.n_options).map(|o| self.q_omega(phi, o, policy)).collect()
    }

    pub fn v_omega(&self, q_row: &[f64], over: &PolicyOverOptions) -> f64 {
        match self.value_mode {
            ValueMode::Greedy => q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ValueMode::EpsilonSoft => over
                .probabilities(q_row)
                .iter()
                .zip(q_row)
                .map(|(p, q)| p * q)
                .sum(),
        }
    }

    pub fn values(&self, phi: &FeatureVec, policy: &IntraOptionPolicy, over: &PolicyOverOptions) -> ValueBundle {
        let q_row = self.q_omega_row(phi, policy);
        let v = self.v_omega(&q_row, over);
        let advantage = q_row.iter().map(|q| q - v).collect();
        ValueBundle { q_row, v, advantage }
    }

    /// One-step off-policy target:
    /// `r + gamma [(1 - beta) Q_Omega(s', w) + beta max_w' Q_Omega(s', w')]`, or
    /// just `r` when `s'` ends the episode.
    pub fn g1_target(
        &self,
        reward: f64,
        next_phi: &FeatureVec,
        option: usize,
        done: bool,
        policy: &IntraOptionPolicy,
        termination: &TerminationFunction,
    ) -> f64 {
        if done {
            return reward;
        }
        let beta = termination.term_prob(option, next_phi);
        let row = self.q_omega_row(next_phi, policy);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        reward + self.gamma * ((1.0 - beta) * row[option] + beta * best)
    }

    /// Intra-option Q-learning step; returns the TD error.
    pub fn update(
        &mut self,
        tr: &Transition<'_>,
        policy: &IntraOptionPolicy,
        termination: &TerminationFunction,
    ) -> Result<f64> {
        let target = self.g1_target(tr.reward, tr.next_phi, tr.option, tr.done, policy, termination);
        let estimate = match self.variant {
            CriticVariant::QU => self.q_u(tr.phi, tr.option, tr.action),
            CriticVariant::QOmega => self.q_omega(tr.phi, tr.option, policy),
        };
        let delta = target - estimate;
        if !delta.is_finite() || delta.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                what: "critic td error",
                value: delta,
                step: self.updates,
            });
        }
        let range = self.slot(tr.option, tr.action);
        let lr = match self.step_size {
            StepSize::Constant => self.lr,
            StepSize::Visits { power } => {
                let idx = match tr.phi {
                    FeatureVec::OneHot { index, .. } => range.start + index,
                    FeatureVec::Dense(_) => range.start,
                };
                let n = self.visits[idx];
                self.visits[idx] += 1;
                self.lr / ((n + 1) as f64).powf(power)
            }
        };
        tr.phi
            .add_scaled(&mut self.weights[range], lr * delta, self.lr_scaling.as_deref());
        self.updates += 1;
        Ok(delta)
    }
}
