//! Gradient-ascent steps for the intra-option policies and the termination
//! functions.

use crate::error::{Error, Result};
use crate::features::FeatureVec;
use crate::policy::{IntraOptionPolicy, TerminationFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorConfig {
    pub lr_intra: f64,
    pub lr_term: f64,
    /// Subtract `Q_Omega(s, w)` from the `Q_U` sample in the policy step.
    pub use_baseline: bool,
    /// Margin added to the advantage in the termination step.
    pub xi: f64,
    pub entropy_coeff: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        ActorConfig {
            lr_intra: 1e-3,
            lr_term: 1e-3,
            use_baseline: false,
            xi: 0.0,
            entropy_coeff: 0.0,
        }
    }
}

/// `theta[w] += lr_intra * (d log pi(a|s)/d theta) * (q_u - baseline)
///            + lr_intra * entropy_coeff * dH/d theta`.
pub fn intra_policy_step(
    policy: &mut IntraOptionPolicy,
    cfg: &ActorConfig,
    phi: &FeatureVec,
    option: usize,
    action: usize,
    q_u_sample: f64,
    q_omega_baseline: f64,
) -> Result<()> {
    let baseline = if cfg.use_baseline { q_omega_baseline } else { 0.0 };
    let coeff = cfg.lr_intra * (q_u_sample - baseline);
    if !coeff.is_finite() {
        return Err(Error::Divergence {
            what: "intra-option policy step",
            value: coeff,
            step: 0,
        });
    }
    if coeff != 0.0 {
        policy.add_logpi_grad(option, phi, action, coeff);
    }
    if cfg.entropy_coeff != 0.0 && cfg.lr_intra != 0.0 {
        policy.add_entropy_grad(option, phi, cfg.lr_intra * cfg.entropy_coeff);
    }
    Ok(())
}

/// `vartheta[w] -= lr_term * (d beta(s')/d vartheta) * (advantage + xi)`.
pub fn termination_step(
    termination: &mut TerminationFunction,
    cfg: &ActorConfig,
    next_phi: &FeatureVec,
    option: usize,
    advantage: f64,
) -> Result<()> {
    let coeff = cfg.lr_term * (advantage + cfg.xi);
    if !coeff.is_finite() {
        return Err(Error::Divergence {
            what: "termination step",
            value: coeff,
            step: 0,
        });
    }
    if coeff != 0.0 {
        termination.add_beta_grad(option, next_phi, -coeff);
    }
    Ok(())
}
