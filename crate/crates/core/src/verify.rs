//! Randomized battery over the oracle: chain mass, value residuals, both
//! gradients against finite differences, the weighting series, and the
//! fixed-point cross-check.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureVec};
use crate::mdp::TabularMdp;
use crate::oracle::{self, Conditioning, OptionParams};
use crate::policy::{IntraOptionPolicy, TerminationFunction};
use crate::rng::RngStream;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const CHAIN_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const FIXED_POINT_TOL: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-6;
const SERIES_HORIZON: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub instances: usize,
    pub seed: u64,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_options: usize,
    /// Perturbs the analytic intra-option gradient to exercise the failure path.
    pub corrupt_gradient: bool,
    /// Where replay files for failing instances go; `None` skips writing.
    pub replay_dir: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            instances: 20,
            seed: 0,
            max_states: 5,
            max_actions: 3,
            max_options: 3,
            corrupt_gradient: false,
            replay_dir: None,
        }
    }
}

/// A random oracle problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: TabularMdp,
    pub params: OptionParams,
    pub pi_omega: Vec<f64>,
    pub epsilon: f64,
    /// Start pair for the termination gradient: `(state, option)`.
    pub arrival: (usize, usize),
}

impl Instance {
    /// Draws an instance. Even indices use one-hot features, odd ones random
    /// dense features; every third instance has a terminal state. The policy
    /// over options is epsilon-greedy in the option values obtained under
    /// uniform selection, then frozen.
    pub fn random(index: usize, opts: &VerifyOptions, rng: &mut RngStream) -> Result<Self> {
        // At least two actions and two options where the caps allow: with
        // one of either the gradients vanish identically and the check
        // degenerates into comparing finite-difference noise.
        let draw = |cap: usize, low: usize, rng: &mut RngStream| {
            let low = low.min(cap.max(1));
            low + rng.index(cap.max(low) - low + 1)
        };
        let ns = draw(opts.max_states, 2, rng);
        let na = draw(opts.max_actions, 2, rng);
        let no = draw(opts.max_options, 2, rng);
        let gamma = rng.uniform_range(0.5, 0.95);
        let mdp = TabularMdp::random(ns, na, gamma, index % 3 == 2, rng);
        let features: Vec<FeatureVec> = if index % 2 == 0 {
            let fm = FeatureMap::one_hot(ns);
            (0..ns).map(|s| fm.state(s)).collect()
        } else {
            let nf = 2 + rng.index(4);
            (0..ns)
                .map(|_| FeatureVec::Dense((0..nf).map(|_| rng.normal()).collect()))
                .collect()
        };
        let nf = features[0].len();
        let temperature = rng.uniform_range(0.5, 2.0);
        let theta = (0..no * na * nf).map(|_| rng.normal()).collect();
        let vartheta = (0..no * nf).map(|_| rng.normal()).collect();
        let params = OptionParams {
            policy: IntraOptionPolicy::with_weights(no, na, nf, temperature, theta),
            termination: TerminationFunction::with_weights(no, nf, vartheta),
            features,
        };
        let epsilon = rng.uniform_range(0.05, 0.5);
        let uniform = oracle::uniform_selection(ns, no);
        let q = oracle::exact_values(&mdp, &params, &uniform)?.q_omega;
        let pi_omega = oracle::epsilon_greedy(&q, no, epsilon);
        let live: Vec<usize> = (0..ns).filter(|&s| !mdp.is_terminal(s)).collect();
        let arrival = (live[rng.index(live.len())], rng.index(no));
        Ok(Instance {
            mdp,
            params,
            pi_omega,
            epsilon,
            arrival,
        })
    }

    /// The parameter side of a replay: features, weights, selection
    /// probabilities and the arrival pair, as labelled arrays.
    pub fn params_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "options {} actions {} features {} temperature {} epsilon {}",
            p.n_options(),
            p.policy.n_actions(),
            p.policy.n_features(),
            p.policy.temperature(),
            self.epsilon
        );
        let _ = writeln!(out, "arrival {} {}", self.arrival.0, self.arrival.1);
        let mut array = |name: &str, values: &[f64]| {
            let _ = write!(out, "{name}");
            for v in values {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        };
        for (s, phi) in p.features.iter().enumerate() {
            array(&format!("phi {s}"), &phi.to_dense());
        }
        array("theta", &p.policy.weights);
        array("vartheta", &p.termination.weights);
        array("pi_omega", &self.pi_omega);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InstanceReport {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_options: usize,
    pub chain_error: f64,
    pub residual: f64,
    pub intra_error: f64,
    pub termination_error: f64,
    pub series_error: f64,
    pub fixed_point_error: f64,
}

impl InstanceReport {
    pub fn passed(&self) -> bool {
        self.chain_error <= CHAIN_TOL
            && self.residual <= RESIDUAL_TOL
            && self.intra_error <= GRADIENT_TOL
            && self.termination_error <= GRADIENT_TOL
            && self.series_error <= 0.0
            && self.fixed_point_error <= FIXED_POINT_TOL
    }
}

/// Runs every check on one instance.
pub fn check_instance(inst: &Instance, corrupt_gradient: bool) -> Result<InstanceReport> {
    let (mdp, params, pi_omega) = (&inst.mdp, &inst.params, &inst.pi_omega);
    let no = params.n_options();
    let chain = oracle::build_chain(mdp, params, pi_omega);
    let mut report = InstanceReport {
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        n_options: no,
        ..Default::default()
    };

    for m in [&chain.p1_same, &chain.p1_shifted] {
        for (row, r) in m.row_iter().enumerate() {
            let target = if mdp.is_terminal(row / no) { 0.0 } else { mdp.discount };
            let sum: f64 = r.iter().sum();
            report.chain_error = report.chain_error.max((sum - target).abs());
            if r.iter().any(|&x| x < 0.0) {
                report.chain_error = f64::INFINITY;
            }
        }
    }

    let values = oracle::exact_values_with_chain(mdp, params, pi_omega, &chain)?;
    report.residual = oracle::residuals(mdp, params, pi_omega, &values)
        .into_iter()
        .fold(0.0, f64::max);

    let start = oracle::start_weights(mdp, pi_omega, no);
    let mut analytic = oracle::intra_option_gradient(mdp, params, pi_omega, &start)?;
    if corrupt_gradient {
        analytic[0] += 1e-3 * (1.0 + analytic[0].abs());
    }
    let numeric = oracle::intra_option_numeric(mdp, params, pi_omega, &start, FD_STEP)?;
    report.intra_error = oracle::relative_error(&analytic, &numeric);

    let (s1, w0) = inst.arrival;
    let analytic = oracle::termination_gradient(mdp, params, pi_omega, s1, w0)?;
    let numeric = oracle::termination_numeric(mdp, params, pi_omega, s1, w0, FD_STEP)?;
    report.termination_error = if no == 1 {
        // A single option has zero advantage everywhere: the exact gradient
        // is zero and the difference quotient is pure rounding noise.
        let noise = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if analytic.iter().all(|&g| g == 0.0) && noise < 1e-7 {
            0.0
        } else {
            oracle::relative_error(&analytic, &numeric)
        }
    } else {
        oracle::relative_error(&analytic, &numeric)
    };

    // The truncated series must sit within its geometric tail bound.
    let bound = mdp.discount.powi(SERIES_HORIZON as i32 + 1) / (1.0 - mdp.discount);
    for cond in [Conditioning::Same, Conditioning::Shifted] {
        let mu = oracle::discounted_weighting(&chain, &start, cond)?;
        let series = oracle::truncated_weighting(&chain, &start, cond, SERIES_HORIZON);
        let excess: f64 = mu
            .iter()
            .zip(&series)
            .map(|(a, b)| (a - b).abs() - bound - 1e-12)
            .fold(0.0, f64::max);
        report.series_error = report.series_error.max(excess);
    }

    let fixed = oracle::intra_q_fixed_point(mdp, params, 1e-12);
    let greedy = oracle::greedy(&oracle::aggregate_q_omega(mdp, params, &fixed), no);
    let exact = oracle::exact_values(mdp, params, &greedy)?;
    report.fixed_point_error = fixed
        .iter()
        .zip(&exact.q_u)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs()));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub instances: Vec<InstanceReport>,
    pub replay_files: Vec<PathBuf>,
    pub text: String,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.instances.iter().all(InstanceReport::passed)
    }

    pub fn worst(&self) -> InstanceReport {
        let mut w = InstanceReport::default();
        for r in &self.instances {
            w.chain_error = w.chain_error.max(r.chain_error);
            w.residual = w.residual.max(r.residual);
            w.intra_error = w.intra_error.max(r.intra_error);
            w.termination_error = w.termination_error.max(r.termination_error);
            w.series_error = w.series_error.max(r.series_error);
            w.fixed_point_error = w.fixed_point_error.max(r.fixed_point_error);
        }
        w
    }
}

fn write_replay(dir: &Path, index: usize, inst: &Instance) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mdp_path = dir.join(format!("verify_failure_{index}.mdp"));
    std::fs::write(&mdp_path, inst.mdp.to_text()).map_err(|e| Error::io(&mdp_path, e))?;
    let params_path = dir.join(format!("verify_failure_{index}.params"));
    std::fs::write(&params_path, inst.params_text()).map_err(|e| Error::io(&params_path, e))?;
    Ok(mdp_path)
}

/// Runs the battery. Instance `k` draws from stream `k` of the seed, so
/// reports are reproducible and independent of the instance count.
pub fn run(opts: &VerifyOptions) -> Result<VerifyReport> {
    let base = RngStream::new(opts.seed);
    let mut text = String::new();
    let mut instances = Vec::with_capacity(opts.instances);
    let mut replay_files = Vec::new();
    for k in 0..opts.instances {
        let mut rng = base.split(k as u64);
        let inst = Instance::random(k, opts, &mut rng)?;
        let r = check_instance(&inst, opts.corrupt_gradient)?;
        let _ = writeln!(
            text,
            "instance {k:>3}  S={} A={} O={}  chain {:.2e}  residual {:.2e}  intra {:.2e}  termination {:.2e}  fixed-point {:.2e}  {}",
            r.n_states,
            r.n_actions,
            r.n_options,
            r.chain_error,
            r.residual,
            r.intra_error,
            r.termination_error,
            r.fixed_point_error,
            if r.passed() { "ok" } else { "FAIL" }
        );
        if !r.passed() {
            if let Some(dir) = &opts.replay_dir {
                let path = write_replay(dir, k, &inst)?;
                let _ = writeln!(text, "  replay written to {}", path.display());
                replay_files.push(path);
            }
        }
        instances.push(r);
    }
    let mut report = VerifyReport {
        instances,
        replay_files,
        text,
    };
    let w = report.worst();
    let failed = report.instances.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(
        report.text,
        "worst: chain {:.2e}  residual {:.2e}  intra {:.2e}  termination {:.2e}  fixed-point {:.2e}",
        w.chain_error, w.residual, w.intra_error, w.termination_error, w.fixed_point_error
    );
    let _ = writeln!(
        report.text,
        "{} of {} instances passed",
        report.instances.len() - failed,
        report.instances.len()
    );
    Ok(report)
}
