//! Call-and-return execution and the option-critic training loop, plus the
//! two flat baselines (SARSA(0) and a primitive actor-critic).

use crate::actor::{intra_policy_step, termination_step, ActorConfig};
use crate::critic::{Critic, CriticVariant, StepSize, Transition, ValueMode};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureVec};
use crate::policy::{IntraOptionPolicy, PolicyOverOptions, TerminationFunction};
use crate::rng::RngStream;

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub next: S,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    type State: Clone;

    fn name(&self) -> &'static str;
    fn n_actions(&self) -> usize;
    fn feature_map(&self) -> &FeatureMap;
    fn features(&self, state: &Self::State) -> FeatureVec;
    fn reset(&mut self, rng: &mut RngStream) -> Self::State;
    fn step(&mut self, state: &Self::State, action: usize, rng: &mut RngStream) -> Result<Step<Self::State>>;

    /// Lifecycle hook run before every episode (e.g. goal relocation).
    fn begin_episode(&mut self, _episode: usize, _rng: &mut RngStream) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub undiscounted_return: f64,
    pub discounted_return: f64,
    pub option_switches: usize,
    pub mean_option_duration: f64,
    pub option_usage: Vec<usize>,
}

impl EpisodeLog {
    fn new(episode: usize, n_options: usize) -> Self {
        EpisodeLog {
            episode,
            steps: 0,
            undiscounted_return: 0.0,
            discounted_return: 0.0,
            option_switches: 0,
            mean_option_duration: 0.0,
            option_usage: vec![0; n_options],
        }
    }

    fn record(&mut self, option: usize, reward: f64, discount: f64) {
        self.steps += 1;
        self.option_usage[option] += 1;
        self.undiscounted_return += reward;
        self.discounted_return += discount * reward;
    }

    fn finish(mut self) -> Self {
        self.mean_option_duration = self.steps as f64 / (self.option_switches + 1) as f64;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub n_options: usize,
    pub epsilon: f64,
    pub temperature: f64,
    pub gamma: f64,
    pub lr_critic: f64,
    pub actor: ActorConfig,
    pub episodes: usize,
    pub max_steps_per_episode: usize,
    pub seed: u64,
    pub critic_variant: CriticVariant,
    pub value_mode: ValueMode,
    pub critic_step: StepSize,
    /// Divide critic steps by the Fourier coefficient norms.
    pub fourier_scaling: bool,
    /// Half-width of the uniform initialization of theta and vartheta; 0 means
    /// all-zero initialization.
    pub init_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            n_options: 4,
            epsilon: 0.01,
            temperature: 1e-3,
            gamma: 0.99,
            lr_critic: 0.5,
            actor: ActorConfig::default(),
            episodes: 1000,
            max_steps_per_episode: 50_000,
            seed: 0,
            critic_variant: CriticVariant::QU,
            value_mode: ValueMode::Greedy,
            critic_step: StepSize::Constant,
            fourier_scaling: true,
            init_scale: 0.0,
        }
    }
}

impl AgentConfig {
    pub fn check(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_options == 0 {
            return fail("n_options must be at least 1");
        }
        if self.max_steps_per_episode == 0 {
            return fail("max_steps_per_episode must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail("epsilon must lie in [0,1]");
        }
        if self.temperature.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return fail("temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0,1)");
        }
        let rates = [self.lr_critic, self.actor.lr_intra, self.actor.lr_term];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return fail("learning rates must be finite and non-negative");
        }
        if self.actor.xi < 0.0 || self.actor.entropy_coeff < 0.0 {
            return fail("xi and entropy_coeff must be non-negative");
        }
        Ok(())
    }
}

/// Anything that can play and learn from one episode.
pub trait Agent {
    fn run_episode<E: Environment>(
        &mut self,
        env: &mut E,
        episode: usize,
        max_steps: usize,
        rng: &mut RngStream,
    ) -> Result<EpisodeLog>;

    /// Sets every learning rate to zero.
    fn freeze(&mut self);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub critic: usize,
    pub intra: usize,
    pub termination: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionCritic {
    pub policy: IntraOptionPolicy,
    pub termination: TerminationFunction,
    pub critic: Critic,
    pub over_options: PolicyOverOptions,
    pub actor: ActorConfig,
    pub gamma: f64,
    pub counts: UpdateCounts,
}

impl OptionCritic {
    pub fn new(cfg: &AgentConfig, n_actions: usize, features: &FeatureMap, rng: &mut RngStream) -> Self {
        let nf = features.n_features();
        let mut policy = IntraOptionPolicy::zeros(cfg.n_options, n_actions, nf, cfg.temperature);
        let mut termination = TerminationFunction::zeros(cfg.n_options, nf);
        if cfg.init_scale > 0.0 {
            for w in policy.weights.iter_mut().chain(termination.weights.iter_mut()) {
                *w = rng.uniform_range(-cfg.init_scale, cfg.init_scale);
            }
        }
        let scaling = if cfg.fourier_scaling { features.lr_scaling() } else { None };
        let critic = Critic::new(cfg.critic_variant, cfg.n_options, n_actions, nf, cfg.gamma, cfg.lr_critic)
            .with_step_size(cfg.critic_step)
            .with_value_mode(cfg.value_mode)
            .with_lr_scaling(scaling);
        OptionCritic {
            policy,
            termination,
            critic,
            over_options: PolicyOverOptions::new(cfg.epsilon),
            actor: cfg.actor,
            gamma: cfg.gamma,
            counts: UpdateCounts::default(),
        }
    }

    pub fn n_options(&self) -> usize {
        self.policy.n_options()
    }

    fn select_option(&self, phi: &FeatureVec, rng: &mut RngStream) -> usize {
        let row = self.critic.q_omega_row(phi, &self.policy);
        self.over_options.select(&row, rng)
    }
}

impl Agent for OptionCritic {
    fn run_episode<E: Environment>(
        &mut self,
        env: &mut E,
        episode: usize,
        max_steps: usize,
        rng: &mut RngStream,
    ) -> Result<EpisodeLog> {
        let mut log = EpisodeLog::new(episode, self.n_options());
        let mut state = env.reset(rng);
        let mut phi = env.features(&state);
        let mut option = self.select_option(&phi, rng);
        let mut discount = 1.0;

        loop {
            let action = self.policy.sample(option, &phi, rng);
            let step = env.step(&state, action, rng)?;
            let next_phi = env.features(&step.next);
            log.record(option, step.reward, discount);
            discount *= self.gamma;

            // Options evaluation.
            let tr = Transition {
                phi: &phi,
                option,
                action,
                reward: step.reward,
                next_phi: &next_phi,
                done: step.done,
            };
            self.critic.update(&tr, &self.policy, &self.termination)?;
            self.counts.critic += 1;

            // Options improvement, using post-evaluation critic values.
            let q_u_sample = match self.critic.variant() {
                CriticVariant::QU => self.critic.q_u(&phi, option, action),
                CriticVariant::QOmega => self.critic.g1_target(
                    step.reward,
                    &next_phi,
                    option,
                    step.done,
                    &self.policy,
                    &self.termination,
                ),
            };
            let baseline = if self.actor.use_baseline {
                self.critic.q_omega(&phi, option, &self.policy)
            } else {
                0.0
            };
            intra_policy_step(&mut self.policy, &self.actor, &phi, option, action, q_u_sample, baseline)?;
            self.counts.intra += 1;

            let next_values = self.critic.values(&next_phi, &self.policy, &self.over_options);
            termination_step(
                &mut self.termination,
                &self.actor,
                &next_phi,
                option,
                next_values.advantage[option],
            )?;
            self.counts.termination += 1;

            if step.done || log.steps >= max_steps {
                break;
            }
            let beta = self.termination.term_prob(option, &next_phi);
            if rng.bernoulli(beta) {
                log.option_switches += 1;
                option = self.over_options.select(&next_values.q_row, rng);
            }
            state = step.next;
            phi = next_phi;
        }
        Ok(log.finish())
    }

    fn freeze(&mut self) {
        self.critic.set_lr(0.0);
        self.actor.lr_intra = 0.0;
        self.actor.lr_term = 0.0;
    }
}

/// Tabular/linear SARSA(0) with Boltzmann exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sarsa {
    /// Row-major `(action, feature)`.
    pub q: Vec<f64>,
    n_actions: usize,
    n_features: usize,
    temperature: f64,
    pub lr: f64,
    gamma: f64,
}

impl Sarsa {
    pub fn new(n_actions: usize, n_features: usize, temperature: f64, lr: f64, gamma: f64) -> Self {
        Sarsa {
            q: vec![0.0; n_actions * n_features],
            n_actions,
            n_features,
            temperature,
            lr,
            gamma,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    fn value(&self, phi: &FeatureVec, a: usize) -> f64 {
        phi.dot(&self.q[a * self.n_features..(a + 1) * self.n_features])
    }

    fn sample(&self, phi: &FeatureVec, rng: &mut RngStream) -> usize {
        let mut z: Vec<f64> = (0..self.n_actions)
            .map(|a| self.value(phi, a) / self.temperature)
            .collect();
        crate::policy::softmax_in_place(&mut z);
        rng.categorical(&z)
    }
}

impl Agent for Sarsa {
    fn run_episode<E: Environment>(
        &mut self,
        env: &mut E,
        episode: usize,
        max_steps: usize,
        rng: &mut RngStream,
    ) -> Result<EpisodeLog> {
        let mut log = EpisodeLog::new(episode, 1);
        let mut state = env.reset(rng);
        let mut phi = env.features(&state);
        let mut action = self.sample(&phi, rng);
        let mut discount = 1.0;
        loop {
            let step = env.step(&state, action, rng)?;
            log.record(0, step.reward, discount);
            discount *= self.gamma;
            let next_phi = env.features(&step.next);
            let mut target = step.reward;
            let mut next_action = 0;
            if !step.done {
                next_action = self.sample(&next_phi, rng);
                target += self.gamma * self.value(&next_phi, next_action);
            }
            let delta = target - self.value(&phi, action);
            if !delta.is_finite() || delta.abs() > crate::critic::DIVERGENCE_LIMIT {
                return Err(Error::Divergence { what: "sarsa td error", value: delta, step: log.steps });
            }
            let nf = self.n_features;
            phi.add_scaled(&mut self.q[action * nf..(action + 1) * nf], self.lr * delta, None);
            if step.done || log.steps >= max_steps {
                break;
            }
            state = step.next;
            phi = next_phi;
            action = next_action;
        }
        Ok(log.finish())
    }

    fn freeze(&mut self) {
        self.lr = 0.0;
    }
}

/// Primitive actor-critic: Boltzmann actor driven by the TD error of a state
/// value critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: IntraOptionPolicy,
    pub value: Vec<f64>,
    pub lr_critic: f64,
    pub lr_actor: f64,
    gamma: f64,
}

impl ActorCritic {
    pub fn new(n_actions: usize, n_features: usize, temperature: f64, lr_critic: f64, lr_actor: f64, gamma: f64) -> Self {
        ActorCritic {
            policy: IntraOptionPolicy::zeros(1, n_actions, n_features, temperature),
            value: vec![0.0; n_features],
            lr_critic,
            lr_actor,
            gamma,
        }
    }
}

impl Agent for ActorCritic {
    fn run_episode<E: Environment>(
        &mut self,
        env: &mut E,
        episode: usize,
        max_steps: usize,
        rng: &mut RngStream,
    ) -> Result<EpisodeLog> {
        let mut log = EpisodeLog::new(episode, 1);
        let mut state = env.reset(rng);
        let mut phi = env.features(&state);
        let mut discount = 1.0;
        loop {
            let action = self.policy.sample(0, &phi, rng);
            let step = env.step(&state, action, rng)?;
            log.record(0, step.reward, discount);
            discount *= self.gamma;
            let next_phi = env.features(&step.next);
            let bootstrap = if step.done { 0.0 } else { next_phi.dot(&self.value) };
            let delta = step.reward + self.gamma * bootstrap - phi.dot(&self.value);
            if !delta.is_finite() || delta.abs() > crate::critic::DIVERGENCE_LIMIT {
                return Err(Error::Divergence { what: "actor-critic td error", value: delta, step: log.steps });
            }
            phi.add_scaled(&mut self.value, self.lr_critic * delta, None);
            if self.lr_actor != 0.0 {
                self.policy.add_logpi_grad(0, &phi, action, self.lr_actor * delta);
            }
            if step.done || log.steps >= max_steps {
                break;
            }
            state = step.next;
            phi = next_phi;
        }
        Ok(log.finish())
    }

    fn freeze(&mut self) {
        self.lr_critic = 0.0;
        self.lr_actor = 0.0;
    }
}

/// Runs `episodes` episodes, invoking the environment's lifecycle hook before
/// each one.
pub fn train<E: Environment, A: Agent>(
    env: &mut E,
    agent: &mut A,
    episodes: usize,
    max_steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<EpisodeLog>> {
    let mut logs = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        env.begin_episode(episode, rng);
        logs.push(agent.run_episode(env, episode, max_steps, rng)?);
    }
    Ok(logs)
}

pub struct TrainOutput {
    pub logs: Vec<EpisodeLog>,
    pub agent: OptionCritic,
}

/// Builds an option-critic agent from `cfg` (seeded by `cfg.seed`) and trains it.
pub fn train_option_critic<E: Environment>(env: &mut E, cfg: &AgentConfig) -> Result<TrainOutput> {
    cfg.check()?;
    let mut rng = RngStream::new(cfg.seed);
    let mut agent = OptionCritic::new(cfg, env.n_actions(), env.feature_map(), &mut rng);
    let logs = train(env, &mut agent, cfg.episodes, cfg.max_steps_per_episode, &mut rng)?;
    Ok(TrainOutput { logs, agent })
}
