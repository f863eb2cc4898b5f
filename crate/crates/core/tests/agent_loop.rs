use option_critic::actor::ActorConfig;
use option_critic::agent::{train, train_option_critic, Agent, AgentConfig, OptionCritic};
use option_critic::env::{FourRooms, MdpEnv};
use option_critic::mdp::TabularMdp;
use option_critic::{Environment, RngStream};
use proptest::prelude::*;

fn env(seed: u64) -> MdpEnv {
    MdpEnv::new(TabularMdp::random(6, 3, 0.9, false, &mut RngStream::new(seed)))
}

fn frozen(n_options: usize) -> AgentConfig {
    AgentConfig {
        n_options,
        temperature: 1.0,
        actor: ActorConfig { lr_intra: 0.0, lr_term: 0.0, ..ActorConfig::default() },
        ..AgentConfig::default()
    }
}

fn agent_with_termination_logit(logit: f64) -> (MdpEnv, OptionCritic) {
    let e = env(1);
    let mut rng = RngStream::new(2);
    let mut agent = OptionCritic::new(&frozen(3), e.n_actions(), e.feature_map(), &mut rng);
    agent.termination.weights.iter_mut().for_each(|w| *w = logit);
    (e, agent)
}

#[test]
fn always_terminating_options_switch_every_step() {
    let (mut e, mut agent) = agent_with_termination_logit(60.0);
    let log = agent.run_episode(&mut e, 0, 500, &mut RngStream::new(3)).unwrap();
    assert_eq!(log.steps, 500);
    assert_eq!(log.option_switches, 499);
}

#[test]
fn never_terminating_options_never_switch() {
    let (mut e, mut agent) = agent_with_termination_logit(-60.0);
    let log = agent.run_episode(&mut e, 0, 500, &mut RngStream::new(3)).unwrap();
    assert_eq!(log.option_switches, 0);
    assert_eq!(log.option_usage.iter().filter(|&&u| u > 0).count(), 1);
    assert_eq!(log.mean_option_duration, 500.0);
}

#[test]
fn zero_actor_rates_leave_actor_untouched() {
    let mut e = env(4);
    let cfg = AgentConfig { init_scale: 0.5, ..frozen(2) };
    let mut rng = RngStream::new(5);
    let mut agent = OptionCritic::new(&cfg, e.n_actions(), e.feature_map(), &mut rng);
    let (theta, vartheta) = (agent.policy.weights.clone(), agent.termination.weights.clone());
    let critic_before = agent.critic.weights.clone();
    train(&mut e, &mut agent, 5, 200, &mut rng).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&agent.policy.weights), bits(&theta));
    assert_eq!(bits(&agent.termination.weights), bits(&vartheta));
    assert_ne!(agent.critic.weights, critic_before);
}

#[test]
fn update_counts_match_steps() {
    let mut e = env(6);
    let cfg = AgentConfig { episodes: 4, max_steps_per_episode: 300, temperature: 1.0, ..AgentConfig::default() };
    let out = train_option_critic(&mut e, &cfg).unwrap();
    let steps: usize = out.logs.iter().map(|l| l.steps).sum();
    assert_eq!(steps, 1200);
    assert_eq!(out.agent.counts.critic, steps);
    assert_eq!(out.agent.counts.intra, steps);
    assert_eq!(out.agent.counts.termination, steps);
}

#[test]
fn zero_episodes_give_empty_log() {
    let mut e = env(7);
    let cfg = AgentConfig { episodes: 0, ..AgentConfig::default() };
    assert!(train_option_critic(&mut e, &cfg).unwrap().logs.is_empty());
}

#[test]
fn training_is_deterministic_per_seed() {
    let cfg = AgentConfig { episodes: 20, max_steps_per_episode: 2000, seed: 9, ..AgentConfig::default() };
    let a = train_option_critic(&mut FourRooms::canonical(), &cfg).unwrap();
    let b = train_option_critic(&mut FourRooms::canonical(), &cfg).unwrap();
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.agent.critic.weights, b.agent.critic.weights);
    let c = train_option_critic(&mut FourRooms::canonical(), &AgentConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.logs, c.logs);
}

#[test]
fn four_rooms_episodes_end_at_the_goal() {
    let cfg = AgentConfig { episodes: 30, seed: 1, ..AgentConfig::default() };
    let out = train_option_critic(&mut FourRooms::canonical(), &cfg).unwrap();
    for l in &out.logs {
        assert!(l.steps < cfg.max_steps_per_episode);
        assert_eq!(l.undiscounted_return, 1.0);
        assert!((l.discounted_return - 0.99f64.powi(l.steps as i32 - 1)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn option_usage_accounts_for_every_step(seed in any::<u64>(), n_options in 1usize..5, max_steps in 1usize..400) {
        let mut e = env(seed);
        let cfg = AgentConfig { n_options, seed, init_scale: 1.0, temperature: 1.0, ..AgentConfig::default() };
        let mut rng = RngStream::new(seed);
        let mut agent = OptionCritic::new(&cfg, e.n_actions(), e.feature_map(), &mut rng);
        let log = agent.run_episode(&mut e, 0, max_steps, &mut rng).unwrap();
        prop_assert_eq!(log.steps, max_steps);
        prop_assert_eq!(log.option_usage.iter().sum::<usize>(), log.steps);
        prop_assert!(log.option_switches < log.steps);
        let runs = (log.option_switches + 1) as f64;
        prop_assert!((log.mean_option_duration - log.steps as f64 / runs).abs() < 1e-9);
    }
}
