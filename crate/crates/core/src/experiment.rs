//! Experiment orchestration: building environments and agents from a
//! [`RunConfig`], seeded runs across a worker pool, CSV output, checkpoints,
//! termination heatmaps and frozen-policy evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{ActorCritic, Agent, EpisodeLog, Environment, OptionCritic, Sarsa};
use crate::checkpoint::Checkpoint;
use crate::config::{AgentKind, EnvKind, RunConfig};
use crate::critic::CriticVariant;
use crate::env::fourrooms::{FourRooms, GridMap};
use crate::env::pinball::{Pinball, PinballConfig};
use crate::env::tabular::MdpEnv;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::TabularMdp;
use crate::rng::RngStream;

pub const CSV_HEADER: &str = "episode,steps,undiscounted_return,discounted_return,option_switches,mean_option_duration";
pub const HEATMAP_HEADER: &str = "option,row,col,beta";

/// A constructed environment of any supported kind.
#[derive(Debug, Clone)]
pub enum EnvInstance {
    FourRooms(FourRooms),
    Pinball(Pinball),
    Mdp(MdpEnv),
}

impl EnvInstance {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Ok(match cfg.env {
            EnvKind::FourRooms => {
                let map = match &cfg.map {
                    Some(p) => GridMap::parse(&read(p)?)?,
                    None => GridMap::canonical(),
                };
                EnvInstance::FourRooms(FourRooms::new(map, cfg.relocation_episode)?)
            }
            EnvKind::Pinball => {
                let maze = match &cfg.maze {
                    Some(p) => PinballConfig::parse(&read(p)?, &p.display().to_string())?,
                    None => PinballConfig::default_maze(),
                };
                EnvInstance::Pinball(Pinball::new(maze, cfg.fourier_order)?)
            }
            EnvKind::Mdp => {
                let p = cfg.mdp.as_deref().ok_or_else(|| Error::Config("no mdp file given".into()))?;
                let mdp = TabularMdp::parse(&read(p)?, &p.display().to_string())?;
                EnvInstance::Mdp(MdpEnv::new(mdp))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvInstance::FourRooms(e) => e.name(),
            EnvInstance::Pinball(e) => e.name(),
            EnvInstance::Mdp(e) => e.name(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            EnvInstance::FourRooms(e) => e.n_actions(),
            EnvInstance::Pinball(e) => e.n_actions(),
            EnvInstance::Mdp(e) => e.n_actions(),
        }
    }

    pub fn feature_map(&self) -> &FeatureMap {
        match self {
            EnvInstance::FourRooms(e) => e.feature_map(),
            EnvInstance::Pinball(e) => e.feature_map(),
            EnvInstance::Mdp(e) => e.feature_map(),
        }
    }
}

/// A trained (or restored) agent of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedAgent {
    OptionCritic(OptionCritic),
    Sarsa(Sarsa),
    ActorCritic(ActorCritic),
}

impl TrainedAgent {
    pub fn build(cfg: &RunConfig, env: &EnvInstance, rng: &mut RngStream) -> Self {
        let a = &cfg.agent;
        let nf = env.feature_map().n_features();
        let na = env.n_actions();
        match cfg.agent_kind {
            AgentKind::OptionCritic => TrainedAgent::OptionCritic(OptionCritic::new(a, na, env.feature_map(), rng)),
            AgentKind::Sarsa => TrainedAgent::Sarsa(Sarsa::new(na, nf, a.temperature, a.lr_critic, a.gamma)),
            AgentKind::ActorCritic => TrainedAgent::ActorCritic(ActorCritic::new(
                na,
                nf,
                a.temperature,
                a.lr_critic,
                a.actor.lr_intra,
                a.gamma,
            )),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            TrainedAgent::OptionCritic(_) => AgentKind::OptionCritic,
            TrainedAgent::Sarsa(_) => AgentKind::Sarsa,
            TrainedAgent::ActorCritic(_) => AgentKind::ActorCritic,
        }
    }

    pub fn run_episode<E: Environment>(
        &mut self,
        env: &mut E,
        episode: usize,
        max_steps: usize,
        rng: &mut RngStream,
    ) -> Result<EpisodeLog> {
        match self {
            TrainedAgent::OptionCritic(a) => a.run_episode(env, episode, max_steps, rng),
            TrainedAgent::Sarsa(a) => a.run_episode(env, episode, max_steps, rng),
            TrainedAgent::ActorCritic(a) => a.run_episode(env, episode, max_steps, rng),
        }
    }

    pub fn freeze(&mut self) {
        match self {
            TrainedAgent::OptionCritic(a) => a.freeze(),
            TrainedAgent::Sarsa(a) => a.freeze(),
            TrainedAgent::ActorCritic(a) => a.freeze(),
        }
    }

    /// Serializes parameters together with the environment description.
    pub fn to_checkpoint(&self, cfg: &RunConfig, env: &EnvInstance) -> Checkpoint {
        let fm = env.feature_map();
        let (nf, na) = (fm.n_features(), env.n_actions());
        let mut ck = Checkpoint {
            env: env.name().to_string(),
            n_options: cfg.agent.n_options,
            feature_kind: fm.kind().to_string(),
            n_features: nf,
            n_actions: na,
            agent: self.kind().name().to_string(),
            meta: Vec::new(),
            arrays: Vec::new(),
        };
        ck.push_meta("temperature", cfg.agent.temperature);
        ck.push_meta("gamma", cfg.agent.gamma);
        ck.push_meta("epsilon", cfg.agent.epsilon);
        match env {
            EnvInstance::FourRooms(e) => {
                ck.push_meta("goal", e.goal());
                ck.push_meta("map", e.map().to_text().trim_end().replace(' ', ".").replace('\n', "/"));
            }
            EnvInstance::Pinball(_) => ck.push_meta("fourier_order", cfg.fourier_order),
            EnvInstance::Mdp(_) => {}
        }
        match self {
            TrainedAgent::OptionCritic(a) => {
                let no = a.n_options();
                ck.push_meta("critic", a.critic.variant().name());
                ck.push_array("theta", &[no, na, nf], &a.policy.weights);
                ck.push_array("vartheta", &[no, nf], &a.termination.weights);
                match a.critic.variant() {
                    CriticVariant::QU => ck.push_array("q_u", &[no, na, nf], &a.critic.weights),
                    CriticVariant::QOmega => ck.push_array("q_omega", &[no, nf], &a.critic.weights),
                }
            }
            TrainedAgent::Sarsa(a) => ck.push_array("q", &[na, nf], &a.q),
            TrainedAgent::ActorCritic(a) => {
                ck.push_array("theta", &[1, na, nf], &a.policy.weights);
                ck.push_array("v", &[nf], &a.value);
            }
        }
        ck
    }

    /// Restores an agent shaped by `cfg` from a checkpoint, refusing any
    /// mismatch in environment, agent kind or dimensions.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: &RunConfig, env: &EnvInstance) -> Result<Self> {
        let fm = env.feature_map();
        let (nf, na, no) = (fm.n_features(), env.n_actions(), cfg.agent.n_options);
        let mismatch = |what: &str, ck_val: String, cfg_val: String| {
            Err(Error::Checkpoint(format!(
                "{what} mismatch: checkpoint has {ck_val}, configuration has {cfg_val}"
            )))
        };
        if ck.env != env.name() {
            return mismatch("environment", ck.env.clone(), env.name().into());
        }
        if ck.agent != cfg.agent_kind.name() {
            return mismatch("agent", ck.agent.clone(), cfg.agent_kind.name().into());
        }
        if ck.n_options != no {
            return mismatch("option count", ck.n_options.to_string(), no.to_string());
        }
        if ck.feature_kind != fm.kind() || ck.n_features != nf {
            return mismatch(
                "features",
                format!("{} x{}", ck.feature_kind, ck.n_features),
                format!("{} x{}", fm.kind(), nf),
            );
        }
        if ck.n_actions != na {
            return mismatch("action count", ck.n_actions.to_string(), na.to_string());
        }
        let mut agent = TrainedAgent::build(cfg, env, &mut RngStream::new(0));
        match &mut agent {
            TrainedAgent::OptionCritic(a) => {
                a.policy.weights.copy_from_slice(ck.array("theta", &[no, na, nf])?);
                a.termination.weights.copy_from_slice(ck.array("vartheta", &[no, nf])?);
                let critic = match a.critic.variant() {
                    CriticVariant::QU => ck.array("q_u", &[no, na, nf])?,
                    CriticVariant::QOmega => ck.array("q_omega", &[no, nf])?,
                };
                a.critic.weights.copy_from_slice(critic);
            }
            TrainedAgent::Sarsa(a) => a.q.copy_from_slice(ck.array("q", &[na, nf])?),
            TrainedAgent::ActorCritic(a) => {
                a.policy.weights.copy_from_slice(ck.array("theta", &[1, na, nf])?);
                a.value.copy_from_slice(ck.array("v", &[nf])?);
            }
        }
        Ok(agent)
    }
}

/// Everything one seeded run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    pub logs: Vec<EpisodeLog>,
    pub agent: TrainedAgent,
    pub checkpoint: Checkpoint,
    /// Intermediate checkpoints keyed by the number of completed episodes.
    pub snapshots: Vec<(usize, Checkpoint)>,
}

fn train_in<E: Environment>(
    env: &mut E,
    agent: &mut TrainedAgent,
    cfg: &RunConfig,
    rng: &mut RngStream,
    mut snapshot: impl FnMut(usize, &TrainedAgent, &E),
) -> Result<Vec<EpisodeLog>> {
    let mut logs = Vec::with_capacity(cfg.agent.episodes);
    for episode in 0..cfg.agent.episodes {
        env.begin_episode(episode, rng);
        logs.push(agent.run_episode(env, episode, cfg.agent.max_steps_per_episode, rng)?);
        let done = episode + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.agent.episodes {
            snapshot(done, agent, env);
        }
    }
    Ok(logs)
}

/// One training run with seed `base_seed + run`.
pub fn run_single(cfg: &RunConfig, run: usize) -> Result<RunOutput> {
    let seed = cfg.agent.seed.wrapping_add(run as u64);
    let mut env = EnvInstance::build(cfg)?;
    let mut rng = RngStream::new(seed);
    let mut agent = TrainedAgent::build(cfg, &env, &mut rng);
    let mut snapshots = Vec::new();
    let logs = {
        let mut take = |done: usize, agent: &TrainedAgent, env: &EnvInstance| {
            snapshots.push((done, agent.to_checkpoint(cfg, env)));
        };
        match &mut env {
            EnvInstance::FourRooms(e) => train_in(e, &mut agent, cfg, &mut rng, |d, a, e| {
                take(d, a, &EnvInstance::FourRooms(e.clone()))
            }),
            EnvInstance::Pinball(e) => train_in(e, &mut agent, cfg, &mut rng, |d, a, e| {
                take(d, a, &EnvInstance::Pinball(e.clone()))
            }),
            EnvInstance::Mdp(e) => train_in(e, &mut agent, cfg, &mut rng, |d, a, e| {
                take(d, a, &EnvInstance::Mdp(e.clone()))
            }),
        }
    }
    .map_err(|e| Error::Run {
        run,
        source: Box::new(e),
    })?;
    let checkpoint = agent.to_checkpoint(cfg, &env);
    Ok(RunOutput {
        run,
        seed,
        logs,
        agent,
        checkpoint,
        snapshots,
    })
}

/// All `cfg.n_runs` runs on a pool of `jobs` workers, returned in run order.
pub fn train_all(cfg: &RunConfig, jobs: usize) -> Result<Vec<RunOutput>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunOutput>> =
        pool.install(|| (0..cfg.n_runs).into_par_iter().map(|k| run_single(cfg, k)).collect());
    results.into_iter().collect()
}

pub fn logs_csv(logs: &[EpisodeLog]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for l in logs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            l.episode, l.steps, l.undiscounted_return, l.discounted_return, l.option_switches, l.mean_option_duration
        );
    }
    out
}

/// Per-episode column means across runs. Runs of unequal length are
/// averaged over the episodes they share.
pub fn mean_rows(runs: &[&[EpisodeLog]]) -> Vec<[f64; 5]> {
    let n_eps = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    (0..n_eps)
        .map(|e| {
            let mut acc = [0.0; 5];
            for run in runs {
                let l = &run[e];
                let cols = [
                    l.steps as f64,
                    l.undiscounted_return,
                    l.discounted_return,
                    l.option_switches as f64,
                    l.mean_option_duration,
                ];
                for (a, c) in acc.iter_mut().zip(cols) {
                    *a += c;
                }
            }
            acc.map(|a| a / runs.len() as f64)
        })
        .collect()
}

pub fn mean_csv(runs: &[&[EpisodeLog]]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (e, row) in mean_rows(runs).iter().enumerate() {
        let _ = writeln!(out, "{e},{},{},{},{},{}", row[0], row[1], row[2], row[3], row[4]);
    }
    out
}

/// `OC_OUTPUT_DIR` overrides the configured directory when set.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os("OC_OUTPUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `run_<k>.csv`, `mean.csv` and checkpoints into `dir`.
pub fn write_outputs(dir: &Path, outputs: &[RunOutput]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for out in outputs {
        let csv = dir.join(format!("run_{}.csv", out.run));
        write(&csv, &logs_csv(&out.logs))?;
        written.push(csv);
        let ck = dir.join(format!("run_{}.ckpt", out.run));
        out.checkpoint.save(&ck)?;
        written.push(ck);
        for (episodes, snap) in &out.snapshots {
            let p = dir.join(format!("run_{}_ep{}.ckpt", out.run, episodes));
            snap.save(&p)?;
            written.push(p);
        }
    }
    let runs: Vec<&[EpisodeLog]> = outputs.iter().map(|o| o.logs.as_slice()).collect();
    let mean = dir.join("mean.csv");
    write(&mean, &mean_csv(&runs))?;
    written.push(mean);
    Ok(written)
}

/// Termination probabilities of every option over the four-rooms grid.
/// Walls are emitted as -1.
pub fn heatmap_csv(ck: &Checkpoint) -> Result<String> {
    if ck.env != "fourrooms" || ck.agent != "oc" {
        return Err(Error::Checkpoint(format!(
            "heatmaps need a four-rooms option-critic checkpoint, got env `{}` agent `{}`",
            ck.env, ck.agent
        )));
    }
    let map = match ck.meta("map") {
        Some(m) => GridMap::parse(&m.replace('.', " ").replace('/', "\n"))?,
        None => GridMap::canonical(),
    };
    let nf = map.n_cells();
    if ck.feature_kind != "onehot" || ck.n_features != nf {
        return Err(Error::Checkpoint("checkpoint features do not match the map".into()));
    }
    let no = ck.n_options;
    let vartheta = ck.array("vartheta", &[no, nf])?;
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for w in 0..no {
        for r in 0..map.rows() {
            for c in 0..map.cols() {
                let beta = match map.state_at(r, c) {
                    Some(s) => crate::policy::sigmoid(vartheta[w * nf + s]),
                    None => -1.0,
                };
                let _ = writeln!(out, "{w},{r},{c},{beta}");
            }
        }
    }
    Ok(out)
}

/// Plays `cfg.agent.episodes` episodes with the checkpointed parameters
/// frozen. Four-rooms keeps the checkpoint's goal and never relocates it.
pub fn evaluate(ck: &Checkpoint, cfg: &RunConfig) -> Result<Vec<EpisodeLog>> {
    let mut env = EnvInstance::build(cfg)?;
    let mut agent = TrainedAgent::from_checkpoint(ck, cfg, &env)?;
    agent.freeze();
    let mut rng = RngStream::new(cfg.agent.seed);
    let max_steps = cfg.agent.max_steps_per_episode;
    let episodes = cfg.agent.episodes;
    let mut logs = Vec::with_capacity(episodes);
    macro_rules! play {
        ($e:expr) => {
            for episode in 0..episodes {
                logs.push(agent.run_episode($e, episode, max_steps, &mut rng)?);
            }
        };
    }
    match &mut env {
        EnvInstance::FourRooms(e) => {
            if let Some(goal) = ck.meta("goal") {
                let goal: usize = goal
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad goal `{goal}`")))?;
                if goal >= e.map().n_cells() {
                    return Err(Error::Checkpoint(format!("goal {goal} outside the map")));
                }
                e.set_goal(goal);
            }
            play!(e)
        }
        EnvInstance::Pinball(e) => play!(e),
        EnvInstance::Mdp(e) => play!(e),
    }
    Ok(logs)
}
