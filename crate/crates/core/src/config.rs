//! Run configuration: flat `key = value` lines grouped under `[run]`,
//! `[env]` and `[agent]` sections. Unknown sections and keys are errors.
//!
//! ```text
//! [run]
//! env = fourrooms        # fourrooms | pinball | mdp
//! agent = oc             # oc | sarsa | ac
//! runs = 50
//! seed = 0
//! episodes = 1500
//! output = out/fourrooms
//!
//! [agent]
//! n_options = 8
//! ```

use std::path::{Path, PathBuf};

use crate::actor::ActorConfig;
use crate::agent::AgentConfig;
use crate::critic::{CriticVariant, StepSize, ValueMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    FourRooms,
    Pinball,
    Mdp,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::FourRooms => "fourrooms",
            EnvKind::Pinball => "pinball",
            EnvKind::Mdp => "mdp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fourrooms" => Some(EnvKind::FourRooms),
            "pinball" => Some(EnvKind::Pinball),
            "mdp" => Some(EnvKind::Mdp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    OptionCritic,
    Sarsa,
    ActorCritic,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::OptionCritic => "oc",
            AgentKind::Sarsa => "sarsa",
            AgentKind::ActorCritic => "ac",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "oc" => Some(AgentKind::OptionCritic),
            "sarsa" => Some(AgentKind::Sarsa),
            "ac" => Some(AgentKind::ActorCritic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvKind,
    pub agent_kind: AgentKind,
    pub agent: AgentConfig,
    pub n_runs: usize,
    pub output_dir: PathBuf,
    /// Write an intermediate checkpoint every this many episodes; 0 keeps
    /// only the final one.
    pub checkpoint_every: usize,
    /// Four-rooms map file; the built-in map when absent.
    pub map: Option<PathBuf>,
    /// Four-rooms goal relocation; `None` disables it.
    pub relocation_episode: Option<usize>,
    /// Pinball maze file; the shipped maze when absent.
    pub maze: Option<PathBuf>,
    pub fourier_order: u32,
    /// Text MDP for `env = mdp`.
    pub mdp: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvKind::FourRooms,
            agent_kind: AgentKind::OptionCritic,
            agent: AgentConfig::default(),
            n_runs: 1,
            output_dir: PathBuf::from("out"),
            checkpoint_every: 0,
            map: None,
            relocation_episode: Some(1000),
            maze: None,
            fourier_order: 3,
            mdp: None,
        }
    }
}

/// Default per-episode step cap.
pub fn default_max_steps(env: EnvKind) -> usize {
    match env {
        EnvKind::Pinball => 10_000,
        EnvKind::FourRooms | EnvKind::Mdp => 50_000,
    }
}

fn value<T: std::str::FromStr>(raw: &str, what: &str) -> std::result::Result<T, String> {
    raw.parse::<T>().map_err(|_| format!("`{raw}` is not a valid {what}"))
}

fn boolean(raw: &str) -> std::result::Result<bool, String> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{raw}` is not a boolean")),
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn parse(text: &str, source_name: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut max_steps = None;
        let mut step_power = 1.0;
        let mut visits_step = false;
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |m: String| Error::parse(source_name, line_no, m);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("malformed section header `{line}`")))?
                    .trim();
                if !matches!(name, "run" | "env" | "agent") {
                    return Err(err(format!("unknown section `[{name}]`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, val) = (key.trim(), val.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| err(format!("`{key}` appears before any section")))?;
            let path = || base_dir.join(val);
            let a = &mut cfg.agent;
            let outcome: std::result::Result<(), String> = match (sec, key) {
                ("run", "env") => EnvKind::from_name(val)
                    .map(|e| cfg.env = e)
                    .ok_or_else(|| format!("unknown env `{val}`")),
                ("run", "agent") => AgentKind::from_name(val)
                    .map(|k| cfg.agent_kind = k)
                    .ok_or_else(|| format!("unknown agent `{val}`")),
                ("run", "runs") => value(val, "count").map(|v| cfg.n_runs = v),
                ("run", "seed") => value(val, "seed").map(|v| a.seed = v),
                ("run", "episodes") => value(val, "count").map(|v| a.episodes = v),
                ("run", "max_steps") => value(val, "count").map(|v| max_steps = Some(v)),
                ("run", "output") => {
                    cfg.output_dir = path();
                    Ok(())
                }
                ("run", "checkpoint_every") => value(val, "count").map(|v| cfg.checkpoint_every = v),
                ("env", "map") => {
                    cfg.map = Some(path());
                    Ok(())
                }
                ("env", "relocation_episode") => {
                    if val == "none" {
                        cfg.relocation_episode = None;
                        Ok(())
                    } else {
                        value(val, "episode index").map(|v| cfg.relocation_episode = Some(v))
                    }
                }
                ("env", "maze") => {
                    cfg.maze = Some(path());
                    Ok(())
                }
                ("env", "fourier_order") => value(val, "order").map(|v| cfg.fourier_order = v),
                ("env", "mdp") => {
                    cfg.mdp = Some(path());
                    Ok(())
                }
                ("agent", "n_options") => value(val, "count").map(|v| a.n_options = v),
                ("agent", "epsilon") => value(val, "number").map(|v| a.epsilon = v),
                ("agent", "temperature") => value(val, "number").map(|v| a.temperature = v),
                ("agent", "gamma") => value(val, "number").map(|v| a.gamma = v),
                ("agent", "lr_critic") => value(val, "number").map(|v| a.lr_critic = v),
                ("agent", "lr_intra") => value(val, "number").map(|v| a.actor.lr_intra = v),
                ("agent", "lr_term") => value(val, "number").map(|v| a.actor.lr_term = v),
                ("agent", "baseline") => boolean(val).map(|v| a.actor.use_baseline = v),
                ("agent", "xi") => value(val, "number").map(|v| a.actor.xi = v),
                ("agent", "entropy") => value(val, "number").map(|v| a.actor.entropy_coeff = v),
                ("agent", "critic") => match val {
                    "qu" => Ok(a.critic_variant = CriticVariant::QU),
                    "qomega" => Ok(a.critic_variant = CriticVariant::QOmega),
                    _ => Err(format!("unknown critic `{val}` (qu | qomega)")),
                },
                ("agent", "value_mode") => match val {
                    "greedy" => Ok(a.value_mode = ValueMode::Greedy),
                    "epsilon" => Ok(a.value_mode = ValueMode::EpsilonSoft),
                    _ => Err(format!("unknown value_mode `{val}` (greedy | epsilon)")),
                },
                ("agent", "critic_step") => match val {
                    "constant" => Ok(visits_step = false),
                    "visits" => Ok(visits_step = true),
                    _ => Err(format!("unknown critic_step `{val}` (constant | visits)")),
                },
                ("agent", "step_power") => value(val, "number").map(|v| step_power = v),
                ("agent", "fourier_scaling") => boolean(val).map(|v| a.fourier_scaling = v),
                ("agent", "init_scale") => value(val, "number").map(|v| a.init_scale = v),
                (sec, key) => Err(format!("unknown key `{key}` in [{sec}]")),
            };
            outcome.map_err(err)?;
        }
        cfg.agent.max_steps_per_episode = max_steps.unwrap_or_else(|| default_max_steps(cfg.env));
        if visits_step {
            cfg.agent.critic_step = StepSize::Visits { power: step_power };
        }
        cfg.agent.check()?;
        if cfg.n_runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if cfg.env == EnvKind::Mdp && cfg.mdp.is_none() {
            return Err(Error::Config("env = mdp requires `mdp = <file>` in [env]".into()));
        }
        if cfg.agent_kind != AgentKind::OptionCritic && cfg.agent.n_options != 1 {
            // Flat baselines ignore the option count; normalize it so
            // checkpoints record a single pseudo-option.
            cfg.agent.n_options = 1;
        }
        Ok(cfg)
    }

    pub fn actor(&self) -> &ActorConfig {
        &self.agent.actor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, "test.cfg", Path::new("/cfg"))
    }

    #[test]
    fn defaults_match_four_rooms_setup() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.env, EnvKind::FourRooms);
        assert_eq!(cfg.agent.gamma, 0.99);
        assert_eq!(cfg.agent.temperature, 1e-3);
        assert_eq!(cfg.agent.n_options, 4);
        assert_eq!(cfg.relocation_episode, Some(1000));
        assert_eq!(cfg.agent.max_steps_per_episode, 50_000);
    }

    #[test]
    fn sections_and_paths() {
        let cfg = parse("[run]\nenv = pinball\noutput = res\n[env]\nmaze = m.cfg\n[agent]\nn_options = 8\ncritic_step = visits\nstep_power = 0.7\n").unwrap();
        assert_eq!(cfg.env, EnvKind::Pinball);
        assert_eq!(cfg.output_dir, Path::new("/cfg/res"));
        assert_eq!(cfg.maze.as_deref(), Some(Path::new("/cfg/m.cfg")));
        assert_eq!(cfg.agent.n_options, 8);
        assert_eq!(cfg.agent.max_steps_per_episode, 10_000);
        assert_eq!(cfg.agent.critic_step, StepSize::Visits { power: 0.7 });
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse("[agent]\n\nn_optoins = 8\n").unwrap_err();
        assert_eq!(e.to_string(), "test.cfg:3: unknown key `n_optoins` in [agent]");
        let e = parse("[agents]\n").unwrap_err();
        assert!(e.to_string().starts_with("test.cfg:1:"), "{e}");
        let e = parse("n_options = 8\n").unwrap_err();
        assert!(e.to_string().contains("before any section"), "{e}");
        let e = parse("[agent]\ngamma = high\n").unwrap_err();
        assert!(e.to_string().starts_with("test.cfg:2:"), "{e}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse("[agent]\ngamma = 1.0\n").is_err());
        assert!(parse("[agent]\nn_options = 0\n").is_err());
        assert!(parse("[run]\nruns = 0\n").is_err());
        assert!(parse("[run]\nenv = mdp\n").is_err());
    }
}
