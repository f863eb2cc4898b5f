use std::path::Path;

use option_critic::checkpoint::Checkpoint;
use option_critic::config::{AgentKind, EnvKind};
use option_critic::experiment::{self, EnvInstance, TrainedAgent, CSV_HEADER, HEATMAP_HEADER};
use option_critic::env::GridMap;
use option_critic::RunConfig;

fn fourrooms(options: usize, episodes: usize, runs: usize) -> RunConfig {
    let text = format!(
        "[run]\nenv = fourrooms\nagent = oc\nruns = {runs}\nseed = 3\nepisodes = {episodes}\n\n[agent]\nn_options = {options}\n"
    );
    RunConfig::parse(&text, "test.cfg", Path::new(".")).unwrap()
}

#[test]
fn checkpoint_files_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fourrooms(4, 15, 1);
    let out = experiment::run_single(&cfg, 0).unwrap();
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    out.checkpoint.save(&a).unwrap();
    let loaded = Checkpoint::load(&a).unwrap();
    loaded.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // Restoring into an agent and checkpointing again changes nothing.
    let env = EnvInstance::build(&cfg).unwrap();
    let agent = TrainedAgent::from_checkpoint(&loaded, &cfg, &env).unwrap();
    assert_eq!(agent.to_checkpoint(&cfg, &env).to_text(), loaded.to_text());
}

#[test]
fn checkpoint_with_other_option_count_is_refused() {
    let four = experiment::run_single(&fourrooms(4, 1, 1), 0).unwrap().checkpoint;
    let eight = fourrooms(8, 1, 1);
    let env = EnvInstance::build(&eight).unwrap();
    let err = TrainedAgent::from_checkpoint(&four, &eight, &env).unwrap_err();
    assert!(err.to_string().contains("option"), "{err}");
    assert!(experiment::evaluate(&four, &eight).is_err());
}

#[test]
fn untrained_heatmap_is_one_half_with_walls_marked() {
    let cfg = fourrooms(2, 0, 1);
    let ck = experiment::run_single(&cfg, 0).unwrap().checkpoint;
    let csv = experiment::heatmap_csv(&ck).unwrap();
    let map = GridMap::canonical();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(HEATMAP_HEADER));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2 * map.rows() * map.cols());
    for row in rows {
        let (r, c): (usize, usize) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        let beta: f64 = row[3].parse().unwrap();
        let want = if map.state_at(r, c).is_some() { 0.5 } else { -1.0 };
        assert_eq!(beta, want);
    }
}

#[test]
fn heatmap_needs_a_four_rooms_option_critic_checkpoint() {
    let mut cfg = fourrooms(1, 0, 1);
    cfg.agent_kind = AgentKind::Sarsa;
    let ck = experiment::run_single(&cfg, 0).unwrap().checkpoint;
    assert!(experiment::heatmap_csv(&ck).is_err());
}

#[test]
fn mean_csv_matches_run_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fourrooms(4, 12, 3);
    let outputs = experiment::train_all(&cfg, 2).unwrap();
    experiment::write_outputs(dir.path(), &outputs).unwrap();
    let read = |name: &str| -> Vec<Vec<f64>> {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
    };
    let runs: Vec<_> = (0..3).map(|k| read(&format!("run_{k}.csv"))).collect();
    let mean = read("mean.csv");
    assert_eq!(mean.len(), 12);
    for (e, row) in mean.iter().enumerate() {
        for col in 1..6 {
            let want = runs.iter().map(|r| r[e][col]).sum::<f64>() / 3.0;
            assert!((row[col] - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn runs_are_reproducible_regardless_of_worker_count() {
    let cfg = fourrooms(4, 10, 3);
    let serial = experiment::train_all(&cfg, 1).unwrap();
    let parallel = experiment::train_all(&cfg, 3).unwrap();
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.seed, 3 + a.run as u64);
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.checkpoint, b.checkpoint);
    }
}

#[test]
fn snapshots_follow_checkpoint_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fourrooms(2, 10, 1);
    cfg.checkpoint_every = 4;
    let outputs = experiment::train_all(&cfg, 1).unwrap();
    let written = experiment::write_outputs(dir.path(), &outputs).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"run_0_ep4.ckpt".to_string()));
    assert!(names.contains(&"run_0_ep8.ckpt".to_string()));
    assert!(!names.iter().any(|n| n.contains("ep10")));
}

#[test]
fn every_agent_kind_evaluates_from_its_checkpoint() {
    for kind in [AgentKind::OptionCritic, AgentKind::Sarsa, AgentKind::ActorCritic] {
        let mut cfg = fourrooms(4, 20, 1);
        cfg.agent_kind = kind;
        if kind != AgentKind::OptionCritic {
            cfg.agent.n_options = 1;
        }
        let ck = experiment::run_single(&cfg, 0).unwrap().checkpoint;
        assert_eq!(ck.agent, kind.name());
        cfg.agent.episodes = 3;
        let logs = experiment::evaluate(&ck, &cfg).unwrap();
        assert_eq!(logs.len(), 3);
    }
}

#[test]
fn mdp_environment_runs_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("chain.mdp"),
        "mdp 2 1 0.9\nt 0 0 1 1\nt 1 0 1 1\nr 0 0 1\nstart 0 1\nterminal 1\n",
    )
    .unwrap();
    let cfg_path = dir.path().join("chain.cfg");
    std::fs::write(&cfg_path, "[run]\nenv = mdp\nepisodes = 3\n[env]\nmdp = chain.mdp\n").unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.env, EnvKind::Mdp);
    let out = experiment::run_single(&cfg, 0).unwrap();
    assert!(out.logs.iter().all(|l| l.steps == 1 && l.undiscounted_return == 1.0));
}
