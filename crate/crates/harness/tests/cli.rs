//! Integration tests for the `srlab` commands and binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use srlab::commands::{self, evaluate_policy, Ctx};
use srlab::config::ExperimentConfig;
use srlab::oracle::run_checks;
use srlab::report::read_csv;
use srlab_core::agents::{AgentCheckpoint, AgentKind, BCPolicy};
use srlab_core::envs::{GridWorld, MazeEnv};
use srlab_core::SplitRng;

fn maze_toml() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/maze.toml")
}

fn grid_toml() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/gridworld.toml")
}

const SMALL: [&str; 7] = [
    "sr.pretrain_steps=100",
    "train.training_steps=200",
    "train.eval_interval=100",
    "train.seeds=[3]",
    "eval.eval_rollouts=2",
    "eval.final_rollouts=3",
    "eval.perturbation_seeds=2",
];

fn small_config(extra: &[&str]) -> ExperimentConfig {
    let o: Vec<String> = SMALL.iter().chain(extra).map(|s| s.to_string()).collect();
    ExperimentConfig::load(&maze_toml(), &o).unwrap()
}

fn srlab(dir: &Path, args: &[&str]) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_srlab"));
    cmd.args(args)
        .arg("--config")
        .arg(maze_toml())
        .arg("--out")
        .arg(dir)
        .env("RUST_BACKTRACE", "0");
    for s in SMALL {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

#[test]
fn cli_runs_pipeline_and_bc_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        vec!["gen-demos"],
        vec!["train-reward"],
        vec!["train-agent"],
        vec!["eval"],
        vec!["corrupt-eval", "--noise-levels", "0,0.5"],
        vec!["heatmap", "--resolution", "6"],
    ] {
        let out = srlab(d, &args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in [
        "demos.jsonl",
        "sr_model_seed3.json",
        "sr_loss_seed3.csv",
        "agent_best_seed3.json",
        "agent_final_seed3.json",
        "agent_eval_seed3.csv",
        "eval_seeds.csv",
        "eval_report.json",
        "corrupt_eval_seed3.csv",
        "heatmap_scale_seed3.json",
    ] {
        assert!(d.join(f).exists(), "missing {f}");
    }
    let first = std::fs::read_to_string(d.join("eval_seeds.csv")).unwrap();
    assert!(first.starts_with("# config_hash="));
    let ck = AgentCheckpoint::load(&d.join("agent_best_seed3.json")).unwrap();
    assert!(matches!(ck.agent, AgentKind::Iql { .. }));

    let bc_dir = d.join("bc");
    let dataset = format!("env.dataset=\"{}\"", d.join("demos.jsonl").display());
    let out = Command::new(env!("CARGO_BIN_EXE_srlab"))
        .args(["train-agent", "--config"])
        .arg(maze_toml())
        .arg("--out")
        .arg(&bc_dir)
        .args(SMALL.iter().flat_map(|s| ["--set", s]))
        .args(["--set", "agent.kind=\"bc\"", "--set", &dataset])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ck = AgentCheckpoint::load(&bc_dir.join("agent_best_seed3.json")).unwrap();
    assert!(matches!(ck.agent, AgentKind::Bc { .. }));
}

#[test]
fn cli_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = srlab(dir.path(), &["gen-demos", "--set", "sr.no_such_key=1"]);
    assert!(!out.status.success());
}

#[test]
fn best_checkpoint_return_is_at_least_final() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Ctx::new(small_config(&[]), Some(dir.path().to_path_buf())).unwrap();
    commands::gen_demos(&ctx, 3).unwrap();
    commands::train_reward(&ctx, 3, None).unwrap();
    let run = commands::train_agent(&ctx, 3, None).unwrap();
    assert!(run.best_return >= run.final_return);
    let rows: Vec<commands::EvalRow> = read_csv(&ctx.path("agent_eval_seed3.csv")).unwrap();
    let max = rows.iter().map(|r| r.mean_return).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(run.best_return, max);
}

#[test]
fn fixed_start_deterministic_policy_has_zero_spread() {
    let env = MazeEnv::default();
    let mut rng = SplitRng::seed_from_u64(1);
    let policy = BCPolicy::new(2, 2, &[8], &mut rng).unwrap();
    let starts = vec![vec![0.9, 0.1]; 5];
    let rollouts = evaluate_policy(&env, &policy.net, &starts).unwrap();
    let returns: Vec<f64> = rollouts.iter().map(|r| r.true_return()).collect();
    assert!(returns.iter().all(|r| *r == returns[0]));
}

fn grid_eval(overrides: &[&str]) -> ExperimentConfig {
    let mut o: Vec<String> = vec![
        "eval.oracle_td_steps=3000000".into(),
        "eval.oracle_rollout_episodes=2000".into(),
        "eval.oracle_sr_steps=0".into(),
    ];
    o.extend(overrides.iter().map(|s| s.to_string()));
    ExperimentConfig::load(&grid_toml(), &o).unwrap()
}

#[test]
fn oracle_passes_at_zero_discount() {
    let cfg = grid_eval(&["eval.oracle_gamma=0.0"]);
    let report = run_checks(&GridWorld::default(), &cfg.eval, &cfg.sr.srnet_mlp, 0).unwrap();
    assert!(report.pass(), "{report:?}");
    assert!(report.row("row_sums").unwrap().max_error < 1e-12);
}

#[test]
fn oracle_reports_discount_mismatch_with_location() {
    let cfg = grid_eval(&["eval.oracle_td_gamma=0.8"]);
    let report = run_checks(&GridWorld::default(), &cfg.eval, &cfg.sr.srnet_mlp, 0).unwrap();
    assert!(!report.pass());
    let td = report.row("td_vs_exact").unwrap();
    assert!(!td.pass && td.max_error > 0.1);
    assert!(td.location.contains("pair"), "{}", td.location);
    assert!(report.row("occupancy_identity").unwrap().pass);
}

#[test]
fn single_cell_sweep_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Ctx::new(small_config(&["train.seeds=[3]"]), Some(dir.path().join("sweep"))).unwrap();
    commands::gen_demos(&ctx, 3).unwrap();
    let rows = commands::sweep_ns(&ctx, &[], &[]).unwrap();
    assert_eq!(rows.len(), 1);

    let dataset = format!("env.dataset=\"{}\"", ctx.dataset_path().display());
    let plain = Ctx::new(small_config(&[&dataset]), Some(dir.path().join("plain"))).unwrap();
    let vals = commands::run_cell(&plain, &[3]).unwrap();
    assert_eq!(rows[0].mean, vals[0]);
    assert_eq!(rows[0].n_seeds, 1);
}
