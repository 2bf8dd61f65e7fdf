//! Pipelines behind each CLI subcommand. Every function writes its artifacts
//! under the context's output directory and returns the parsed results.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srlab_core::agents::{
    act, bc_train_step, rl_train_step, AgentBundle, AgentCheckpoint, AgentKind, AgentOptimizers, BCPolicy,
    RewardSource,
};
use srlab_core::dataset::{dataset_stats, sample_batch, Batch, DemoDataset, Trajectory};
use srlab_core::envs::{generate_demos, rollout_from, DemoReport, MazeEnv, Rollout};
use srlab_core::nnkit::{AdamState, Mlp, Tensor};
use srlab_core::srreward::{compute_losses, train_step, LossBreakdown, SRHyper, SRModel, SROptimizer};
use srlab_core::SplitRng;

use crate::config::{AgentMode, EnvName, ExperimentConfig, Scale};
use crate::report::{mean_std, normalize_return, write_csv, write_pgm, NormalizationSpec, PgmScale, RunReport, SeedResult};

/// Deterministic RNG for a named stage of a seeded run.
pub fn stream_rng(seed: u64, label: &str) -> SplitRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    SplitRng::seed_from_u64(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")))
}

/// Resolved configuration plus output location.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub hash: String,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        let out = out.unwrap_or_else(|| cfg.train.out_dir.clone());
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let hash = cfg.hash();
        Ok(Self { cfg, out, hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.cfg.env.dataset.clone().unwrap_or_else(|| self.path("demos.jsonl"))
    }

    pub fn load_dataset(&self) -> Result<DemoDataset> {
        let p = self.dataset_path();
        ensure!(p.exists(), "dataset {} not found; run gen-demos first", p.display());
        Ok(DemoDataset::load(&p)?)
    }

    pub fn sr_checkpoint(&self, seed: u64) -> PathBuf {
        self.path(&format!("sr_model_seed{seed}.json"))
    }

    pub fn agent_checkpoint(&self, seed: u64, which: &str) -> PathBuf {
        self.path(&format!("agent_{which}_seed{seed}.json"))
    }

    fn maze(&self) -> Result<&MazeEnv> {
        match self.cfg.env.name {
            EnvName::Maze => Ok(&self.cfg.env.maze),
            EnvName::Gridworld => bail!("this command needs the maze environment"),
        }
    }

    fn normalization(&self) -> Result<NormalizationSpec> {
        NormalizationSpec::new(self.cfg.eval.score_min, self.cfg.eval.score_max)
    }
}

#[derive(Debug, Clone, Serialize)]
struct DemoReportFile {
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    report: DemoReport,
}

/// Generate expert demonstrations into `<out>/demos.jsonl`.
pub fn gen_demos(ctx: &Ctx, seed: u64) -> Result<DemoReport> {
    let env = ctx.maze()?;
    let mut rng = stream_rng(seed, "gen-demos");
    let (ds, report) = generate_demos(env, ctx.cfg.env.n_demos, &mut rng)?;
    ds.save(&ctx.path("demos.jsonl"))?;
    let file = DemoReportFile {
        config_hash: ctx.hash.clone(),
        seed,
        report,
    };
    std::fs::write(ctx.path("demos_report.json"), serde_json::to_string_pretty(&file)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub bellman: f64,
    pub prediction: f64,
    pub magnitude: f64,
    pub neg_sample: f64,
    pub total: f64,
}

impl LossRow {
    fn new(step: usize, b: &LossBreakdown) -> Self {
        Self {
            step,
            bellman: b.bellman,
            prediction: b.prediction,
            magnitude: b.magnitude,
            neg_sample: b.neg_sample,
            total: b.total,
        }
    }
}

pub struct SrRun {
    pub model: SRModel,
    pub hyper: SRHyper,
    pub trace: Vec<LossRow>,
    pub checkpoint: PathBuf,
}

/// Pretrain SR-Reward on the demonstrations, optionally continuing from a
/// saved model. Writes the loss trace and checkpoints.
pub fn train_reward(ctx: &Ctx, seed: u64, resume: Option<&Path>) -> Result<SrRun> {
    let ds = ctx.load_dataset()?;
    let stats = dataset_stats(&ds);
    let hyper = ctx.cfg.sr.hyper(ctx.cfg.train.batch_size, &stats)?;
    let mut rng = stream_rng(seed, "train-reward");
    let mut model = match resume {
        Some(p) => SRModel::load(p)?.0,
        None => SRModel::new(ds.state_dim(), ds.action_dim(), &ctx.cfg.sr.arch(), &mut rng.split())?,
    };
    ensure!(
        model.state_dim() == ds.state_dim() && model.action_dim() == ds.action_dim(),
        "checkpoint dimensions do not match the dataset"
    );
    let mut opt = SROptimizer::new(&model, hyper.lr_sr);
    let interval = ctx.cfg.sr.checkpoint_interval;
    let mut trace = Vec::with_capacity(hyper.pretrain_steps);
    for step in 1..=hyper.pretrain_steps {
        let batch = Batch::from_transitions(&sample_batch(&ds, hyper.batch_size, &mut rng)?)?;
        let out = train_step(&mut model, &mut opt, &batch, &hyper, &mut rng)
            .with_context(|| format!("SR training step {step}"))?;
        trace.push(LossRow::new(step, &out.breakdown));
        if interval > 0 && step % interval == 0 && step < hyper.pretrain_steps {
            model.save(&ctx.path(&format!("sr_model_seed{seed}_step{step}.json")), &hyper)?;
        }
    }
    let checkpoint = ctx.sr_checkpoint(seed);
    model.save(&checkpoint, &hyper)?;
    write_csv(&ctx.path(&format!("sr_loss_seed{seed}.csv")), &ctx.hash, Some(seed), &trace)?;
    Ok(SrRun {
        model,
        hyper,
        trace,
        checkpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub q_loss: Option<f64>,
    pub v_loss: Option<f64>,
    pub policy_loss: f64,
    pub mean_reward: Option<f64>,
}

pub struct AgentRun {
    pub trace: Vec<EvalRow>,
    pub best_return: f64,
    pub best_step: usize,
    pub final_return: f64,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
}

/// Deterministic rollouts of `policy` from each start.
pub fn evaluate_policy(env: &MazeEnv, policy: &Mlp, starts: &[Vec<f64>]) -> Result<Vec<Rollout>> {
    let mut unused = SplitRng::seed_from_u64(0);
    let mut err = None;
    let rollouts = starts
        .iter()
        .map(|s| {
            rollout_from(env, s.clone(), |x| match act(policy, x, true, 0.0, &mut unused) {
                Ok(a) => a,
                Err(e) => {
                    err.get_or_insert(e);
                    vec![0.0; x.len()]
                }
            })
        })
        .collect();
    match err {
        Some(e) => Err(e.into()),
        None => Ok(rollouts),
    }
}

fn starts(env: &MazeEnv, n: usize, rng: &mut SplitRng) -> Vec<Vec<f64>> {
    (0..n).map(|_| env.reset(rng)).collect()
}

fn summarize(rollouts: &[Rollout]) -> (f64, f64, f64) {
    let returns: Vec<f64> = rollouts.iter().map(Rollout::true_return).collect();
    let (m, s) = mean_std(&returns);
    let succ = rollouts.iter().filter(|r| r.success).count() as f64 / rollouts.len().max(1) as f64;
    (m, s, succ)
}

/// Train the configured agent, evaluating every `eval_interval` steps and
/// keeping the checkpoint with the best mean return.
pub fn train_agent(ctx: &Ctx, seed: u64, sr_checkpoint: Option<&Path>) -> Result<AgentRun> {
    let env = ctx.maze()?.clone();
    let ds = ctx.load_dataset()?;
    let cfg = &ctx.cfg;
    let hyper = cfg.agent.hyper()?;
    let mut rng = stream_rng(seed, "train-agent");
    let eval_starts = starts(&env, cfg.eval.eval_rollouts, &mut stream_rng(seed, "train-eval"));
    let steps = cfg.train.training_steps;
    ensure!(steps > 0, "train.training_steps must be positive");

    enum Learner {
        Iql {
            bundle: AgentBundle,
            opts: AgentOptimizers,
            sr: Option<(SRModel, SROptimizer, SRHyper)>,
        },
        Bc {
            policy: BCPolicy,
            opt: AdamState,
        },
    }

    let mut learner = match cfg.agent.kind {
        AgentMode::Iql => {
            let bundle = AgentBundle::new(ds.state_dim(), ds.action_dim(), &cfg.agent.arch(), &mut rng.split())?;
            let opts = AgentOptimizers::new(&bundle, &hyper);
            let sr = if hyper.use_sr_reward {
                let p = sr_checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.sr_checkpoint(seed));
                ensure!(p.exists(), "SR checkpoint {} not found; run train-reward first", p.display());
                let (model, sr_hyper) = SRModel::load(&p)?;
                let opt = SROptimizer::new(&model, sr_hyper.lr_sr);
                Some((model, opt, sr_hyper))
            } else {
                ensure!(ds.has_rewards(), "use_sr_reward is off but the dataset has no rewards");
                None
            };
            Learner::Iql { bundle, opts, sr }
        }
        AgentMode::Bc => {
            let policy = BCPolicy::new(ds.state_dim(), ds.action_dim(), &cfg.agent.actor_mlp, &mut rng.split())?;
            let opt = AdamState::new(&policy.net.params, hyper.lr_actor);
            Learner::Bc { policy, opt }
        }
    };

    let snapshot = |l: &Learner| match l {
        Learner::Iql { bundle, .. } => AgentCheckpoint::new(AgentKind::Iql {
            bundle: bundle.clone(),
            hyper: hyper.clone(),
        }),
        Learner::Bc { policy, .. } => AgentCheckpoint::new(AgentKind::Bc { policy: policy.clone() }),
    };

    let mut trace = Vec::new();
    let mut best: Option<(f64, usize, AgentCheckpoint)> = None;
    let mut final_return = f64::NAN;
    for step in 1..=steps {
        let batch = Batch::from_transitions(&sample_batch(&ds, cfg.train.batch_size, &mut rng)?)?;
        let (q_loss, v_loss, policy_loss, mean_reward) = match &mut learner {
            Learner::Iql { bundle, opts, sr } => {
                let rep = match sr {
                    Some((model, opt, sh)) => {
                        let out = if cfg.sr.co_train {
                            train_step(model, opt, &batch, sh, &mut rng)?
                        } else {
                            compute_losses(model, &batch, sh, &mut rng)?
                        };
                        rl_train_step(
                            bundle,
                            opts,
                            &batch,
                            RewardSource::Given(&out.reward),
                            out.negatives.as_ref(),
                            &hyper,
                        )?
                    }
                    None => rl_train_step(bundle, opts, &batch, RewardSource::Dataset, None, &hyper)?,
                };
                (Some(rep.q_loss), Some(rep.v_loss), rep.policy_loss, Some(rep.mean_reward))
            }
            Learner::Bc { policy, opt } => (None, None, bc_train_step(policy, opt, &batch)?, None),
        };
        if step % cfg.train.eval_interval == 0 || step == steps {
            let ck = snapshot(&learner);
            let rollouts = evaluate_policy(&env, ck.agent.policy_net(), &eval_starts)?;
            let (mean_return, _, success_rate) = summarize(&rollouts);
            trace.push(EvalRow {
                step,
                mean_return,
                success_rate,
                q_loss,
                v_loss,
                policy_loss,
                mean_reward,
            });
            final_return = mean_return;
            if best.as_ref().map_or(true, |(b, _, _)| mean_return > *b) {
                best = Some((mean_return, step, ck));
            }
        }
    }
    let (best_return, best_step, best_ck) = best.expect("at least one evaluation");
    let best_checkpoint = ctx.agent_checkpoint(seed, "best");
    let final_checkpoint = ctx.agent_checkpoint(seed, "final");
    best_ck.save(&best_checkpoint)?;
    snapshot(&learner).save(&final_checkpoint)?;
    if let Learner::Iql { sr: Some((model, _, sh)), .. } = &learner {
        if cfg.sr.co_train {
            model.save(&ctx.path(&format!("sr_model_cotrained_seed{seed}.json")), sh)?;
        }
    }
    write_csv(&ctx.path(&format!("agent_eval_seed{seed}.csv")), &ctx.hash, Some(seed), &trace)?;
    Ok(AgentRun {
        trace,
        best_return,
        best_step,
        final_return,
        best_checkpoint,
        final_checkpoint,
    })
}

/// Evaluate one agent checkpoint on `n` fresh rollouts seeded by `seed`.
pub fn eval_checkpoint(ctx: &Ctx, seed: u64, checkpoint: &Path) -> Result<SeedResult> {
    let env = ctx.maze()?;
    let ck = AgentCheckpoint::load(checkpoint)?;
    let n = ctx.cfg.eval.final_rollouts;
    ensure!(n > 0, "eval.final_rollouts must be positive");
    let st = starts(env, n, &mut stream_rng(seed, "final-eval"));
    let rollouts = evaluate_policy(env, ck.agent.policy_net(), &st)?;
    let (mean_return, std_return, success_rate) = summarize(&rollouts);
    let normalized = normalize_return(mean_return, &ctx.normalization()?)?;
    Ok(SeedResult {
        seed,
        n_rollouts: n,
        mean_return,
        std_return,
        success_rate,
        normalized,
        normalized_x100: 100.0 * normalized,
    })
}

/// Evaluate each seed's best checkpoint (or `checkpoint` for every seed) and
/// write the per-seed CSV and the JSON report.
pub fn eval(ctx: &Ctx, seeds: &[u64], checkpoint: Option<&Path>) -> Result<RunReport> {
    let t0 = Instant::now();
    let mut rows = Vec::with_capacity(seeds.len());
    let mut traces = Vec::new();
    for &seed in seeds {
        let p = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.agent_checkpoint(seed, "best"));
        rows.push(eval_checkpoint(ctx, seed, &p).with_context(|| format!("evaluating {}", p.display()))?);
        for t in [format!("sr_loss_seed{seed}.csv"), format!("agent_eval_seed{seed}.csv")] {
            if ctx.path(&t).exists() {
                traces.push(t);
            }
        }
    }
    let report = RunReport::new(rows, traces, t0.elapsed().as_secs_f64());
    write_csv(&ctx.path("eval_seeds.csv"), &ctx.hash, None, &report.per_seed)?;
    std::fs::write(ctx.path("eval_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptRow {
    pub noise: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean SR-Reward return of the demonstrations with Gaussian noise of each
/// level added to states and actions. Each perturbation seed draws one set of
/// standard-normal offsets that is scaled by every noise level.
pub fn corrupted_returns(
    model: &SRModel,
    ds: &DemoDataset,
    noise_levels: &[f64],
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<CorruptRow>> {
    ensure!(n_seeds > 0, "need at least one perturbation seed");
    ensure!(noise_levels.iter().all(|n| *n >= 0.0), "noise levels must be non-negative");
    let mut per_level = vec![Vec::with_capacity(n_seeds); noise_levels.len()];
    for p in 0..n_seeds {
        let mut rng = stream_rng(seed, &format!("corrupt-{p}"));
        let offsets: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = ds
            .trajectories()
            .iter()
            .map(|t| {
                let mut draw = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    rows.iter().map(|r| r.iter().map(|_| rng.normal()).collect()).collect()
                };
                let zs = draw(&t.states);
                let za = draw(&t.actions);
                (zs, za)
            })
            .collect();
        for (li, &level) in noise_levels.iter().enumerate() {
            let mut total = 0.0;
            for (t, (zs, za)) in ds.trajectories().iter().zip(&offsets) {
                let shift = |rows: &[Vec<f64>], z: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    rows.iter()
                        .zip(z)
                        .map(|(r, zr)| r.iter().zip(zr).map(|(v, e)| v + level * e).collect())
                        .collect()
                };
                let noisy = Trajectory::new(shift(&t.states, zs), shift(&t.actions, za), None)?;
                total += model.trajectory_return(&noisy)?;
            }
            per_level[li].push(total / ds.trajectories().len() as f64);
        }
    }
    Ok(noise_levels
        .iter()
        .zip(per_level)
        .map(|(&noise, vals)| {
            let (mean, std) = mean_std(&vals);
            CorruptRow {
                noise,
                mean,
                std,
                n: vals.len(),
            }
        })
        .collect())
}

pub fn corrupt_eval(ctx: &Ctx, seed: u64, sr_checkpoint: Option<&Path>, noise_levels: &[f64]) -> Result<Vec<CorruptRow>> {
    let ds = ctx.load_dataset()?;
    let p = sr_checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.sr_checkpoint(seed));
    let (model, _) = SRModel::load(&p).with_context(|| format!("loading {}", p.display()))?;
    let rows = corrupted_returns(&model, &ds, noise_levels, ctx.cfg.eval.perturbation_seeds, seed)?;
    write_csv(&ctx.path(&format!("corrupt_eval_seed{seed}.csv")), &ctx.hash, Some(seed), &rows)?;
    Ok(rows)
}

pub const HEATMAP_NAMES: [&str; 5] = ["mean", "up", "right", "down", "left"];
/// Unit actions for up, right, down, left with `y` pointing up.
pub const HEATMAP_ACTIONS: [[f64; 2]; 4] = [[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]];

/// Reward grids over the unit square. Row 0 is the top (largest `y`).
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub resolution: usize,
    /// Grids in [`HEATMAP_NAMES`] order, each row-major.
    pub grids: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let r = self.resolution as f64;
        [(col as f64 + 0.5) / r, 1.0 - (row as f64 + 0.5) / r]
    }

    pub fn mean_grid(&self) -> &[f64] {
        &self.grids[0]
    }
}

pub fn compute_heatmap(model: &SRModel, resolution: usize) -> Result<Heatmap> {
    ensure!(model.state_dim() == 2 && model.action_dim() == 2, "heatmap needs 2-D states and actions");
    ensure!(resolution > 0, "resolution must be positive");
    let mut hm = Heatmap {
        resolution,
        grids: vec![],
    };
    let cells: Vec<Vec<f64>> = (0..resolution * resolution)
        .map(|i| hm.cell_center(i / resolution, i % resolution).to_vec())
        .collect();
    let states = Tensor::from_rows(&cells)?;
    let dirs: Vec<Vec<f64>> = HEATMAP_ACTIONS
        .iter()
        .map(|a| {
            let actions = Tensor::from_rows(&vec![a.to_vec(); cells.len()])?;
            model.reward_batch(&states, &actions)
        })
        .collect::<srlab_core::Result<_>>()?;
    let mean = (0..cells.len())
        .map(|i| (dirs[0][i] + dirs[1][i] + dirs[2][i] + dirs[3][i]) / 4.0)
        .collect();
    hm.grids.push(mean);
    hm.grids.extend(dirs);
    Ok(hm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct HeatmapCell {
    row: usize,
    col: usize,
    x: f64,
    y: f64,
    reward: f64,
}

pub fn heatmap(ctx: &Ctx, seed: u64, sr_checkpoint: Option<&Path>, resolution: usize) -> Result<Heatmap> {
    let p = sr_checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.sr_checkpoint(seed));
    let (model, _) = SRModel::load(&p).with_context(|| format!("loading {}", p.display()))?;
    let hm = compute_heatmap(&model, resolution)?;
    let mut scales = std::collections::BTreeMap::<String, PgmScale>::new();
    for (name, grid) in HEATMAP_NAMES.iter().zip(&hm.grids) {
        let cells: Vec<HeatmapCell> = grid
            .iter()
            .enumerate()
            .map(|(i, &reward)| {
                let (row, col) = (i / resolution, i % resolution);
                let [x, y] = hm.cell_center(row, col);
                HeatmapCell { row, col, x, y, reward }
            })
            .collect();
        write_csv(&ctx.path(&format!("heatmap_{name}_seed{seed}.csv")), &ctx.hash, Some(seed), &cells)?;
        let scale = write_pgm(&ctx.path(&format!("heatmap_{name}_seed{seed}.pgm")), resolution, resolution, grid)?;
        scales.insert(name.to_string(), scale);
    }
    std::fs::write(
        ctx.path(&format!("heatmap_scale_seed{seed}.json")),
        serde_json::to_string_pretty(&scales)?,
    )?;
    Ok(hm)
}

/// Mean heatmap reward away from the demonstrations against the mean
/// reward on the demonstration pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDemoSummary {
    pub radius: f64,
    pub n_off_cells: usize,
    pub off_mean: f64,
    pub on_demo_mean: f64,
}

pub fn off_demo_summary(hm: &Heatmap, model: &SRModel, ds: &DemoDataset, radius: f64) -> Result<OffDemoSummary> {
    let demo_states: Vec<&Vec<f64>> = ds.all_states().collect();
    let off: Vec<f64> = hm
        .mean_grid()
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let c = hm.cell_center(i / hm.resolution, i % hm.resolution);
            demo_states
                .iter()
                .all(|s| ((s[0] - c[0]).powi(2) + (s[1] - c[1]).powi(2)).sqrt() > radius)
        })
        .map(|(_, v)| *v)
        .collect();
    let pairs: Vec<f64> = dataset_pair_rewards(model, ds)?;
    Ok(OffDemoSummary {
        radius,
        n_off_cells: off.len(),
        off_mean: mean_std(&off).0,
        on_demo_mean: mean_std(&pairs).0,
    })
}

/// SR-Reward at every `(s, a)` pair in the dataset.
pub fn dataset_pair_rewards(model: &SRModel, ds: &DemoDataset) -> Result<Vec<f64>> {
    let ts = ds.transitions();
    let s = Tensor::from_rows(&ts.iter().map(|t| t.s.clone()).collect::<Vec<_>>())?;
    let a = Tensor::from_rows(&ts.iter().map(|t| t.a.clone()).collect::<Vec<_>>())?;
    Ok(model.reward_batch(&s, &a)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub sigma: f64,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Full factorial over β × σ. The default cell (β = median std, σ = 5β) is
/// always included. Each cell runs reward training, agent training and
/// evaluation for every configured seed in its own subdirectory.
pub fn sweep_ns(ctx: &Ctx, betas: &[f64], sigmas: &[f64]) -> Result<Vec<SweepRow>> {
    let ds = ctx.load_dataset()?;
    let beta0 = dataset_stats(&ds).median_std;
    let with_default = |xs: &[f64], d: f64| {
        let mut v = xs.to_vec();
        if !v.contains(&d) {
            v.push(d);
        }
        v
    };
    let betas = with_default(betas, beta0);
    let sigmas = with_default(sigmas, 5.0 * beta0);
    let dataset = ctx.dataset_path();
    let mut rows = Vec::new();
    for (bi, &beta) in betas.iter().enumerate() {
        for (si, &sigma) in sigmas.iter().enumerate() {
            let mut cfg = ctx.cfg.clone();
            cfg.sr.beta = Scale::Value(beta);
            cfg.sr.sigma = Scale::Value(sigma);
            cfg.sr.negative_sampling = true;
            cfg.agent.kind = AgentMode::Iql;
            cfg.agent.use_sr_reward = true;
            cfg.env.dataset = Some(dataset.clone());
            let cell = Ctx::new(cfg, Some(ctx.path(&format!("sweep/beta{bi}_sigma{si}"))))?;
            let seeds = cell.cfg.train.seeds.clone();
            let vals = run_cell(&cell, &seeds)?;
            let (mean, std) = mean_std(&vals);
            rows.push(SweepRow {
                beta,
                sigma,
                mean,
                std,
                n_seeds: vals.len(),
            });
        }
    }
    write_csv(&ctx.path("sweep_ns.csv"), &ctx.hash, None, &rows)?;
    Ok(rows)
}

/// Reward training, agent training and evaluation; normalized return per seed.
pub fn run_cell(ctx: &Ctx, seeds: &[u64]) -> Result<Vec<f64>> {
    for &seed in seeds {
        train_reward(ctx, seed, None)?;
        train_agent(ctx, seed, None)?;
    }
    Ok(eval(ctx, seeds, None)?.per_seed.iter().map(|r| r.normalized).collect())
}
