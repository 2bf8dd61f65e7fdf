//! Tabular consistency checks on the gridworld.

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};
use srlab_core::dataset::{Batch, Transition};
use srlab_core::envs::{gridworld_as_tabular, GridWorld};
use srlab_core::srreward::{train_step, SRHyper, SRModel, SROptimizer};
use srlab_core::tabular::{
    exact_sr, occupancy_by_rollout, occupancy_direct, occupancy_from_sr, one_hot_pair_features, successor_features,
    td_sr, TabularMDP, TabularPolicy,
};
use srlab_core::nnkit::Tensor;
use srlab_core::SplitRng;

use crate::commands::{stream_rng, Ctx};
use crate::report::write_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub check: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Where the largest error occurred.
    pub location: String,
}

impl OracleRow {
    fn new(check: &str, max_error: f64, tolerance: f64, location: String) -> Self {
        Self {
            check: check.to_string(),
            max_error,
            tolerance,
            pass: max_error < tolerance,
            location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, check: &str) -> Option<&OracleRow> {
        self.rows.iter().find(|r| r.check == check)
    }
}

/// Largest `|a_i − b_i|` and its index.
fn max_abs_diff(a: &[f64], b: &[f64]) -> (f64, usize) {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .enumerate()
        .fold((0.0, 0), |(m, im), (i, d)| if d > m || d.is_nan() { (d, i) } else { (m, im) })
}

fn pair_label(x: usize, n_a: usize) -> String {
    format!("pair {x} (s{} a{})", x / n_a, x % n_a)
}

/// Settings for [`frozen_encoder_rewards`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoderSetup {
    pub gamma: f64,
    pub steps: usize,
    pub lr: f64,
    /// Learning rate reached by linear annealing at the last step.
    pub lr_final: f64,
    pub batch_size: usize,
    pub target_update: f64,
    pub sr_hidden: Vec<usize>,
}

/// Transitions for every `(s, a, s')` with `s'` repeated in proportion to
/// `T(s'|s,a)` and `a' = π(s')`, so uniform sampling reproduces the model
/// exactly. `π` must be deterministic and the probabilities rational with a
/// small common denominator.
pub fn exact_multiplicity_transitions(mdp: &TabularMDP, pi: &TabularPolicy) -> Result<Vec<Transition>> {
    let probs: Vec<f64> = mdp.t.iter().flatten().flatten().copied().filter(|p| *p > 0.0).collect();
    let k = (1..=10_000)
        .find(|k| probs.iter().all(|p| (p * *k as f64 - (p * *k as f64).round()).abs() < 1e-9))
        .ok_or_else(|| anyhow::anyhow!("transition probabilities have no small common denominator"))?;
    let greedy: Vec<usize> = pi
        .pi
        .iter()
        .map(|row| row.iter().position(|p| *p == 1.0))
        .collect::<Option<_>>()
        .ok_or_else(|| anyhow::anyhow!("policy is not deterministic"))?;
    let one_hot = |i: usize, n: usize| {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    };
    let mut out = Vec::new();
    for s in 0..mdp.n_s {
        for a in 0..mdp.n_a {
            for (s2, p) in mdp.t[s][a].iter().enumerate() {
                let reps = (p * k as f64).round() as usize;
                for _ in 0..reps {
                    out.push(Transition {
                        s: one_hot(s, mdp.n_s),
                        a: one_hot(a, mdp.n_a),
                        s_next: one_hot(s2, mdp.n_s),
                        a_next: one_hot(greedy[s2], mdp.n_a),
                        terminal: false,
                        reward: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// `‖ψ(s,a)‖₂` for the exact successor features of `[e_s; e_a]`, per pair.
pub fn exact_feature_norms(mdp: &TabularMDP, pi: &TabularPolicy, gamma: f64) -> Result<Vec<f64>> {
    let sr = exact_sr(mdp, pi, gamma)?;
    let psi = successor_features(&sr, &one_hot_pair_features(mdp.n_s, mdp.n_a))?;
    Ok(psi.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect())
}

/// Train an SR head on top of a frozen one-hot encoder with the exact
/// transition frequencies and return its reward `‖M(s,a)‖₂` for every pair.
pub fn frozen_encoder_rewards(
    mdp: &TabularMDP,
    pi: &TabularPolicy,
    setup: &FrozenEncoderSetup,
    rng: &mut SplitRng,
) -> Result<Vec<f64>> {
    let data = exact_multiplicity_transitions(mdp, pi)?;
    let mut model = SRModel::with_one_hot_encoder(mdp.n_s, mdp.n_a, &setup.sr_hidden, &[], rng)?;
    let hyper = SRHyper {
        gamma: setup.gamma,
        lr_sr: setup.lr,
        pretrain_steps: setup.steps,
        batch_size: setup.batch_size,
        target_update: setup.target_update,
        negative_sampling: false,
        magnitude_loss: false,
        prediction_loss: false,
        freeze_encoder: true,
        ..SRHyper::default()
    };
    hyper.validate()?;
    let mut opt = SROptimizer::new(&model, hyper.lr_sr);
    for step in 0..setup.steps {
        let frac = step as f64 / setup.steps as f64;
        opt.adam.lr = setup.lr + frac * (setup.lr_final - setup.lr);
        let rows: Vec<Transition> = (0..setup.batch_size).map(|_| data[rng.below(data.len())].clone()).collect();
        train_step(&mut model, &mut opt, &Batch::from_transitions(&rows)?, &hyper, rng)?;
    }
    let pairs = one_hot_pair_features(mdp.n_s, mdp.n_a);
    let states: Vec<Vec<f64>> = pairs.iter().map(|f| f[..mdp.n_s].to_vec()).collect();
    let actions: Vec<Vec<f64>> = pairs.iter().map(|f| f[mdp.n_s..].to_vec()).collect();
    Ok(model.reward_batch(&Tensor::from_rows(&states)?, &Tensor::from_rows(&actions)?)?)
}

/// Horizon after which `γ^H < 1e-6`.
fn rollout_horizon(gamma: f64) -> usize {
    if gamma == 0.0 {
        1
    } else {
        ((1e-6f64).ln() / gamma.ln()).ceil() as usize + 1
    }
}

pub const TD_TOL: f64 = 1e-2;
pub const ROW_SUM_TOL: f64 = 1e-9;
pub const OCCUPANCY_TOL: f64 = 1e-9;
pub const MC_SE_TOL: f64 = 3.0;
pub const FROZEN_TOL: f64 = 0.05;

/// Run every tabular check for `grid` and its shortest-path expert.
pub fn run_checks(grid: &GridWorld, ctx_cfg: &crate::config::EvalSection, sr_hidden: &[usize], seed: u64) -> Result<OracleReport> {
    let mdp = gridworld_as_tabular(grid)?;
    let pi = grid.expert_policy()?;
    let gamma = ctx_cfg.oracle_gamma;
    let td_gamma = ctx_cfg.oracle_td_gamma.unwrap_or(gamma);
    let n_a = mdp.n_a;
    let mut rows = Vec::new();

    let exact = exact_sr(&mdp, &pi, gamma)?;
    let td = td_sr(&mdp, &pi, td_gamma, ctx_cfg.oracle_td_steps, ctx_cfg.oracle_td_lr, &mut stream_rng(seed, "oracle-td"))?;
    let (e, i) = max_abs_diff(&td.values, &exact.values);
    let n = exact.n();
    rows.push(OracleRow::new(
        "td_vs_exact",
        e,
        TD_TOL,
        format!("{} -> {}", pair_label(i / n, n_a), pair_label(i % n, n_a)),
    ));

    let sums: Vec<f64> = (0..n).map(|x| exact.row(x).iter().sum()).collect();
    let horizon = if gamma < 1.0 { 1.0 / (1.0 - gamma) } else { f64::INFINITY };
    let (e, i) = max_abs_diff(&sums, &vec![horizon; n]);
    rows.push(OracleRow::new("row_sums", e, ROW_SUM_TOL, pair_label(i, n_a)));

    let from_sr = occupancy_from_sr(&mdp, &pi, &exact)?;
    let direct = occupancy_direct(&mdp, &pi, gamma)?;
    let (e, i) = max_abs_diff(&from_sr, &direct);
    rows.push(OracleRow::new("occupancy_identity", e, OCCUPANCY_TOL, pair_label(i, n_a)));

    let mc = occupancy_by_rollout(
        &mdp,
        &pi,
        gamma,
        rollout_horizon(gamma),
        ctx_cfg.oracle_rollout_episodes,
        &mut stream_rng(seed, "oracle-rollout"),
    )?;
    let z: Vec<f64> = mc
        .mean
        .iter()
        .zip(&mc.std_err)
        .zip(&direct)
        .map(|((m, se), d)| {
            let diff = (m - d).abs();
            if diff < 1e-12 {
                0.0
            } else if *se == 0.0 {
                f64::INFINITY
            } else {
                diff / se
            }
        })
        .collect();
    let (e, i) = max_abs_diff(&z, &vec![0.0; z.len()]);
    rows.push(OracleRow::new("occupancy_rollout_se", e, MC_SE_TOL, pair_label(i, n_a)));

    if ctx_cfg.oracle_sr_steps > 0 {
        let setup = FrozenEncoderSetup {
            gamma: td_gamma,
            steps: ctx_cfg.oracle_sr_steps,
            lr: ctx_cfg.oracle_sr_lr,
            lr_final: ctx_cfg.oracle_sr_lr_final,
            batch_size: ctx_cfg.oracle_sr_batch,
            target_update: ctx_cfg.oracle_sr_target_update,
            sr_hidden: sr_hidden.to_vec(),
        };
        ensure!(setup.gamma < 1.0, "oracle gamma must be below 1");
        let got = frozen_encoder_rewards(&mdp, &pi, &setup, &mut stream_rng(seed, "oracle-frozen"))?;
        let want = exact_feature_norms(&mdp, &pi, gamma)?;
        let (e, i) = max_abs_diff(&got, &want);
        rows.push(OracleRow::new("frozen_encoder_sr_reward", e, FROZEN_TOL, pair_label(i, n_a)));
    }
    Ok(OracleReport { rows })
}

pub fn oracle_check(ctx: &Ctx, seed: u64) -> Result<OracleReport> {
    let report = run_checks(&ctx.cfg.env.grid, &ctx.cfg.eval, &ctx.cfg.sr.srnet_mlp, seed)?;
    write_csv(&ctx.path("oracle_check.csv"), &ctx.hash, Some(seed), &report.rows)?;
    Ok(report)
}
