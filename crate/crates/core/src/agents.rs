//! Offline agents that consume SR-Reward: a behavioral-cloning baseline and
//! an expectile-regression actor-critic (expectile V, TD Q, advantage-weighted
//! policy extraction).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::nnkit::{
    eval_with_grads, mlp_forward, mlp_forward_tape, Activation, AdamState, Mlp, MlpSpec, ParamSet, Tensor,
};
use crate::rng::SplitRng;
use crate::srreward::{NegativeBatch, SRModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentArch {
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
}

impl Default for AgentArch {
    fn default() -> Self {
        Self {
            critic_hidden: vec![256, 256],
            actor_hidden: vec![128, 128],
            value_hidden: vec![128, 128],
        }
    }
}

impl AgentArch {
    pub fn toy() -> Self {
        Self {
            critic_hidden: vec![64, 64],
            actor_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentHyper {
    pub gamma: f64,
    pub expectile: f64,
    /// AWR temperature λ in `exp(A/λ)`.
    pub temperature: f64,
    /// Cap on the AWR exponent `A/λ`.
    pub adv_clip: f64,
    pub lr_critic: f64,
    pub lr_value: f64,
    pub lr_actor: f64,
    /// Polyak coefficient for the target critic.
    pub polyak: f64,
    pub use_sr_reward: bool,
    pub augment_with_negatives: bool,
    /// Std of the Gaussian noise added in stochastic `act`.
    pub exploration_noise: f64,
}

impl Default for AgentHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            expectile: 0.7,
            temperature: 3.0,
            adv_clip: 100f64.ln(),
            lr_critic: 3e-4,
            lr_value: 3e-4,
            lr_actor: 1e-4,
            polyak: 0.005,
            use_sr_reward: true,
            augment_with_negatives: true,
            exploration_noise: 0.1,
        }
    }
}

impl AgentHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("agent gamma must lie in (0, 1)"));
        }
        if !(self.expectile >= 0.5 && self.expectile < 1.0) {
            return Err(Error::config("expectile must lie in [0.5, 1)"));
        }
        if !(self.temperature > 0.0) || !(self.adv_clip > 0.0) {
            return Err(Error::config("temperature and adv_clip must be positive"));
        }
        if ![self.lr_critic, self.lr_value, self.lr_actor].iter().all(|v| *v > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return Err(Error::config("polyak must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `|τ − 1(u < 0)| · u²`.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    expectile_weight(u, tau) * u * u
}

fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// `exp(min(A/λ, clip))`.
pub fn awr_weight(advantage: f64, temperature: f64, clip: f64) -> f64 {
    (advantage / temperature).min(clip).exp()
}

fn policy_spec(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Result<MlpSpec> {
    MlpSpec::relu_net(state_dim, hidden, action_dim, Activation::Tanh)
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Training {
            msg: format!("non-finite {what} loss"),
            breakdown: None,
        })
    }
}

fn check_grads(g: &ParamSet, what: &str) -> Result<()> {
    if g.all_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            msg: format!("non-finite {what} gradient"),
            breakdown: None,
        })
    }
}

/// Deterministic action head `ℝ^{d_s} → [−1, 1]^{d_a}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BCPolicy {
    pub net: Mlp,
}

impl BCPolicy {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut SplitRng) -> Result<Self> {
        Ok(Self {
            net: Mlp::new(policy_spec(state_dim, action_dim, hidden)?, rng)?,
        })
    }
}

/// One Adam step on the mean squared action error.
pub fn bc_train_step(policy: &mut BCPolicy, opt: &mut AdamState, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let spec = &policy.net.spec;
    let (loss, grads) = eval_with_grads(&policy.net.params, |tape, b| {
        let s = tape.constant(batch.s.clone());
        let a = tape.constant(batch.a.clone());
        let out = mlp_forward_tape(tape, spec, b, "", s)?;
        tape.mse(out, a)
    })?;
    check_finite(loss, "behavioral cloning")?;
    check_grads(&grads, "behavioral cloning")?;
    opt.step(&mut policy.net.params, &grads)?;
    Ok(loss)
}

/// Policy output for `s`; stochastic mode adds clipped Gaussian noise.
pub fn act(policy: &Mlp, s: &[f64], deterministic: bool, noise: f64, rng: &mut SplitRng) -> Result<Vec<f64>> {
    let mut a = mlp_forward(&policy.spec, &policy.params, &Tensor::row_vector(s))?.into_values();
    if !deterministic {
        a.iter_mut().for_each(|v| *v = (*v + noise * rng.normal()).clamp(-1.0, 1.0));
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBundle {
    pub q: Mlp,
    pub v: Mlp,
    pub policy: Mlp,
    pub q_target: ParamSet,
}

impl AgentBundle {
    pub fn new(state_dim: usize, action_dim: usize, arch: &AgentArch, rng: &mut SplitRng) -> Result<Self> {
        let q = Mlp::new(
            MlpSpec::relu_net(state_dim + action_dim, &arch.critic_hidden, 1, Activation::Identity)?,
            rng,
        )?;
        let v = Mlp::new(MlpSpec::relu_net(state_dim, &arch.value_hidden, 1, Activation::Identity)?, rng)?;
        let policy = Mlp::new(policy_spec(state_dim, action_dim, &arch.actor_hidden)?, rng)?;
        let q_target = q.params.clone();
        Ok(Self {
            q,
            v,
            policy,
            q_target,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.v.spec.input_width()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.spec.output_width()
    }

    /// `Q(s, a)` for each row.
    pub fn q_values(&self, s: &Tensor, a: &Tensor) -> Result<Vec<f64>> {
        let x = crate::srreward::concat_rows(s, a)?;
        Ok(mlp_forward(&self.q.spec, &self.q.params, &x)?.into_values())
    }

    pub fn v_values(&self, s: &Tensor) -> Result<Vec<f64>> {
        Ok(mlp_forward(&self.v.spec, &self.v.params, s)?.into_values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOptimizers {
    pub q: AdamState,
    pub v: AdamState,
    pub policy: AdamState,
}

impl AgentOptimizers {
    pub fn new(bundle: &AgentBundle, hyper: &AgentHyper) -> Self {
        Self {
            q: AdamState::new(&bundle.q.params, hyper.lr_critic),
            v: AdamState::new(&bundle.v.params, hyper.lr_value),
            policy: AdamState::new(&bundle.policy.params, hyper.lr_actor),
        }
    }
}

/// Where the rewards of an RL batch come from.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    /// The `reward` field stored in the dataset.
    Dataset,
    /// `reward(model, s, a)` evaluated now.
    Model(&'a SRModel),
    /// Precomputed per-row rewards.
    Given(&'a [f64]),
}

/// Flat batch as consumed by the critic and actor updates.
#[derive(Debug, Clone, PartialEq)]
pub struct RlBatch {
    pub s: Tensor,
    pub a: Tensor,
    pub reward: Vec<f64>,
    pub s_next: Tensor,
    pub terminal: Vec<bool>,
    /// Leading rows that come from demonstrations; the actor regresses onto these only.
    pub demo_rows: usize,
}

fn stack(top: &Tensor, bottom: &Tensor) -> Result<Tensor> {
    if top.cols() != bottom.cols() {
        return Err(Error::contract("cannot stack tensors of different widths"));
    }
    let mut v = top.values().to_vec();
    v.extend_from_slice(bottom.values());
    Tensor::matrix(top.rows() + bottom.rows(), top.cols(), v)
}

/// Attach rewards and, if given, append the negative samples as terminal rows
/// that reuse the original `s'` and carry the model reward `r̃`.
pub fn build_rl_batch(batch: &Batch, source: RewardSource<'_>, negatives: Option<&NegativeBatch>) -> Result<RlBatch> {
    let reward = match source {
        RewardSource::Dataset => batch
            .reward
            .clone()
            .ok_or_else(|| Error::config("dataset has no rewards; enable use_sr_reward"))?,
        RewardSource::Model(m) => m.reward_batch(&batch.s, &batch.a)?,
        RewardSource::Given(r) => {
            if r.len() != batch.len() {
                return Err(Error::contract("reward count differs from batch size"));
            }
            r.to_vec()
        }
    };
    let mut out = RlBatch {
        s: batch.s.clone(),
        a: batch.a.clone(),
        reward,
        s_next: batch.s_next.clone(),
        terminal: batch.terminal.clone(),
        demo_rows: batch.len(),
    };
    if let Some(n) = negatives {
        if n.s.rows() != batch.len() || n.reward.len() != batch.len() {
            return Err(Error::contract("negative batch size differs from batch"));
        }
        out.s = stack(&out.s, &n.s)?;
        out.a = stack(&out.a, &n.a)?;
        out.reward.extend_from_slice(&n.reward);
        out.s_next = stack(&out.s_next, &batch.s_next)?;
        out.terminal.extend(std::iter::repeat(true).take(batch.len()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlLossReport {
    pub q_loss: f64,
    pub v_loss: f64,
    pub policy_loss: f64,
    pub mean_reward: f64,
}

fn head_rows(t: &Tensor, m: usize) -> Result<Tensor> {
    let c = t.cols();
    Tensor::matrix(m, c, t.values()[..m * c].to_vec())
}

fn column(values: Vec<f64>) -> Tensor {
    let n = values.len();
    Tensor::matrix(n, 1, values).expect("column")
}

/// One update of V, Q and the policy on `rl`, then the target-critic update.
pub fn rl_update(
    bundle: &mut AgentBundle,
    opts: &mut AgentOptimizers,
    rl: &RlBatch,
    hyper: &AgentHyper,
) -> Result<RlLossReport> {
    let n = rl.terminal.len();
    if n == 0 {
        return Err(Error::contract("empty batch"));
    }
    let sa = crate::srreward::concat_rows(&rl.s, &rl.a)?;
    let q_tgt = mlp_forward(&bundle.q.spec, &bundle.q_target, &sa)?.into_values();

    // Value: expectile regression toward the target critic.
    let v_now = bundle.v_values(&rl.s)?;
    let w: Vec<f64> = q_tgt
        .iter()
        .zip(&v_now)
        .map(|(q, v)| expectile_weight(q - v, hyper.expectile))
        .collect();
    let v_spec = &bundle.v.spec;
    let (v_loss, v_grads) = eval_with_grads(&bundle.v.params, |tape, b| {
        let s = tape.constant(rl.s.clone());
        let v = mlp_forward_tape(tape, v_spec, b, "", s)?;
        let q = tape.constant(column(q_tgt.clone()));
        let u = tape.sub(q, v)?;
        let sq = tape.square(u);
        let wv = tape.constant(column(w.clone()));
        let weighted = tape.mul(wv, sq)?;
        Ok(tape.mean(weighted))
    })?;
    check_finite(v_loss, "value")?;
    check_grads(&v_grads, "value")?;

    // Critic: one-step TD toward r + γ(1 − terminal) V(s').
    let v_next = bundle.v_values(&rl.s_next)?;
    let y: Vec<f64> = (0..n)
        .map(|i| rl.reward[i] + if rl.terminal[i] { 0.0 } else { hyper.gamma * v_next[i] })
        .collect();
    let q_spec = &bundle.q.spec;
    let (q_loss, q_grads) = eval_with_grads(&bundle.q.params, |tape, b| {
        let x = tape.constant(sa.clone());
        let q = mlp_forward_tape(tape, q_spec, b, "", x)?;
        let t = tape.constant(column(y.clone()));
        tape.mse(q, t)
    })?;
    check_finite(q_loss, "critic")?;
    check_grads(&q_grads, "critic")?;

    // Actor: advantage-weighted regression onto demonstration actions.
    let m = rl.demo_rows;
    if m == 0 || m > n {
        return Err(Error::contract("demo row count must lie in 1..=batch size"));
    }
    let aw: Vec<f64> = q_tgt[..m]
        .iter()
        .zip(&v_now[..m])
        .map(|(q, v)| awr_weight(q - v, hyper.temperature, hyper.adv_clip))
        .collect();
    let s_demo = head_rows(&rl.s, m)?;
    let a_demo = head_rows(&rl.a, m)?;
    let p_spec = &bundle.policy.spec;
    let (p_loss, p_grads) = eval_with_grads(&bundle.policy.params, |tape, b| {
        let s = tape.constant(s_demo.clone());
        let pi = mlp_forward_tape(tape, p_spec, b, "", s)?;
        let a = tape.constant(a_demo.clone());
        let d = tape.sub(pi, a)?;
        let sq = tape.square(d);
        let per_row = tape.sum_cols(sq);
        let wt = tape.constant(column(aw.clone()));
        let weighted = tape.mul(wt, per_row)?;
        Ok(tape.mean(weighted))
    })?;
    check_finite(p_loss, "policy")?;
    check_grads(&p_grads, "policy")?;

    opts.v.step(&mut bundle.v.params, &v_grads)?;
    opts.q.step(&mut bundle.q.params, &q_grads)?;
    opts.policy.step(&mut bundle.policy.params, &p_grads)?;
    bundle.q_target.polyak_toward(&bundle.q.params, hyper.polyak)?;
    Ok(RlLossReport {
        q_loss,
        v_loss,
        policy_loss: p_loss,
        mean_reward: rl.reward.iter().sum::<f64>() / n as f64,
    })
}

/// Build the batch from `source` (augmented when configured) and update.
pub fn rl_train_step(
    bundle: &mut AgentBundle,
    opts: &mut AgentOptimizers,
    batch: &Batch,
    source: RewardSource<'_>,
    negatives: Option<&NegativeBatch>,
    hyper: &AgentHyper,
) -> Result<RlLossReport> {
    if hyper.use_sr_reward && matches!(source, RewardSource::Dataset) {
        return Err(Error::config("use_sr_reward is set but no SR rewards were supplied"));
    }
    let negs = if hyper.augment_with_negatives { negatives } else { None };
    let rl = build_rl_batch(batch, source, negs)?;
    rl_update(bundle, opts, &rl, hyper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentKind {
    Iql { bundle: AgentBundle, hyper: AgentHyper },
    Bc { policy: BCPolicy },
}

impl AgentKind {
    pub fn policy_net(&self) -> &Mlp {
        match self {
            AgentKind::Iql { bundle, .. } => &bundle.policy,
            AgentKind::Bc { policy } => &policy.net,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub agent: AgentKind,
}

impl AgentCheckpoint {
    pub fn new(agent: AgentKind) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            agent,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported agent checkpoint version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}
