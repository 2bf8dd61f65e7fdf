//! SR-Reward: a reward function read off a learned successor representation.
//!
//! The encoder maps a state to `φ(s)` (relu output, rows L1-normalized), the
//! SR head maps `φ(s,a) = [φ(s); a]` to the SR vector `M(s,a)` and the reward
//! is `‖M(s,a)‖₂`. The predictor is an auxiliary next-feature model used only
//! to shape the encoder.

mod loss;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use loss::{
    compute_losses, compute_losses_with, grad_check_total_loss, pretrain, train_step, LossBreakdown, LossOutput,
    NegativeBatch, SROptimizer,
};

use crate::dataset::Trajectory;
use crate::error::{Error, Result};
use crate::nnkit::{Activation, Mlp, MlpSpec, ParamSet, Tensor, L1_GUARD};
use crate::rng::SplitRng;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Network widths. Hidden lists exclude input and output layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SRArch {
    pub encoder_hidden: Vec<usize>,
    pub phi_dim: usize,
    pub sr_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
}

impl Default for SRArch {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![256, 128],
            phi_dim: 64,
            sr_hidden: vec![128],
            predictor_hidden: vec![128, 32],
        }
    }
}

impl SRArch {
    /// Small networks for the 2-D toy maze.
    pub fn toy() -> Self {
        Self {
            encoder_hidden: vec![64],
            phi_dim: 64,
            sr_hidden: vec![64],
            predictor_hidden: vec![64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SRHyper {
    pub gamma: f64,
    /// Std of the Gaussian noise used for negative samples.
    pub beta: f64,
    /// Width of the decay kernel `exp(−d/σ²)`.
    pub sigma: f64,
    pub lr_sr: f64,
    pub pretrain_steps: usize,
    pub batch_size: usize,
    /// Polyak coefficient for the target SR head; 1 copies the live head.
    pub target_update: f64,
    pub negative_sampling: bool,
    pub magnitude_loss: bool,
    pub prediction_loss: bool,
    /// Keep encoder parameters fixed during training.
    pub freeze_encoder: bool,
}

impl Default for SRHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            beta: 1.0,
            sigma: 3.0,
            lr_sr: 1e-4,
            pretrain_steps: 10_000,
            batch_size: 128,
            target_update: 0.005,
            negative_sampling: true,
            magnitude_loss: true,
            prediction_loss: true,
            freeze_encoder: false,
        }
    }
}

impl SRHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.beta > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::config("beta and sigma must be positive"));
        }
        if !(self.lr_sr > 0.0) {
            return Err(Error::config("lr_sr must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.target_update) {
            return Err(Error::config("target_update must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SRModel {
    pub encoder: Mlp,
    pub sr_head: Mlp,
    pub predictor: Mlp,
    pub target_sr_head: ParamSet,
}

/// Divide rows by `max(‖row‖₁, 1e-8)`; all-zero rows become uniform.
pub(crate) fn l1_normalize_rows(values: &mut [f64], cols: usize) {
    for row in values.chunks_mut(cols) {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s == 0.0 {
            row.iter_mut().for_each(|v| *v = 1.0 / cols as f64);
        } else {
            let d = s.max(L1_GUARD);
            row.iter_mut().for_each(|v| *v /= d);
        }
    }
}

pub(crate) fn concat_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(Error::contract(format!(
            "row mismatch: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..a.rows() {
        out.extend_from_slice(a.row(i));
        out.extend_from_slice(b.row(i));
    }
    Tensor::matrix(a.rows(), a.cols() + b.cols(), out)
}

impl SRModel {
    pub fn new(state_dim: usize, action_dim: usize, arch: &SRArch, rng: &mut SplitRng) -> Result<Self> {
        let d = arch.phi_dim + action_dim;
        let encoder = Mlp::new(
            MlpSpec::relu_net(state_dim, &arch.encoder_hidden, arch.phi_dim, Activation::Relu)?,
            rng,
        )?;
        let sr_head = Mlp::new(MlpSpec::relu_net(d, &arch.sr_hidden, d, Activation::Identity)?, rng)?;
        let predictor = Mlp::new(
            MlpSpec::relu_net(d, &arch.predictor_hidden, arch.phi_dim, Activation::Identity)?,
            rng,
        )?;
        let target_sr_head = sr_head.params.clone();
        Ok(Self {
            encoder,
            sr_head,
            predictor,
            target_sr_head,
        })
    }

    /// Model whose encoder is the identity on one-hot states, so `φ(s) = s`
    /// for one-hot `s`. Intended for use with `freeze_encoder`.
    pub fn with_one_hot_encoder(
        n_states: usize,
        action_dim: usize,
        sr_hidden: &[usize],
        predictor_hidden: &[usize],
        rng: &mut SplitRng,
    ) -> Result<Self> {
        let arch = SRArch {
            encoder_hidden: vec![],
            phi_dim: n_states,
            sr_hidden: sr_hidden.to_vec(),
            predictor_hidden: predictor_hidden.to_vec(),
        };
        let mut m = Self::new(n_states, action_dim, &arch, rng)?;
        let w = m.encoder.params.get_mut("l0.weight").expect("single layer");
        w.values_mut().iter_mut().enumerate().for_each(|(i, v)| {
            *v = if i / n_states == i % n_states { 1.0 } else { 0.0 };
        });
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.encoder.spec.input_width()
    }

    pub fn phi_dim(&self) -> usize {
        self.encoder.spec.output_width()
    }

    pub fn action_dim(&self) -> usize {
        self.sr_head.spec.input_width() - self.phi_dim()
    }

    /// Check internal consistency of the three networks.
    pub fn validate(&self) -> Result<()> {
        let d = self.sr_head.spec.input_width();
        if d <= self.phi_dim()
            || self.sr_head.spec.output_width() != d
            || self.predictor.spec.input_width() != d
            || self.predictor.spec.output_width() != self.phi_dim()
        {
            return Err(Error::config("SR network widths are inconsistent"));
        }
        self.sr_head.params.check_compatible(&self.target_sr_head)?;
        Ok(())
    }

    /// `φ(s)` for a batch `[n, d_s]`.
    pub fn encode_batch(&self, states: &Tensor) -> Result<Tensor> {
        let mut phi = self.encoder.forward(states)?;
        let cols = phi.cols();
        l1_normalize_rows(phi.values_mut(), cols);
        Ok(phi)
    }

    pub fn encode(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(self.encode_batch(&Tensor::row_vector(s))?.into_values())
    }

    pub fn phi_sa_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        if actions.cols() != self.action_dim() {
            return Err(Error::contract(format!(
                "action width {} does not match {}",
                actions.cols(),
                self.action_dim()
            )));
        }
        concat_rows(&self.encode_batch(states)?, actions)
    }

    pub fn phi_sa(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(self
            .phi_sa_batch(&Tensor::row_vector(s), &Tensor::row_vector(a))?
            .into_values())
    }

    pub fn sr_vector_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        self.sr_head.forward(&self.phi_sa_batch(states, actions)?)
    }

    pub fn sr_vector(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(self
            .sr_vector_batch(&Tensor::row_vector(s), &Tensor::row_vector(a))?
            .into_values())
    }

    /// `‖M(s,a)‖₂` for every row.
    pub fn reward_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Vec<f64>> {
        let m = self.sr_vector_batch(states, actions)?;
        Ok((0..m.rows())
            .map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect())
    }

    pub fn reward(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let m = self.sr_vector(s, a)?;
        Ok(m.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// `exp(−‖φ(s,a) − φ(s̃,ã)‖₂ / σ²)`.
    pub fn alpha_decay(&self, s: &[f64], a: &[f64], s_neg: &[f64], a_neg: &[f64], sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::validation("sigma must be positive"));
        }
        let x = self.phi_sa(s, a)?;
        let y = self.phi_sa(s_neg, a_neg)?;
        Ok(alpha_from_distance(euclidean(&x, &y), sigma))
    }

    /// Undiscounted sum of rewards over the trajectory's `(s_t, a_t)` pairs.
    pub fn trajectory_return(&self, traj: &Trajectory) -> Result<f64> {
        if traj.actions.is_empty() {
            return Err(Error::validation("trajectory has no actions"));
        }
        let n = traj.actions.len();
        let s = Tensor::from_rows(&traj.states[..n])?;
        let a = Tensor::from_rows(&traj.actions)?;
        Ok(self.reward_batch(&s, &a)?.iter().sum())
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() {
            return Err(Error::contract(format!(
                "state width {} does not match {}",
                s.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, hyper: &SRHyper) -> Result<()> {
        let ck = SRCheckpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
            hyper: hyper.clone(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, SRHyper)> {
        let ck: SRCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported SR checkpoint version {}",
                ck.format_version
            )));
        }
        ck.model.validate()?;
        Ok((ck.model, ck.hyper))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SRCheckpoint {
    format_version: u32,
    model: SRModel,
    hyper: SRHyper,
}

pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn alpha_from_distance(d: f64, sigma: f64) -> f64 {
    (-d / (sigma * sigma)).exp()
}

/// `(s + β ε_s, a + β ε_a)` with standard normal `ε`.
pub fn make_negative_sample(s: &[f64], a: &[f64], beta: f64, rng: &mut SplitRng) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(beta > 0.0) {
        return Err(Error::validation("beta must be positive"));
    }
    let s_neg = s.iter().map(|v| v + beta * rng.normal()).collect();
    let a_neg = a.iter().map(|v| v + beta * rng.normal()).collect();
    Ok((s_neg, a_neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_model(seed: u64) -> SRModel {
        SRModel::new(2, 2, &SRArch::toy(), &mut SplitRng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn encoding_is_deterministic_and_normalized() {
        let m = toy_model(0);
        let a = m.encode(&[0.3, 0.7]).unwrap();
        assert_eq!(a, m.encode(&[0.3, 0.7]).unwrap());
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dead_encoder_falls_back_to_uniform() {
        let mut m = toy_model(0);
        for (name, t) in m.encoder.params.iter_mut() {
            if name.ends_with("bias") {
                t.values_mut().iter_mut().for_each(|v| *v = -1.0);
            }
        }
        let phi = m.encode(&[0.1, 0.2]).unwrap();
        assert!(phi.iter().all(|v| (v - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn phi_sa_layout() {
        let m = toy_model(1);
        let a = [0.123_456_789_012_345_6, -0.987_654_321];
        let x = m.phi_sa(&[0.5, 0.5], &a).unwrap();
        assert_eq!(x.len(), 66);
        assert_eq!(&x[64..], &a);
        assert_eq!(&x[..64], m.encode(&[0.5, 0.5]).unwrap().as_slice());
        let z = m.phi_sa(&[0.5, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(&z[64..], &[0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let m = toy_model(1);
        assert!(matches!(m.phi_sa(&[0.5, 0.5], &[0.0]), Err(Error::Contract(_))));
        assert!(matches!(m.reward(&[0.5], &[0.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn reward_matches_recomputation_from_sr_vector() {
        let m = toy_model(2);
        let mut rng = SplitRng::seed_from_u64(3);
        for _ in 0..20 {
            let s = [rng.uniform(), rng.uniform()];
            let a = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
            let v = m.sr_vector(&s, &a).unwrap();
            let mut acc = 0.0;
            for x in &v {
                acc += x * x;
            }
            assert!((m.reward(&s, &a).unwrap() - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sr_head_gives_zero_reward() {
        let mut m = toy_model(2);
        m.sr_head = m.sr_head.clone().zeroed();
        assert_eq!(m.reward(&[0.2, 0.2], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn alpha_decay_values() {
        let m = toy_model(4);
        let (s, a) = ([0.4, 0.6], [0.5, -0.5]);
        assert_eq!(m.alpha_decay(&s, &a, &s, &a, 0.7).unwrap(), 1.0);
        assert!((alpha_from_distance(1.0, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(alpha_from_distance(0.5, 2.0) > alpha_from_distance(0.6, 2.0));
    }

    #[test]
    fn negative_sample_moments() {
        let beta = 0.3;
        let mut rng = SplitRng::seed_from_u64(9);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let (s, _) = make_negative_sample(&[1.0], &[0.0], beta, &mut rng).unwrap();
            let d = s[0] - 1.0;
            sum += d;
            sq += d * d;
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).sqrt();
        assert!((std / beta - 1.0).abs() < 0.02, "std {std}");
    }

    #[test]
    fn negative_sample_limits() {
        let mut rng = SplitRng::seed_from_u64(9);
        let (s, a) = make_negative_sample(&[1.0, 2.0], &[3.0], 1e-300, &mut rng).unwrap();
        assert_eq!((s, a), (vec![1.0, 2.0], vec![3.0]));
        assert!(make_negative_sample(&[1.0], &[1.0], 0.0, &mut rng).is_err());
        let x = make_negative_sample(&[1.0], &[1.0], 0.1, &mut SplitRng::seed_from_u64(1)).unwrap();
        let y = make_negative_sample(&[1.0], &[1.0], 0.1, &mut SplitRng::seed_from_u64(2)).unwrap();
        assert_ne!(x, y);
    }

    #[test]
    fn one_hot_encoder_is_identity_on_one_hot_states() {
        let m = SRModel::with_one_hot_encoder(5, 4, &[16], &[8], &mut SplitRng::seed_from_u64(0)).unwrap();
        for i in 0..5 {
            let mut s = vec![0.0; 5];
            s[i] = 1.0;
            assert_eq!(m.encode(&s).unwrap(), s);
        }
    }

    #[test]
    fn trajectory_return_is_sum_of_rewards() {
        let m = toy_model(5);
        let t = Trajectory::new(
            vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            None,
        )
        .unwrap();
        let want = m.reward(&[0.1, 0.2], &[1.0, 0.0]).unwrap() + m.reward(&[0.3, 0.4], &[0.0, 1.0]).unwrap();
        assert!((m.trajectory_return(&t).unwrap() - want).abs() < 1e-12);
        let single = Trajectory::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]], vec![vec![1.0, 0.0]], None).unwrap();
        assert_eq!(
            m.trajectory_return(&single).unwrap(),
            m.reward(&[0.1, 0.2], &[1.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn checkpoint_round_trip_preserves_rewards() {
        let m = toy_model(6);
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path(), &SRHyper::default()).unwrap();
        let (back, hyper) = SRModel::load(f.path()).unwrap();
        assert_eq!(hyper, SRHyper::default());
        assert_eq!(back.reward(&[0.3, 0.9], &[0.2, -0.1]).unwrap(), m.reward(&[0.3, 0.9], &[0.2, -0.1]).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn encoder_contract(seed in 0u64..1000, x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let m = toy_model(seed % 7);
            let phi = m.encode(&[x, y]).unwrap();
            prop_assert!(phi.iter().all(|v| *v >= 0.0));
            prop_assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn reward_is_nonnegative_and_lipschitz_in_action(seed in 0u64..50, x in 0.0f64..1.0, y in 0.0f64..1.0, ax in -1.0f64..1.0, ay in -1.0f64..1.0) {
            let m = toy_model(seed);
            let r0 = m.reward(&[x, y], &[ax, ay]).unwrap();
            prop_assert!(r0 >= 0.0);
            let d = 1e-4;
            let r1 = m.reward(&[x, y], &[ax + d, ay]).unwrap();
            prop_assert!(((r1 - r0) / d).abs() < 1e3);
        }
    }
}
