//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srlab_core::agents::{AgentArch, AgentHyper};
use srlab_core::dataset::DatasetStats;
use srlab_core::envs::{GridWorld, MazeEnv};
use srlab_core::srreward::{SRArch, SRHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Maze,
    Gridworld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentMode {
    Iql,
    Bc,
}

/// A noise scale given either as a number or as a rule resolved against the
/// dataset: `"median_std"` for β, `"<k>beta"` (e.g. `"5beta"`) for σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Value(f64),
    Rule(String),
}

impl Scale {
    fn resolve_beta(&self, stats: &DatasetStats) -> Result<f64> {
        match self {
            Scale::Value(v) => Ok(*v),
            Scale::Rule(r) if r == "median_std" => Ok(stats.median_std),
            Scale::Rule(r) => bail!("unknown beta rule {r:?}; expected a number or \"median_std\""),
        }
    }

    fn resolve_sigma(&self, beta: f64) -> Result<f64> {
        match self {
            Scale::Value(v) => Ok(*v),
            Scale::Rule(r) => {
                let k = r
                    .strip_suffix("beta")
                    .and_then(|k| k.trim().parse::<f64>().ok())
                    .with_context(|| format!("unknown sigma rule {r:?}; expected a number or \"<k>beta\""))?;
                Ok(k * beta)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub name: EnvName,
    /// Number of expert demonstrations produced by `gen-demos`.
    pub n_demos: usize,
    /// Demonstration file; defaults to `<out>/demos.jsonl`.
    pub dataset: Option<PathBuf>,
    pub maze: MazeEnv,
    pub grid: GridWorld,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            name: EnvName::Maze,
            n_demos: 10,
            dataset: None,
            maze: MazeEnv::default(),
            grid: GridWorld::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrSection {
    pub gamma: f64,
    pub beta: Scale,
    pub sigma: Scale,
    pub lr_sr: f64,
    pub encoder_mlp: Vec<usize>,
    pub phi_dim: usize,
    pub srnet_mlp: Vec<usize>,
    pub predictor_mlp: Vec<usize>,
    pub pretrain_steps: usize,
    pub target_update: f64,
    pub negative_sampling: bool,
    pub magnitude_loss: bool,
    pub prediction_loss: bool,
    pub freeze_encoder: bool,
    /// Keep training SR-Reward alongside the agent.
    pub co_train: bool,
    /// Write an intermediate checkpoint every this many pretrain steps; 0 disables.
    pub checkpoint_interval: usize,
}

impl Default for SrSection {
    fn default() -> Self {
        let h = SRHyper::default();
        let a = SRArch::default();
        Self {
            gamma: h.gamma,
            beta: Scale::Value(h.beta),
            sigma: Scale::Value(h.sigma),
            lr_sr: h.lr_sr,
            encoder_mlp: a.encoder_hidden,
            phi_dim: a.phi_dim,
            srnet_mlp: a.sr_hidden,
            predictor_mlp: a.predictor_hidden,
            pretrain_steps: h.pretrain_steps,
            target_update: h.target_update,
            negative_sampling: h.negative_sampling,
            magnitude_loss: h.magnitude_loss,
            prediction_loss: h.prediction_loss,
            freeze_encoder: h.freeze_encoder,
            co_train: true,
            checkpoint_interval: 0,
        }
    }
}

impl SrSection {
    pub fn arch(&self) -> SRArch {
        SRArch {
            encoder_hidden: self.encoder_mlp.clone(),
            phi_dim: self.phi_dim,
            sr_hidden: self.srnet_mlp.clone(),
            predictor_hidden: self.predictor_mlp.clone(),
        }
    }

    /// Hyperparameters with β and σ resolved against `stats`.
    pub fn hyper(&self, batch_size: usize, stats: &DatasetStats) -> Result<SRHyper> {
        let beta = self.beta.resolve_beta(stats)?;
        let sigma = self.sigma.resolve_sigma(beta)?;
        let h = SRHyper {
            gamma: self.gamma,
            beta,
            sigma,
            lr_sr: self.lr_sr,
            pretrain_steps: self.pretrain_steps,
            batch_size,
            target_update: self.target_update,
            negative_sampling: self.negative_sampling,
            magnitude_loss: self.magnitude_loss,
            prediction_loss: self.prediction_loss,
            freeze_encoder: self.freeze_encoder,
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentMode,
    pub gamma: f64,
    pub expectile: f64,
    pub temperature: f64,
    pub adv_clip: f64,
    pub lr_critic: f64,
    pub lr_value: f64,
    pub lr_actor: f64,
    pub polyak: f64,
    pub critic_mlp: Vec<usize>,
    pub actor_mlp: Vec<usize>,
    pub value_net_mlp: Vec<usize>,
    pub use_sr_reward: bool,
    pub augment_with_negatives: bool,
    pub exploration_noise: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let h = AgentHyper::default();
        let a = AgentArch::default();
        Self {
            kind: AgentMode::Iql,
            gamma: h.gamma,
            expectile: h.expectile,
            temperature: h.temperature,
            adv_clip: h.adv_clip,
            lr_critic: h.lr_critic,
            lr_value: h.lr_value,
            lr_actor: h.lr_actor,
            polyak: h.polyak,
            critic_mlp: a.critic_hidden,
            actor_mlp: a.actor_hidden,
            value_net_mlp: a.value_hidden,
            use_sr_reward: h.use_sr_reward,
            augment_with_negatives: h.augment_with_negatives,
            exploration_noise: h.exploration_noise,
        }
    }
}

impl AgentSection {
    pub fn arch(&self) -> AgentArch {
        AgentArch {
            critic_hidden: self.critic_mlp.clone(),
            actor_hidden: self.actor_mlp.clone(),
            value_hidden: self.value_net_mlp.clone(),
        }
    }

    pub fn hyper(&self) -> Result<AgentHyper> {
        let h = AgentHyper {
            gamma: self.gamma,
            expectile: self.expectile,
            temperature: self.temperature,
            adv_clip: self.adv_clip,
            lr_critic: self.lr_critic,
            lr_value: self.lr_value,
            lr_actor: self.lr_actor,
            polyak: self.polyak,
            use_sr_reward: self.use_sr_reward,
            augment_with_negatives: self.augment_with_negatives,
            exploration_noise: self.exploration_noise,
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub seeds: Vec<u64>,
    /// Agent gradient steps.
    pub training_steps: usize,
    pub batch_size: usize,
    /// Evaluate the agent every this many steps.
    pub eval_interval: usize,
    pub out_dir: PathBuf,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            training_steps: 1_000_000,
            batch_size: 128,
            eval_interval: 2_000,
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Rollouts per evaluation during training.
    pub eval_rollouts: usize,
    /// Fresh rollouts for the final evaluation.
    pub final_rollouts: usize,
    pub score_min: f64,
    pub score_max: f64,
    pub noise_levels: Vec<f64>,
    pub perturbation_seeds: usize,
    pub heatmap_resolution: usize,
    pub sweep_betas: Vec<f64>,
    pub sweep_sigmas: Vec<f64>,
    pub oracle_gamma: f64,
    /// Discount used by the TD estimate in `oracle-check`; defaults to
    /// `oracle_gamma`. Setting it differently is a deliberate fault.
    pub oracle_td_gamma: Option<f64>,
    pub oracle_td_steps: usize,
    pub oracle_td_lr: f64,
    pub oracle_rollout_episodes: usize,
    pub oracle_sr_steps: usize,
    pub oracle_sr_lr: f64,
    pub oracle_sr_lr_final: f64,
    pub oracle_sr_batch: usize,
    pub oracle_sr_target_update: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            eval_rollouts: 10,
            final_rollouts: 50,
            score_min: -200.0,
            score_max: 100.0,
            noise_levels: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
            perturbation_seeds: 20,
            heatmap_resolution: 50,
            sweep_betas: vec![],
            sweep_sigmas: vec![],
            oracle_gamma: 0.95,
            oracle_td_gamma: None,
            oracle_td_steps: 150_000_000,
            oracle_td_lr: 1.0,
            oracle_rollout_episodes: 100_000,
            oracle_sr_steps: 50_000,
            oracle_sr_lr: 1e-3,
            oracle_sr_lr_final: 1e-5,
            oracle_sr_batch: 128,
            oracle_sr_target_update: 0.005,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub sr: SrSection,
    pub agent: AgentSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Parse `text` after applying `key.path=value` overrides. Relative paths
    /// are resolved against `base_dir`.
    pub fn from_toml(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .context("config does not match the expected schema")?;
        if let Some(d) = &cfg.env.dataset {
            if d.is_relative() {
                cfg.env.dataset = Some(base_dir.join(d));
            }
        }
        if cfg.train.out_dir.is_relative() {
            cfg.train.out_dir = base_dir.join(&cfg.train.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, overrides, base).with_context(|| format!("loading config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.train.seeds.is_empty(), "train.seeds must not be empty");
        ensure!(self.train.batch_size > 0, "train.batch_size must be positive");
        ensure!(self.train.eval_interval > 0, "train.eval_interval must be positive");
        ensure!(self.env.n_demos > 0, "env.n_demos must be positive");
        ensure!(
            self.eval.score_max > self.eval.score_min,
            "eval.score_max must exceed eval.score_min"
        );
        ensure!(self.eval.heatmap_resolution > 0, "eval.heatmap_resolution must be positive");
        if let Some(d) = &self.env.dataset {
            ensure!(d.exists(), "dataset {} does not exist", d.display());
        }
        self.env.maze.validate()?;
        self.env.grid.validate()?;
        self.agent.hyper()?;
        Ok(())
    }

    /// Short content hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Set `a.b.c = value` in `table`. The value is parsed as TOML and falls
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .with_context(|| format!("override {spec:?} is not of the form key=value"))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("override {spec:?}: {p} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("", &[], Path::new("/tmp")).unwrap();
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg.train.training_steps, 1_000_000);
        assert_eq!(cfg.sr.encoder_mlp, vec![256, 128]);
        assert_eq!(cfg.agent.lr_critic, 3e-4);
        assert_eq!(cfg.agent.lr_actor, 1e-4);
        assert_eq!(cfg.sr.lr_sr, 1e-4);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let over = vec!["sr.pretrain_steps=5".into(), "sr.beta=\"median_std\"".into(), "env.name=gridworld".into()];
        let cfg = ExperimentConfig::from_toml("[sr]\npretrain_steps = 100\n", &over, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.sr.pretrain_steps, 5);
        assert_eq!(cfg.sr.beta, Scale::Rule("median_std".into()));
        assert_eq!(cfg.env.name, EnvName::Gridworld);
    }

    #[test]
    fn scale_rules_resolve() {
        let stats = DatasetStats {
            state_mean: vec![],
            state_std: vec![],
            action_mean: vec![],
            action_std: vec![],
            median_std: 0.2,
        };
        let sr = SrSection {
            beta: Scale::Rule("median_std".into()),
            sigma: Scale::Rule("5beta".into()),
            ..SrSection::default()
        };
        let h = sr.hyper(64, &stats).unwrap();
        assert_eq!(h.beta, 0.2);
        assert!((h.sigma - 1.0).abs() < 1e-12);
        let bad = SrSection {
            sigma: Scale::Rule("lots".into()),
            ..SrSection::default()
        };
        assert!(bad.hyper(64, &stats).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[train]\nseeds = []\n",
            "[eval]\nscore_min = 1.0\nscore_max = 1.0\n",
            "[env]\ndataset = \"missing.jsonl\"\n",
            "[sr]\nunknown_key = 1\n",
        ] {
            assert!(ExperimentConfig::from_toml(text, &[], Path::new("/nonexistent")).is_err(), "{text}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.batch_size = 64;
        assert_ne!(a.hash(), b.hash());
    }
}
