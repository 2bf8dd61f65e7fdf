//! Demonstration trajectories, SARSA transitions and sampling.
//!
//! A JSONL trajectory file holds one object per line:
//! `{"states": [[...], ...], "actions": [[...], ...]}` with an optional
//! `"rewards": [...]` (one per action). Files with `len(states) == len(actions)`
//! are accepted; the final action is dropped so every trajectory ends on a
//! state.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::Tensor;
use crate::rng::SplitRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<f64>>,
}

impl Trajectory {
    /// Build and normalize to `states.len() == actions.len() + 1`.
    pub fn new(
        mut states: Vec<Vec<f64>>,
        mut actions: Vec<Vec<f64>>,
        mut rewards: Option<Vec<f64>>,
    ) -> Result<Self> {
        if states.len() == actions.len() && !actions.is_empty() {
            actions.pop();
            if let Some(r) = rewards.as_mut() {
                r.truncate(actions.len());
            }
        }
        if states.len() != actions.len() + 1 {
            return Err(Error::validation(format!(
                "trajectory has {} states and {} actions",
                states.len(),
                actions.len()
            )));
        }
        if states.len() < 2 {
            return Err(Error::validation("trajectory needs at least two states"));
        }
        if let Some(r) = &rewards {
            if r.len() != actions.len() {
                return Err(Error::validation(format!(
                    "{} rewards for {} actions",
                    r.len(),
                    actions.len()
                )));
            }
        }
        let ds = states[0].len();
        let da = actions[0].len();
        if states.iter().any(|s| s.len() != ds) || actions.iter().any(|a| a.len() != da) {
            return Err(Error::validation("ragged state or action vectors"));
        }
        if states.iter().chain(actions.iter()).flatten().any(|v| !v.is_finite())
            || rewards.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::validation("non-finite value in trajectory"));
        }
        states.shrink_to_fit();
        Ok(Self {
            states,
            actions,
            rewards,
        })
    }

    /// Number of transitions (= actions).
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions[0].len()
    }
}

/// One `(s, a, s', a')` tuple. For the last step of a trajectory `terminal`
/// is set and `a_next` is the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub a_next: Vec<f64>,
    pub terminal: bool,
    pub reward: Option<f64>,
}

/// Convert a trajectory into SARSA transitions.
pub fn to_sarsa(traj: &Trajectory) -> Result<Vec<Transition>> {
    if traj.states.len() < 2 {
        return Err(Error::validation("trajectory needs at least two states"));
    }
    let n = traj.len();
    let zero = vec![0.0; traj.action_dim()];
    Ok((0..n)
        .map(|i| {
            let terminal = i + 1 == n;
            Transition {
                s: traj.states[i].clone(),
                a: traj.actions[i].clone(),
                s_next: traj.states[i + 1].clone(),
                a_next: if terminal {
                    zero.clone()
                } else {
                    traj.actions[i + 1].clone()
                },
                terminal,
                reward: traj.rewards.as_ref().map(|r| r[i]),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct DemoDataset {
    trajectories: Vec<Trajectory>,
    transitions: Vec<Transition>,
    state_dim: usize,
    action_dim: usize,
}

impl DemoDataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::validation("dataset has no trajectories"))?;
        let (ds, da) = (first.state_dim(), first.action_dim());
        for (i, t) in trajectories.iter().enumerate() {
            if t.state_dim() != ds || t.action_dim() != da {
                return Err(Error::validation(format!(
                    "trajectory {i} has dims ({}, {}), expected ({ds}, {da})",
                    t.state_dim(),
                    t.action_dim()
                )));
            }
        }
        let mut transitions = Vec::with_capacity(trajectories.iter().map(Trajectory::len).sum());
        for t in &trajectories {
            transitions.extend(to_sarsa(t)?);
        }
        Ok(Self {
            trajectories,
            transitions,
            state_dim: ds,
            action_dim: da,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn has_rewards(&self) -> bool {
        self.trajectories.iter().all(|t| t.rewards.is_some())
    }

    /// Every state in every trajectory, including final states.
    pub fn all_states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.states.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut trajectories = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let raw: Trajectory =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let t = Trajectory::new(raw.states, raw.actions, raw.rewards)
                .map_err(|e| parse_err(e.to_string()))?;
            trajectories.push(t);
        }
        Self::new(trajectories)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform sampling with replacement.
pub fn sample_batch(ds: &DemoDataset, n: usize, rng: &mut SplitRng) -> Result<Vec<Transition>> {
    if ds.transitions.is_empty() {
        return Err(Error::validation("cannot sample from an empty dataset"));
    }
    if n == 0 {
        return Err(Error::validation("batch size must be at least 1"));
    }
    Ok((0..n)
        .map(|_| ds.transitions[rng.below(ds.transitions.len())].clone())
        .collect())
}

/// `k` distinct trajectories chosen uniformly without replacement.
pub fn subsample_trajectories(ds: &DemoDataset, k: usize, rng: &mut SplitRng) -> Result<DemoDataset> {
    let n = ds.trajectories.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "cannot pick {k} of {n} trajectories"
        )));
    }
    let picked = rand::seq::index::sample(rng, n, k);
    DemoDataset::new(picked.iter().map(|i| ds.trajectories[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    /// Median of the concatenated state and action standard deviations.
    pub median_std: f64,
}

fn mean_std(rows: &[&Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    (mean, std)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population statistics over all states and all actions.
pub fn dataset_stats(ds: &DemoDataset) -> DatasetStats {
    let states: Vec<&Vec<f64>> = ds.all_states().collect();
    let actions: Vec<&Vec<f64>> = ds.trajectories.iter().flat_map(|t| t.actions.iter()).collect();
    let (state_mean, state_std) = mean_std(&states, ds.state_dim);
    let (action_mean, action_std) = mean_std(&actions, ds.action_dim);
    let all: Vec<f64> = state_std.iter().chain(&action_std).copied().collect();
    DatasetStats {
        median_std: median(&all),
        state_mean,
        state_std,
        action_mean,
        action_std,
    }
}

/// A minibatch laid out as matrices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub s: Tensor,
    pub a: Tensor,
    pub s_next: Tensor,
    pub a_next: Tensor,
    pub terminal: Vec<bool>,
    pub reward: Option<Vec<f64>>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let col = |f: fn(&Transition) -> &Vec<f64>| -> Result<Tensor> {
            let rows: Vec<&Vec<f64>> = ts.iter().map(f).collect();
            Tensor::from_rows(&rows)
        };
        let reward = ts.iter().map(|t| t.reward).collect::<Option<Vec<f64>>>();
        Ok(Self {
            s: col(|t| &t.s)?,
            a: col(|t| &t.a)?,
            s_next: col(|t| &t.s_next)?,
            a_next: col(|t| &t.a_next)?,
            terminal: ts.iter().map(|t| t.terminal).collect(),
            reward,
        })
    }

    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }
}
