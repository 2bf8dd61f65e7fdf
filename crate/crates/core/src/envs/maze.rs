//! Continuous 2-D corridor maze.
//!
//! The corridor winds counter-clockwise from a start box in the bottom-right
//! corner: up the right column, left along the top, down the left column,
//! right along the bottom and through a gap into the central room, where the
//! goal sits.
//!
//! ```text
//!  1 +---------------------------+
//!    |  top corridor         <-- |
//!0.8 |    +---------------+ ^    |
//!    |    |               | |    |
//!    |  | |     goal      | |    |
//!    |  v |               | |    |
//!0.2 |    +--------    ^  | |    |
//!    |   bottom  -->   |  | start|
//!  0 +--------------------+------+
//!    0   0.2       0.55     0.8  1
//! ```

use serde::{Deserialize, Serialize};

use crate::dataset::{DemoDataset, Trajectory};
use crate::error::{Error, Result};
use crate::rng::SplitRng;

/// A wall from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

pub const MAZE_WALLS: [Segment; 4] = [
    Segment { a: [0.8, 0.0], b: [0.8, 0.8] },
    Segment { a: [0.2, 0.8], b: [0.8, 0.8] },
    Segment { a: [0.2, 0.2], b: [0.2, 0.8] },
    Segment { a: [0.2, 0.2], b: [0.55, 0.2] },
];
pub const MAZE_GOAL: [f64; 2] = [0.5, 0.5];
pub const MAZE_GOAL_RADIUS: f64 = 0.05;
/// Start box `[x_lo, x_hi] × [y_lo, y_hi]`.
pub const MAZE_START_BOX: [f64; 4] = [0.85, 0.95, 0.05, 0.15];
pub const MAZE_STEP_SCALE: f64 = 0.05;
pub const MAZE_MAX_STEPS: usize = 200;
pub const MAZE_GOAL_REWARD: f64 = 100.0;
pub const MAZE_STEP_REWARD: f64 = -1.0;
pub const EXPERT_NOISE: f64 = 0.05;
/// Distance ahead along the centreline that the expert steers toward.
pub const EXPERT_LOOKAHEAD: f64 = 0.15;

/// Fraction of the way to a wall that a blocked move keeps is `t − BACKOFF`.
const BACKOFF: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MazeEnv {
    pub walls: Vec<Segment>,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub start_box: [f64; 4],
    pub step_scale: f64,
    pub max_steps: usize,
}

impl Default for MazeEnv {
    fn default() -> Self {
        Self {
            walls: MAZE_WALLS.to_vec(),
            goal: MAZE_GOAL,
            goal_radius: MAZE_GOAL_RADIUS,
            start_box: MAZE_START_BOX,
            step_scale: MAZE_STEP_SCALE,
            max_steps: MAZE_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_state: Vec<f64>,
    pub done: bool,
    pub reached_goal: bool,
    /// True environment reward; used for evaluation only.
    pub reward: Option<f64>,
    pub collided: bool,
}

fn cross(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

/// Parameter `t ∈ [0, 1]` at which `p → p + d` first touches the wall, if it does.
fn hit_time(p: [f64; 2], d: [f64; 2], w: &Segment) -> Option<f64> {
    let e = [w.b[0] - w.a[0], w.b[1] - w.a[1]];
    let denom = cross(d, e);
    if denom == 0.0 {
        return None;
    }
    let q = [w.a[0] - p[0], w.a[1] - p[1]];
    let t = cross(q, e) / denom;
    let u = cross(q, d) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Whether the closed segment `p → q` touches the wall.
pub fn crosses(p: [f64; 2], q: [f64; 2], w: &Segment) -> bool {
    hit_time(p, [q[0] - p[0], q[1] - p[1]], w).is_some()
}

impl MazeEnv {
    pub fn validate(&self) -> Result<()> {
        let inside = |p: [f64; 2]| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        let [x0, x1, y0, y1] = self.start_box;
        if !(inside([x0, y0]) && inside([x1, y1]) && x0 <= x1 && y0 <= y1) || !inside(self.goal) {
            return Err(Error::config("maze start box and goal must lie in [0,1]²"));
        }
        if !(self.goal_radius > 0.0 && self.step_scale > 0.0) || self.max_steps == 0 {
            return Err(Error::config("goal radius, step scale and step budget must be positive"));
        }
        Ok(())
    }

    pub fn reset(&self, rng: &mut SplitRng) -> Vec<f64> {
        let [x0, x1, y0, y1] = self.start_box;
        vec![rng.uniform_in(x0, x1), rng.uniform_in(y0, y1)]
    }

    pub fn at_goal(&self, s: &[f64]) -> bool {
        let dx = s[0] - self.goal[0];
        let dy = s[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt() <= self.goal_radius
    }

    /// Deterministic dynamics: clip the action, move, clamp to the arena and
    /// stop just short of the first wall on the way.
    pub fn transition(&self, s: &[f64], a: &[f64]) -> (Vec<f64>, bool) {
        let ax = a[0].clamp(-1.0, 1.0);
        let ay = a[1].clamp(-1.0, 1.0);
        let p = [s[0], s[1]];
        let q = [
            (p[0] + self.step_scale * ax).clamp(0.0, 1.0),
            (p[1] + self.step_scale * ay).clamp(0.0, 1.0),
        ];
        let d = [q[0] - p[0], q[1] - p[1]];
        let first = self
            .walls
            .iter()
            .filter_map(|w| hit_time(p, d, w))
            .fold(f64::INFINITY, f64::min);
        if first.is_finite() {
            let t = (first - BACKOFF).max(0.0);
            (vec![p[0] + t * d[0], p[1] + t * d[1]], true)
        } else {
            (q.to_vec(), false)
        }
    }

    /// Step with `steps_taken` transitions already in the episode.
    pub fn step(&self, s: &[f64], a: &[f64], steps_taken: usize) -> EnvStep {
        let (next, collided) = self.transition(s, a);
        let reached = self.at_goal(&next);
        EnvStep {
            done: reached || steps_taken + 1 >= self.max_steps,
            reward: Some(if reached { MAZE_GOAL_REWARD } else { MAZE_STEP_REWARD }),
            next_state: next,
            reached_goal: reached,
            collided,
        }
    }

    /// Noise-free expert heading: a unit vector toward a point
    /// `EXPERT_LOOKAHEAD` ahead on the corridor centreline.
    pub fn expert_direction(&self, s: &[f64]) -> [f64; 2] {
        let (x, y) = (s[0], s[1]);
        let l = EXPERT_LOOKAHEAD;
        let target = if x >= 0.8 && y < 0.85 {
            [0.9, (y + l).min(0.9)]
        } else if y >= 0.8 {
            if x > 0.15 {
                [(x - l).max(0.1), 0.9]
            } else {
                [0.1, 0.1]
            }
        } else if x < 0.2 {
            if y > 0.15 {
                [0.1, (y - l).max(0.1)]
            } else {
                [0.675, 0.1]
            }
        } else if y < 0.2 {
            if x < 0.64 {
                [(x + l).min(0.675), 0.1]
            } else {
                [0.675, 0.35]
            }
        } else {
            self.goal
        };
        let d = [target[0] - x, target[1] - y];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n < 1e-12 {
            [0.0, 0.0]
        } else {
            [d[0] / n, d[1] / n]
        }
    }

    /// Expert action: waypoint heading plus Gaussian noise, clipped to `[−1, 1]`.
    pub fn expert_act(&self, s: &[f64], rng: &mut SplitRng) -> Vec<f64> {
        self.expert_direction(s)
            .iter()
            .map(|v| (v + EXPERT_NOISE * rng.normal()).clamp(-1.0, 1.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub success: bool,
    pub collisions: usize,
}

impl Rollout {
    pub fn true_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn into_trajectory(self) -> Result<Trajectory> {
        Trajectory::new(self.states, self.actions, Some(self.rewards))
    }
}

/// Run one episode from `start` with `policy`.
pub fn rollout_from<P>(env: &MazeEnv, start: Vec<f64>, mut policy: P) -> Rollout
where
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let mut states = vec![start];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut collisions = 0;
    let mut success = false;
    for t in 0..env.max_steps {
        let s = states.last().expect("non-empty");
        let a = policy(s);
        let step = env.step(s, &a, t);
        collisions += step.collided as usize;
        actions.push(a);
        rewards.push(step.reward.unwrap_or(0.0));
        states.push(step.next_state);
        if step.done {
            success = step.reached_goal;
            break;
        }
    }
    Rollout {
        states,
        actions,
        rewards,
        success,
        collisions,
    }
}

/// Run one episode from a sampled start.
pub fn rollout<P>(env: &MazeEnv, policy: P, rng: &mut SplitRng) -> Rollout
where
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let start = env.reset(rng);
    rollout_from(env, start, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoReport {
    pub requested: usize,
    pub attempts: usize,
    pub discarded: usize,
}

/// `n` successful expert trajectories; failures are discarded and resampled.
pub fn generate_demos(env: &MazeEnv, n: usize, rng: &mut SplitRng) -> Result<(DemoDataset, DemoReport)> {
    if n == 0 {
        return Err(Error::validation("need at least one demonstration"));
    }
    env.validate()?;
    let mut trajs = Vec::with_capacity(n);
    let mut attempts = 0;
    while trajs.len() < n {
        if attempts >= 10 * n {
            return Err(Error::config(format!(
                "expert succeeded {} times in {attempts} attempts; check the maze configuration",
                trajs.len()
            )));
        }
        attempts += 1;
        let mut ep_rng = rng.split();
        let start = env.reset(&mut ep_rng);
        let r = rollout_from(env, start, |s| env.expert_act(s, &mut ep_rng));
        if r.success {
            trajs.push(r.into_trajectory()?);
        }
    }
    if (n as f64) < 0.5 * attempts as f64 {
        return Err(Error::config(format!(
            "expert success rate {n}/{attempts} is below 50%"
        )));
    }
    let report = DemoReport {
        requested: n,
        attempts,
        discarded: attempts - n,
    };
    Ok((DemoDataset::new(trajs)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env() -> MazeEnv {
        MazeEnv::default()
    }

    #[test]
    fn zero_action_stays_put() {
        let s = vec![0.3, 0.4];
        assert_eq!(env().transition(&s, &[0.0, 0.0]).0, s);
    }

    #[test]
    fn wall_truncates_displacement() {
        // Right column, pushing left into the x = 0.8 wall.
        let s = vec![0.82, 0.4];
        let (next, hit) = env().transition(&s, &[-1.0, 0.0]);
        assert!(hit);
        assert!(next[0] > 0.8 && next[0] < 0.82);
        assert_eq!(next[1], 0.4);
    }

    #[test]
    fn arena_clamps() {
        let (next, hit) = env().transition(&[0.99, 0.99], &[1.0, 1.0]);
        assert_eq!(next, vec![1.0, 1.0]);
        assert!(!hit);
    }

    #[test]
    fn action_toward_goal_from_adjacent_state_finishes() {
        let e = env();
        let s = [e.goal[0] + 0.08, e.goal[1]];
        let step = e.step(&s, &[-1.0, 0.0], 0);
        assert!(step.done && step.reached_goal);
        assert_eq!(step.reward, Some(MAZE_GOAL_REWARD));
    }

    #[test]
    fn budget_ends_episode() {
        let e = env();
        let step = e.step(&[0.9, 0.1], &[0.0, 0.0], e.max_steps - 1);
        assert!(step.done && !step.reached_goal);
    }

    #[test]
    fn expert_points_to_next_waypoint() {
        let e = env();
        // At the top-right waypoint the next one is the top-left corner.
        let d = e.expert_direction(&[0.9, 0.9]);
        let want = [-1.0, 0.0];
        assert!(d[0] * want[0] + d[1] * want[1] > 0.95);
        // At the bottom-left waypoint the next one lies to the right.
        let d = e.expert_direction(&[0.1, 0.1]);
        assert!(d[0] > 0.95);
    }

    #[test]
    fn expert_always_succeeds_without_collisions() {
        let e = env();
        let mut rng = SplitRng::seed_from_u64(0);
        let mut lengths = Vec::new();
        for _ in 0..100 {
            let mut ep = rng.split();
            let start = e.reset(&mut ep);
            let r = rollout_from(&e, start, |s| e.expert_act(s, &mut ep));
            assert!(r.success);
            assert_eq!(r.collisions, 0);
            for w in 0..r.states.len() - 1 {
                let (p, q) = (&r.states[w], &r.states[w + 1]);
                assert!(e.walls.iter().all(|seg| !crosses([p[0], p[1]], [q[0], q[1]], seg)));
            }
            lengths.push(r.actions.len());
        }
        let max = *lengths.iter().max().unwrap();
        let min = *lengths.iter().min().unwrap();
        assert!(min >= 50 && max <= 120, "lengths {min}..{max}");
    }

    #[test]
    fn demos_are_successful_and_reproducible() {
        let e = env();
        let (ds, report) = generate_demos(&e, 10, &mut SplitRng::seed_from_u64(4)).unwrap();
        assert_eq!(ds.trajectories().len(), 10);
        assert_eq!(report.discarded, 0);
        for t in ds.trajectories() {
            assert!(e.at_goal(t.states.last().unwrap()));
        }
        let (again, _) = generate_demos(&e, 10, &mut SplitRng::seed_from_u64(4)).unwrap();
        assert_eq!(again.trajectories(), ds.trajectories());
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.save(f.path()).unwrap();
        assert_eq!(DemoDataset::load(f.path()).unwrap().trajectories(), ds.trajectories());
    }

    #[test]
    fn broken_maze_is_reported() {
        // A wall sealing the central room.
        let mut e = env();
        e.walls.push(Segment { a: [0.55, 0.2], b: [0.8, 0.2] });
        assert!(matches!(generate_demos(&e, 3, &mut SplitRng::seed_from_u64(0)), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn moves_never_cross_walls(x in 0.0f64..1.0, y in 0.0f64..1.0, ax in -2.0f64..2.0, ay in -2.0f64..2.0) {
            let e = env();
            let (next, _) = e.transition(&[x, y], &[ax, ay]);
            let (n2, _) = e.transition(&[x, y], &[ax, ay]);
            prop_assert_eq!(&next, &n2);
            prop_assert!(next.iter().all(|v| (0.0..=1.0).contains(v)));
            for w in &e.walls {
                prop_assert!(!crosses([x, y], [next[0], next[1]], w));
            }
        }
    }
}
