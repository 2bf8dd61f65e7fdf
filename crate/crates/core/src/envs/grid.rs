//! Discrete gridworld with slippery moves and an absorbing goal.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{TabularMDP, TabularPolicy};

/// Row/column offsets for up, right, down, left.
pub const MOVES: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
pub const ACTION_NAMES: [&str; 4] = ["up", "right", "down", "left"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    /// Blocked cells as `(row, col)`.
    pub obstacles: Vec<(usize, usize)>,
    pub goal: (usize, usize),
    /// Probability that the move is replaced by a uniformly random one.
    pub slip: f64,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            obstacles: vec![(1, 1), (1, 3), (3, 2)],
            goal: (4, 4),
            slip: 0.1,
        }
    }
}

impl GridWorld {
    /// A 1-row corridor of `n` cells with the goal at the right end.
    pub fn corridor(n: usize, slip: f64) -> Self {
        Self {
            width: n,
            height: 1,
            obstacles: vec![],
            goal: (0, n.saturating_sub(1)),
            slip,
        }
    }

    fn blocked(&self, cell: (usize, usize)) -> bool {
        self.obstacles.contains(&cell)
    }

    /// Free cells in row-major order; the state index is the position here.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| !self.blocked(cell))
            .collect()
    }

    pub fn state_index(&self, cell: (usize, usize)) -> Option<usize> {
        self.free_cells().iter().position(|&c| c == cell)
    }

    /// Cell reached by moving in direction `a`; blocked moves stay put.
    pub fn move_cell(&self, cell: (usize, usize), a: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[a];
        let r = cell.0 as i64 + dr;
        let c = cell.1 as i64 + dc;
        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
            return cell;
        }
        let next = (r as usize, c as usize);
        if self.blocked(next) {
            cell
        } else {
            next
        }
    }

    /// Shortest move count to the goal from each free cell (ignoring slip).
    pub fn distances(&self) -> Vec<Option<usize>> {
        let cells = self.free_cells();
        let mut dist = vec![None; cells.len()];
        let Some(g) = self.state_index(self.goal) else {
            return dist;
        };
        dist[g] = Some(0);
        let mut queue = VecDeque::from([g]);
        while let Some(i) = queue.pop_front() {
            let d = dist[i].expect("queued");
            for (j, &cell) in cells.iter().enumerate() {
                if dist[j].is_none() && (0..4).any(|a| self.move_cell(cell, a) == cells[i]) {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("grid must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::config("slip must lie in [0, 1]"));
        }
        if self.goal.0 >= self.height || self.goal.1 >= self.width || self.blocked(self.goal) {
            return Err(Error::config("goal must be a free cell inside the grid"));
        }
        if self.distances().iter().any(Option::is_none) {
            return Err(Error::config("goal is not reachable from every free cell"));
        }
        Ok(())
    }

    /// One-hot state vector.
    pub fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.free_cells().len()];
        v[state] = 1.0;
        v
    }

    /// Deterministic shortest-path expert; ties go to the lowest action index.
    pub fn expert_policy(&self) -> Result<TabularPolicy> {
        self.validate()?;
        let cells = self.free_cells();
        let dist = self.distances();
        let actions: Vec<usize> = cells
            .iter()
            .map(|&cell| {
                (0..4)
                    .min_by_key(|&a| {
                        let j = self.state_index(self.move_cell(cell, a)).expect("free");
                        dist[j].expect("reachable")
                    })
                    .expect("four actions")
            })
            .collect();
        TabularPolicy::deterministic(&actions, 4)
    }
}

/// Tabular form: states are the free cells, four actions, slip spread
/// uniformly over all actions, absorbing goal, uniform start over non-goal cells.
pub fn gridworld_as_tabular(env: &GridWorld) -> Result<TabularMDP> {
    env.validate()?;
    let cells = env.free_cells();
    let n = cells.len();
    let goal = env.state_index(env.goal).expect("validated");
    let mut t = vec![vec![vec![0.0; n]; 4]; n];
    for (i, &cell) in cells.iter().enumerate() {
        for a in 0..4 {
            if i == goal {
                t[i][a][i] = 1.0;
                continue;
            }
            for b in 0..4 {
                let p = if a == b { 1.0 - env.slip } else { 0.0 } + env.slip / 4.0;
                let j = env.state_index(env.move_cell(cell, b)).expect("free");
                t[i][a][j] += p;
            }
        }
    }
    let mu0 = if n == 1 {
        vec![1.0]
    } else {
        (0..n)
            .map(|i| if i == goal { 0.0 } else { 1.0 / (n - 1) as f64 })
            .collect()
    };
    TabularMDP::new(t, mu0)
}
