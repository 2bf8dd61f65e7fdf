//! Toy environments and scripted experts.

mod grid;
mod maze;

pub use grid::{gridworld_as_tabular, GridWorld, ACTION_NAMES, MOVES};
pub use maze::{
    crosses, generate_demos, rollout, rollout_from, DemoReport, EnvStep, MazeEnv, Rollout, Segment, EXPERT_NOISE,
    MAZE_GOAL, MAZE_GOAL_RADIUS, MAZE_GOAL_REWARD, MAZE_MAX_STEPS, MAZE_START_BOX, MAZE_STEP_REWARD,
    MAZE_STEP_SCALE, MAZE_WALLS,
};
