//! Deterministic gridworld with walls, compiled to a [`TabularMdp`].

use crate::error::{Error, Result};
use crate::environments::tabular::TabularMdp;

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

/// Grid cells are indexed `row * width + col`. Entering the goal yields
/// `goal_reward` and ends the episode; bumping into a wall or the border
/// leaves the agent in place with `wall_penalty` (0 by default).
#[derive(Clone, Debug)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<(usize, usize)>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub goal_reward: f64,
    pub wall_penalty: f64,
}

impl Gridworld {
    /// A 5x5 room with a partial wall between start (top-left) and goal
    /// (bottom-right).
    pub fn standard() -> Self {
        Self {
            width: 5,
            height: 5,
            walls: vec![(1, 1), (1, 2), (1, 3), (3, 1), (3, 2), (3, 3)],
            start: (0, 0),
            goal: (4, 4),
            goal_reward: 1.0,
            wall_penalty: 0.0,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    fn is_wall(&self, row: usize, col: usize) -> bool {
        self.walls.contains(&(row, col))
    }

    /// Cell reached from `(row, col)` under `action`, and whether it bumped.
    pub fn move_from(&self, row: usize, col: usize, action: usize) -> ((usize, usize), bool) {
        let target = match action {
            UP if row > 0 => Some((row - 1, col)),
            RIGHT if col + 1 < self.width => Some((row, col + 1)),
            DOWN if row + 1 < self.height => Some((row + 1, col)),
            LEFT if col > 0 => Some((row, col - 1)),
            _ => None,
        };
        match target {
            Some((r, c)) if !self.is_wall(r, c) => ((r, c), false),
            _ => ((row, col), true),
        }
    }

    pub fn mdp(&self) -> Result<TabularMdp> {
        if self.is_wall(self.start.0, self.start.1) || self.is_wall(self.goal.0, self.goal.1) {
            return Err(Error::Config("start and goal must not be walls".into()));
        }
        let n = self.num_cells();
        let mut transitions = vec![0.0; n * 4 * n];
        let mut rewards = vec![0.0; n * 4];
        let goal = self.cell(self.goal.0, self.goal.1);
        for row in 0..self.height {
            for col in 0..self.width {
                let s = self.cell(row, col);
                for a in 0..4 {
                    if s == goal || self.is_wall(row, col) {
                        transitions[(s * 4 + a) * n + s] = 1.0;
                        continue;
                    }
                    let ((r, c), bumped) = self.move_from(row, col, a);
                    let next = self.cell(r, c);
                    transitions[(s * 4 + a) * n + next] = 1.0;
                    rewards[s * 4 + a] = if next == goal {
                        self.goal_reward
                    } else if bumped {
                        self.wall_penalty
                    } else {
                        0.0
                    };
                }
            }
        }
        let mut terminal = vec![false; n];
        terminal[goal] = true;
        TabularMdp::new(n, 4, transitions, rewards, self.cell(self.start.0, self.start.1), terminal)
    }

    /// Cells that are neither walls nor the goal.
    pub fn free_cells(&self) -> Vec<usize> {
        let goal = self.cell(self.goal.0, self.goal.1);
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|(r, c)| !self.is_wall(*r, *c))
            .map(|(r, c)| self.cell(r, c))
            .filter(|s| *s != goal)
            .collect()
    }
}
