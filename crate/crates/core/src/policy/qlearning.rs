//! Tabular Q-learning with ε-greedy exploration and greedy checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::grid::{Action, GridWorld};
use crate::error::{Error, Result};
use crate::policy::tabular::{QTable, TabularPolicy};
use crate::state::Cell;

/// ε after `k` episodes is `max(end, start · decay^k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        (self.start * self.decay.powi(episode.min(i32::MAX as usize) as i32)).max(self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QLearningConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes: usize,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
    pub max_steps: usize,
    /// Episode counts after which the greedy policy is saved.
    pub checkpoints: Vec<usize>,
}

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [0, 150, 750, 1200];

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            gamma: 0.99,
            learning_rate: 0.5,
            episodes: 1200,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.05, decay: 0.995 },
            seed: 7,
            max_steps: 200,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.epsilon;
        let checks = [
            (self.gamma > 0.0 && self.gamma <= 1.0, "gamma must lie in (0, 1]"),
            (self.learning_rate > 0.0 && self.learning_rate <= 1.0, "learning rate must lie in (0, 1]"),
            (
                (0.0..=1.0).contains(&e.end) && e.end <= e.start && e.start <= 1.0,
                "epsilon must satisfy 0 <= end <= start <= 1",
            ),
            (e.decay > 0.0 && e.decay <= 1.0, "epsilon decay must lie in (0, 1] so the schedule never increases"),
            (self.max_steps > 0, "max steps per episode must be positive"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::InvalidParameter((*msg).into()));
        }
        if let Some(c) = self.checkpoints.iter().find(|&&c| c > self.episodes) {
            return Err(Error::InvalidParameter(format!("checkpoint {c} is past the last episode {}", self.episodes)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub episode: usize,
    pub policy: TabularPolicy,
}

#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub config: QLearningConfig,
    pub q: QTable,
    /// Sorted by episode, without duplicates.
    pub checkpoints: Vec<Checkpoint>,
    pub episode_lengths: Vec<usize>,
}

/// Trains from per-episode uniform random starts over free non-goal cells.
/// Reaching the goal ends an episode and is treated as terminal.
pub fn train_tabular_q(world: &GridWorld, cfg: &QLearningConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    let starts: Vec<Cell> = world.free_cells().into_iter().filter(|c| *c != world.goal()).collect();
    let mut marks = cfg.checkpoints.clone();
    marks.sort_unstable();
    marks.dedup();
    let mut marks = marks.into_iter().peekable();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = QTable::zeros(world.rows(), world.cols());
    let mut checkpoints = Vec::new();
    let mut episode_lengths = Vec::with_capacity(cfg.episodes);
    for episode in 0..=cfg.episodes {
        while marks.next_if_eq(&episode).is_some() {
            checkpoints.push(Checkpoint { episode, policy: TabularPolicy::from_q(&q, world) });
        }
        if episode == cfg.episodes || starts.is_empty() {
            continue;
        }
        let eps = cfg.epsilon.at(episode);
        let mut s = starts[rng.gen_range(0..starts.len())];
        let mut steps = 0;
        while steps < cfg.max_steps {
            let a = if rng.gen::<f64>() < eps {
                Action::ALL[rng.gen_range(0..Action::ALL.len())]
            } else {
                q.greedy(s)
            };
            let t = world.transition(s, a);
            let future = if t.reached_goal { 0.0 } else { q.row(t.next).iter().copied().fold(f64::NEG_INFINITY, f64::max) };
            let target = t.reward + cfg.gamma * future;
            let v = &mut q.row_mut(s)[a.index()];
            *v += cfg.learning_rate * (target - *v);
            s = t.next;
            steps += 1;
            if t.reached_goal {
                break;
            }
        }
        episode_lengths.push(steps);
    }
    Ok(TrainingRun { config: cfg.clone(), q, checkpoints, episode_lengths })
}
