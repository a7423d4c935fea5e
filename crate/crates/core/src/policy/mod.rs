//! Policies under verification: scripted oracles, tabular Q-learning and a
//! feed-forward network evaluator.

pub mod mlp;
pub mod qlearning;
pub mod scripted;
pub mod tabular;

use crate::env::grid::Action;
use crate::state::{Cell, StateVector};

pub use mlp::{evaluate_mlp, MlpGridPolicy, MlpPolicyWeights};
pub use qlearning::{train_tabular_q, Checkpoint, EpsilonSchedule, QLearningConfig, TrainingRun};
pub use scripted::{make_controller, make_scripted, ControllerRule, MountainCarEnergyPump, PendulumEnergyPump, ScriptedPolicy, ScriptedRule};
pub use tabular::{QTable, TabularPolicy};

/// A deterministic grid policy, total on valid cells.
pub trait GridPolicy: Send + Sync {
    fn action(&self, cell: Cell) -> Action;
}

impl<P: GridPolicy + ?Sized> GridPolicy for &P {
    fn action(&self, cell: Cell) -> Action {
        (**self).action(cell)
    }
}

impl<P: GridPolicy + ?Sized> GridPolicy for Box<P> {
    fn action(&self, cell: Cell) -> Action {
        (**self).action(cell)
    }
}

/// A deterministic scalar-action controller for continuous environments.
pub trait Controller: Send + Sync {
    fn act(&self, s: &StateVector) -> f64;
}

impl<F: Fn(&StateVector) -> f64 + Send + Sync> Controller for F {
    fn act(&self, s: &StateVector) -> f64 {
        self(s)
    }
}

impl Controller for Box<dyn Controller> {
    fn act(&self, s: &StateVector) -> f64 {
        (**self).act(s)
    }
}

/// Index of the largest value; ties go to the lowest index.
///
/// # Panics
/// On an empty slice.
pub fn greedy_action(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "greedy_action needs at least one value");
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_action(&[0.0, 0.0, 0.0, 0.0]), 0);
        assert_eq!(greedy_action(&[1.0, 3.0, 2.0, 0.0]), 1);
        assert_eq!(greedy_action(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(greedy_action(&[-5.0, -1.0, -1.0, -2.0]), 1);
    }
}
