//! Benchmark systems: grid worlds and continuous control tasks.

pub mod continuous;
pub mod grid;
pub mod mountain_car;
pub mod pendulum;

pub use continuous::{slice_to_grid, AnalysisSlice, ContinuousEnv, ControlledSystem, GoalSpec, StateBounds};
pub use grid::{
    build_scattered_blocks, build_simple_wall, build_u_shape_trap, builtin_layout, Action, BlockSpec, GridSystem,
    GridWorld, TrapSpec, WallSpec,
};
pub use mountain_car::{MountainCar, MountainCarParams};
pub use pendulum::{Pendulum, PendulumParams};

use crate::state::StateVector;

/// The bundled continuous tasks.
#[derive(Clone, Debug, PartialEq)]
pub enum ContinuousTask {
    Pendulum(Pendulum),
    MountainCar(MountainCar),
}

impl ContinuousTask {
    fn inner(&self) -> &dyn ContinuousEnv {
        match self {
            ContinuousTask::Pendulum(p) => p,
            ContinuousTask::MountainCar(m) => m,
        }
    }
}

impl ContinuousEnv for ContinuousTask {
    fn name(&self) -> &'static str {
        self.inner().name()
    }
    fn bounds(&self) -> &StateBounds {
        self.inner().bounds()
    }
    fn action_bounds(&self) -> (f64, f64) {
        self.inner().action_bounds()
    }
    fn dt(&self) -> f64 {
        self.inner().dt()
    }
    fn step(&self, s: &StateVector, action: f64) -> StateVector {
        self.inner().step(s, action)
    }
    fn goal(&self) -> &GoalSpec {
        self.inner().goal()
    }
    fn in_goal(&self, s: &StateVector) -> bool {
        self.inner().in_goal(s)
    }
    fn parameters(&self) -> serde_json::Value {
        self.inner().parameters()
    }
}
