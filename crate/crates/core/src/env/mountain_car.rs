//! Continuous-action mountain car with the classic control-suite constants.
//!
//! State is `(position, velocity)`; the hill height is `sin(3x)`. Reaching
//! the goal position ends the episode, modelled as an absorbing state.

use serde::{Deserialize, Serialize};

use crate::env::continuous::{ContinuousEnv, GoalSpec, StateBounds};
use crate::error::{Error, Result};
use crate::state::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MountainCarParams {
    pub power: f64,
    pub gravity: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub goal_velocity: f64,
    pub max_force: f64,
    /// Radius of the goal region used by the metrics, around
    /// `(goal_position + 0.05, 0)`.
    pub goal_radius: f64,
    /// Nominal time per step. The task is defined per step, so this is 1 and
    /// only reported.
    pub dt: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        MountainCarParams {
            power: 0.0015,
            gravity: 0.0025,
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.45,
            goal_velocity: 0.0,
            max_force: 1.0,
            goal_radius: 0.1,
            dt: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MountainCar {
    params: MountainCarParams,
    bounds: StateBounds,
    goal: GoalSpec,
}

impl Default for MountainCar {
    fn default() -> Self {
        MountainCar::new(MountainCarParams::default()).expect("default parameters are valid")
    }
}

impl MountainCar {
    pub fn new(params: MountainCarParams) -> Result<Self> {
        let p = &params;
        let ok = [p.power, p.gravity, p.max_speed, p.max_force, p.goal_radius, p.dt].iter().all(|v| v.is_finite() && *v > 0.0)
            && p.min_position < p.goal_position
            && p.goal_position <= p.max_position;
        if !ok {
            return Err(Error::InvalidParameter(format!("mountain car parameters out of range: {params:?}")));
        }
        Ok(MountainCar {
            params,
            bounds: StateBounds {
                lower: vec![p.min_position, -p.max_speed],
                upper: vec![p.max_position, p.max_speed],
                periodic: vec![false, false],
            },
            goal: GoalSpec { state: vec![p.goal_position + 0.05, 0.0], radius: p.goal_radius },
        })
    }

    pub fn params(&self) -> &MountainCarParams {
        &self.params
    }

    /// Resting point at the valley floor.
    pub fn valley_bottom(&self) -> StateVector {
        StateVector::new(&[-std::f64::consts::PI / 6.0, 0.0])
    }

    /// Terminal test of the original task.
    pub fn reached(&self, s: &StateVector) -> bool {
        s[0] >= self.params.goal_position && s[1] >= self.params.goal_velocity
    }
}

impl ContinuousEnv for MountainCar {
    fn name(&self) -> &'static str {
        "mountain_car"
    }

    fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    fn action_bounds(&self) -> (f64, f64) {
        (-self.params.max_force, self.params.max_force)
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn step(&self, s: &StateVector, action: f64) -> StateVector {
        if self.reached(s) {
            return s.clone();
        }
        let p = &self.params;
        let force = action.clamp(-p.max_force, p.max_force);
        let mut v = s[1] + force * p.power - p.gravity * (3.0 * s[0]).cos();
        v = v.clamp(-p.max_speed, p.max_speed);
        let x = (s[0] + v).clamp(p.min_position, p.max_position);
        if x == p.min_position && v < 0.0 {
            v = 0.0;
        }
        StateVector::new(&[x, v])
    }

    fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    fn in_goal(&self, s: &StateVector) -> bool {
        self.reached(s)
    }

    fn parameters(&self) -> serde_json::Value {
        serde_json::json!({
            "env": "mountain_car",
            "constants": self.params,
            "state_units": ["position", "velocity (position per step)"],
        })
    }
}
