//! Torque-limited pendulum with the classic control-suite constants.
//!
//! State is `(θ, ω)` with θ in radians (0 upright, wrapped to `[−π, π)`) and
//! ω in radians per *step* (ω·dt), so both lattice axes are in comparable
//! units.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::env::continuous::{ContinuousEnv, GoalSpec, StateBounds};
use crate::error::{Error, Result};
use crate::state::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub g: f64,
    pub m: f64,
    pub l: f64,
    pub dt: f64,
    pub max_torque: f64,
    /// Angular speed limit in rad/s.
    pub max_speed: f64,
    /// Viscous damping coefficient (torque per rad/s).
    pub damping: f64,
    /// Goal disc radius around `(0, 0)` in state units.
    pub goal_radius: f64,
    /// Freeze the state once it enters the goal disc.
    pub absorbing_goal: bool,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            g: 10.0,
            m: 1.0,
            l: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            damping: 0.0,
            goal_radius: 0.1,
            absorbing_goal: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pendulum {
    params: PendulumParams,
    bounds: StateBounds,
    goal: GoalSpec,
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum::new(PendulumParams::default()).expect("default parameters are valid")
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π.
    if w >= PI {
        -PI
    } else {
        w
    }
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Result<Self> {
        let positive = [params.g, params.m, params.l, params.dt, params.max_torque, params.max_speed, params.goal_radius];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(params.damping.is_finite() && params.damping >= 0.0) {
            return Err(Error::InvalidParameter(format!("pendulum parameters out of range: {params:?}")));
        }
        let w = params.max_speed * params.dt;
        Ok(Pendulum {
            params,
            bounds: StateBounds { lower: vec![-PI, -w], upper: vec![PI, w], periodic: vec![true, false] },
            goal: GoalSpec { state: vec![0.0, 0.0], radius: params.goal_radius },
        })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    /// Mechanical energy of the uniform rod, zero potential at the pivot.
    pub fn energy(&self, s: &StateVector) -> f64 {
        let p = &self.params;
        let rate = s[1] / p.dt;
        p.m * p.l * p.l * rate * rate / 6.0 + 0.5 * p.m * p.g * p.l * s[0].cos()
    }

    /// Energy of the upright equilibrium.
    pub fn upright_energy(&self) -> f64 {
        0.5 * self.params.m * self.params.g * self.params.l
    }
}

impl ContinuousEnv for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    fn action_bounds(&self) -> (f64, f64) {
        (-self.params.max_torque, self.params.max_torque)
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    /// Semi-implicit Euler: update the rate first, then the angle with the
    /// new rate.
    fn step(&self, s: &StateVector, action: f64) -> StateVector {
        if self.params.absorbing_goal && self.in_goal(s) {
            return s.clone();
        }
        let p = &self.params;
        let u = action.clamp(-p.max_torque, p.max_torque);
        let inertia = p.m * p.l * p.l / 3.0;
        let rate = s[1] / p.dt;
        let accel = 1.5 * p.g / p.l * s[0].sin() + (u - p.damping * rate) / inertia;
        let rate = (rate + accel * p.dt).clamp(-p.max_speed, p.max_speed);
        let theta = wrap_angle(s[0] + rate * p.dt);
        StateVector::new(&[theta, rate * p.dt])
    }

    fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    fn parameters(&self) -> serde_json::Value {
        serde_json::json!({
            "env": "pendulum",
            "constants": self.params,
            "state_units": ["rad (0 upright, wrapped to [-pi, pi))", "rad/step (omega * dt)"],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_equilibrium_is_fixed() {
        let p = Pendulum::default();
        let s = StateVector::new(&[0.0, 0.0]);
        assert_eq!(p.step(&s, 0.0), s);
    }

    #[test]
    fn hanging_state_stays_at_rest() {
        let p = Pendulum::default();
        let next = p.step(&StateVector::new(&[PI, 0.0]), 0.0);
        // sin(π) is 1.2e-16 in floating point, not 0.
        assert!(next[1].abs() < 1e-15);
        assert!((next[0].abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn damping_dissipates_energy() {
        let p = Pendulum::new(PendulumParams { damping: 0.05, ..Default::default() }).unwrap();
        let mut s = StateVector::new(&[1.0, 0.0]);
        let e0 = p.energy(&s);
        for _ in 0..100 {
            s = p.step(&s, 0.0);
        }
        assert!(p.energy(&s) < e0 - 1e-3, "{} vs {e0}", p.energy(&s));
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        let p = Pendulum::default();
        let a = p.step(&StateVector::new(&[0.7, 0.1]), 0.5);
        let b = p.step(&StateVector::new(&[0.7 + 2.0 * PI, 0.1]), 0.5);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn rate_is_clamped() {
        let p = Pendulum::default();
        let s = p.step(&StateVector::new(&[1.5, 0.4]), 2.0);
        assert!(s[1] <= 0.4 + 1e-15);
        assert!(p.bounds().contains(&s));
    }

    #[test]
    fn absorbing_goal_freezes() {
        let p = Pendulum::new(PendulumParams { absorbing_goal: true, ..Default::default() }).unwrap();
        let s = StateVector::new(&[0.05, 0.02]);
        assert_eq!(p.step(&s, 2.0), s);
    }
}
