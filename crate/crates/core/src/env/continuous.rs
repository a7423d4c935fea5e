use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoopSystem, GridGeometry, Lattice, SliceGeometry};
use crate::error::{Error, Result};
use crate::policy::Controller;
use crate::state::StateVector;

/// Axis-aligned admissible state box. Periodic dimensions wrap on
/// `[lower, upper)`; the others are clamped by the dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl StateBounds {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn period(&self, d: usize) -> Option<f64> {
        self.periodic[d].then(|| self.upper[d] - self.lower[d])
    }

    pub fn contains(&self, s: &StateVector) -> bool {
        s.dim() == self.dim()
            && (0..self.dim()).all(|d| self.periodic[d] || (self.lower[d]..=self.upper[d]).contains(&s[d]))
    }
}

/// Goal state and radius, in state units. Periodic dimensions use the
/// short-way-round distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub state: Vec<f64>,
    pub radius: f64,
}

/// A continuous-state environment with a scalar action.
pub trait ContinuousEnv: Send + Sync {
    fn name(&self) -> &'static str;

    fn bounds(&self) -> &StateBounds;

    fn action_bounds(&self) -> (f64, f64);

    /// Seconds per step.
    fn dt(&self) -> f64;

    /// One step of the dynamics. Actions outside [`action_bounds`](Self::action_bounds)
    /// are clamped.
    fn step(&self, s: &StateVector, action: f64) -> StateVector;

    fn goal(&self) -> &GoalSpec;

    /// Distance from the goal state over the given dimensions.
    fn goal_distance(&self, s: &[f64], dims: &[usize]) -> f64 {
        let b = self.bounds();
        let g = &self.goal().state;
        dims.iter()
            .map(|&d| {
                let mut dx = s[d] - g[d];
                if let Some(p) = b.period(d) {
                    dx -= p * (dx / p).round();
                }
                dx * dx
            })
            .sum::<f64>()
            .sqrt()
    }

    fn in_goal(&self, s: &StateVector) -> bool {
        let dims: Vec<usize> = (0..s.dim()).collect();
        self.goal_distance(s.coords(), &dims) <= self.goal().radius
    }

    /// Physical constants and unit conventions, for reports.
    fn parameters(&self) -> serde_json::Value;
}

impl<E: ContinuousEnv + ?Sized> ContinuousEnv for Box<E> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn bounds(&self) -> &StateBounds {
        (**self).bounds()
    }
    fn action_bounds(&self) -> (f64, f64) {
        (**self).action_bounds()
    }
    fn dt(&self) -> f64 {
        (**self).dt()
    }
    fn step(&self, s: &StateVector, action: f64) -> StateVector {
        (**self).step(s, action)
    }
    fn goal(&self) -> &GoalSpec {
        (**self).goal()
    }
    fn in_goal(&self, s: &StateVector) -> bool {
        (**self).in_goal(s)
    }
    fn parameters(&self) -> serde_json::Value {
        (**self).parameters()
    }
}

pub const MIN_SLICE_RESOLUTION: usize = 8;

/// A 2-D analysis slice of a continuous state space: two free dimensions
/// sampled on a lattice, the rest pinned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSlice {
    /// State dimensions mapped to lattice rows and columns.
    pub free: [usize; 2],
    /// Full state supplying the pinned dimensions; free entries are ignored.
    pub fixed: Vec<f64>,
    /// Nodes per free dimension.
    pub resolution: [usize; 2],
    /// Sampled range per free dimension; defaults to the state bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[[f64; 2]; 2]>,
}

impl AnalysisSlice {
    /// The first two dimensions over their full bounds, others pinned at 0.
    pub fn full<E: ContinuousEnv + ?Sized>(env: &E, resolution: [usize; 2]) -> Self {
        AnalysisSlice { free: [0, 1], fixed: vec![0.0; env.bounds().dim()], resolution, range: None }
    }

    /// Builds the analysis lattice. Periodic dimensions sampled over their
    /// whole period get `n` nodes spaced `period / n`; other ranges include
    /// both endpoints.
    pub fn lattice<E: ContinuousEnv + ?Sized>(&self, env: &E) -> Result<Lattice> {
        let b = env.bounds();
        let dim = b.dim();
        if self.fixed.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "slice pins {} values for a {dim}-dimensional state",
                self.fixed.len()
            )));
        }
        if self.free[0] == self.free[1] {
            return Err(Error::DimensionMismatch("free dimensions must be distinct".into()));
        }
        if let Some(&d) = self.free.iter().find(|&&d| d >= dim) {
            return Err(Error::DimensionMismatch(format!("free dimension {d} out of range for {} ({dim}-D)", env.name())));
        }
        if self.resolution.iter().any(|&n| n < MIN_SLICE_RESOLUTION) {
            return Err(Error::InvalidParameter(format!(
                "slice resolution {:?} below the minimum of {MIN_SLICE_RESOLUTION} per axis",
                self.resolution
            )));
        }
        for d in (0..dim).filter(|d| !self.free.contains(d)) {
            let v = self.fixed[d];
            if !v.is_finite() || (!b.periodic[d] && !(b.lower[d]..=b.upper[d]).contains(&v)) {
                return Err(Error::InvalidParameter(format!(
                    "pinned value {v} for dimension {d} outside [{}, {}]",
                    b.lower[d], b.upper[d]
                )));
            }
        }
        let mut origin = [0.0; 2];
        let mut spacing = [0.0; 2];
        let mut lower = [0.0; 2];
        let mut upper = [0.0; 2];
        let mut period = [None; 2];
        for a in 0..2 {
            let d = self.free[a];
            let n = self.resolution[a];
            let [lo, hi] = self.range.map_or([b.lower[d], b.upper[d]], |r| r[a]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!("slice range [{lo}, {hi}] for dimension {d} is empty")));
            }
            lower[a] = b.lower[d];
            upper[a] = b.upper[d];
            period[a] = b.period(d);
            origin[a] = lo;
            spacing[a] = match period[a] {
                Some(p) if (hi - lo - p).abs() <= 1e-12 * p => p / n as f64,
                _ => (hi - lo) / (n - 1) as f64,
            };
        }
        let mut base = StateVector::new(&self.fixed);
        base[self.free[0]] = origin[0];
        base[self.free[1]] = origin[1];
        Lattice::slice(
            self.resolution[0],
            self.resolution[1],
            SliceGeometry { free: self.free, base, geometry: GridGeometry { origin, spacing }, lower, upper, period },
        )
    }
}

/// A continuous environment closed under a controller, analysed on a slice.
pub struct ControlledSystem<E, C> {
    env: E,
    controller: C,
    lattice: Lattice,
    slice: AnalysisSlice,
}

/// Closes `env` with `controller` and attaches the slice's analysis lattice.
/// The flow is evaluated in the full state space; the lattice projects onto
/// the free dimensions.
pub fn slice_to_grid<E: ContinuousEnv, C: Controller>(env: E, controller: C, slice: &AnalysisSlice) -> Result<ControlledSystem<E, C>> {
    let lattice = slice.lattice(&env)?;
    Ok(ControlledSystem { env, controller, lattice, slice: slice.clone() })
}

impl<E: ContinuousEnv, C: Controller> ControlledSystem<E, C> {
    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn controller(&self) -> &C {
        &self.controller
    }

    pub fn slice(&self) -> &AnalysisSlice {
        &self.slice
    }
}

impl<E: ContinuousEnv, C: Controller> ClosedLoopSystem for ControlledSystem<E, C> {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn transition(&self, s: &StateVector) -> StateVector {
        self.env.step(s, self.controller.act(s))
    }

    fn check(&self, s: &StateVector) -> Result<()> {
        self.lattice.check(s)?;
        if !self.env.bounds().contains(s) {
            return Err(Error::InvalidState(s.to_string(), "outside the state bounds"));
        }
        Ok(())
    }
}
