//! Safety metrics: mean boundary repulsion (MBR), the attractor spurious
//! strength ratio (ASAS) and its trap-aware variant (TASAS).

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attractor::{detect_local_peaks, DensityMap, Peak, PeakSet};
use crate::dynamics::{ClosedLoopSystem, Lattice};
use crate::error::{Error, Result};
use crate::ftle::FtleField;
use crate::io::json::inf_f64;
use crate::state::{Cell, StateVector};

pub const DEFAULT_ALPHA: f64 = 0.25;

/// Safe cells 4-adjacent to an obstacle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub cells: BTreeSet<Cell>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn obstacle_boundary(rows: usize, cols: usize, obstacles: &BTreeSet<Cell>) -> BoundarySet {
    let mut cells = BTreeSet::new();
    for o in obstacles {
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            if let Some(n) = o.offset(dr, dc, rows, cols) {
                if !obstacles.contains(&n) {
                    cells.insert(n);
                }
            }
        }
    }
    BoundarySet { cells }
}

/// Mean σ over the boundary cells with a valid FTLE value; 0 for an empty
/// boundary.
pub fn mbr(sigma: &FtleField, boundary: &BoundarySet) -> f64 {
    let values: Vec<f64> = boundary.cells.iter().filter_map(|c| sigma.get(*c)).collect();
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalRegion {
    cells: BTreeSet<Cell>,
}

impl GoalRegion {
    pub fn new(cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let cells: BTreeSet<Cell> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(Error::InvalidParameter("goal region is empty".into()));
        }
        Ok(GoalRegion { cells })
    }

    pub fn single(cell: Cell) -> Self {
        GoalRegion { cells: BTreeSet::from([cell]) }
    }

    /// Lattice bins whose node lies within `radius` of `goal` in the free
    /// coordinates.
    pub fn within_radius(lattice: &Lattice, goal: &StateVector, radius: f64) -> Result<Self> {
        let cells = lattice.valid_cells().into_iter().filter(|c| {
            let d = lattice.displacement(&lattice.node(*c), goal);
            d[0].hypot(d[1]) <= radius
        });
        GoalRegion::new(cells).map_err(|_| {
            Error::InvalidParameter(format!("no lattice node lies within {radius} of the goal {goal}; refine the lattice"))
        })
    }

    /// Checks the region against the lattice's obstacle set.
    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        match self.cells.iter().find(|c| !lattice.is_valid(**c)) {
            Some(c) => Err(Error::InvalidParameter(format!("goal cell {c} is not a valid state"))),
            None => Ok(()),
        }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.cells.contains(&cell)
    }

    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.cells
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsasResult {
    #[serde(with = "inf_f64")]
    pub asas: f64,
    pub h_goal: f64,
    /// Spurious peaks with `h ≥ α·h_goal`.
    pub significant: PeakSet,
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1]")))
    }
}

pub fn asas(h: &DensityMap, goal: &GoalRegion, alpha: f64) -> Result<AsasResult> {
    check_alpha(alpha)?;
    let h_goal = goal.cells.iter().map(|c| h.get(*c)).fold(0.0, f64::max);
    let spurious = detect_local_peaks(h, &goal.cells);
    let significant = PeakSet { peaks: spurious.peaks.into_iter().filter(|p| p.h >= alpha * h_goal).collect() };
    let asas = if h_goal == 0.0 {
        f64::INFINITY
    } else {
        significant.peaks.iter().map(|p| p.h).fold(0.0, |a, b| a + b) / h_goal
    };
    Ok(AsasResult { asas, h_goal, significant })
}

/// Fraction of `n` rollouts from `p` whose state bins into `goal` within
/// `t_escape` steps, checked after every transition.
///
/// Systems are deterministic, so every rollout agrees and the result is 0 or
/// 1; `seed` is accepted for stochastic extensions and recorded in reports.
pub fn escape_ratio<S: ClosedLoopSystem + ?Sized>(
    sys: &S,
    p: Cell,
    goal: &GoalRegion,
    n: usize,
    t_escape: usize,
    seed: u64,
) -> Result<f64> {
    let _ = seed;
    if n == 0 || t_escape == 0 {
        return Err(Error::InvalidParameter("escape checks need N ≥ 1 and T_escape ≥ 1".into()));
    }
    if goal.contains(p) {
        return Err(Error::InvalidParameter(format!("escape start {p} lies in the goal region")));
    }
    let lattice = sys.lattice();
    let start = lattice.node(p);
    sys.check(&start)?;
    let escaped = (0..n)
        .into_par_iter()
        .filter(|_| {
            let mut s = start.clone();
            for _ in 0..t_escape {
                s = sys.transition(&s);
                if goal.contains(lattice.bin(&s)) {
                    return true;
                }
            }
            false
        })
        .count();
    Ok(escaped as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEscape {
    pub cell: Cell,
    pub h: f64,
    pub escape_ratio: f64,
    /// ρ(p) = 1 − E(p).
    pub persistence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TasasResult {
    #[serde(with = "inf_f64")]
    pub tasas: f64,
    pub peaks: Vec<PeakEscape>,
}

#[allow(clippy::too_many_arguments)]
pub fn tasas<S: ClosedLoopSystem + ?Sized>(
    h: &DensityMap,
    peaks: &PeakSet,
    h_goal: f64,
    sys: &S,
    goal: &GoalRegion,
    n: usize,
    t_escape: usize,
    seed: u64,
) -> Result<TasasResult> {
    let escapes = peaks
        .peaks
        .iter()
        .map(|&Peak { cell, .. }| {
            let e = escape_ratio(sys, cell, goal, n, t_escape, seed)?;
            Ok(PeakEscape { cell, h: h.get(cell), escape_ratio: e, persistence: 1.0 - e })
        })
        .collect::<Result<Vec<_>>>()?;
    let tasas = if h_goal == 0.0 {
        f64::INFINITY
    } else {
        escapes.iter().map(|p| p.h * p.persistence).fold(0.0, |a, b| a + b) / h_goal
    };
    Ok(TasasResult { tasas, peaks: escapes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricParameters {
    pub alpha: f64,
    pub n_sim: usize,
    pub t_escape: usize,
    pub t_int: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mbr: f64,
    #[serde(with = "inf_f64")]
    pub asas: f64,
    #[serde(with = "inf_f64")]
    pub tasas: f64,
    pub h_goal: f64,
    pub goal: Vec<Cell>,
    pub boundary_size: usize,
    pub peaks: Vec<PeakEscape>,
    pub parameters: MetricParameters,
}

/// All three metrics from a precomputed field and histogram.
pub fn metric_report<S: ClosedLoopSystem + ?Sized>(
    sys: &S,
    sigma: &FtleField,
    h: &DensityMap,
    boundary: &BoundarySet,
    goal: &GoalRegion,
    params: &MetricParameters,
) -> Result<MetricReport> {
    let a = asas(h, goal, params.alpha)?;
    let t = if a.h_goal == 0.0 {
        TasasResult { tasas: f64::INFINITY, peaks: Vec::new() }
    } else {
        tasas(h, &a.significant, a.h_goal, sys, goal, params.n_sim, params.t_escape, params.seed)?
    };
    Ok(MetricReport {
        mbr: mbr(sigma, boundary),
        asas: a.asas,
        tasas: t.tasas,
        h_goal: a.h_goal,
        goal: goal.cells.iter().copied().collect(),
        boundary_size: boundary.len(),
        peaks: t.peaks,
        parameters: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{GridGeometry, LatticeMap};
    use crate::ftle::PerturbationScheme;

    fn cells(v: &[(usize, usize)]) -> BTreeSet<Cell> {
        v.iter().map(|&c| Cell::from(c)).collect()
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(obstacle_boundary(5, 5, &cells(&[(2, 2)])).cells, cells(&[(1, 2), (3, 2), (2, 1), (2, 3)]));
        assert!(obstacle_boundary(5, 5, &BTreeSet::new()).is_empty());
        let wall: BTreeSet<Cell> = (0..6).map(|r| Cell::new(r, 3)).collect();
        let expect: BTreeSet<Cell> = (0..6).flat_map(|r| [Cell::new(r, 2), Cell::new(r, 4)]).collect();
        assert_eq!(obstacle_boundary(6, 7, &wall).cells, expect);
    }

    fn field(rows: usize, cols: usize) -> FtleField {
        FtleField::new(rows, cols, 1, PerturbationScheme::ForwardGrid { h: 1 }, GridGeometry::UNIT)
    }

    #[test]
    fn mbr_examples() {
        let mut f = field(3, 3);
        let b = BoundarySet { cells: cells(&[(0, 0), (0, 1)]) };
        f.set(Cell::new(0, 0), Some(0.1));
        f.set(Cell::new(0, 1), Some(0.3));
        assert!((mbr(&f, &b) - 0.2).abs() < 1e-15);
        assert_eq!(mbr(&f, &BoundarySet::default()), 0.0);
        f.set(Cell::new(0, 1), None);
        assert_eq!(mbr(&f, &b), 0.1);
    }

    #[test]
    fn asas_examples() {
        let goal = GoalRegion::single(Cell::new(0, 0));
        let mut h = DensityMap::zeros(6, 6);
        h.set(Cell::new(0, 0), 100.0);
        assert_eq!(asas(&h, &goal, 0.25).unwrap().asas, 0.0);
        h.set(Cell::new(3, 3), 50.0);
        h.set(Cell::new(5, 0), 30.0);
        h.set(Cell::new(0, 5), 10.0);
        let r = asas(&h, &goal, 0.25).unwrap();
        assert!((r.asas - 0.8).abs() < 1e-15);
        assert_eq!(r.significant.cells(), vec![Cell::new(3, 3), Cell::new(5, 0)]);
        h.set(Cell::new(0, 0), 0.0);
        assert_eq!(asas(&h, &goal, 0.25).unwrap().asas, f64::INFINITY);
        assert!(asas(&h, &goal, 0.0).is_err());
        assert!(asas(&h, &goal, 1.5).is_err());
    }

    #[test]
    fn escape_from_fixed_points() {
        // Column 0 is absorbing; everything else shifts left one column per step.
        let sys = LatticeMap::new(Lattice::open_cells(3, 5).unwrap(), |c| Cell::new(c.row, c.col.saturating_sub(1))).unwrap();
        let goal = GoalRegion::single(Cell::new(1, 0));
        assert_eq!(escape_ratio(&sys, Cell::new(1, 1), &goal, 10, 1, 0).unwrap(), 1.0);
        assert_eq!(escape_ratio(&sys, Cell::new(1, 4), &goal, 10, 3, 0).unwrap(), 0.0);
        assert_eq!(escape_ratio(&sys, Cell::new(0, 3), &goal, 100, 20, 0).unwrap(), 0.0);
        assert!(escape_ratio(&sys, Cell::new(1, 0), &goal, 1, 1, 0).is_err());
    }

    #[test]
    fn tasas_examples() {
        let sys = LatticeMap::identity(4, 4).unwrap();
        let goal = GoalRegion::single(Cell::new(0, 0));
        let mut h = DensityMap::zeros(4, 4);
        h.set(Cell::new(0, 0), 100.0);
        h.set(Cell::new(3, 3), 50.0);
        let a = asas(&h, &goal, 0.25).unwrap();
        let t = tasas(&h, &a.significant, a.h_goal, &sys, &goal, 5, 10, 0).unwrap();
        assert_eq!(t.tasas, 0.5);
        assert_eq!(t.peaks[0].persistence, 1.0);
        let none = tasas(&h, &PeakSet::default(), 100.0, &sys, &goal, 5, 10, 0).unwrap();
        assert_eq!(none.tasas, 0.0);
    }

    #[test]
    fn report_serializes_infinity_as_string() {
        let sys = LatticeMap::identity(3, 3).unwrap();
        let goal = GoalRegion::single(Cell::new(0, 0));
        let mut h = DensityMap::zeros(3, 3);
        h.set(Cell::new(2, 2), 4.0);
        let params = MetricParameters { alpha: 0.25, n_sim: 1, t_escape: 4, t_int: 1, seed: 0 };
        let r = metric_report(&sys, &field(3, 3), &h, &BoundarySet::default(), &goal, &params).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["asas"], "inf");
        assert_eq!(json["tasas"], "inf");
        let back: MetricReport = serde_json::from_value(json).unwrap();
        assert_eq!(back.asas, f64::INFINITY);
    }
}
