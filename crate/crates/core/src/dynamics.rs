//! Closed-loop systems `s_{k+1} = f(s_k) = T(s_k, π(s_k))` and their flow maps.
//!
//! Every system carries a [`Lattice`]: the 2-D analysis grid on which FTLE
//! fields and density maps live. In grid mode the lattice *is* the state
//! space (cells are states, obstacles are invalid). In continuous mode the
//! lattice is a regular sampling of two free state dimensions, with the
//! remaining dimensions pinned to fixed values.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{Cell, StateVector};

/// Placement of lattice nodes in free-coordinate space: node `(r, c)` sits at
/// `origin + (r·spacing[0], c·spacing[1])`. Grid-mode lattices use origin 0
/// and unit spacing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
}

impl GridGeometry {
    pub const UNIT: GridGeometry = GridGeometry { origin: [0.0, 0.0], spacing: [1.0, 1.0] };

    pub fn node(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin[0] + cell.row as f64 * self.spacing[0],
            self.origin[1] + cell.col as f64 * self.spacing[1],
        ]
    }
}

/// Embedding of a 2-D slice into a (possibly higher-dimensional) continuous
/// state space.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceGeometry {
    /// State dimensions mapped to lattice rows and columns.
    pub free: [usize; 2],
    /// Full state supplying the pinned dimensions.
    pub base: StateVector,
    pub geometry: GridGeometry,
    /// Admissible range of each free coordinate (may be infinite).
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Period of each free coordinate, if it wraps.
    pub period: [Option<f64>; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub enum LatticeKind {
    Cells { valid: Vec<bool> },
    Slice(SliceGeometry),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    rows: usize,
    cols: usize,
    kind: LatticeKind,
}

impl Lattice {
    /// Grid-mode lattice; `obstacles` is row-major.
    pub fn cells(rows: usize, cols: usize, obstacles: &[bool]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("lattice must be non-empty".into()));
        }
        if obstacles.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "obstacle mask has {} entries, expected {}",
                obstacles.len(),
                rows * cols
            )));
        }
        let valid = obstacles.iter().map(|o| !o).collect();
        Ok(Lattice { rows, cols, kind: LatticeKind::Cells { valid } })
    }

    pub fn open_cells(rows: usize, cols: usize) -> Result<Self> {
        Lattice::cells(rows, cols, &vec![false; rows * cols])
    }

    /// Continuous-mode lattice. Every node must lie inside the admissible range.
    pub fn slice(rows: usize, cols: usize, slice: SliceGeometry) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidParameter("slice lattice needs at least 2 nodes per axis".into()));
        }
        if slice.free[0] == slice.free[1] {
            return Err(Error::DimensionMismatch("free dimensions must be distinct".into()));
        }
        for &d in &slice.free {
            if d >= slice.base.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "free dimension {d} out of range for a {}-dimensional state",
                    slice.base.dim()
                )));
            }
        }
        if slice.geometry.spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::InvalidParameter("lattice spacing must be positive".into()));
        }
        let last = slice.geometry.node(Cell::new(rows - 1, cols - 1));
        for a in 0..2 {
            let first = slice.geometry.origin[a];
            if slice.period[a].is_none() && (first < slice.lower[a] || last[a] > slice.upper[a]) {
                return Err(Error::InvalidParameter(format!(
                    "lattice axis {a} spans [{first}, {}] outside [{}, {}]",
                    last[a], slice.lower[a], slice.upper[a]
                )));
            }
        }
        Ok(Lattice { rows, cols, kind: LatticeKind::Slice(slice) })
    }

    /// Unbounded 2-D plane sampled on a `rows × cols` lattice.
    pub fn plane(rows: usize, cols: usize, geometry: GridGeometry) -> Result<Self> {
        Lattice::slice(
            rows,
            cols,
            SliceGeometry {
                free: [0, 1],
                base: StateVector::new(&[0.0, 0.0]),
                geometry,
                lower: [f64::NEG_INFINITY; 2],
                upper: [f64::INFINITY; 2],
                period: [None, None],
            },
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &LatticeKind {
        &self.kind
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.kind, LatticeKind::Cells { .. })
    }

    pub fn geometry(&self) -> GridGeometry {
        match &self.kind {
            LatticeKind::Cells { .. } => GridGeometry::UNIT,
            LatticeKind::Slice(s) => s.geometry,
        }
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn is_valid(&self, cell: Cell) -> bool {
        self.contains(cell)
            && match &self.kind {
                LatticeKind::Cells { valid } => valid[self.index(cell)],
                LatticeKind::Slice(_) => true,
            }
    }

    /// All cells in row-major order.
    pub fn all_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }

    /// Valid cells in row-major order.
    pub fn valid_cells(&self) -> Vec<Cell> {
        self.all_cells().filter(|&c| self.is_valid(c)).collect()
    }

    /// State represented by a lattice node.
    pub fn node(&self, cell: Cell) -> StateVector {
        match &self.kind {
            LatticeKind::Cells { .. } => StateVector::from_cell(cell),
            LatticeKind::Slice(s) => s.embed(s.geometry.node(cell)),
        }
    }

    /// Free coordinates of a state (grid mode: `(row, col)`).
    pub fn project(&self, s: &StateVector) -> [f64; 2] {
        match &self.kind {
            LatticeKind::Cells { .. } => [s[0], s[1]],
            LatticeKind::Slice(sl) => [s[sl.free[0]], s[sl.free[1]]],
        }
    }

    /// Free-coordinate displacement `to − from`, taking the short way round
    /// periodic axes.
    pub fn displacement(&self, from: &StateVector, to: &StateVector) -> [f64; 2] {
        let a = self.project(from);
        let b = self.project(to);
        let mut d = [b[0] - a[0], b[1] - a[1]];
        if let LatticeKind::Slice(sl) = &self.kind {
            for (k, p) in sl.period.iter().enumerate() {
                if let Some(p) = p {
                    d[k] -= p * (d[k] / p).round();
                }
            }
        }
        d
    }

    /// Nearest lattice node to a state, clamped onto the lattice.
    pub fn bin(&self, s: &StateVector) -> Cell {
        let g = self.geometry();
        let p = match &self.kind {
            LatticeKind::Cells { .. } => self.project(s),
            LatticeKind::Slice(sl) => sl.wrap_free(self.project(s)),
        };
        let idx = |a: usize, n: usize| -> usize {
            let t = ((p[a] - g.origin[a]) / g.spacing[a]).round();
            if let LatticeKind::Slice(sl) = &self.kind {
                if let Some(period) = sl.period[a] {
                    let m = (period / g.spacing[a]).round() as i64;
                    let k = (t as i64).rem_euclid(m.max(1)) as usize;
                    return k.min(n - 1);
                }
            }
            if t.is_nan() || t <= 0.0 {
                0
            } else {
                (t as usize).min(n - 1)
            }
        };
        Cell::new(idx(0, self.rows), idx(1, self.cols))
    }

    /// Stencil point displaced from node `cell` by `step` along lattice axis
    /// `axis` (0 = rows, 1 = cols), or `None` if it is not a valid state.
    pub fn perturbed(&self, cell: Cell, axis: usize, step: f64) -> Option<StateVector> {
        match &self.kind {
            LatticeKind::Cells { .. } => {
                if step.fract() != 0.0 {
                    return None;
                }
                let k = step as isize;
                let (dr, dc) = if axis == 0 { (k, 0) } else { (0, k) };
                let n = cell.offset(dr, dc, self.rows, self.cols)?;
                self.is_valid(n).then(|| StateVector::from_cell(n))
            }
            LatticeKind::Slice(sl) => {
                let mut p = sl.geometry.node(cell);
                p[axis] += step;
                if sl.period[axis].is_none() && !(sl.lower[axis]..=sl.upper[axis]).contains(&p[axis]) {
                    return None;
                }
                Some(sl.embed(sl.wrap_free(p)))
            }
        }
    }

    /// Uniform draw over valid states: a valid cell in grid mode, a point of
    /// the lattice's bounding box in continuous mode.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        match &self.kind {
            LatticeKind::Cells { .. } => {
                let valid = self.valid_cells();
                StateVector::from_cell(valid[rng.gen_range(0..valid.len())])
            }
            LatticeKind::Slice(sl) => {
                let far = sl.geometry.node(Cell::new(self.rows - 1, self.cols - 1));
                let mut p = [0.0; 2];
                for a in 0..2 {
                    let lo = sl.geometry.origin[a];
                    let hi = match sl.period[a] {
                        Some(period) => lo + period,
                        None => far[a],
                    };
                    p[a] = rng.gen_range(lo..hi);
                }
                sl.embed(sl.wrap_free(p))
            }
        }
    }

    /// Checks that a state is admissible on this lattice's state space.
    pub fn check(&self, s: &StateVector) -> Result<()> {
        match &self.kind {
            LatticeKind::Cells { .. } => {
                let cell = s
                    .to_cell()
                    .ok_or_else(|| Error::InvalidState(s.to_string(), "not a grid cell"))?;
                if !self.contains(cell) {
                    return Err(Error::InvalidState(s.to_string(), "outside grid bounds"));
                }
                if !self.is_valid(cell) {
                    return Err(Error::InvalidState(s.to_string(), "obstacle cell"));
                }
                Ok(())
            }
            LatticeKind::Slice(sl) => {
                if s.dim() != sl.base.dim() {
                    return Err(Error::InvalidState(s.to_string(), "wrong dimension"));
                }
                if !s.is_finite() {
                    return Err(Error::InvalidState(s.to_string(), "non-finite coordinate"));
                }
                Ok(())
            }
        }
    }
}

impl SliceGeometry {
    pub fn embed(&self, free: [f64; 2]) -> StateVector {
        let mut s = self.base.clone();
        s[self.free[0]] = free[0];
        s[self.free[1]] = free[1];
        s
    }

    fn wrap_free(&self, mut p: [f64; 2]) -> [f64; 2] {
        for a in 0..2 {
            if let Some(period) = self.period[a] {
                let lo = self.lower[a];
                p[a] = lo + (p[a] - lo).rem_euclid(period);
            }
        }
        p
    }
}

/// A deterministic autonomous discrete-time system over a lattice.
///
/// Implementations must be pure: `transition` may not depend on anything but
/// its argument, so systems can be shared read-only across worker threads.
pub trait ClosedLoopSystem: Sync {
    fn lattice(&self) -> &Lattice;

    /// One application of `f` to a state that has passed [`check`](Self::check).
    fn transition(&self, s: &StateVector) -> StateVector;

    fn check(&self, s: &StateVector) -> Result<()> {
        self.lattice().check(s)
    }

    fn step(&self, s: &StateVector) -> Result<StateVector> {
        self.check(s)?;
        Ok(self.transition(s))
    }

    /// `f^k(s0)`.
    fn iterate(&self, s0: &StateVector, k: usize) -> Result<StateVector> {
        if k == 0 {
            return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
        }
        self.check(s0)?;
        let mut s = s0.clone();
        for _ in 0..k {
            s = self.transition(&s);
        }
        Ok(s)
    }
}

impl<T: ClosedLoopSystem + ?Sized> ClosedLoopSystem for &T {
    fn lattice(&self) -> &Lattice {
        (**self).lattice()
    }
    fn transition(&self, s: &StateVector) -> StateVector {
        (**self).transition(s)
    }
    fn check(&self, s: &StateVector) -> Result<()> {
        (**self).check(s)
    }
}

impl<T: ClosedLoopSystem + ?Sized> ClosedLoopSystem for Box<T> {
    fn lattice(&self) -> &Lattice {
        (**self).lattice()
    }
    fn transition(&self, s: &StateVector) -> StateVector {
        (**self).transition(s)
    }
    fn check(&self, s: &StateVector) -> Result<()> {
        (**self).check(s)
    }
}

/// Images `Φ(s₀) = f^{T_int}(s₀)` of every valid lattice node.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMapField {
    horizon: usize,
    rows: usize,
    cols: usize,
    images: Vec<Option<StateVector>>,
    transition_calls: u64,
}

impl FlowMapField {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, cell: Cell) -> Option<&StateVector> {
        if cell.row >= self.rows || cell.col >= self.cols {
            return None;
        }
        self.images[cell.row * self.cols + cell.col].as_ref()
    }

    /// Number of `transition` calls spent building the field.
    pub fn transition_calls(&self) -> u64 {
        self.transition_calls
    }

    pub fn len(&self) -> usize {
        self.images.iter().filter(|i| i.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn compute_flow_map_field<S: ClosedLoopSystem + ?Sized>(sys: &S, horizon: usize) -> Result<FlowMapField> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon T_int must be at least 1".into()));
    }
    let lattice = sys.lattice();
    let results: Vec<(Option<StateVector>, u64)> = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let cell = lattice.cell_at(i);
            if !lattice.is_valid(cell) {
                return (None, 0);
            }
            let mut s = lattice.node(cell);
            let mut calls = 0u64;
            for _ in 0..horizon {
                s = sys.transition(&s);
                calls += 1;
            }
            (Some(s), calls)
        })
        .collect();
    let transition_calls = results.iter().map(|(_, c)| c).sum();
    Ok(FlowMapField {
        horizon,
        rows: lattice.rows(),
        cols: lattice.cols(),
        images: results.into_iter().map(|(s, _)| s).collect(),
        transition_calls,
    })
}

type CellMap = dyn Fn(Cell) -> Cell + Send + Sync;

/// Grid-mode system defined directly by a cell-to-cell map, with no separate
/// policy. Used for the identity environment and analytic test maps.
pub struct LatticeMap {
    lattice: Lattice,
    map: Box<CellMap>,
}

impl LatticeMap {
    pub fn new(lattice: Lattice, map: impl Fn(Cell) -> Cell + Send + Sync + 'static) -> Result<Self> {
        if !lattice.is_grid() {
            return Err(Error::InvalidParameter("lattice map needs a grid lattice".into()));
        }
        Ok(LatticeMap { lattice, map: Box::new(map) })
    }

    /// `T(s, a) = s` on an open `rows × cols` grid.
    pub fn identity(rows: usize, cols: usize) -> Result<Self> {
        LatticeMap::new(Lattice::open_cells(rows, cols)?, |c| c)
    }

    /// `(row, col) → (row, 2·col mod cols)`.
    pub fn doubling(rows: usize, cols: usize) -> Result<Self> {
        LatticeMap::new(Lattice::open_cells(rows, cols)?, move |c| Cell::new(c.row, (2 * c.col) % cols))
    }
}

impl ClosedLoopSystem for LatticeMap {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn transition(&self, s: &StateVector) -> StateVector {
        let cell = s.to_cell().expect("checked grid state");
        let next = (self.map)(cell);
        debug_assert!(self.lattice.is_valid(next), "lattice map left the valid set");
        StateVector::from_cell(next)
    }
}

/// Continuous affine map `s → A s + b` on the plane, sampled on a lattice.
#[derive(Clone, Debug)]
pub struct AffineMap {
    lattice: Lattice,
    matrix: [[f64; 2]; 2],
    offset: [f64; 2],
}

impl AffineMap {
    pub fn new(matrix: [[f64; 2]; 2], offset: [f64; 2], lattice: Lattice) -> Result<Self> {
        match lattice.kind() {
            LatticeKind::Slice(sl) if sl.base.dim() == 2 => Ok(AffineMap { lattice, matrix, offset }),
            _ => Err(Error::DimensionMismatch("affine map needs a 2-D continuous lattice".into())),
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.matrix
    }
}

impl ClosedLoopSystem for AffineMap {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn transition(&self, s: &StateVector) -> StateVector {
        let a = &self.matrix;
        StateVector::new(&[
            a[0][0] * s[0] + a[0][1] * s[1] + self.offset[0],
            a[1][0] * s[0] + a[1][1] * s[1] + self.offset[1],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift_right(rows: usize, cols: usize) -> LatticeMap {
        LatticeMap::new(Lattice::open_cells(rows, cols).unwrap(), move |c| {
            Cell::new(c.row, (c.col + 1).min(cols - 1))
        })
        .unwrap()
    }

    #[test]
    fn identity_step_and_iterate() {
        let sys = LatticeMap::identity(4, 4).unwrap();
        let s = StateVector::from_cell(Cell::new(2, 3));
        assert_eq!(sys.step(&s).unwrap(), s);
        assert_eq!(sys.iterate(&s, 100).unwrap(), s);
    }

    #[test]
    fn shift_map_on_the_line() {
        let lattice = Lattice::plane(3, 3, GridGeometry::UNIT).unwrap();
        let sys = AffineMap::new([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], lattice).unwrap();
        let s = sys.iterate(&StateVector::new(&[0.0, 0.0]), 5).unwrap();
        assert_eq!(s.coords(), &[5.0, 0.0]);
    }

    #[test]
    fn iterate_rejects_zero_steps_and_invalid_states() {
        let sys = LatticeMap::identity(3, 3).unwrap();
        assert!(sys.iterate(&StateVector::from_cell(Cell::new(0, 0)), 0).is_err());
        assert!(matches!(
            sys.step(&StateVector::from_cell(Cell::new(3, 0))),
            Err(Error::InvalidState(..))
        ));
        assert!(sys.step(&StateVector::new(&[0.5, 1.0])).is_err());
    }

    #[test]
    fn identity_flow_field_counts_every_transition() {
        let sys = LatticeMap::identity(3, 3).unwrap();
        let field = compute_flow_map_field(&sys, 10).unwrap();
        assert_eq!(field.transition_calls(), 90);
        for c in sys.lattice().all_cells() {
            assert_eq!(field.get(c), Some(&StateVector::from_cell(c)));
        }
    }

    #[test]
    fn obstacle_cells_have_no_image() {
        let mut obstacles = vec![false; 9];
        obstacles[4] = true;
        let lattice = Lattice::cells(3, 3, &obstacles).unwrap();
        let sys = LatticeMap::new(lattice, |c| c).unwrap();
        let field = compute_flow_map_field(&sys, 3).unwrap();
        assert!(field.get(Cell::new(1, 1)).is_none());
        assert_eq!(field.len(), 8);
        assert_eq!(field.transition_calls(), 24);
    }

    #[test]
    fn semigroup_property_of_iterate() {
        let sys = shift_right(2, 9);
        let s0 = StateVector::from_cell(Cell::new(1, 0));
        for a in 1..6 {
            for b in 1..6 {
                let direct = sys.iterate(&s0, a + b).unwrap();
                let composed = sys.iterate(&sys.iterate(&s0, a).unwrap(), b).unwrap();
                assert_eq!(direct, composed);
            }
        }
    }

    #[test]
    fn periodic_displacement_takes_short_way() {
        let pi = std::f64::consts::PI;
        let lattice = Lattice::slice(
            8,
            8,
            SliceGeometry {
                free: [0, 1],
                base: StateVector::new(&[0.0, 0.0]),
                geometry: GridGeometry { origin: [-pi, -1.0], spacing: [2.0 * pi / 8.0, 2.0 / 7.0] },
                lower: [-pi, -1.0],
                upper: [pi, 1.0],
                period: [Some(2.0 * pi), None],
            },
        )
        .unwrap();
        let a = StateVector::new(&[pi - 0.1, 0.0]);
        let b = StateVector::new(&[-pi + 0.1, 0.0]);
        let d = lattice.displacement(&a, &b);
        assert!((d[0] - 0.2).abs() < 1e-12);
        // Binning wraps around the periodic axis.
        assert_eq!(lattice.bin(&StateVector::new(&[pi - 1e-9, 0.0])).row, 0);
    }

    #[test]
    fn bin_clamps_onto_lattice() {
        let lattice = Lattice::plane(5, 5, GridGeometry::UNIT).unwrap();
        assert_eq!(lattice.bin(&StateVector::new(&[-3.0, 10.0])), Cell::new(0, 4));
        assert_eq!(lattice.bin(&StateVector::new(&[2.4, 2.6])), Cell::new(2, 3));
    }
}
