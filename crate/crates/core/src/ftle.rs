//! Forward-time finite-time Lyapunov exponent fields.
//!
//! For each lattice node the flow-map Jacobian is approximated by finite
//! differences, the right Cauchy–Green tensor `C = JᵀJ` is formed, and
//!
//! ```text
//! σ(s₀, T) = (1 / 2T) · ln λ_max(C)      (σ = 0 when λ_max ≤ 0)
//! ```
//!
//! Grid-mode lattices use forward differences `Φ(s₀ + e_i) − Φ(s₀)` with a
//! backward fallback when the forward neighbour is an obstacle or off-grid.
//! Continuous lattices use central differences evaluated directly on the
//! flow, falling back to one-sided differences at the state-space bounds.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{compute_flow_map_field, ClosedLoopSystem, FlowMapField, GridGeometry, LatticeKind};
use crate::error::{Error, Result};
use crate::state::{Cell, StateVector};

/// Numerical slack for positive-semidefiniteness and symmetry checks.
pub const PSD_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationJacobian {
    pub matrix: DMatrix<f64>,
    /// Step along each axis in state units.
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CauchyGreenTensor {
    pub matrix: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PerturbationScheme {
    /// Forward neighbours `s₀ + h·e_i`, backward fallback, `h` in cells.
    ForwardGrid { h: usize },
    /// Central differences with `h` in multiples of the lattice spacing.
    Central { h: f64 },
}

/// Builds a Jacobian from forward-difference columns `u_i / h` on a
/// grid-mode flow map.
///
/// When `s₀ + h·e_i` has no image the backward neighbour is used and its
/// difference negated. If neither has an image the stencil is degenerate.
pub fn finite_difference_jacobian(flow: &FlowMapField, s0: Cell, h: usize) -> Result<DeformationJacobian> {
    if h == 0 {
        return Err(Error::InvalidParameter("stencil step must be at least one cell".into()));
    }
    let center = flow
        .get(s0)
        .ok_or_else(|| Error::InvalidState(s0.to_string(), "no flow-map image"))?;
    let n = center.dim();
    let mut j = DMatrix::zeros(n, 2);
    let k = h as isize;
    for axis in 0..2 {
        let (dr, dc) = if axis == 0 { (1, 0) } else { (0, 1) };
        let neighbour = |sign: isize| {
            let r = s0.row.checked_add_signed(dr * k * sign)?;
            let c = s0.col.checked_add_signed(dc * k * sign)?;
            flow.get(Cell::new(r, c))
        };
        let u: Vec<f64> = if let Some(fwd) = neighbour(1) {
            difference(center, fwd)
        } else if let Some(bwd) = neighbour(-1) {
            difference(bwd, center)
        } else {
            return Err(Error::DegenerateStencil { cell: s0, axis });
        };
        for (i, ui) in u.iter().enumerate() {
            j[(i, axis)] = ui / h as f64;
        }
    }
    Ok(DeformationJacobian { matrix: j, h: vec![h as f64; 2] })
}

fn difference(from: &StateVector, to: &StateVector) -> Vec<f64> {
    from.coords().iter().zip(to.coords()).map(|(a, b)| b - a).collect()
}

/// Central-difference Jacobian of an arbitrary map `ℝⁿ → ℝᵐ` at `x`.
pub fn central_difference_jacobian(map: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DeformationJacobian {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = map(&plus);
        let fm = map(&minus);
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let m = cols.first().map_or(0, Vec::len);
    DeformationJacobian { matrix: DMatrix::from_fn(m, n, |r, c| cols[c][r]), h: vec![h; n] }
}

/// Jacobian of the projected flow map at a continuous-lattice node, in
/// free-coordinate units.
pub fn slice_jacobian<S: ClosedLoopSystem + ?Sized>(
    sys: &S,
    cell: Cell,
    horizon: usize,
    h: f64,
) -> Result<DeformationJacobian> {
    let lattice = sys.lattice();
    let spacing = lattice.geometry().spacing;
    let flow = |s: &StateVector| -> StateVector {
        let mut s = s.clone();
        for _ in 0..horizon {
            s = sys.transition(&s);
        }
        s
    };
    let mut j = DMatrix::zeros(2, 2);
    let mut steps = vec![0.0; 2];
    for axis in 0..2 {
        let step = h * spacing[axis];
        let plus = lattice.perturbed(cell, axis, step);
        let minus = lattice.perturbed(cell, axis, -step);
        let (d, width) = match (plus, minus) {
            (Some(p), Some(m)) => (lattice.displacement(&flow(&m), &flow(&p)), 2.0 * step),
            (Some(p), None) => (lattice.displacement(&flow(&lattice.node(cell)), &flow(&p)), step),
            (None, Some(m)) => (lattice.displacement(&flow(&m), &flow(&lattice.node(cell))), step),
            (None, None) => return Err(Error::DegenerateStencil { cell, axis }),
        };
        j[(0, axis)] = d[0] / width;
        j[(1, axis)] = d[1] / width;
        steps[axis] = step;
    }
    Ok(DeformationJacobian { matrix: j, h: steps })
}

/// `C = JᵀJ`, assembled so that `C` is exactly symmetric.
pub fn cauchy_green(j: &DeformationJacobian) -> CauchyGreenTensor {
    let m = &j.matrix;
    let n = m.ncols();
    let mut c = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = m.column(a).dot(&m.column(b));
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    CauchyGreenTensor { matrix: c }
}

/// Largest eigenvalue of a symmetric matrix. 1×1 and 2×2 use closed forms;
/// larger matrices go through a symmetric eigensolver.
pub fn max_eigenvalue_symmetric(c: &CauchyGreenTensor) -> Result<f64> {
    let m = &c.matrix;
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!("{}×{} tensor is not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > PSD_TOLERANCE * scale {
        return Err(Error::Asymmetric(asym));
    }
    Ok(match m.nrows() {
        0 => return Err(Error::ShapeMismatch("empty tensor".into())),
        1 => m[(0, 0)],
        2 => {
            let (a, d) = (m[(0, 0)], m[(1, 1)]);
            let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
            0.5 * (a + d) + (0.5 * (a - d)).hypot(b)
        }
        _ => {
            let sym = 0.5 * (m + m.transpose());
            nalgebra::SymmetricEigen::new(sym).eigenvalues.max()
        }
    })
}

/// `(1 / 2T) · ln λ_max`, or 0 when `λ_max ≤ 0`.
pub fn ftle_value(lambda_max: f64, horizon: usize) -> f64 {
    if lambda_max > 0.0 {
        lambda_max.ln() / (2.0 * horizon as f64)
    } else {
        0.0
    }
}

/// σ over the analysis lattice, with a validity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtleField {
    pub rows: usize,
    pub cols: usize,
    /// Row-major σ values; masked cells hold 0.
    pub sigma: Vec<f64>,
    pub valid: Vec<bool>,
    pub horizon: usize,
    pub scheme: PerturbationScheme,
    pub geometry: GridGeometry,
}

impl FtleField {
    pub fn new(rows: usize, cols: usize, horizon: usize, scheme: PerturbationScheme, geometry: GridGeometry) -> Self {
        FtleField {
            rows,
            cols,
            sigma: vec![0.0; rows * cols],
            valid: vec![false; rows * cols],
            horizon,
            scheme,
            geometry,
        }
    }

    fn idx(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    /// σ at a cell, `None` if masked.
    pub fn get(&self, cell: Cell) -> Option<f64> {
        let i = self.idx(cell);
        self.valid[i].then_some(self.sigma[i])
    }

    pub fn set(&mut self, cell: Cell, value: Option<f64>) {
        let i = self.idx(cell);
        self.sigma[i] = value.unwrap_or(0.0);
        self.valid[i] = value.is_some();
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.sigma.iter().zip(&self.valid).filter(|(_, v)| **v).map(|(s, _)| *s)
    }

    /// (min, max) over valid cells.
    pub fn extremes(&self) -> Option<(f64, f64)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

fn sigma_from_jacobian(j: &DeformationJacobian, horizon: usize) -> Result<f64> {
    let c = cauchy_green(j);
    let mut lambda = max_eigenvalue_symmetric(&c)?;
    if lambda > -PSD_TOLERANCE && lambda <= 0.0 {
        lambda = 0.0;
    }
    Ok(ftle_value(lambda, horizon))
}

/// Computes σ on every lattice node with a resolvable stencil.
///
/// `h` is the stencil step in lattice units: whole cells in grid mode,
/// multiples of the node spacing in continuous mode.
pub fn compute_ftle_field<S: ClosedLoopSystem + ?Sized>(sys: &S, horizon: usize, h: f64) -> Result<FtleField> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon T_int must be at least 1".into()));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("stencil step {h} must be positive")));
    }
    let lattice = sys.lattice();
    match lattice.kind() {
        LatticeKind::Cells { .. } => {
            if h.fract() != 0.0 {
                return Err(Error::InvalidParameter("grid stencil step must be a whole number of cells".into()));
            }
            let step = h as usize;
            let flow = compute_flow_map_field(sys, horizon)?;
            let mut field = FtleField::new(
                lattice.rows(),
                lattice.cols(),
                horizon,
                PerturbationScheme::ForwardGrid { h: step },
                lattice.geometry(),
            );
            let values: Vec<Option<f64>> = (0..lattice.len())
                .into_par_iter()
                .map(|i| {
                    let cell = lattice.cell_at(i);
                    if !lattice.is_valid(cell) {
                        return Ok(None);
                    }
                    match finite_difference_jacobian(&flow, cell, step) {
                        Ok(j) => sigma_from_jacobian(&j, horizon).map(Some),
                        Err(Error::DegenerateStencil { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            for (i, v) in values.into_iter().enumerate() {
                field.set(lattice.cell_at(i), v);
            }
            Ok(field)
        }
        LatticeKind::Slice(_) => {
            let mut field = FtleField::new(
                lattice.rows(),
                lattice.cols(),
                horizon,
                PerturbationScheme::Central { h },
                lattice.geometry(),
            );
            let values: Vec<Option<f64>> = (0..lattice.len())
                .into_par_iter()
                .map(|i| {
                    let cell = lattice.cell_at(i);
                    match slice_jacobian(sys, cell, horizon, h) {
                        Ok(j) => sigma_from_jacobian(&j, horizon).map(Some),
                        Err(Error::DegenerateStencil { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            for (i, v) in values.into_iter().enumerate() {
                field.set(lattice.cell_at(i), v);
            }
            Ok(field)
        }
    }
}
