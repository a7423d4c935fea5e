//! Local (δ, ε) stability certificates from the bounded-divergence bound
//! `‖Φ(s_b) − Φ(s_a)‖ ≤ e^{σ_max·T}·‖s_b − s_a‖` over a convex region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoopSystem, LatticeKind};
use crate::error::{Error, Result};
use crate::ftle::FtleField;
use crate::state::{Cell, StateVector};

/// Relative allowance for rounding in the ratio/bound comparison, on top of
/// the user tolerance.
pub const ROUNDING_SLACK: f64 = 8.0 * f64::EPSILON;

/// A convex region of the analysis plane, in free-coordinate units
/// (grid mode: `(row, col)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ConvexRegion {
    Disc { center: [f64; 2], radius: f64 },
    Box { lower: [f64; 2], upper: [f64; 2] },
}

impl ConvexRegion {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ConvexRegion::Disc { center, radius } => center.iter().all(|c| c.is_finite()) && radius.is_finite() && *radius > 0.0,
            ConvexRegion::Box { lower, upper } => {
                (0..2).all(|a| lower[a].is_finite() && upper[a].is_finite() && lower[a] < upper[a])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate region {self:?}")))
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            ConvexRegion::Disc { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) <= *radius,
            ConvexRegion::Box { lower, upper } => (0..2).all(|a| (lower[a]..=upper[a]).contains(&p[a])),
        }
    }

    /// Uniform draw; rejection sampling from the bounding square for discs.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            ConvexRegion::Disc { center, radius } => loop {
                let x = rng.gen_range(-1.0..=1.0);
                let y = rng.gen_range(-1.0..=1.0);
                if x * x + y * y <= 1.0 {
                    return [center[0] + radius * x, center[1] + radius * y];
                }
            },
            ConvexRegion::Box { lower, upper } => {
                [rng.gen_range(lower[0]..=upper[0]), rng.gen_range(lower[1]..=upper[1])]
            }
        }
    }
}

/// Valid field cells whose node lies in `region`.
pub fn cells_in_region(field: &FtleField, region: &ConvexRegion) -> Vec<Cell> {
    (0..field.rows)
        .flat_map(|r| (0..field.cols).map(move |c| Cell::new(r, c)))
        .filter(|&c| field.get(c).is_some() && region.contains(field.geometry.node(c)))
        .collect()
}

/// Largest σ over the valid field nodes inside the region.
pub fn region_max_ftle(field: &FtleField, region: &ConvexRegion) -> Result<f64> {
    region.validate()?;
    cells_in_region(field, region)
        .into_iter()
        .filter_map(|c| field.get(c))
        .reduce(f64::max)
        .ok_or(Error::EmptyRegion)
}

/// Supremum `ε·exp(−σ_max·T)` of admissible initial perturbations.
pub fn certify_delta(sigma_max: f64, t_int: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    if t_int == 0 {
        return Err(Error::InvalidParameter("horizon T_int must be at least 1".into()));
    }
    if !sigma_max.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma_max = {sigma_max} must be finite")));
    }
    Ok(epsilon * (-sigma_max * t_int as f64).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldResolution {
    pub rows: usize,
    pub cols: usize,
    pub spacing: [f64; 2],
    /// Field nodes that informed σ_max.
    pub nodes_in_region: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub region: Option<ConvexRegion>,
    pub sigma_max: f64,
    #[serde(rename = "T_int")]
    pub t_int: usize,
    pub epsilon: f64,
    /// Certified perturbation size, the largest double below `delta_sup`.
    pub delta: f64,
    pub delta_sup: f64,
    pub field_resolution: Option<FieldResolution>,
    /// Caller-supplied; left empty so reruns are byte-identical.
    pub timestamp: Option<String>,
}

impl StabilityCertificate {
    pub fn new(
        region: Option<ConvexRegion>,
        sigma_max: f64,
        t_int: usize,
        epsilon: f64,
        field_resolution: Option<FieldResolution>,
    ) -> Result<Self> {
        let delta_sup = certify_delta(sigma_max, t_int, epsilon)?;
        if delta_sup <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "exp(-{sigma_max}·{t_int}) underflows; no positive δ can be certified"
            )));
        }
        let cert = StabilityCertificate {
            region,
            sigma_max,
            t_int,
            epsilon,
            delta: delta_sup.next_down(),
            delta_sup,
            field_resolution,
            timestamp: None,
        };
        cert.verify()?;
        Ok(cert)
    }

    /// Certificate for a field over a region: σ_max from the field's nodes.
    pub fn from_field(field: &FtleField, region: ConvexRegion, epsilon: f64) -> Result<Self> {
        let sigma_max = region_max_ftle(field, &region)?;
        let resolution = FieldResolution {
            rows: field.rows,
            cols: field.cols,
            spacing: field.geometry.spacing,
            nodes_in_region: cells_in_region(field, &region).len(),
        };
        StabilityCertificate::new(Some(region), sigma_max, field.horizon, epsilon, Some(resolution))
    }

    /// Checks `0 < δ < ε·exp(−σ_max·T_int)`.
    pub fn verify(&self) -> Result<()> {
        let sup = certify_delta(self.sigma_max, self.t_int, self.epsilon)?;
        if self.delta > 0.0 && self.delta < sup {
            Ok(())
        } else {
            Err(Error::Invariant(format!("certificate δ = {} is not below ε·exp(−σ_max·T) = {sup}", self.delta)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sigma_max: f64,
    #[serde(rename = "T_int")]
    pub t_int: usize,
    /// `e^{σ_max·T_int}`.
    pub bound: f64,
    pub tolerance: f64,
    pub pairs: usize,
    pub seed: u64,
    pub violations: usize,
    pub max_ratio: f64,
    /// Pair attaining `max_ratio`, in free coordinates.
    pub max_ratio_pair: Option<[[f64; 2]; 2]>,
    /// False for grid systems, whose flow maps are not differentiable; the
    /// bound is heuristic there.
    pub smooth_system: bool,
}

/// Samples `pairs` state pairs uniformly in `region`, rolls both forward
/// `t_int` steps and compares the separation ratio with `e^{σ_max·T_int}`.
///
/// Violations are counted, not raised.
#[allow(clippy::too_many_arguments)]
pub fn validate_divergence_bound<S: ClosedLoopSystem + ?Sized>(
    sys: &S,
    region: &ConvexRegion,
    field: &FtleField,
    t_int: usize,
    pairs: usize,
    seed: u64,
    tolerance: f64,
) -> Result<ValidationReport> {
    if t_int == 0 || pairs == 0 {
        return Err(Error::InvalidParameter("validation needs T_int ≥ 1 and at least one pair".into()));
    }
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance} must be non-negative")));
    }
    let sigma_max = region_max_ftle(field, region)?;
    let bound = (sigma_max * t_int as f64).exp();
    let lattice = sys.lattice();

    // Grid systems only have states at cells: draw pairs of distinct cells in R.
    let grid_cells: Option<Vec<Cell>> = match lattice.kind() {
        LatticeKind::Cells { .. } => {
            let cells: Vec<Cell> = lattice
                .valid_cells()
                .into_iter()
                .filter(|c| region.contains([c.row as f64, c.col as f64]))
                .collect();
            if cells.len() < 2 {
                return Err(Error::EmptyRegion);
            }
            Some(cells)
        }
        LatticeKind::Slice(_) => None,
    };
    let embed = |p: [f64; 2]| -> StateVector {
        match lattice.kind() {
            LatticeKind::Slice(sl) => sl.embed(p),
            LatticeKind::Cells { .. } => StateVector::new(&p),
        }
    };

    let results: Vec<(f64, [[f64; 2]; 2])> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (a, b) = loop {
                let (pa, pb) = match &grid_cells {
                    Some(cells) => {
                        let x = cells[rng.gen_range(0..cells.len())];
                        let y = cells[rng.gen_range(0..cells.len())];
                        ([x.row as f64, x.col as f64], [y.row as f64, y.col as f64])
                    }
                    None => (region.sample(&mut rng), region.sample(&mut rng)),
                };
                if pa != pb {
                    break (pa, pb);
                }
            };
            let (sa, sb) = (embed(a), embed(b));
            sys.check(&sa)?;
            sys.check(&sb)?;
            let d0 = lattice.displacement(&sa, &sb);
            let fa = sys.iterate(&sa, t_int)?;
            let fb = sys.iterate(&sb, t_int)?;
            let d1 = lattice.displacement(&fa, &fb);
            Ok((d1[0].hypot(d1[1]) / d0[0].hypot(d0[1]), [a, b]))
        })
        .collect::<Result<_>>()?;

    let limit = bound * (1.0 + tolerance) * (1.0 + ROUNDING_SLACK);
    let violations = results.iter().filter(|(r, _)| *r > limit).count();
    let (max_ratio, max_ratio_pair) = results
        .iter()
        .fold((f64::NEG_INFINITY, None), |(m, p), (r, pair)| if *r > m { (*r, Some(*pair)) } else { (m, p) });
    Ok(ValidationReport {
        sigma_max,
        t_int,
        bound,
        tolerance,
        pairs,
        seed,
        violations,
        max_ratio,
        max_ratio_pair,
        smooth_system: !lattice.is_grid(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AffineMap, GridGeometry, Lattice};
    use crate::ftle::{compute_ftle_field, PerturbationScheme};

    fn flat(rows: usize, cols: usize, v: f64) -> FtleField {
        let mut f = FtleField::new(rows, cols, 1, PerturbationScheme::Central { h: 1.0 }, GridGeometry::UNIT);
        for r in 0..rows {
            for c in 0..cols {
                f.set(Cell::new(r, c), Some(v));
            }
        }
        f
    }

    #[test]
    fn region_max_examples() {
        let disc = ConvexRegion::Disc { center: [2.0, 2.0], radius: 1.5 };
        assert_eq!(region_max_ftle(&flat(5, 5, 0.0), &disc).unwrap(), 0.0);
        let mut f = flat(5, 5, 0.0);
        f.set(Cell::new(2, 3), Some(0.5));
        f.set(Cell::new(0, 0), Some(9.0));
        assert_eq!(region_max_ftle(&f, &disc).unwrap(), 0.5);
        let away = ConvexRegion::Disc { center: [20.0, 20.0], radius: 1.0 };
        assert!(matches!(region_max_ftle(&f, &away), Err(Error::EmptyRegion)));
        f.set(Cell::new(2, 3), None);
        assert_eq!(region_max_ftle(&f, &disc).unwrap(), 0.0);
    }

    #[test]
    fn certify_examples() {
        assert_eq!(certify_delta(0.0, 10, 0.05).unwrap(), 0.05);
        assert!((certify_delta(1.0, 1, std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        let d = certify_delta(0.7158, 20, 0.05).unwrap();
        assert!((2.9e-8..=3.1e-8).contains(&d), "{d}");
        assert!(certify_delta(0.0, 10, 0.0).is_err());
        assert!(certify_delta(0.0, 0, 1.0).is_err());
    }

    #[test]
    fn certificate_delta_is_strictly_below_the_supremum() {
        let c = StabilityCertificate::new(None, 0.0, 10, 0.05, None).unwrap();
        assert!(c.delta < 0.05);
        assert_eq!(c.delta_sup, 0.05);
        let json = serde_json::to_string(&c).unwrap();
        let back: StabilityCertificate = serde_json::from_str(&json).unwrap();
        back.verify().unwrap();
        assert_eq!(back, c);
        let forged = StabilityCertificate { delta: 0.05, ..c };
        assert!(forged.verify().is_err());
    }

    fn affine(m: [[f64; 2]; 2]) -> AffineMap {
        let lattice = Lattice::plane(21, 21, GridGeometry { origin: [-1.0, -1.0], spacing: [0.1, 0.1] }).unwrap();
        AffineMap::new(m, [0.0, 0.0], lattice).unwrap()
    }

    #[test]
    fn affine_maps_satisfy_the_bound() {
        let unit_box = ConvexRegion::Box { lower: [-0.5, -0.5], upper: [0.5, 0.5] };
        for (m, expect) in [
            ([[1.0, 0.0], [0.0, 1.0]], 1.0),
            ([[2.0, 0.0], [0.0, 1.0]], 2.0),
            ([[0.5, 0.0], [0.0, 0.5]], 0.5),
        ] {
            let sys = affine(m);
            let field = compute_ftle_field(&sys, 1, 1.0).unwrap();
            let rep = validate_divergence_bound(&sys, &unit_box, &field, 1, 500, 3, 0.0).unwrap();
            assert_eq!(rep.violations, 0, "{m:?}: {rep:?}");
            assert!((rep.bound - expect).abs() < 1e-12, "{m:?}: {rep:?}");
            assert!(rep.max_ratio <= expect * (1.0 + 1e-12));
            if expect == 0.5 || expect == 1.0 {
                assert!((rep.max_ratio - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disc_sampling_stays_inside() {
        let disc = ConvexRegion::Disc { center: [1.0, -2.0], radius: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let slack = ConvexRegion::Disc { center: [1.0, -2.0], radius: 0.3 + 1e-12 };
        assert!((0..1000).all(|_| slack.contains(disc.sample(&mut rng))));
    }
}
