//! Attractor approximation from trajectory ensembles.
//!
//! Trajectories are started across the valid state space, advanced for the
//! analysis horizon, and their final states are histogrammed on the analysis
//! lattice. High-density cells approximate the system's attractors.

use std::collections::{BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ClosedLoopSystem;
use crate::error::{Error, Result};
use crate::state::{Cell, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StartMode {
    /// `n` starts drawn uniformly over valid states.
    Sampled { n: usize, seed: u64 },
    /// One start at every valid lattice node.
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: StateVector,
    pub last: StateVector,
    /// Lattice bin of the final state.
    pub final_cell: Cell,
    /// Full path including the start, when recorded.
    pub path: Option<Vec<StateVector>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub horizon: usize,
    pub starts: StartMode,
    pub rows: usize,
    pub cols: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Rolls out an ensemble. The first `record_paths` trajectories keep their
/// full paths.
pub fn simulate<S: ClosedLoopSystem + ?Sized>(
    sys: &S,
    starts: StartMode,
    horizon: usize,
    record_paths: usize,
) -> Result<TrajectoryEnsemble> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon T_int must be at least 1".into()));
    }
    let lattice = sys.lattice();
    let start_states: Vec<StateVector> = match starts {
        StartMode::Exhaustive => lattice.valid_cells().into_iter().map(|c| lattice.node(c)).collect(),
        StartMode::Sampled { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
            }
            (0..n)
                .into_par_iter()
                .map(|i| {
                    // One stream per trajectory keeps draws independent of scheduling.
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    lattice.sample(&mut rng)
                })
                .collect()
        }
    };
    let trajectories = start_states
        .into_par_iter()
        .enumerate()
        .map(|(i, start)| {
            let mut path = (i < record_paths).then(|| Vec::with_capacity(horizon + 1));
            let mut s = start.clone();
            if let Some(p) = path.as_mut() {
                p.push(s.clone());
            }
            for _ in 0..horizon {
                s = sys.transition(&s);
                if let Some(p) = path.as_mut() {
                    p.push(s.clone());
                }
            }
            Trajectory { final_cell: lattice.bin(&s), start, last: s, path }
        })
        .collect();
    Ok(TrajectoryEnsemble { horizon, starts, rows: lattice.rows(), cols: lattice.cols(), trajectories })
}

pub fn simulate_ensemble<S: ClosedLoopSystem + ?Sized>(
    sys: &S,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    simulate(sys, StartMode::Sampled { n, seed }, horizon, 0)
}

/// Final-state density `h(s)` on the analysis lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major densities: integer counts unless rescaled.
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DensityMap { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[cell.row * self.cols + cell.col]
    }

    pub fn set(&mut self, cell: Cell, v: f64) {
        self.values[cell.row * self.cols + cell.col] = v;
    }

    pub fn add(&mut self, cell: Cell, v: f64) {
        self.values[cell.row * self.cols + cell.col] += v;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().fold(0.0, |a, b| a + b)
    }

    pub fn scaled(&self, c: f64) -> Self {
        DensityMap { rows: self.rows, cols: self.cols, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn extremes(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

pub fn final_state_histogram(ens: &TrajectoryEnsemble) -> DensityMap {
    let mut h = DensityMap::zeros(ens.rows, ens.cols);
    for t in &ens.trajectories {
        h.add(t.final_cell, 1.0);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub cell: Cell,
    pub h: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.peaks.iter().map(|p| p.cell).collect()
    }
}

pub(crate) fn moore_neighbours(cell: Cell, rows: usize, cols: usize) -> impl Iterator<Item = Cell> {
    (-1isize..=1)
        .flat_map(|dr| (-1isize..=1).map(move |dc| (dr, dc)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dr, dc)| cell.offset(dr, dc, rows, cols))
}

/// Local maxima of `h` over the 8-neighbourhood, outside `exclude`.
///
/// A cell qualifies when `h > 0` and no neighbour is larger. Qualifying cells
/// that touch form a plateau of equal value; each plateau is reported once,
/// by its lexicographically smallest cell.
pub fn detect_local_peaks(h: &DensityMap, exclude: &BTreeSet<Cell>) -> PeakSet {
    let (rows, cols) = (h.rows, h.cols);
    let candidate: Vec<bool> = h
        .cells()
        .map(|c| {
            let v = h.get(c);
            !exclude.contains(&c) && v > 0.0 && moore_neighbours(c, rows, cols).all(|n| h.get(n) <= v)
        })
        .collect();
    let mut seen = vec![false; rows * cols];
    let mut peaks = Vec::new();
    for cell in h.cells() {
        let i = cell.row * cols + cell.col;
        if !candidate[i] || seen[i] {
            continue;
        }
        peaks.push(Peak { cell, h: h.get(cell) });
        seen[i] = true;
        let mut queue = VecDeque::from([cell]);
        while let Some(c) = queue.pop_front() {
            for n in moore_neighbours(c, rows, cols) {
                let j = n.row * cols + n.col;
                if candidate[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    PeakSet { peaks }
}
