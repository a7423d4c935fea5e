use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// A grid cell addressed by (row, col). Serialized as a `[row, col]` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Cell displaced by `(dr, dc)`, or `None` if that would leave `rows × cols`.
    pub fn offset(self, dr: isize, dc: isize, rows: usize, cols: usize) -> Option<Cell> {
        let r = self.row.checked_add_signed(dr)?;
        let c = self.col.checked_add_signed(dc)?;
        (r < rows && c < cols).then_some(Cell::new(r, c))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl From<(usize, usize)> for Cell {
    fn from((row, col): (usize, usize)) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for (usize, usize) {
    fn from(c: Cell) -> Self {
        (c.row, c.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A point in the state space. Grid systems store integer cell indices
/// `(row, col)`; continuous systems store physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(SmallVec<[f64; 4]>);

impl StateVector {
    pub fn new(coords: &[f64]) -> Self {
        StateVector(SmallVec::from_slice(coords))
    }

    pub fn from_cell(cell: Cell) -> Self {
        StateVector::new(&[cell.row as f64, cell.col as f64])
    }

    /// Interprets a 2-D integer-valued state as a cell.
    pub fn to_cell(&self) -> Option<Cell> {
        match self.0.as_slice() {
            [r, c] if *r >= 0.0 && *c >= 0.0 && r.fract() == 0.0 && c.fract() == 0.0 => {
                Some(Cell::new(*r as usize, *c as usize))
            }
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(SmallVec::from_vec(v))
    }
}

impl<const N: usize> From<[f64; N]> for StateVector {
    fn from(v: [f64; N]) -> Self {
        StateVector::new(&v)
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for StateVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}
