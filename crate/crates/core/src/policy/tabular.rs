use std::fmt::Write as _;

use crate::env::grid::{Action, GridWorld};
use crate::error::{Error, Result};
use crate::policy::{greedy_action, GridPolicy};
use crate::state::Cell;

/// Action values `Q(s, a)` for a grid, row-major over cells.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    rows: usize,
    cols: usize,
    values: Vec<[f64; 4]>,
}

impl QTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QTable { rows, cols, values: vec![[0.0; 4]; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, cell: Cell) -> &[f64; 4] {
        &self.values[cell.row * self.cols + cell.col]
    }

    pub fn row_mut(&mut self, cell: Cell) -> &mut [f64; 4] {
        &mut self.values[cell.row * self.cols + cell.col]
    }

    pub fn greedy(&self, cell: Cell) -> Action {
        Action::from_index(greedy_action(self.row(cell))).expect("four actions")
    }
}

/// A lookup-table policy defined on every free cell of a world.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    rows: usize,
    cols: usize,
    actions: Vec<Option<Action>>,
}

impl TabularPolicy {
    /// The greedy policy of `q` on the free cells of `world`.
    pub fn from_q(q: &QTable, world: &GridWorld) -> Self {
        let actions = world.cells().map(|c| world.is_free(c).then(|| q.greedy(c))).collect();
        TabularPolicy { rows: world.rows(), cols: world.cols(), actions }
    }

    /// Tabulates any grid policy on the free cells of `world`.
    pub fn tabulate(policy: &dyn GridPolicy, world: &GridWorld) -> Self {
        let actions = world.cells().map(|c| world.is_free(c).then(|| policy.action(c))).collect();
        TabularPolicy { rows: world.rows(), cols: world.cols(), actions }
    }

    pub fn get(&self, cell: Cell) -> Option<Action> {
        if cell.row < self.rows && cell.col < self.cols {
            self.actions[cell.row * self.cols + cell.col]
        } else {
            None
        }
    }

    /// Checks the table is total on `world`'s free cells.
    pub fn validate(&self, world: &GridWorld) -> Result<()> {
        if (self.rows, self.cols) != (world.rows(), world.cols()) {
            return Err(Error::ShapeMismatch(format!(
                "policy is {}×{}, world is {}×{}",
                self.rows,
                self.cols,
                world.rows(),
                world.cols()
            )));
        }
        match world.free_cells().into_iter().find(|c| self.get(*c).is_none()) {
            Some(c) => Err(Error::Parse(format!("policy has no action for free cell {c}"))),
            None => Ok(()),
        }
    }

    /// CSV with header `row,col,action` (action index), one line per free cell.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("row,col,action\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                if let Some(a) = self.actions[r * self.cols + c] {
                    let _ = writeln!(out, "{r},{c},{}", a.index());
                }
            }
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output for a `rows × cols` grid.
    /// Actions may be indices or names.
    pub fn from_csv(text: &str, rows: usize, cols: usize) -> Result<Self> {
        let mut actions = vec![None; rows * cols];
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some("row,col,action") => {}
            other => return Err(Error::Parse(format!("expected header `row,col,action`, found {other:?}"))),
        }
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let [r, c, a] = fields[..] else {
                return Err(Error::Parse(format!("malformed policy line `{line}`")));
            };
            let parse = |f: &str| f.trim().parse::<usize>().map_err(|e| Error::Parse(format!("`{line}`: {e}")));
            let cell = Cell::new(parse(r)?, parse(c)?);
            if cell.row >= rows || cell.col >= cols {
                return Err(Error::Parse(format!("policy cell {cell} outside the {rows}×{cols} grid")));
            }
            let slot = &mut actions[cell.row * cols + cell.col];
            if slot.replace(a.parse()?).is_some() {
                return Err(Error::Parse(format!("duplicate policy entry for {cell}")));
            }
        }
        Ok(TabularPolicy { rows, cols, actions })
    }
}

impl GridPolicy for TabularPolicy {
    fn action(&self, cell: Cell) -> Action {
        self.get(cell).unwrap_or(Action::Up)
    }
}
