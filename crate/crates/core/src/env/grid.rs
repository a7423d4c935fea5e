use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoopSystem, Lattice};
use crate::error::{Error, Result};
use crate::policy::GridPolicy;
use crate::state::{Cell, StateVector};

/// Grid actions. The discriminant is the action index used by Q-tables,
/// policy files and network outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// (row, col) displacement.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        })
    }
}

impl FromStr for Action {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" | "0" => Ok(Action::Up),
            "down" | "1" => Ok(Action::Down),
            "left" | "2" => Ok(Action::Left),
            "right" | "3" => Ok(Action::Right),
            other => Err(Error::Parse(format!("unknown action `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub step: f64,
    /// Reward for an action that bumps into an obstacle or the border.
    pub obstacle: f64,
    pub goal: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { step: -1.0, obstacle: -5.0, goal: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: Cell,
    pub bumped: bool,
    pub reward: f64,
    pub reached_goal: bool,
}

/// A deterministic 4-connected grid world with an absorbing goal.
///
/// Moves off the grid or into an obstacle leave the agent in place.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    rows: usize,
    cols: usize,
    obstacles: Vec<bool>,
    goal: Cell,
    start: Option<Cell>,
    pub rewards: RewardSpec,
}

impl GridWorld {
    /// Builds and validates a world: the goal must be a free in-bounds cell
    /// reachable from every free cell.
    pub fn new(rows: usize, cols: usize, obstacles: Vec<bool>, goal: Cell, start: Option<Cell>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLayout("grid must be non-empty".into()));
        }
        if obstacles.len() != rows * cols {
            return Err(Error::InvalidLayout(format!(
                "obstacle mask has {} cells, expected {}",
                obstacles.len(),
                rows * cols
            )));
        }
        let world = GridWorld { rows, cols, obstacles, goal, start, rewards: RewardSpec::default() };
        if !world.in_bounds(goal) {
            return Err(Error::InvalidLayout(format!("goal {goal} outside the grid")));
        }
        if world.is_obstacle(goal) {
            return Err(Error::InvalidLayout(format!("goal {goal} is an obstacle")));
        }
        if let Some(s) = start {
            if !world.is_free(s) {
                return Err(Error::InvalidLayout(format!("start {s} is not a free cell")));
            }
        }
        let dist = world.distances_to(&[goal]);
        if let Some(from) = world.free_cells().into_iter().find(|c| dist[world.index(*c)].is_none()) {
            return Err(Error::UnreachableGoal { goal, from });
        }
        Ok(world)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn start(&self) -> Option<Cell> {
        self.start
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.cols + c.col
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.obstacles[self.index(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.obstacles[self.index(c)]
    }

    pub fn obstacle_mask(&self) -> &[bool] {
        &self.obstacles
    }

    pub fn obstacle_set(&self) -> BTreeSet<Cell> {
        self.cells().filter(|c| self.obstacles[self.index(*c)]).collect()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        self.cells().filter(|c| self.is_free(*c)).collect()
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::cells(self.rows, self.cols, &self.obstacles).expect("validated world")
    }

    /// The cell an action aims at, if it is on the grid.
    pub fn target(&self, c: Cell, a: Action) -> Option<Cell> {
        let (dr, dc) = a.delta();
        c.offset(dr, dc, self.rows, self.cols)
    }

    pub fn transition(&self, c: Cell, a: Action) -> Transition {
        if c == self.goal {
            return Transition { next: c, bumped: false, reward: 0.0, reached_goal: true };
        }
        match self.target(c, a).filter(|n| self.is_free(*n)) {
            Some(next) => {
                let reached_goal = next == self.goal;
                let reward = if reached_goal { self.rewards.goal } else { self.rewards.step };
                Transition { next, bumped: false, reward, reached_goal }
            }
            None => Transition { next: c, bumped: true, reward: self.rewards.obstacle, reached_goal: false },
        }
    }

    /// Breadth-first distances (in moves) from every cell to the nearest of
    /// `targets`; obstacles and unreachable cells are `None`.
    pub fn distances_to(&self, targets: &[Cell]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.rows * self.cols];
        let mut queue = VecDeque::new();
        for &t in targets {
            if self.is_free(t) && dist[self.index(t)].is_none() {
                dist[self.index(t)] = Some(0);
                queue.push_back(t);
            }
        }
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)].expect("queued cells have distances");
            for a in Action::ALL {
                if let Some(n) = self.target(c, a).filter(|n| self.is_free(*n)) {
                    if dist[self.index(n)].is_none() {
                        dist[self.index(n)] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    /// Longest shortest-path distance from a free cell to the goal.
    pub fn goal_diameter(&self) -> usize {
        self.distances_to(&[self.goal]).into_iter().flatten().max().unwrap_or(0)
    }

    /// Parses the text layout format: `#` obstacle, `.` free, `G` goal,
    /// `S` suggested start. Blank lines and lines starting with `;` are ignored.
    pub fn parse_layout(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty() && !l.starts_with(';'))
            .collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLayout("empty layout".into()));
        }
        let mut obstacles = Vec::with_capacity(rows * cols);
        let mut goal = None;
        let mut start = None;
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::InvalidLayout(format!("row {r} has {} cells, expected {cols}", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => obstacles.push(true),
                    '.' => obstacles.push(false),
                    'G' | 'S' => {
                        obstacles.push(false);
                        let slot = if ch == 'G' { &mut goal } else { &mut start };
                        if slot.replace(Cell::new(r, c)).is_some() {
                            return Err(Error::InvalidLayout(format!("more than one `{ch}` marker")));
                        }
                    }
                    other => return Err(Error::InvalidLayout(format!("unexpected character `{other}` at ({r}, {c})"))),
                }
            }
        }
        let goal = goal.ok_or_else(|| Error::InvalidLayout("layout has no goal `G`".into()))?;
        GridWorld::new(rows, cols, obstacles, goal, start)
    }

    pub fn to_layout_string(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = Cell::new(r, c);
                out.push(if cell == self.goal {
                    'G'
                } else if Some(cell) == self.start {
                    'S'
                } else if self.is_obstacle(cell) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

pub const DEFAULT_SIZE: usize = 12;

/// Vertical wall segment: `len` cells in column `col` starting at row `top`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallSpec {
    pub col: usize,
    pub top: usize,
    pub len: usize,
}

impl Default for WallSpec {
    fn default() -> Self {
        WallSpec { col: 6, top: 3, len: 6 }
    }
}

fn default_goal(width: usize, height: usize) -> Cell {
    Cell::new((height / 2).saturating_sub(1), width.saturating_sub(2))
}

fn default_start(height: usize) -> Cell {
    Cell::new((height / 2).saturating_sub(1), 1.min(height))
}

fn place(width: usize, height: usize, blocks: &[Cell]) -> Result<Vec<bool>> {
    let mut obstacles = vec![false; width * height];
    for b in blocks {
        if b.row >= height || b.col >= width {
            return Err(Error::InvalidLayout(format!("obstacle {b} outside the grid")));
        }
        obstacles[b.row * width + b.col] = true;
    }
    Ok(obstacles)
}

fn assemble(width: usize, height: usize, blocks: &[Cell]) -> Result<GridWorld> {
    let goal = default_goal(width, height);
    let start = Some(default_start(height)).filter(|s| !blocks.contains(s) && *s != goal);
    GridWorld::new(height, width, place(width, height, blocks)?, goal, start)
}

/// Open grid split by a vertical wall between the start side and the goal.
/// `None` builds an open grid.
pub fn build_simple_wall(width: usize, height: usize, wall: Option<WallSpec>) -> Result<GridWorld> {
    let blocks: Vec<Cell> = wall
        .map(|w| (w.top..w.top + w.len).map(|r| Cell::new(r, w.col)).collect())
        .unwrap_or_default();
    assemble(width, height, &blocks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSpec {
    List(Vec<Cell>),
    Seeded { count: usize, seed: u64 },
}

impl BlockSpec {
    pub fn default_list() -> Self {
        BlockSpec::List(
            [(1, 8), (2, 2), (2, 3), (3, 6), (4, 4), (5, 8), (6, 2), (7, 6), (7, 9), (8, 3), (9, 7), (10, 4)]
                .into_iter()
                .map(Cell::from)
                .collect(),
        )
    }
}

pub fn build_scattered_blocks(width: usize, height: usize, spec: &BlockSpec) -> Result<GridWorld> {
    let blocks = match spec {
        BlockSpec::List(cells) => cells.clone(),
        BlockSpec::Seeded { count, seed } => {
            let goal = default_goal(width, height);
            let start = default_start(height);
            let mut pool: Vec<Cell> = (0..height)
                .flat_map(|r| (0..width).map(move |c| Cell::new(r, c)))
                .filter(|c| *c != goal && *c != start)
                .collect();
            if *count >= pool.len() {
                return Err(Error::InvalidLayout(format!(
                    "{count} blocks do not fit in a {width}×{height} grid"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            pool.shuffle(&mut rng);
            pool.truncate(*count);
            pool.sort();
            pool
        }
    };
    let goal = default_goal(width, height);
    if blocks.contains(&goal) {
        return Err(Error::InvalidLayout(format!("block placed on the goal {goal}")));
    }
    if blocks.len() >= width * height {
        return Err(Error::InvalidLayout("no free cells left".into()));
    }
    assemble(width, height, &blocks)
}

/// U-shaped obstacle opening away from the goal: a back wall in column
/// `back_col` spanning rows `top..=bottom`, with arms of `arm_len` cells
/// extending left along rows `top` and `bottom`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub top: usize,
    pub bottom: usize,
    pub back_col: usize,
    pub arm_len: usize,
}

impl Default for TrapSpec {
    fn default() -> Self {
        TrapSpec { top: 3, bottom: 8, back_col: 8, arm_len: 5 }
    }
}

pub fn build_u_shape_trap(width: usize, height: usize, trap: TrapSpec) -> Result<GridWorld> {
    if trap.top > trap.bottom || trap.arm_len == 0 || trap.arm_len > trap.back_col + 1 {
        return Err(Error::InvalidLayout(format!("malformed trap spec {trap:?}")));
    }
    let mut blocks = BTreeSet::new();
    for r in trap.top..=trap.bottom {
        blocks.insert(Cell::new(r, trap.back_col));
    }
    for c in trap.back_col + 1 - trap.arm_len..=trap.back_col {
        blocks.insert(Cell::new(trap.top, c));
        blocks.insert(Cell::new(trap.bottom, c));
    }
    assemble(width, height, &blocks.into_iter().collect::<Vec<_>>())
}

pub const SIMPLE_WALL_LAYOUT: &str = include_str!("../../layouts/simple_wall.txt");
pub const SCATTERED_BLOCKS_LAYOUT: &str = include_str!("../../layouts/scattered_blocks.txt");
pub const U_SHAPE_TRAP_LAYOUT: &str = include_str!("../../layouts/u_shape_trap.txt");

pub const BUILTIN_LAYOUTS: [&str; 3] = ["simple_wall", "scattered_blocks", "u_shape_trap"];

/// One of the bundled default layouts by name.
pub fn builtin_layout(name: &str) -> Result<GridWorld> {
    let text = match name {
        "simple_wall" => SIMPLE_WALL_LAYOUT,
        "scattered_blocks" => SCATTERED_BLOCKS_LAYOUT,
        "u_shape_trap" => U_SHAPE_TRAP_LAYOUT,
        other => return Err(Error::InvalidLayout(format!("no built-in layout named `{other}`"))),
    };
    GridWorld::parse_layout(text)
}

/// A grid world driven by a policy.
pub struct GridSystem<P> {
    world: GridWorld,
    lattice: Lattice,
    policy: P,
}

impl<P: GridPolicy> GridSystem<P> {
    pub fn new(world: GridWorld, policy: P) -> Self {
        let lattice = world.lattice();
        GridSystem { world, lattice, policy }
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }
}

impl<P: GridPolicy> ClosedLoopSystem for GridSystem<P> {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn transition(&self, s: &StateVector) -> StateVector {
        let cell = s.to_cell().expect("checked grid state");
        StateVector::from_cell(self.world.transition(cell, self.policy.action(cell)).next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Always(Action);
    impl GridPolicy for Always {
        fn action(&self, _: Cell) -> Action {
            self.0
        }
    }

    #[test]
    fn builtin_layouts_match_the_builders() {
        let n = DEFAULT_SIZE;
        assert_eq!(builtin_layout("simple_wall").unwrap(), build_simple_wall(n, n, Some(WallSpec::default())).unwrap());
        assert_eq!(
            builtin_layout("scattered_blocks").unwrap(),
            build_scattered_blocks(n, n, &BlockSpec::default_list()).unwrap()
        );
        assert_eq!(builtin_layout("u_shape_trap").unwrap(), build_u_shape_trap(n, n, TrapSpec::default()).unwrap());
    }

    #[test]
    fn default_simple_wall_reaches_goal_from_everywhere() {
        let w = build_simple_wall(12, 12, Some(WallSpec::default())).unwrap();
        assert_eq!(w.obstacle_set().len(), 6);
        let d = w.distances_to(&[w.goal()]);
        assert!(w.free_cells().iter().all(|c| d[w.index(*c)].is_some()));
    }

    #[test]
    fn full_height_wall_is_rejected() {
        let err = build_simple_wall(12, 12, Some(WallSpec { col: 6, top: 0, len: 12 })).unwrap_err();
        assert!(matches!(err, Error::UnreachableGoal { .. }));
    }

    #[test]
    fn empty_wall_is_an_open_grid() {
        let w = build_simple_wall(12, 12, None).unwrap();
        assert!(w.obstacle_set().is_empty());
    }

    #[test]
    fn scattered_blocks_validation() {
        assert!(build_scattered_blocks(12, 12, &BlockSpec::List(vec![])).unwrap().obstacle_set().is_empty());
        let seeded = build_scattered_blocks(12, 12, &BlockSpec::Seeded { count: 15, seed: 3 });
        if let Ok(w) = &seeded {
            assert_eq!(w.obstacle_set().len(), 15);
        }
        assert!(build_scattered_blocks(4, 4, &BlockSpec::Seeded { count: 14, seed: 0 }).is_err());
        // Goal boxed in by blocks.
        let g = Cell::new(1, 2);
        let boxed = [(0, 2), (2, 2), (1, 1), (1, 3)].into_iter().map(Cell::from).collect();
        assert!(matches!(
            build_scattered_blocks(4, 4, &BlockSpec::List(boxed)),
            Err(Error::UnreachableGoal { goal, .. }) if goal == g
        ));
    }

    #[test]
    fn one_cell_trap_is_a_single_block() {
        let trap = TrapSpec { top: 4, bottom: 4, back_col: 5, arm_len: 1 };
        let w = build_u_shape_trap(12, 12, trap).unwrap();
        let block = build_scattered_blocks(12, 12, &BlockSpec::List(vec![Cell::new(4, 5)])).unwrap();
        assert_eq!(w, block);
    }

    #[test]
    fn moves_are_clamped_and_blocked() {
        let w = build_simple_wall(12, 12, Some(WallSpec::default())).unwrap();
        let t = w.transition(Cell::new(2, 3), Action::Right);
        assert_eq!(t.next, Cell::new(2, 4));
        assert!(!t.bumped);
        // Border cells: every off-grid move stays put.
        for r in 0..12 {
            let c = Cell::new(r, 11);
            if c != w.goal() {
                assert_eq!(w.transition(c, Action::Right).next, c);
            }
        }
        let into_wall = w.transition(Cell::new(4, 5), Action::Right);
        assert_eq!(into_wall.next, Cell::new(4, 5));
        assert!(into_wall.bumped);
        for a in Action::ALL {
            assert_eq!(w.transition(w.goal(), a).next, w.goal());
        }
    }

    #[test]
    fn always_right_policy_stalls_at_border() {
        let w = build_simple_wall(12, 12, None).unwrap();
        let sys = GridSystem::new(w, Always(Action::Right));
        let s = StateVector::from_cell(Cell::new(0, 2));
        assert_eq!(sys.step(&s).unwrap(), StateVector::from_cell(Cell::new(0, 3)));
        assert_eq!(sys.iterate(&s, 30).unwrap(), StateVector::from_cell(Cell::new(0, 11)));
        let wall = StateVector::from_cell(Cell::new(3, 6));
        let w2 = build_simple_wall(12, 12, Some(WallSpec::default())).unwrap();
        let sys2 = GridSystem::new(w2, Always(Action::Right));
        assert!(matches!(sys2.step(&wall), Err(Error::InvalidState(..))));
    }

    #[test]
    fn layout_round_trip_and_errors() {
        let w = builtin_layout("u_shape_trap").unwrap();
        assert_eq!(GridWorld::parse_layout(&w.to_layout_string()).unwrap(), w);
        assert!(GridWorld::parse_layout("...\n..\n").is_err());
        assert!(GridWorld::parse_layout("...\n...\n").is_err());
        assert!(GridWorld::parse_layout("G.x\n").is_err());
        assert!(GridWorld::parse_layout("G.G\n").is_err());
    }
}
