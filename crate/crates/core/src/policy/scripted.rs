//! Scripted policies with known dynamical structure, used as verification
//! oracles.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::continuous::ContinuousEnv;
use crate::env::grid::{Action, GridWorld};
use crate::env::pendulum::{wrap_angle, Pendulum, PendulumParams};
use crate::env::ContinuousTask;
use crate::error::{Error, Result};
use crate::policy::{Controller, GridPolicy};
use crate::state::{Cell, StateVector};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ScriptedRule {
    /// One-step lookahead: the action whose resulting cell is closest to the
    /// goal in Euclidean distance.
    GreedyTowardGoal,
    /// Descend breadth-first distance to the goal.
    ShortestPath,
    /// Follow a closed cycle of 4-adjacent cells. Cells nearer the cycle than
    /// the goal head for the cycle; the rest take shortest paths to the goal.
    TrapCycle { cells: Vec<Cell> },
    Constant { action: Action },
}

impl FromStr for ScriptedRule {
    type Err = Error;

    /// Accepts `greedy`, `shortest-path`, `constant:<action>` and
    /// `trap-cycle:<r>,<c>;<r>,<c>;...`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a)));
        match (name.trim().replace('_', "-").as_str(), arg) {
            ("greedy" | "greedy-toward-goal", None) => Ok(ScriptedRule::GreedyTowardGoal),
            ("shortest-path", None) => Ok(ScriptedRule::ShortestPath),
            ("constant", Some(a)) => Ok(ScriptedRule::Constant { action: a.parse()? }),
            ("trap-cycle", Some(list)) => {
                let cells = list
                    .split(';')
                    .map(|pair| {
                        let (r, c) = pair
                            .split_once(',')
                            .ok_or_else(|| Error::Parse(format!("trap-cycle cell `{pair}` is not `row,col`")))?;
                        let p = |x: &str| x.trim().parse::<usize>().map_err(|e| Error::Parse(format!("`{pair}`: {e}")));
                        Ok(Cell::new(p(r)?, p(c)?))
                    })
                    .collect::<Result<_>>()?;
                Ok(ScriptedRule::TrapCycle { cells })
            }
            _ => Err(Error::UnknownRule(s.to_string())),
        }
    }
}

/// A scripted grid policy, tabulated over the world at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedPolicy {
    rule: ScriptedRule,
    cols: usize,
    table: Vec<Action>,
}

impl ScriptedPolicy {
    pub fn rule(&self) -> &ScriptedRule {
        &self.rule
    }
}

impl GridPolicy for ScriptedPolicy {
    fn action(&self, cell: Cell) -> Action {
        self.table.get(cell.row * self.cols + cell.col).copied().unwrap_or(Action::Up)
    }
}

/// First action (in index order) leading to a free cell whose distance is one
/// less, if any.
fn descend(world: &GridWorld, dist: &[Option<usize>], c: Cell) -> Option<Action> {
    let d = dist[world.index(c)]?;
    Action::ALL.into_iter().find(|&a| {
        world
            .target(c, a)
            .filter(|n| world.is_free(*n))
            .is_some_and(|n| d > 0 && dist[world.index(n)] == Some(d - 1))
    })
}

fn greedy_toward_goal(world: &GridWorld, c: Cell) -> Action {
    let g = world.goal();
    let sq = |x: Cell| {
        let dr = x.row as f64 - g.row as f64;
        let dc = x.col as f64 - g.col as f64;
        dr * dr + dc * dc
    };
    let mut best = Action::Up;
    let mut best_d = f64::INFINITY;
    for a in Action::ALL {
        let d = sq(world.transition(c, a).next);
        if d < best_d {
            best = a;
            best_d = d;
        }
    }
    best
}

fn validate_cycle(world: &GridWorld, cells: &[Cell]) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::InvalidParameter("trap cycle needs at least one cell".into()));
    }
    for (i, c) in cells.iter().enumerate() {
        if !world.is_free(*c) {
            return Err(Error::InvalidParameter(format!("trap cycle cell {c} is not free")));
        }
        if *c == world.goal() {
            return Err(Error::InvalidParameter("trap cycle may not include the goal".into()));
        }
        if cells[..i].contains(c) {
            return Err(Error::InvalidParameter(format!("trap cycle visits {c} twice")));
        }
    }
    if cells.len() == 1 {
        let c = cells[0];
        if !Action::ALL.into_iter().any(|a| world.transition(c, a).bumped) {
            return Err(Error::InvalidParameter(format!(
                "single-cell trap at {c} needs a blocked move to stay in place"
            )));
        }
        return Ok(());
    }
    for i in 0..cells.len() {
        let (a, b) = (cells[i], cells[(i + 1) % cells.len()]);
        if a.manhattan(b) != 1 {
            return Err(Error::InvalidParameter(format!("trap cycle step {a} -> {b} is not a single move")));
        }
    }
    Ok(())
}

fn move_to(world: &GridWorld, from: Cell, to: Cell) -> Action {
    Action::ALL
        .into_iter()
        .find(|&a| world.target(from, a) == Some(to))
        .expect("cycle steps are validated as single moves")
}

pub fn make_scripted(rule: &ScriptedRule, world: &GridWorld) -> Result<ScriptedPolicy> {
    let to_goal = world.distances_to(&[world.goal()]);
    let table: Vec<Action> = match rule {
        ScriptedRule::Constant { action } => vec![*action; world.rows() * world.cols()],
        ScriptedRule::GreedyTowardGoal => world.cells().map(|c| greedy_toward_goal(world, c)).collect(),
        ScriptedRule::ShortestPath => {
            world.cells().map(|c| descend(world, &to_goal, c).unwrap_or(Action::Up)).collect()
        }
        ScriptedRule::TrapCycle { cells } => {
            validate_cycle(world, cells)?;
            let to_cycle = world.distances_to(cells);
            world
                .cells()
                .map(|c| {
                    if let Some(i) = cells.iter().position(|x| *x == c) {
                        if cells.len() == 1 {
                            return Action::ALL.into_iter().find(|&a| world.transition(c, a).bumped).expect("validated");
                        }
                        return move_to(world, c, cells[(i + 1) % cells.len()]);
                    }
                    let i = world.index(c);
                    let toward_cycle = matches!((to_cycle[i], to_goal[i]), (Some(dc), Some(dg)) if dc < dg);
                    let dist = if toward_cycle { &to_cycle } else { &to_goal };
                    descend(world, dist, c).unwrap_or(Action::Up)
                })
                .collect()
        }
    };
    Ok(ScriptedPolicy { rule: rule.clone(), cols: world.cols(), table })
}

/// Continuous-control scripted rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ControllerRule {
    Constant { value: f64 },
    /// Pendulum: swing-up by energy pumping with a PD capture near upright.
    /// Mountain car: push in the direction of motion.
    EnergyPump,
}

impl FromStr for ControllerRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").split_once(':') {
            Some(("constant", v)) => {
                let value = v.trim().parse().map_err(|e| Error::Parse(format!("constant `{v}`: {e}")))?;
                Ok(ControllerRule::Constant { value })
            }
            None if s.trim().replace('_', "-") == "energy-pump" => Ok(ControllerRule::EnergyPump),
            _ => Err(Error::UnknownRule(s.to_string())),
        }
    }
}

/// Pendulum swing-up: torque `±max` in the direction that moves the energy
/// toward the upright energy, switching to saturated PD control inside the
/// capture box around upright.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumEnergyPump {
    pub params: PendulumParams,
    pub kp: f64,
    /// Gain on the angular rate in rad/s.
    pub kd: f64,
    pub capture_angle: f64,
    /// Capture limit on the angular rate, rad/s.
    pub capture_rate: f64,
}

impl PendulumEnergyPump {
    pub fn new(env: &Pendulum) -> Self {
        PendulumEnergyPump { params: *env.params(), kp: 10.0, kd: 2.0, capture_angle: 0.35, capture_rate: 2.0 }
    }

    pub fn in_capture(&self, s: &StateVector) -> bool {
        wrap_angle(s[0]).abs() < self.capture_angle && (s[1] / self.params.dt).abs() < self.capture_rate
    }
}

impl Controller for PendulumEnergyPump {
    fn act(&self, s: &StateVector) -> f64 {
        let p = &self.params;
        let theta = wrap_angle(s[0]);
        let rate = s[1] / p.dt;
        if self.in_capture(s) {
            return (-self.kp * theta - self.kd * rate).clamp(-p.max_torque, p.max_torque);
        }
        let energy = p.m * p.l * p.l * rate * rate / 6.0 + 0.5 * p.m * p.g * p.l * theta.cos();
        let push = rate * (0.5 * p.m * p.g * p.l - energy);
        if push < 0.0 {
            -p.max_torque
        } else {
            p.max_torque
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountainCarEnergyPump {
    pub max_force: f64,
}

impl Controller for MountainCarEnergyPump {
    fn act(&self, s: &StateVector) -> f64 {
        if s[1] >= 0.0 {
            self.max_force
        } else {
            -self.max_force
        }
    }
}

pub fn make_controller(rule: &ControllerRule, task: &ContinuousTask) -> Box<dyn Controller> {
    match (rule, task) {
        (ControllerRule::Constant { value }, _) => {
            let v = *value;
            Box::new(move |_: &StateVector| v)
        }
        (ControllerRule::EnergyPump, ContinuousTask::Pendulum(p)) => Box::new(PendulumEnergyPump::new(p)),
        (ControllerRule::EnergyPump, ContinuousTask::MountainCar(m)) => {
            Box::new(MountainCarEnergyPump { max_force: m.action_bounds().1 })
        }
    }
}
