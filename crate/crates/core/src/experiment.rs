//! Config-driven commands behind the CLI.
//!
//! Each command reads an [`ExperimentConfig`], writes its artifacts into the
//! configured output directory and returns the written paths. Every artifact
//! embeds the config it came from, and nothing depends on wall-clock time or
//! thread scheduling, so reruns are byte-identical.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attractor::{detect_local_peaks, final_state_histogram, simulate, DensityMap, PeakSet, StartMode};
use crate::certificate::{cells_in_region, validate_divergence_bound, ConvexRegion, StabilityCertificate};
use crate::dynamics::{AffineMap, ClosedLoopSystem, GridGeometry, Lattice, LatticeMap};
use crate::env::grid::{builtin_layout, GridSystem, GridWorld, BUILTIN_LAYOUTS};
use crate::env::{AnalysisSlice, ContinuousEnv, ContinuousTask, MountainCar, MountainCarParams, Pendulum, PendulumParams};
use crate::error::{Error, Result};
use crate::ftle::{compute_ftle_field, FtleField};
use crate::io::csv::{table_csv, trajectories_csv, GridCsv, TableRow};
use crate::io::heatmap::{render_heatmap, Colormap};
use crate::io::json::{read_text, write_json, write_text};
use crate::metrics::{check_alpha, metric_report, obstacle_boundary, BoundarySet, GoalRegion, MetricParameters, MetricReport};
use crate::policy::{
    make_controller, make_scripted, train_tabular_q, ControllerRule, GridPolicy, MlpGridPolicy, MlpPolicyWeights,
    QLearningConfig, ScriptedRule, TabularPolicy,
};
use crate::state::Cell;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// A bundled layout name or a path to a layout file.
    Grid { layout: String },
    /// `T(s, a) = s` on an open grid.
    Identity { rows: usize, cols: usize },
    /// `(row, col) → (row, 2·col mod cols)`.
    Doubling { rows: usize, cols: usize },
    /// `s → A s + b` sampled on a plane lattice.
    Affine {
        matrix: [[f64; 2]; 2],
        #[serde(default)]
        offset: [f64; 2],
        rows: usize,
        cols: usize,
        geometry: GridGeometry,
    },
    Pendulum {
        #[serde(default)]
        params: PendulumParams,
        #[serde(default)]
        slice: Option<AnalysisSlice>,
    },
    MountainCar {
        #[serde(default)]
        params: MountainCarParams,
        #[serde(default)]
        slice: Option<AnalysisSlice>,
    },
}

pub const DEFAULT_SLICE_RESOLUTION: [usize; 2] = [64, 64];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    /// Scripted grid rule, e.g. `shortest-path` or `trap-cycle:5,1;6,1`.
    Scripted { rule: String },
    /// Tabular policy file written by `train`.
    Checkpoint { path: PathBuf },
    /// MLP weights JSON.
    Weights { path: PathBuf },
    /// Continuous controller rule, e.g. `energy-pump` or `constant:0.5`.
    Controller { rule: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_pairs() -> usize {
    1000
}

fn default_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: Option<EnvSpec>,
    #[serde(default)]
    pub policy: Option<PolicySource>,
    #[serde(rename = "T_int", default = "default_t_int")]
    pub t_int: usize,
    /// Sampled ensemble size; ignored when `exhaustive`.
    #[serde(default)]
    pub n_traj: Option<usize>,
    /// One start per valid lattice node. Defaults to true for grids when
    /// `n_traj` is unset.
    #[serde(default)]
    pub exhaustive: Option<bool>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_sim")]
    pub n_sim: usize,
    /// Defaults to `4·T_int`.
    #[serde(default)]
    pub t_escape: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Stencil step in lattice units.
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_colormap")]
    pub colormap: Colormap,
    #[serde(default = "default_upscale")]
    pub upscale: usize,
    /// Trajectories whose paths are exported by `attractors`.
    #[serde(default)]
    pub record_paths: usize,
    /// Goal cells for systems without a built-in goal.
    #[serde(default)]
    pub goal: Option<Vec<Cell>>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub region: Option<ConvexRegion>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Certify directly from σ_max, skipping the field.
    #[serde(default)]
    pub sigma_max: Option<f64>,
    #[serde(default)]
    pub validation: Option<ValidationSpec>,
    #[serde(default)]
    pub training: Option<QLearningConfig>,
    /// Policy files evaluated by `sweep`.
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
}

fn default_t_int() -> usize {
    30
}
fn default_alpha() -> f64 {
    crate::metrics::DEFAULT_ALPHA
}
fn default_n_sim() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_h() -> f64 {
    1.0
}
fn default_colormap() -> Colormap {
    Colormap::Ramp
}
fn default_upscale() -> usize {
    8
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = cfg.resolved(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        if let Some(EnvSpec::Grid { layout }) = &mut self.env {
            if !BUILTIN_LAYOUTS.contains(&layout.as_str()) {
                *layout = resolve(base, Path::new(layout.as_str())).to_string_lossy().into_owned();
            }
        }
        if let Some(PolicySource::Checkpoint { path } | PolicySource::Weights { path }) = &mut self.policy {
            *path = resolve(base, path);
        }
        self.output_dir = resolve(base, &self.output_dir);
        for c in &mut self.checkpoints {
            *c = resolve(base, c);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_int == 0 {
            return Err(Error::InvalidParameter("T_int must be at least 1".into()));
        }
        check_alpha(self.alpha)?;
        if self.n_sim == 0 {
            return Err(Error::InvalidParameter("n_sim must be at least 1".into()));
        }
        if self.t_escape == Some(0) {
            return Err(Error::InvalidParameter("t_escape must be at least 1".into()));
        }
        if self.n_traj == Some(0) {
            return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidParameter(format!("stencil step h = {} must be positive", self.h)));
        }
        if self.upscale == 0 {
            return Err(Error::InvalidParameter("upscale must be at least 1".into()));
        }
        if let Some(r) = &self.region {
            r.validate()?;
        }
        if let Some(v) = &self.validation {
            if v.pairs == 0 || !(v.tolerance.is_finite() && v.tolerance >= 0.0) {
                return Err(Error::InvalidParameter("validation needs pairs ≥ 1 and a non-negative tolerance".into()));
            }
        }
        if let Some(t) = &self.training {
            t.validate()?;
        }
        if let Some(EnvSpec::Grid { layout }) = &self.env {
            if !BUILTIN_LAYOUTS.contains(&layout.as_str()) {
                require_file(Path::new(layout))?;
            }
        }
        match &self.policy {
            Some(PolicySource::Checkpoint { path } | PolicySource::Weights { path }) => require_file(path)?,
            Some(PolicySource::Scripted { rule }) => {
                rule.parse::<ScriptedRule>()?;
            }
            Some(PolicySource::Controller { rule }) => {
                rule.parse::<ControllerRule>()?;
            }
            None => {}
        }
        Ok(())
    }

    pub fn t_escape(&self) -> usize {
        self.t_escape.unwrap_or(4 * self.t_int)
    }

    fn start_mode(&self, grid: bool) -> StartMode {
        if self.exhaustive.unwrap_or(grid && self.n_traj.is_none()) {
            StartMode::Exhaustive
        } else {
            StartMode::Sampled { n: self.n_traj.unwrap_or(1000), seed: self.seed }
        }
    }

    fn compact(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn meta(&self, command: &str) -> Vec<(String, String)> {
        vec![("command".into(), command.into()), ("config".into(), self.compact())]
    }
}

/// A built closed-loop system with what the commands need around it.
pub struct Experiment {
    pub system: Box<dyn ClosedLoopSystem + Send>,
    pub world: Option<GridWorld>,
    pub goal: Option<GoalRegion>,
    pub obstacles: BTreeSet<Cell>,
    /// Short name used in file names.
    pub name: String,
    pub description: serde_json::Value,
}

impl Experiment {
    pub fn lattice(&self) -> &Lattice {
        self.system.lattice()
    }

    pub fn boundary(&self) -> BoundarySet {
        let l = self.lattice();
        obstacle_boundary(l.rows(), l.cols(), &self.obstacles)
    }

    pub fn require_goal(&self) -> Result<&GoalRegion> {
        self.goal
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("environment `{}` has no goal; set `goal` in the config", self.name)))
    }
}

pub fn load_world(layout: &str) -> Result<(GridWorld, String)> {
    if BUILTIN_LAYOUTS.contains(&layout) {
        return Ok((builtin_layout(layout)?, layout.to_string()));
    }
    let path = Path::new(layout);
    let world = GridWorld::parse_layout(&read_text(path)?)?;
    let name = path.file_stem().map_or("layout".into(), |s| s.to_string_lossy().into_owned());
    Ok((world, name))
}

/// Loads a tabular policy file and checks it covers every free cell.
pub fn load_checkpoint(path: &Path, world: &GridWorld) -> Result<TabularPolicy> {
    let p = TabularPolicy::from_csv(&read_text(path)?, world.rows(), world.cols())?;
    p.validate(world)?;
    Ok(p)
}

fn grid_policy(src: Option<&PolicySource>, world: &GridWorld) -> Result<(Box<dyn GridPolicy>, serde_json::Value)> {
    match src {
        Some(PolicySource::Scripted { rule }) => {
            let rule: ScriptedRule = rule.parse()?;
            let p = make_scripted(&rule, world)?;
            Ok((Box::new(p), serde_json::to_value(&rule)?))
        }
        Some(PolicySource::Checkpoint { path }) => {
            Ok((Box::new(load_checkpoint(path, world)?), json!({ "checkpoint": path })))
        }
        Some(PolicySource::Weights { path }) => {
            let w = MlpPolicyWeights::load(path)?;
            Ok((Box::new(MlpGridPolicy::new(w)?), json!({ "weights": path })))
        }
        Some(PolicySource::Controller { .. }) => {
            Err(Error::InvalidParameter("controller rules apply to continuous environments only".into()))
        }
        None => Err(Error::InvalidParameter("grid environments need a `policy`".into())),
    }
}

fn configured_goal(cfg: &ExperimentConfig, lattice: &Lattice) -> Result<Option<GoalRegion>> {
    match &cfg.goal {
        Some(cells) => {
            let g = GoalRegion::new(cells.iter().copied())?;
            g.validate(lattice)?;
            Ok(Some(g))
        }
        None => Ok(None),
    }
}

fn no_policy(cfg: &ExperimentConfig, kind: &str) -> Result<()> {
    match cfg.policy {
        None => Ok(()),
        Some(_) => Err(Error::InvalidParameter(format!("`{kind}` environments take no policy"))),
    }
}

/// Builds the closed-loop system for the config's environment and policy.
pub fn build(cfg: &ExperimentConfig) -> Result<Experiment> {
    let env = cfg.env.as_ref().ok_or_else(|| Error::InvalidParameter("config has no `env`".into()))?;
    match env {
        EnvSpec::Grid { layout } => {
            let (world, name) = load_world(layout)?;
            let (policy, pdesc) = grid_policy(cfg.policy.as_ref(), &world)?;
            let goal = match configured_goal(cfg, &world.lattice())? {
                Some(g) => g,
                None => GoalRegion::single(world.goal()),
            };
            let obstacles = world.obstacle_set();
            let description = json!({ "env": name, "rows": world.rows(), "cols": world.cols(), "policy": pdesc });
            Ok(Experiment {
                system: Box::new(GridSystem::new(world.clone(), policy)),
                world: Some(world),
                goal: Some(goal),
                obstacles,
                name,
                description,
            })
        }
        EnvSpec::Identity { rows, cols } | EnvSpec::Doubling { rows, cols } => {
            no_policy(cfg, "identity/doubling")?;
            let (sys, name) = match env {
                EnvSpec::Identity { .. } => (LatticeMap::identity(*rows, *cols)?, "identity"),
                _ => (LatticeMap::doubling(*rows, *cols)?, "doubling"),
            };
            let goal = configured_goal(cfg, sys.lattice())?;
            Ok(Experiment {
                system: Box::new(sys),
                world: None,
                goal,
                obstacles: BTreeSet::new(),
                name: name.into(),
                description: json!({ "env": name, "rows": rows, "cols": cols }),
            })
        }
        EnvSpec::Affine { matrix, offset, rows, cols, geometry } => {
            no_policy(cfg, "affine")?;
            let sys = AffineMap::new(*matrix, *offset, Lattice::plane(*rows, *cols, *geometry)?)?;
            let goal = configured_goal(cfg, sys.lattice())?;
            Ok(Experiment {
                system: Box::new(sys),
                world: None,
                goal,
                obstacles: BTreeSet::new(),
                name: "affine".into(),
                description: json!({ "env": "affine", "matrix": matrix, "offset": offset }),
            })
        }
        EnvSpec::Pendulum { params, slice } => {
            continuous(cfg, ContinuousTask::Pendulum(Pendulum::new(*params)?), slice.as_ref())
        }
        EnvSpec::MountainCar { params, slice } => {
            continuous(cfg, ContinuousTask::MountainCar(MountainCar::new(*params)?), slice.as_ref())
        }
    }
}

fn continuous(cfg: &ExperimentConfig, task: ContinuousTask, slice: Option<&AnalysisSlice>) -> Result<Experiment> {
    let rule: ControllerRule = match &cfg.policy {
        Some(PolicySource::Controller { rule }) => rule.parse()?,
        Some(_) => return Err(Error::InvalidParameter("continuous environments need a `controller` policy".into())),
        None => return Err(Error::InvalidParameter("continuous environments need a `policy`".into())),
    };
    let slice = slice.cloned().unwrap_or_else(|| AnalysisSlice::full(&task, DEFAULT_SLICE_RESOLUTION));
    let controller = make_controller(&rule, &task);
    let name = task.name().to_string();
    let description = json!({ "env": name, "parameters": task.parameters(), "controller": rule, "slice": slice });
    let goal_spec = task.goal().clone();
    let sys = crate::env::slice_to_grid(task, controller, &slice)?;
    let goal = match configured_goal(cfg, sys.lattice())? {
        Some(g) => g,
        None => GoalRegion::within_radius(sys.lattice(), &crate::state::StateVector::new(&goal_spec.state), goal_spec.radius)?,
    };
    Ok(Experiment { system: Box::new(sys), world: None, goal: Some(goal), obstacles: BTreeSet::new(), name, description })
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    Ok(&cfg.output_dir)
}

fn image_ext(c: Colormap) -> &'static str {
    match c {
        Colormap::Gray => "pgm",
        Colormap::Ramp => "ppm",
    }
}

fn write_heatmap(path: &Path, grid: &GridCsv, cmap: Colormap, upscale: usize) -> Result<()> {
    let comments = grid.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let img = render_heatmap(&grid.values, &grid.valid, grid.rows, grid.cols, cmap, upscale, comments)?;
    std::fs::write(path, img.to_bytes()).map_err(|e| Error::io(path, e))
}

fn field_stats(field: &FtleField) -> serde_json::Value {
    let vals: Vec<f64> = field.valid_values().collect();
    let mean = if vals.is_empty() { None } else { Some(vals.iter().sum::<f64>() / vals.len() as f64) };
    let (min, max) = field.extremes().map_or((None, None), |(a, b)| (Some(a), Some(b)));
    json!({ "valid_cells": vals.len(), "masked_cells": field.rows * field.cols - vals.len(), "min": min, "max": max, "mean": mean })
}

/// FTLE field CSV, heatmap and summary JSON.
pub fn cmd_ftle(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let exp = build(cfg)?;
    let field = compute_ftle_field(&exp.system, cfg.t_int, cfg.h)?;
    let dir = out_dir(cfg)?;
    let grid = GridCsv::from_field(&field, cfg.meta("ftle"));
    let csv = dir.join("ftle.csv");
    let img = dir.join(format!("ftle.{}", image_ext(cfg.colormap)));
    let summary = dir.join("ftle_summary.json");
    write_text(&csv, &grid.to_csv())?;
    write_heatmap(&img, &grid, cfg.colormap, cfg.upscale)?;
    write_json(
        &summary,
        &json!({
            "command": "ftle",
            "config": cfg,
            "system": exp.description,
            "T_int": field.horizon,
            "scheme": field.scheme,
            "geometry": field.geometry,
            "rows": field.rows,
            "cols": field.cols,
            "field": field_stats(&field),
        }),
    )?;
    Ok(vec![csv, img, summary])
}

fn histogram(cfg: &ExperimentConfig, exp: &Experiment, record: usize) -> Result<(DensityMap, crate::attractor::TrajectoryEnsemble)> {
    let mode = cfg.start_mode(exp.lattice().is_grid());
    let ens = simulate(&exp.system, mode, cfg.t_int, record)?;
    let h = final_state_histogram(&ens);
    if h.total() != ens.len() as f64 {
        return Err(Error::Invariant(format!("histogram mass {} ≠ ensemble size {}", h.total(), ens.len())));
    }
    Ok((h, ens))
}

/// Final-state histogram CSV, heatmap and peak list JSON.
pub fn cmd_attractors(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let exp = build(cfg)?;
    let (h, ens) = histogram(cfg, &exp, cfg.record_paths)?;
    let exclude = exp.goal.as_ref().map(|g| g.cells().clone()).unwrap_or_default();
    let peaks: PeakSet = detect_local_peaks(&h, &exclude);
    let dir = out_dir(cfg)?;
    let grid = GridCsv::from_density(&h, exp.lattice(), cfg.meta("attractors"));
    let csv = dir.join("density.csv");
    let img = dir.join(format!("density.{}", image_ext(cfg.colormap)));
    let list = dir.join("peaks.json");
    write_text(&csv, &grid.to_csv())?;
    write_heatmap(&img, &grid, cfg.colormap, cfg.upscale)?;
    write_json(
        &list,
        &json!({
            "command": "attractors",
            "config": cfg,
            "system": exp.description,
            "starts": ens.starts,
            "n_traj": ens.len(),
            "mass": h.total(),
            "goal": exp.goal.as_ref().map(|g| g.cells().iter().copied().collect::<Vec<_>>()),
            "peaks": peaks.peaks,
        }),
    )?;
    let mut out = vec![csv, img, list];
    if cfg.record_paths > 0 {
        let t = dir.join("trajectories.csv");
        write_text(&t, &trajectories_csv(&ens, exp.lattice(), &cfg.meta("attractors")))?;
        out.push(t);
    }
    Ok(out)
}

fn metric_params(cfg: &ExperimentConfig) -> MetricParameters {
    MetricParameters { alpha: cfg.alpha, n_sim: cfg.n_sim, t_escape: cfg.t_escape(), t_int: cfg.t_int, seed: cfg.seed }
}

/// Field, histogram and all three metrics for a built experiment.
pub fn evaluate(cfg: &ExperimentConfig, exp: &Experiment) -> Result<MetricReport> {
    let goal = exp.require_goal()?;
    let field = compute_ftle_field(&exp.system, cfg.t_int, cfg.h)?;
    let (h, _) = histogram(cfg, exp, 0)?;
    let report = metric_report(&exp.system, &field, &h, &exp.boundary(), goal, &metric_params(cfg))?;
    if report.tasas > report.asas {
        return Err(Error::Invariant(format!("TASAS {} exceeds ASAS {}", report.tasas, report.asas)));
    }
    Ok(report)
}

/// MetricReport JSON and a one-row table CSV.
pub fn cmd_metrics(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let exp = build(cfg)?;
    let report = evaluate(cfg, &exp)?;
    let dir = out_dir(cfg)?;
    let label = cfg.label.clone().unwrap_or_else(|| exp.name.clone());
    let js = dir.join("metrics.json");
    let csv = dir.join("metrics.csv");
    write_json(&js, &json!({ "command": "metrics", "config": cfg, "system": exp.description, "report": report }))?;
    let row = TableRow { label, mbr: report.mbr, asas: report.asas, tasas: report.tasas };
    write_text(&csv, &table_csv(&[row], &cfg.meta("metrics")))?;
    Ok(vec![js, csv])
}

/// Certificate JSON; with an environment also the region overlay and, when
/// requested, the bound-validation report.
pub fn cmd_certify(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let epsilon = cfg.epsilon.ok_or_else(|| Error::InvalidParameter("certify needs `epsilon`".into()))?;
    let dir = out_dir(cfg)?;
    let cert_path = dir.join("certificate.json");
    if let Some(sigma_max) = cfg.sigma_max {
        let cert = StabilityCertificate::new(cfg.region.clone(), sigma_max, cfg.t_int, epsilon, None)?;
        write_json(&cert_path, &json!({ "command": "certify", "config": cfg, "certificate": cert }))?;
        return Ok(vec![cert_path]);
    }
    let region = cfg
        .region
        .clone()
        .ok_or_else(|| Error::InvalidParameter("certify needs a `region` or a direct `sigma_max`".into()))?;
    let exp = build(cfg)?;
    let field = compute_ftle_field(&exp.system, cfg.t_int, cfg.h)?;
    let cert = StabilityCertificate::from_field(&field, region.clone(), epsilon)?;
    write_json(&cert_path, &json!({ "command": "certify", "config": cfg, "system": exp.description, "certificate": cert }))?;
    let overlay = dir.join("region.json");
    write_json(&overlay, &json!({ "region": region, "cells": cells_in_region(&field, &region) }))?;
    let mut out = vec![cert_path, overlay];
    if let Some(v) = &cfg.validation {
        let rep = validate_divergence_bound(&exp.system, &region, &field, cfg.t_int, v.pairs, v.seed, v.tolerance)?;
        let p = dir.join("validation.json");
        write_json(&p, &json!({ "command": "certify", "config": cfg, "validation": rep }))?;
        out.push(p);
    }
    Ok(out)
}

/// Trains on a grid layout and writes `<env>-ep<episode>.policy` files.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let Some(EnvSpec::Grid { layout }) = &cfg.env else {
        return Err(Error::InvalidParameter("train needs a grid `env`".into()));
    };
    let (world, name) = load_world(layout)?;
    let tcfg = cfg.training.clone().unwrap_or_default();
    let run = train_tabular_q(&world, &tcfg)?;
    let dir = out_dir(cfg)?;
    let tjson = serde_json::to_string(&tcfg)?;
    let mut out = Vec::new();
    let mut files = Vec::new();
    for cp in &run.checkpoints {
        let file = format!("{name}-ep{}.policy", cp.episode);
        let comments =
            vec![format!("env={name}"), format!("episode={}", cp.episode), format!("training={tjson}")];
        let p = dir.join(&file);
        write_text(&p, &cp.policy.to_csv(&comments))?;
        files.push(json!({ "episode": cp.episode, "file": file }));
        out.push(p);
    }
    let summary = dir.join("training.json");
    let tail = run.episode_lengths.len().min(100);
    let recent = &run.episode_lengths[run.episode_lengths.len() - tail..];
    let mean_recent = (tail > 0).then(|| recent.iter().sum::<usize>() as f64 / tail as f64);
    write_json(
        &summary,
        &json!({
            "command": "train",
            "config": cfg,
            "env": name,
            "training": tcfg,
            "checkpoints": files,
            "mean_length_last_100": mean_recent,
        }),
    )?;
    out.push(summary);
    Ok(out)
}

fn checkpoint_label(path: &Path, text: &str) -> String {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .find_map(|c| c.trim().strip_prefix("episode=").map(|v| v.trim().to_string()))
        .unwrap_or_else(|| path.file_stem().map_or(String::new(), |s| s.to_string_lossy().into_owned()))
}

/// Evaluates each checkpoint on the config's grid and writes one table.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let Some(EnvSpec::Grid { layout }) = &cfg.env else {
        return Err(Error::InvalidParameter("sweep needs a grid `env`".into()));
    };
    load_world(layout)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for path in &cfg.checkpoints {
        let text = read_text(path)?;
        let label = checkpoint_label(path, &text);
        let one = ExperimentConfig { policy: Some(PolicySource::Checkpoint { path: path.clone() }), ..cfg.clone() };
        let exp = build(&one)?;
        let report = evaluate(&one, &exp)?;
        rows.push(TableRow { label: label.clone(), mbr: report.mbr, asas: report.asas, tasas: report.tasas });
        reports.push(json!({ "episode": label, "checkpoint": path, "report": report }));
    }
    let dir = out_dir(cfg)?;
    let csv = dir.join("sweep.csv");
    let js = dir.join("sweep.json");
    write_text(&csv, &table_csv(&rows, &cfg.meta("sweep")))?;
    write_json(&js, &json!({ "command": "sweep", "config": cfg, "rows": reports }))?;
    Ok(vec![csv, js])
}

/// Renders a grid CSV (field or histogram) to PGM/PPM.
pub fn cmd_render(input: &Path, output: &Path, colormap: Colormap, upscale: usize) -> Result<PathBuf> {
    let grid = GridCsv::parse(&read_text(input)?)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_heatmap(output, &grid, colormap, upscale)?;
    Ok(output.to_path_buf())
}
