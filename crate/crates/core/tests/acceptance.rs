//! Acceptance suite. Runs as a plain binary so every criterion prints a
//! PASS/FAIL line; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ftle_verify::attractor::{final_state_histogram, simulate, DensityMap, StartMode};
use ftle_verify::certificate::{validate_divergence_bound, ConvexRegion};
use ftle_verify::dynamics::{compute_flow_map_field, AffineMap, ClosedLoopSystem, GridGeometry, Lattice};
use ftle_verify::env::grid::{builtin_layout, Action, GridWorld, BUILTIN_LAYOUTS};
use ftle_verify::env::{slice_to_grid, AnalysisSlice, GridSystem, Pendulum};
use ftle_verify::ftle::compute_ftle_field;
use ftle_verify::metrics::{asas, metric_report, obstacle_boundary, tasas, GoalRegion, MetricParameters};
use ftle_verify::policy::{make_scripted, train_tabular_q, PendulumEnergyPump, QLearningConfig, ScriptedRule, TabularPolicy};
use ftle_verify::{Cell, StateVector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Largest singular value via nalgebra's SVD, independent of the crate's
/// closed-form eigen solver.
fn top_singular(m: Matrix2<f64>) -> f64 {
    m.svd(false, false).singular_values.max()
}

fn criterion_1() -> Outcome {
    let (a, b) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let maps = [("diag(2,1)", [[2.0, 0.0], [0.0, 1.0]]), ("rot30", [[a, -b], [b, a]]), ("shear", [[1.0, 1.0], [0.0, 1.0]])];
    let lattice = Lattice::plane(50, 50, GridGeometry { origin: [-2.45, -2.45], spacing: [0.1, 0.1] }).unwrap();
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (name, m) in maps {
        let sys = AffineMap::new(m, [0.0, 0.0], lattice.clone()).unwrap();
        for t in [1usize, 5] {
            let mt = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]).pow(t as u32);
            let expect = top_singular(mt).ln() / t as f64;
            let field = compute_ftle_field(&sys, t, 1.0).unwrap();
            for r in 1..49 {
                for c in 1..49 {
                    let got = field.get(Cell::new(r, c)).ok_or(format!("{name}: ({r},{c}) masked"))?;
                    let err = if expect.abs() > 1e-12 { (got - expect).abs() / expect.abs() } else { (got - expect).abs() };
                    let tol = if expect.abs() > 1e-12 { 1e-9 } else { 1e-12 };
                    check(err <= tol, format!("{name} T={t} ({r},{c}): {got} vs {expect}"))?;
                    worst = worst.max(err);
                }
            }
        }
    }
    let dt = t0.elapsed();
    check(dt < Duration::from_secs(1), format!("took {dt:?}"))?;
    Ok(format!("worst error {worst:.1e}, {dt:?}"))
}

fn criterion_2() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ftle-verify"))
        .args(["certify", "--sigma-max", "0.7158", "--t-int", "20", "--epsilon", "0.05", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    check(out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())?;
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    let delta = v["certificate"]["delta"].as_f64().ok_or("no delta")?;
    check((2.9e-8..=3.1e-8).contains(&delta), format!("δ = {delta:e}"))?;
    Ok(format!("δ = {delta:.4e}"))
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let env = Pendulum::default();
    let pump = PendulumEnergyPump::new(&env);
    let slice = AnalysisSlice { free: [0, 1], fixed: vec![0.0, 0.0], resolution: [41, 41], range: Some([[-0.1, 0.1], [-0.1, 0.1]]) };
    let sys = slice_to_grid(env, pump.clone(), &slice).unwrap();
    let region = ConvexRegion::Disc { center: [0.0, 0.0], radius: 0.03 };
    // The disc must stay clear of the torque switch: inside capture and unsaturated.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..2000 {
        let p = region.sample(&mut rng);
        let s = StateVector::new(&p);
        check(pump.in_capture(&s), format!("{p:?} outside the capture box"))?;
        let u = -pump.kp * p[0] - pump.kd * p[1] / pump.params.dt;
        check(u.abs() < pump.params.max_torque, format!("{p:?} saturates"))?;
    }
    let field = compute_ftle_field(&sys, 20, 1.0).unwrap();
    let rep = validate_divergence_bound(&sys, &region, &field, 20, 1000, 1, 1e-6).unwrap();
    let dt = t0.elapsed();
    check(rep.violations == 0, format!("{} violations, max ratio {} vs bound {}", rep.violations, rep.max_ratio, rep.bound))?;
    check(dt < Duration::from_secs(10), format!("took {dt:?}"))?;
    Ok(format!("0/1000 violations, max ratio {:.6} ≤ bound {:.6}, {dt:?}", rep.max_ratio, rep.bound))
}

fn exhaustive_report(world: &GridWorld, rule: &ScriptedRule) -> ftle_verify::metrics::MetricReport {
    let policy = make_scripted(rule, world).unwrap();
    let sys = GridSystem::new(world.clone(), policy);
    let field = compute_ftle_field(&sys, 30, 1.0).unwrap();
    let h = final_state_histogram(&simulate(&sys, StartMode::Exhaustive, 30, 0).unwrap());
    let boundary = obstacle_boundary(world.rows(), world.cols(), &world.obstacle_set());
    let params = MetricParameters { alpha: 0.25, n_sim: 100, t_escape: 120, t_int: 30, seed: 0 };
    metric_report(&sys, &field, &h, &boundary, &GoalRegion::single(world.goal()), &params).unwrap()
}

fn criterion_4() -> Outcome {
    let mut notes = Vec::new();
    for name in BUILTIN_LAYOUTS {
        let w = builtin_layout(name).unwrap();
        let sp = exhaustive_report(&w, &ScriptedRule::ShortestPath);
        check(sp.asas == 0.0 && sp.tasas == 0.0, format!("{name} shortest path: ASAS {} TASAS {}", sp.asas, sp.tasas))?;
        let trap = ScriptedRule::TrapCycle { cells: vec![Cell::new(5, 1), Cell::new(6, 1)] };
        let tr = exhaustive_report(&w, &trap);
        check(tr.tasas > 0.0 && tr.tasas <= tr.asas, format!("{name} trap: ASAS {} TASAS {}", tr.asas, tr.tasas))?;
        notes.push(format!("{name} trap TASAS {:.3}", tr.tasas));
    }
    Ok(notes.join(", "))
}

struct Counting<S> {
    inner: S,
    calls: AtomicU64,
}

impl<S: ClosedLoopSystem> ClosedLoopSystem for Counting<S> {
    fn lattice(&self) -> &Lattice {
        self.inner.lattice()
    }
    fn transition(&self, s: &StateVector) -> StateVector {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.transition(s)
    }
}

fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    for name in BUILTIN_LAYOUTS {
        let w = builtin_layout(name).unwrap();
        let free = w.free_cells().len() as u64;
        let policy = make_scripted(&ScriptedRule::ShortestPath, &w).unwrap();
        let sys = Counting { inner: GridSystem::new(w, policy), calls: AtomicU64::new(0) };
        let flow = compute_flow_map_field(&sys, 30).unwrap();
        let counted = sys.calls.load(Ordering::Relaxed);
        check(counted == free * 30, format!("{name}: {counted} calls for {free} free cells"))?;
        check(flow.transition_calls() == counted, format!("{name}: reported {} vs counted {counted}", flow.transition_calls()))?;
        notes.push(format!("{name} {free}·30={counted}"));
    }
    Ok(notes.join(", "))
}

fn criterion_6() -> Outcome {
    let t0 = Instant::now();
    let w = builtin_layout("simple_wall").unwrap();
    let cfg = QLearningConfig::default();
    let run = train_tabular_q(&w, &cfg).unwrap();
    let eval = |p: &TabularPolicy| {
        let sys = GridSystem::new(w.clone(), p);
        let field = compute_ftle_field(&sys, 30, 1.0).unwrap();
        let h = final_state_histogram(&simulate(&sys, StartMode::Exhaustive, 30, 0).unwrap());
        let boundary = obstacle_boundary(w.rows(), w.cols(), &w.obstacle_set());
        let params = MetricParameters { alpha: 0.25, n_sim: 100, t_escape: 120, t_int: 30, seed: cfg.seed };
        metric_report(&sys, &field, &h, &boundary, &GoalRegion::single(w.goal()), &params).unwrap()
    };
    let first = run.checkpoints.first().ok_or("no checkpoints")?;
    let last = run.checkpoints.last().unwrap();
    check(first.episode == 0 && last.episode == cfg.episodes, "checkpoint episodes")?;
    let r0 = eval(&first.policy);
    let rn = eval(&last.policy);
    let dt = t0.elapsed();
    check(r0.asas >= 1.0, format!("episode 0 ASAS {}", r0.asas))?;
    check(rn.asas < 0.5 && rn.tasas < 0.2, format!("final ASAS {} TASAS {}", rn.asas, rn.tasas))?;
    check(dt < Duration::from_secs(60), format!("took {dt:?}"))?;
    Ok(format!("seed {}: ep0 ASAS {:.4}, ep{} ASAS {} TASAS {}, {dt:?}", cfg.seed, r0.asas, last.episode, rn.asas, rn.tasas))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (GridWorld, TabularPolicy) {
    loop {
        let rows = rng.gen_range(5..=12);
        let cols = rng.gen_range(5..=12);
        let density = rng.gen_range(0.0..0.3);
        let obstacles: Vec<bool> = (0..rows * cols).map(|_| rng.gen::<f64>() < density).collect();
        let goal = Cell::new(rng.gen_range(0..rows), rng.gen_range(0..cols));
        let Ok(world) = GridWorld::new(rows, cols, obstacles, goal, None) else { continue };
        let mut text = String::from("row,col,action\n");
        for c in world.free_cells() {
            text.push_str(&format!("{},{},{}\n", c.row, c.col, Action::ALL[rng.gen_range(0..4)].index()));
        }
        let policy = TabularPolicy::from_csv(&text, rows, cols).unwrap();
        return (world, policy);
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let alphas = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0];
    let mut finite = 0;
    for k in 0..200 {
        let (world, policy) = random_instance(&mut rng);
        let sys = GridSystem::new(world.clone(), &policy);
        let n = rng.gen_range(1..400);
        let t = rng.gen_range(1..40);
        let ens = simulate(&sys, StartMode::Sampled { n, seed: k }, t, 0).unwrap();
        let h = final_state_histogram(&ens);
        check(h.total() == n as f64, format!("instance {k}: mass {} ≠ {n}", h.total()))?;
        let goal = GoalRegion::single(world.goal());
        let mut prev = f64::INFINITY;
        for &alpha in &alphas {
            let a = asas(&h, &goal, alpha).unwrap();
            check(a.asas <= prev, format!("instance {k}: ASAS rises at α={alpha}"))?;
            prev = a.asas;
            let tr = tasas(&h, &a.significant, a.h_goal, &sys, &goal, 20, 4 * t, k).unwrap();
            check(tr.tasas <= a.asas, format!("instance {k} α={alpha}: TASAS {} > ASAS {}", tr.tasas, a.asas))?;
            if a.h_goal > 0.0 {
                finite += 1;
            }
        }
    }
    // h_goal = 0 serializes both ratios as "inf".
    let world = builtin_layout("simple_wall").unwrap();
    let sp = make_scripted(&ScriptedRule::ShortestPath, &world).unwrap();
    let sys = GridSystem::new(world.clone(), sp);
    let mut h = DensityMap::zeros(world.rows(), world.cols());
    h.set(Cell::new(2, 2), 5.0);
    let field = compute_ftle_field(&sys, 5, 1.0).unwrap();
    let boundary = obstacle_boundary(world.rows(), world.cols(), &world.obstacle_set());
    let params = MetricParameters { alpha: 0.25, n_sim: 10, t_escape: 20, t_int: 5, seed: 0 };
    let rep = metric_report(&sys, &field, &h, &boundary, &GoalRegion::single(world.goal()), &params).unwrap();
    let v = serde_json::to_value(&rep).unwrap();
    check(v["asas"] == "inf" && v["tasas"] == "inf", format!("h_goal=0 serialized as {} / {}", v["asas"], v["tasas"]))?;
    Ok(format!("200 instances, {finite} finite (instance, α) pairs"))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn run_cli(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ftle-verify")).args(args).env("FTLE_VERIFY_THREADS", threads).output().unwrap();
    check(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn criterion_8() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let write = |name: &str, body: &str| std::fs::write(r.join(name), body).unwrap();
    write("ftle.json", r#"{"env":{"kind":"grid","layout":"u_shape_trap"},"policy":{"source":"scripted","rule":"greedy"},"output_dir":"ftle"}"#);
    write(
        "attr.json",
        r#"{"env":{"kind":"pendulum","slice":{"free":[0,1],"fixed":[0,0],"resolution":[24,24]}},"policy":{"source":"controller","rule":"energy-pump"},"T_int":40,"n_traj":500,"seed":3,"record_paths":5,"output_dir":"attr"}"#,
    );
    write("metrics.json", r#"{"env":{"kind":"grid","layout":"scattered_blocks"},"policy":{"source":"scripted","rule":"trap-cycle:5,1;6,1"},"n_traj":300,"seed":5,"output_dir":"metrics"}"#);
    write(
        "certify.json",
        r#"{"env":{"kind":"affine","matrix":[[2,0],[0,1]],"rows":21,"cols":21,"geometry":{"origin":[-1,-1],"spacing":[0.1,0.1]}},"T_int":1,"epsilon":0.05,"region":{"shape":"box","lower":[-0.5,-0.5],"upper":[0.5,0.5]},"validation":{"pairs":200,"seed":4,"tolerance":0},"output_dir":"certify"}"#,
    );
    write("train.json", r#"{"env":{"kind":"grid","layout":"simple_wall"},"training":{"episodes":300,"checkpoints":[0,300]},"output_dir":"train"}"#);
    write(
        "sweep.json",
        r#"{"env":{"kind":"grid","layout":"simple_wall"},"checkpoints":["train/simple_wall-ep0.policy","train/simple_wall-ep300.policy"],"output_dir":"sweep"}"#,
    );
    let s = |p: &str| r.join(p).to_string_lossy().into_owned();
    let commands: Vec<(Vec<String>, &str)> = vec![
        (vec!["ftle".into(), "-c".into(), s("ftle.json")], "ftle"),
        (vec!["attractors".into(), "-c".into(), s("attr.json")], "attr"),
        (vec!["metrics".into(), "-c".into(), s("metrics.json")], "metrics"),
        (vec!["certify".into(), "-c".into(), s("certify.json")], "certify"),
        (vec!["train".into(), "-c".into(), s("train.json")], "train"),
        (vec!["sweep".into(), "-c".into(), s("sweep.json")], "sweep"),
        (vec!["render".into(), s("ftle/ftle.csv"), "-o".into(), s("render/ftle.pgm"), "--colormap".into(), "gray".into()], "render"),
    ];
    let mut files = 0;
    for (args, dir) in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_cli(&args, "1")?;
        let first = snapshot(&r.join(dir));
        run_cli(&args, "4")?;
        let second = snapshot(&r.join(dir));
        check(!first.is_empty(), format!("{dir}: no outputs"))?;
        check(first == second, format!("{dir}: outputs differ between runs"))?;
        files += first.len();
    }
    Ok(format!("7 commands, {files} files identical across runs and thread counts"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 analytic FTLE oracle", criterion_1),
        ("2 certificate reproduction", criterion_2),
        ("3 bounded-divergence validation", criterion_3),
        ("4 metric oracles", criterion_4),
        ("5 work accounting", criterion_5),
        ("6 training evolution", criterion_6),
        ("7 invariant suite", criterion_7),
        ("8 reproducibility", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(note)) => println!("PASS  criterion {name}: {note}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  criterion {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
