use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ftle_verify_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = fv_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn world(name: &str) -> *mut FvGridWorld {
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { fv_world_builtin(cstr(name).as_ptr(), &mut w) }, FvStatus::Ok);
    w
}

fn policy(w: *const FvGridWorld, rule: &str) -> *mut FvPolicy {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { fv_policy_scripted(w, cstr(rule).as_ptr(), &mut p) }, FvStatus::Ok);
    p
}

#[test]
fn shapes_and_goal() {
    let w = world("simple_wall");
    let (mut r, mut c) = (0, 0);
    unsafe {
        assert_eq!(fv_world_shape(w, &mut r, &mut c), FvStatus::Ok);
        assert_eq!((r, c), (12, 12));
        assert_eq!(fv_world_goal(w, &mut r, &mut c), FvStatus::Ok);
        assert_eq!((r, c), (5, 10));
        fv_world_free(w);
    }
}

#[test]
fn shortest_path_metrics_are_zero() {
    for name in ["simple_wall", "scattered_blocks", "u_shape_trap"] {
        let w = world(name);
        let p = policy(w, "shortest-path");
        let params = fv_metric_params_default();
        let mut m = FvMetrics::default();
        unsafe {
            assert_eq!(fv_metrics(w, p, &params, &mut m), FvStatus::Ok);
            fv_policy_free(p);
            fv_world_free(w);
        }
        assert_eq!((m.asas, m.tasas), (0.0, 0.0), "{name}");
        assert!(m.boundary_size > 0 && m.h_goal > 0.0);
    }
}

#[test]
fn trap_cycle_has_positive_tasas() {
    let w = world("scattered_blocks");
    let p = policy(w, "trap-cycle:5,1;6,1");
    let mut m = FvMetrics::default();
    unsafe {
        assert_eq!(fv_metrics(w, p, &fv_metric_params_default(), &mut m), FvStatus::Ok);
        fv_policy_free(p);
        fv_world_free(w);
    }
    assert!(m.tasas > 0.0 && m.tasas <= m.asas);
    assert!(m.peak_count >= 1);
}

#[test]
fn field_matches_core() {
    use ftle_verify::env::{builtin_layout, GridSystem};
    use ftle_verify::ftle::compute_ftle_field;
    use ftle_verify::policy::{make_scripted, ScriptedRule};

    let w = world("u_shape_trap");
    let p = policy(w, "greedy");
    let mut buf = vec![0.0; 144];
    unsafe {
        assert_eq!(fv_ftle_field(w, p, 30, 1.0, buf.as_mut_ptr(), 143), FvStatus::BufferTooSmall);
        assert_eq!(fv_ftle_field(w, p, 30, 1.0, buf.as_mut_ptr(), buf.len()), FvStatus::Ok);
        fv_policy_free(p);
        fv_world_free(w);
    }
    let world = builtin_layout("u_shape_trap").unwrap();
    let pol = make_scripted(&ScriptedRule::GreedyTowardGoal, &world).unwrap();
    let sys = GridSystem::new(world.clone(), pol);
    let field = compute_ftle_field(&sys, 30, 1.0).unwrap();
    for c in world.cells() {
        let got = buf[c.row * 12 + c.col];
        match field.get(c) {
            Some(v) => assert_eq!(got, v),
            None => assert!(got.is_nan()),
        }
    }
}

#[test]
fn action_lookup() {
    let w = world("simple_wall");
    let p = policy(w, "constant:right");
    let mut a = 9;
    unsafe {
        assert_eq!(fv_policy_action(p, 0, 0, &mut a), FvStatus::Ok);
        assert_eq!(a, 3);
        assert_eq!(fv_policy_action(p, 12, 0, &mut a), FvStatus::InvalidParameter);
        fv_policy_free(p);
        fv_world_free(w);
    }
}

#[test]
fn certify_delta_values() {
    let mut d = 0.0;
    unsafe {
        assert_eq!(fv_certify_delta(0.7158, 20, 0.05, &mut d), FvStatus::Ok);
        assert!((d - 0.05 * (-0.7158f64 * 20.0).exp()).abs() <= 1e-20);
        assert_eq!(fv_certify_delta(0.1, 20, -1.0, &mut d), FvStatus::InvalidParameter);
        assert!(!last_error().is_empty());
        assert_eq!(fv_certify_delta(0.1, 20, 0.1, ptr::null_mut()), FvStatus::NullPointer);
    }
}

#[test]
fn error_codes() {
    let mut w = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(fv_world_builtin(cstr("maze").as_ptr(), &mut w), FvStatus::InvalidLayout);
        assert!(last_error().contains("maze"));
        assert!(w.is_null());
        assert_eq!(fv_world_builtin(ptr::null(), &mut w), FvStatus::NullPointer);
        assert_eq!(fv_world_parse(cstr("..\n.x\n").as_ptr(), &mut w), FvStatus::InvalidLayout);
        assert_eq!(fv_world_parse(c"\xff".as_ptr(), &mut w), FvStatus::InvalidUtf8);

        assert_eq!(fv_world_parse(cstr("S.\n.G\n").as_ptr(), &mut w), FvStatus::Ok);
        assert_eq!(fv_policy_scripted(w, cstr("wander").as_ptr(), &mut p), FvStatus::UnknownRule);
        assert_eq!(fv_policy_load(w, cstr("/nonexistent.policy").as_ptr(), &mut p), FvStatus::Io);

        let big = world("simple_wall");
        let q = policy(big, "greedy");
        let mut buf = [0.0; 4];
        assert_eq!(fv_ftle_field(w, q, 5, 1.0, buf.as_mut_ptr(), 4), FvStatus::ShapeMismatch);
        let sp = policy(w, "shortest-path");
        assert_eq!(fv_ftle_field(w, sp, 0, 1.0, buf.as_mut_ptr(), 4), FvStatus::InvalidParameter);
        assert_eq!(fv_metrics(w, sp, ptr::null(), &mut FvMetrics::default()), FvStatus::NullPointer);
        fv_policy_free(sp);
        fv_policy_free(q);
        fv_world_free(big);
        fv_world_free(w);
        fv_world_free(ptr::null_mut());
        fv_policy_free(ptr::null_mut());
    }
}

#[test]
fn checkpoint_round_trip() {
    use ftle_verify::env::builtin_layout;
    use ftle_verify::policy::{train_tabular_q, QLearningConfig};

    let layout = builtin_layout("simple_wall").unwrap();
    let cfg = QLearningConfig { episodes: 20, checkpoints: vec![20], ..Default::default() };
    let run = train_tabular_q(&layout, &cfg).unwrap();
    let ck = &run.checkpoints[0];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.policy");
    std::fs::write(&path, ck.policy.to_csv(&[])).unwrap();

    let w = world("simple_wall");
    let mut p = ptr::null_mut();
    let mut a = 0;
    unsafe {
        assert_eq!(fv_policy_load(w, cstr(path.to_str().unwrap()).as_ptr(), &mut p), FvStatus::Ok);
        for c in layout.free_cells() {
            assert_eq!(fv_policy_action(p, c.row, c.col, &mut a), FvStatus::Ok);
            assert_eq!(a as usize, ftle_verify::policy::GridPolicy::action(&ck.policy, c).index());
        }
        fv_policy_free(p);
        fv_world_free(w);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(fv_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ftle_verify.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["fv_world_builtin", "fv_policy_scripted", "fv_ftle_field", "fv_metrics", "fv_certify_delta", "fv_last_error"] {
        assert!(text.contains(sym), "{sym}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_program_links_and_runs() {
    let manifest = env!("CARGO_MANIFEST_DIR");
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(|p| p.parent()).unwrap().join("libftle_verify_ffi.a");
    if !lib.is_file() {
        eprintln!("static library not built; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let Ok(out) = Command::new("cc")
        .arg(format!("{manifest}/examples/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("max_ftle="));
}
