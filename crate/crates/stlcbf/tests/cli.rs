use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn stlcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlcbf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> String {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Untrained checkpoint of a bundled scenario.
fn untrained(dir: &TempDir, scenario: &str) -> std::path::PathBuf {
    let out = dir.path().join("ck");
    ok(stlcbf(&["train", "--config", scenario, "--iters", "0", "--out", p(&out)]));
    out.join("checkpoint.json")
}

fn bundled(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))).unwrap()
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["double_integrator_I1", "double_integrator_I2_memory", "unicycle_II"] {
        let c = stlcbf::config::load(name).unwrap();
        c.compile().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(c.name, name);
        assert_eq!(c.u_min, vec![-10.0, -10.0]);
        assert_eq!(c.u_max, vec![10.0, 10.0]);
        assert_eq!(c.dt_s, 0.1);
    }
}

#[test]
fn bad_arguments_and_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&stlcbf(&["train", "--config", "double_integrator_I1"])), 2);
    assert_eq!(code(&stlcbf(&["train", "--config", "double_integrator_I1", "--out", p(&out), "--ablation", "nope"])), 2);
    assert_eq!(code(&stlcbf(&["train", "--config", "no_such_scenario", "--out", p(&out)])), 2);

    // Horizon shorter than the last interval end.
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, bundled("double_integrator_I1").replace("horizon_s = 5.0", "horizon_s = 4.0")).unwrap();
    assert_eq!(code(&stlcbf(&["train", "--config", p(&bad), "--iters", "0", "--out", p(&out)])), 2);

    let garbled = dir.path().join("garbled.toml");
    fs::write(&garbled, "name = [").unwrap();
    assert_eq!(code(&stlcbf(&["train", "--config", p(&garbled), "--iters", "0", "--out", p(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn infeasible_scenario_exits_3() {
    let dir = TempDir::new().unwrap();
    // An obstacle covering the whole start box under G[0, T].
    let text = bundled("double_integrator_I1").replace("center = [4.5, 2.3]", "center = [0.5, 0.5]");
    let cfg = dir.path().join("blocked.toml");
    fs::write(&cfg, text).unwrap();
    let o = stlcbf(&["train", "--config", p(&cfg), "--iters", "0", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn checkpoint_problems_exit_4() {
    let dir = TempDir::new().unwrap();
    let ck = untrained(&dir, "double_integrator_I1");
    // Same layout, moved obstacle: a different environment.
    let moved = dir.path().join("moved.toml");
    fs::write(&moved, bundled("double_integrator_I1").replace("center = [4.5, 2.3]", "center = [4.6, 2.3]")).unwrap();
    let o = stlcbf(&["eval", "--checkpoint", p(&ck), "--config", p(&moved)]);
    assert_eq!(code(&o), 4);
    let o = stlcbf(&["rollout", "--checkpoint", p(&ck), "--config", "unicycle_II", "--out", p(&dir.path().join("r"))]);
    assert_eq!(code(&o), 4);

    // Optimizer settings are not part of the environment.
    let tuned = dir.path().join("tuned.toml");
    fs::write(&tuned, bundled("double_integrator_I1").replace("lr = 0.003", "lr = 0.01")).unwrap();
    ok(stlcbf(&["eval", "--checkpoint", p(&ck), "--config", p(&tuned), "--n", "1"]));

    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{\"not\": \"a checkpoint\"}").unwrap();
    assert_eq!(code(&stlcbf(&["eval", "--checkpoint", p(&junk)])), 4);
    assert_eq!(code(&stlcbf(&["eval", "--checkpoint", p(&dir.path().join("absent.json"))])), 4);
}

#[test]
fn missing_plot_inputs_exit_5() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    for kind in ["traj", "inputs", "multipliers", "curves"] {
        assert_eq!(code(&stlcbf(&["plot-data", "--dir", p(&empty), "--kind", kind])), 5, "{kind}");
    }
    let ck = untrained(&dir, "double_integrator_I1");
    let r = dir.path().join("r");
    ok(stlcbf(&["rollout", "--checkpoint", p(&ck), "--n", "2", "--out", p(&r)]));
    let f = r.join("rollout_001.csv");
    let text = fs::read_to_string(&f).unwrap().replacen("t,x,y", "time,x,y", 1);
    fs::write(&f, text).unwrap();
    assert_eq!(code(&stlcbf(&["plot-data", "--dir", p(&r), "--kind", "traj"])), 5);
    assert_eq!(code(&stlcbf(&["plot-data", "--dir", p(&r), "--kind", "multipliers", "--slot", "Nope"])), 5);
}

#[test]
fn zero_iterations_give_empty_curves() {
    let dir = TempDir::new().unwrap();
    let ck = untrained(&dir, "double_integrator_I1");
    let curves = fs::read_to_string(ck.with_file_name("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1);
    assert!(curves.starts_with("iter,mean_rho_uni,mean_rho_task,mean_objective,infeasible_qp,resampled,dropped,skipped"));
    assert!(ck.with_file_name("construction_report.txt").is_file());
}

#[test]
fn rollouts_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let ck = untrained(&dir, "double_integrator_I1");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(stlcbf(&["rollout", "--checkpoint", p(&ck), "--n", "3", "--seed", "7", "--out", p(&a)]));
    ok(stlcbf(&["rollout", "--checkpoint", p(&ck), "--n", "3", "--seed", "7", "--out", p(&b)]));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let c = dir.path().join("c");
    ok(stlcbf(&["rollout", "--checkpoint", p(&ck), "--n", "3", "--seed", "8", "--out", p(&c)]));
    assert_ne!(fs::read(a.join("summary.csv")).unwrap(), fs::read(c.join("summary.csv")).unwrap());
}

#[test]
fn training_does_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let run = |threads: &str, out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_stlcbf"))
            .args(["train", "--config", "double_integrator_I1", "--iters", "2", "--out", p(out)])
            .env("STLCBF_THREADS", threads)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        ok(o);
        (fs::read(out.join("curves.csv")).unwrap(), fs::read(out.join("checkpoint.json")).unwrap())
    };
    let one = run("1", &dir.path().join("one"));
    let three = run("3", &dir.path().join("three"));
    assert_eq!(one, three);
    assert_eq!(String::from_utf8_lossy(&one.0).lines().count(), 3);
}

#[test]
fn zero_rollout_eval_is_empty() {
    let dir = TempDir::new().unwrap();
    let ck = untrained(&dir, "double_integrator_I1");
    let out = ok(stlcbf(&["eval", "--checkpoint", p(&ck), "--n", "0"]));
    assert!(out.contains("rollouts            0"), "{out}");
    assert!(out.contains("satisfied           0/0"));
}

#[test]
fn plot_data_kinds() {
    let dir = TempDir::new().unwrap();
    let ck = untrained(&dir, "double_integrator_I1");
    let r = ck.parent().unwrap();
    ok(stlcbf(&["rollout", "--checkpoint", p(&ck), "--n", "2", "--out", p(r)]));
    let steps = 50;

    ok(stlcbf(&["plot-data", "--dir", p(r), "--kind", "traj"]));
    let traj = fs::read_to_string(r.join("plot_traj.csv")).unwrap();
    assert!(traj.starts_with("rollout,t,x,y\n"));
    assert_eq!(traj.lines().count(), 1 + 2 * (steps + 1));

    ok(stlcbf(&["plot-data", "--dir", p(r), "--kind", "inputs"]));
    let inputs = fs::read_to_string(r.join("plot_inputs.csv")).unwrap();
    assert_eq!(inputs.lines().count(), 1 + 2 * steps + 4);
    assert!(inputs.contains("u_min,0,-10,-10"));
    assert!(inputs.contains("u_max,5,10,10"));

    // Only active instances appear: nothing after a slot's deletion time.
    ok(stlcbf(&["plot-data", "--dir", p(r), "--kind", "multipliers", "--slot", "Reg1"]));
    let mult = fs::read_to_string(r.join("plot_multipliers.csv")).unwrap();
    let summary = fs::read_to_string(r.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = head.iter().position(|h| *h == "Reg1.t_del").unwrap();
    for (i, row) in lines.enumerate() {
        let t_del: Option<f64> = row.split(',').nth(col).unwrap().parse().ok();
        let times: Vec<f64> = mult
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{i},Reg1,")))
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(!times.is_empty());
        if let Some(td) = t_del {
            assert!(times.iter().all(|&t| t < td + 1e-9), "rollout {i}: multipliers after deletion at {td}");
        }
    }

    ok(stlcbf(&["plot-data", "--dir", p(r), "--kind", "curves"]));
    assert_eq!(fs::read(r.join("plot_curves.csv")).unwrap(), fs::read(r.join("curves.csv")).unwrap());
}

#[test]
fn unicycle_rollouts_have_heading_and_speed() {
    let dir = TempDir::new().unwrap();
    let ck = untrained(&dir, "unicycle_II");
    let r = dir.path().join("r");
    ok(stlcbf(&["rollout", "--checkpoint", p(&ck), "--n", "1", "--out", p(&r)]));
    let text = fs::read_to_string(r.join("rollout_000.csv")).unwrap();
    assert!(text.starts_with("t,x,y,theta,v,u1,u2,Reg1.psi0,Reg1.psi1,Reg1.active,Reg1.p1,Reg1.p2,"));
    assert!(text.lines().next().unwrap().ends_with(",status"));
}
