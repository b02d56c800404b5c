//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Tolerances are fixed here and nowhere else:
//!
//! | criterion | check | tolerance |
//! |---|---|---|
//! | 1 | sign(exp) = sign(classical), 1000 pairs | \|classical\| > 1e-9, < 30 s |
//! | 2 | QP vs brute force, KKT, backward vs FD, 200 problems | 1e-7, 1e-6, rel 1e-4, < 60 s |
//! | 3 | objective gradient vs FD, 20 parameters, 10 steps | rel 1e-3 |
//! | 4 | ρ_uni >= 0 implies all QPs optimal and classical >= -0.05 | zero exceptions |
//! | 5 | ψ0, ψ1 >= -0.05 on all-feasible rollouts out of 100 | zero exceptions |
//! | 6 | InitNet outputs satisfy their inequalities, 1000 x0 | zero violations |
//! | 7 | seeds 0-4, 500 iterations; final = mean of the last 10 curve rows | see below |
//! | 8 | unicycle: Reg1 deleted before 3.0 s | >= 8/10 rollouts |
//! | 9 | inputs in [-10, 10] on rollouts with ρ_uni >= 0 | zero violations |

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlcbf::exec::Parallel;
use stlcbf_core::controller::{
    self, initnet_forward, rollout_gradient, rollout_objective, CurveRow, Policy, PolicyConfig, RolloutRecord, TrainOptions,
};
use stlcbf_core::diffqp::{backward, solve, QpStatus};
use stlcbf_core::hocbf::Gamma;
use stlcbf_core::nn::Tape;
use stlcbf_core::scenario::{Ablation, QMode, Scenario};
use stlcbf_core::stl::{robustness_classical, robustness_exp};
use stlcbf_core::Real;

const ITERS: usize = 500;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const EULER_TOL: f64 = 0.05;

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

fn c1(rep: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut mismatches) = (0, 0);
    while checked < 1000 {
        let f = common::stl::formula(&mut rng);
        if f.validate().is_err() {
            continue;
        }
        let traj = common::stl::trajectory(&mut rng, 21);
        let beta = rng.gen_range(0.0..=1.0);
        let c = robustness_classical(&f, &traj, 0.0).unwrap();
        let e = robustness_exp(&f, &traj, 0.0, beta).unwrap();
        if c.abs() <= 1e-9 {
            continue;
        }
        checked += 1;
        if c.signum() != e.signum() {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    rep.line(
        "1",
        mismatches == 0 && secs < 30.0,
        format!("{mismatches} sign mismatches over {checked} pairs in {secs:.2} s"),
    );
}

fn c2(rep: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_u, mut worst_kkt, mut worst_grad) = (0.0f64, 0.0f64, 0.0f64);
    let mut fd_checked = 0;
    for _ in 0..200 {
        let p = common::qp::random_qp(&mut rng);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        let oracle = common::qp::brute_force(&p);
        worst_u = worst_u.max((sol.u[0] - oracle[0]).abs().max((sol.u[1] - oracle[1]).abs()));
        worst_kkt = worst_kkt.max(sol.stationarity).max(sol.primal_violation).max(sol.complementarity);
        let degenerate = (0..p.rows()).any(|i| p.slack(&sol.u, i).abs() < 1e-5 && sol.lambda[i] < 1e-5);
        if degenerate {
            continue;
        }
        fd_checked += 1;
        let w = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let g = backward(&p, &sol, &w).unwrap();
        let wu = |q: &stlcbf_core::diffqp::QpProblem| {
            let u = solve(q).unwrap().u;
            u[0] * w[0] + u[1] * w[1]
        };
        let eps = 1e-6;
        let mut check = |analytic: f64, bump: &dyn Fn(&mut stlcbf_core::diffqp::QpProblem, f64)| {
            let (mut up, mut dn) = (p.clone(), p.clone());
            bump(&mut up, eps);
            bump(&mut dn, -eps);
            let fd = (wu(&up) - wu(&dn)) / (2.0 * eps);
            worst_grad = worst_grad.max((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4));
        };
        for i in 0..4 {
            check(g.dq[i], &|q, d| q.q[i] += d);
        }
        for i in 0..2 {
            check(g.df[i], &|q, d| q.f[i] += d);
        }
        for i in 0..p.g.len() {
            check(g.dg[i], &|q, d| q.g[i] += d);
        }
        for i in 0..p.rows() {
            check(g.dh[i], &|q, d| q.h[i] += d);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    rep.line(
        "2",
        worst_u <= 1e-7 && worst_kkt <= 1e-6 && worst_grad < 1e-4 && secs < 60.0,
        format!(
            "max |u - oracle| {worst_u:.1e}, max KKT residual {worst_kkt:.1e}, max backward rel err {worst_grad:.1e} ({fd_checked} non-degenerate), {secs:.2} s"
        ),
    );
}

/// Ten steps of I.1 with the first region pulled within reach.
fn short_scenario() -> Scenario {
    let mut c = common::config("I1");
    c.horizon_s = 1.0;
    c.predicates.retain(|p| p.name != "Reg2");
    for p in &mut c.predicates {
        p.interval_s = Some([0.0, 1.0]);
        if p.name == "Reg1" {
            p.center = [1.6, 1.6];
        }
    }
    c.compile().unwrap()
}

fn c3(rep: &mut Report) {
    let s = short_scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = PolicyConfig::new(Ablation::FeasibnVarp, false, QMode::Trainable, 0.003);
    let (p, x0, grad) = (0..50)
        .find_map(|seed| {
            let p = Policy::new(&s, cfg, seed);
            let x0 = s.sample_x0(&mut rng);
            let (g, rec) = rollout_gradient(&p, &s, &x0).unwrap();
            rec.all_optimal().then_some((p, x0, g))
        })
        .expect("an all-optimal rollout");
    let live = p.live_parameters();
    let (mut compared, mut worst) = (0, 0.0f64);
    while compared < 20 {
        let i = live[rng.gen_range(0..live.len())];
        let eval = |d: f64| {
            let mut q = p.clone();
            q.store.values[i] += d;
            rollout_objective(&q, &s, &x0).unwrap()
        };
        let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
        if grad[i] == 0.0 && fd.abs() < 1e-9 {
            continue;
        }
        compared += 1;
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-7));
    }
    rep.line("3", worst < 1e-3, format!("max rel err {worst:.1e} over {compared} parameters, {} steps", s.steps));
}

fn c6(rep: &mut Report) {
    let s = common::scenario("I1");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    for k in 0..1000u64 {
        let mut p = Policy::new(&s, PolicyConfig::new(Ablation::FeasibnVarp, false, QMode::Identity, 0.003), k / 100);
        // Push the heads around so the bounds, not the initialization, do the work.
        let scale = (k % 4) as f64;
        for t in p.store.tensors.clone() {
            if t.name.starts_with("initnet") {
                for i in t.range() {
                    p.store.values[i] += scale * rng.gen_range(-1.0..1.0);
                }
            }
        }
        let x0 = s.sample_x0(&mut rng);
        let tape = Tape::new();
        let params = p.store.bind(&tape);
        let out = initnet_forward(&p, &s, &params, &tape.vars(&x0)).unwrap();
        let gammas: Vec<Gamma<f64>> = out.gammas.iter().map(|g| g.to_f64()).collect();
        let h0: Vec<f64> = s.slots.iter().map(|sl| sl.pred.eval_f64(&x0)).collect();
        let mut bad = common::check_boxes(&s.slots, &out.categories, &h0, &gammas, &s.boxes).is_err();
        for (j, sl) in s.slots.iter().enumerate() {
            let d = s.model.barrier_derivatives(&sl.pred, &gammas[j].jet(0.0), &x0);
            let (p1, p2) = (out.p_init[j][0].value(), out.p_init[j][1].value());
            bad |= !(d.b > 0.0 && d.b_dot + p1 * d.b > 0.0 && p1 >= s.boxes.eps && p2 >= s.boxes.eps);
        }
        violations += bad as usize;
    }
    rep.line("6", violations == 0, format!("{violations} violating initial states out of 1000"));
}

/// Random admissible (Ω, P_inip): trained controllers with their InitNet
/// weights jittered. The bounded heads keep every draw inside its box.
fn c5(rep: &mut Report, trained: &[Trained]) {
    let s = common::scenario("I1");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut feasible, mut worst, mut below) = (0, f64::INFINITY, 0);
    for k in 0..100 {
        let mut p = trained[k % trained.len()].policy.clone();
        for t in p.store.tensors.clone() {
            if t.name.starts_with("initnet") {
                for i in t.range() {
                    p.store.values[i] += 0.2 * rng.gen_range(-1.0..1.0);
                }
            }
        }
        let x0 = s.sample_x0(&mut rng);
        let r = controller::run_record(&p, &s, &x0).unwrap();
        if !r.all_optimal() {
            continue;
        }
        feasible += 1;
        let m = r.psi0.iter().chain(&r.psi1).flatten().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
        worst = worst.min(m);
        below += (m < -EULER_TOL) as usize;
    }
    rep.line(
        "5",
        below == 0 && feasible > 0,
        format!("{feasible}/100 rollouts feasible throughout; {below} with ψ < -{EULER_TOL}; min ψ {worst:.4}"),
    );
}

struct Trained {
    policy: Policy,
    curves: Vec<CurveRow>,
}

fn train(base: &str, ablation: Ablation, seed: u64, exec: &Parallel) -> Trained {
    let mut c = common::config(base);
    c.policy.ablation = ablation;
    c.training.seed = seed;
    c.training.iters = ITERS;
    let s = c.compile().unwrap();
    let mut policy = Policy::new(&s, PolicyConfig::from_scenario(&s), seed);
    let curves = controller::train(&mut policy, &s, &TrainOptions::from_scenario(&s), exec, |_| {}).unwrap();
    Trained { policy, curves }
}

/// Mean of the last ten curve rows.
fn final_of(curves: &[CurveRow], pick: fn(&CurveRow) -> f64) -> f64 {
    let tail = &curves[curves.len().saturating_sub(10)..];
    tail.iter().map(pick).sum::<f64>() / tail.len() as f64
}

/// Median with NaN sorted below every number.
fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| match (a.is_nan(), b.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Less,
        (false, true) => std::cmp::Ordering::Greater,
        _ => a.partial_cmp(b).unwrap(),
    });
    v[v.len() / 2]
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn c4_c7_c9(rep: &mut Report, exec: &Parallel) -> Vec<Trained> {
    let s = common::scenario("I1");
    let start = Instant::now();
    let feasibn: Vec<Trained> = SEEDS.iter().map(|&k| train("I1", Ablation::FeasibnVarp, k, exec)).collect();
    let varp: Vec<Trained> = SEEDS.iter().map(|&k| train("I1", Ablation::BnVarp, k, exec)).collect();
    let fixedp: Vec<Trained> = SEEDS.iter().map(|&k| train("I1", Ablation::BnFixedp, k, exec)).collect();
    println!("trained 15 controllers in {:.0} s", start.elapsed().as_secs_f64());

    // 7a
    let uni: Vec<f64> = feasibn.iter().map(|t| final_of(&t.curves, |r| r.mean_rho_uni)).collect();
    let positive = uni.iter().filter(|v| **v > 0.0).count();
    rep.line("7a", positive >= 4, format!("FeasiBN-VarP final mean ρ_uni > 0 on {positive}/5 seeds [{}]", fmt(&uni)));

    // 7b
    let task = |ts: &[Trained]| -> Vec<f64> { ts.iter().map(|t| final_of(&t.curves, |r| r.mean_rho_task)).collect() };
    let (tf, tv, tx) = (task(&feasibn), task(&varp), task(&fixedp));
    let (mf, mv, mx) = (median(tf.clone()), median(tv.clone()), median(tx.clone()));
    rep.line(
        "7b",
        mf >= mv && mv >= mx,
        format!(
            "median final task robustness FeasiBN-VarP {mf:.3} [{}], BN-VarP {mv:.3} [{}], BN-FixedP {mx:.3} [{}]",
            fmt(&tf),
            fmt(&tv),
            fmt(&tx)
        ),
    );

    // 7c
    let mut base = Vec::new();
    for &k in &SEEDS {
        let p = Policy::new(&s, PolicyConfig::new(Ablation::HocbfBaseline, false, QMode::Identity, 0.003), k);
        base.extend(controller::evaluate(&p, &s, 10, k, exec).unwrap());
    }
    let mean_base = base.iter().map(|r| r.rho_classical).sum::<f64>() / base.len() as f64;
    rep.line("7c", mean_base < 0.0, format!("hocbf-baseline mean classical robustness {mean_base:.3} over {} rollouts", base.len()));

    // 4 and 9 on evaluation rollouts of the trained FeasiBN-VarP controllers.
    let evals: Vec<RolloutRecord> = feasibn
        .iter()
        .zip(SEEDS)
        .flat_map(|(t, k)| controller::evaluate(&t.policy, &s, 20, k, exec).unwrap())
        .collect();
    let nonneg: Vec<&RolloutRecord> = evals.iter().filter(|r| r.rho_uni >= 0.0).collect();
    let c4_bad = nonneg
        .iter()
        .filter(|r| !r.all_optimal() || r.rho_classical < -EULER_TOL)
        .count();
    rep.line(
        "4",
        c4_bad == 0 && !nonneg.is_empty(),
        format!("{c4_bad} exceptions among {}/{} evaluation rollouts with ρ_uni >= 0", nonneg.len(), evals.len()),
    );
    let (lo, hi) = (&s.bounds.u_min, &s.bounds.u_max);
    let c9_bad: usize = nonneg
        .iter()
        .flat_map(|r| &r.inputs)
        .filter(|u| u.iter().enumerate().any(|(i, v)| !(lo[i]..=hi[i]).contains(v)))
        .count();
    let steps: usize = nonneg.iter().map(|r| r.inputs.len()).sum();
    rep.line("9", c9_bad == 0 && steps > 0, format!("{c9_bad} out-of-bound inputs over {steps} steps of {} rollouts", nonneg.len()));
    feasibn
}

fn c8(rep: &mut Report, exec: &Parallel) {
    let s = common::scenario("II");
    let t = train("II", Ablation::FeasibnVarp, 0, exec);
    let recs = controller::evaluate(&t.policy, &s, 10, 0, exec).unwrap();
    let reg1 = s.slots.iter().position(|sl| sl.pred.name == "Reg1").unwrap();
    let times: Vec<Option<f64>> = recs.iter().map(|r| r.deletion[reg1]).collect();
    let early = times.iter().filter(|t| matches!(t, Some(v) if *v < 3.0)).count();
    let shown: Vec<String> = times.iter().map(|t| t.map_or("-".into(), |v| format!("{v:.1}"))).collect();
    rep.line("8", early >= 8, format!("Reg1 deleted before 3.0 s on {early}/10 rollouts [{}]", shown.join(" ")));
}

fn main() {
    let exec = Parallel::from_env().expect("thread pool");
    let mut rep = Report { failed: Vec::new() };
    c1(&mut rep);
    c2(&mut rep);
    c3(&mut rep);
    c6(&mut rep);
    let feasibn = c4_c7_c9(&mut rep, &exec);
    c5(&mut rep, &feasibn);
    c8(&mut rep, &exec);
    if rep.failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {}", rep.failed.join(", "));
        std::process::exit(1);
    }
}
