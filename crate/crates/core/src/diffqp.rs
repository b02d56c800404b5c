//! Dense QP `min ½uᵀQu + Fᵀu  s.t.  G u <= h` with implicit gradients.
//!
//! The forward solve is a dual active-set method in the style of Goldfarb and
//! Idnani: start from the unconstrained minimizer and add the most violated
//! row, releasing active rows whose multiplier would turn negative. Every
//! intermediate active set stays linearly independent, so the KKT systems
//! solved along the way (and in the backward pass) are nonsingular.
//!
//! Gradients come from differentiating the KKT conditions at the solution.
//! When no feasible point exists, [`qp_layer`] falls back to the input that
//! minimizes the squared constraint violation and differentiates that instead.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, dot, matvec, norm};
use crate::nn::{BlockOp, Var};
use crate::real::Real;

/// Multiplier threshold below which an active row counts as weakly active.
pub const WEAK_TOL: f64 = 1e-10;
/// Tikhonov weight of the fallback objective.
pub const FALLBACK_REG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub n: usize,
    /// `n × n`, row-major. Only the symmetric part is used.
    pub q: Vec<f64>,
    pub f: Vec<f64>,
    /// `m × n`, row-major.
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    /// Non-finite problem data or a singular system; no input was computed.
    Breakdown,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("Q is not positive definite")]
    NotPositiveDefinite,
    #[error("inconsistent problem dimensions")]
    Shape,
    #[error("backward requires an optimal solution")]
    NotOptimal,
    #[error("singular KKT system")]
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// One multiplier per row, zero for inactive rows.
    pub lambda: Vec<f64>,
    /// Rows in the final active set.
    pub active: Vec<usize>,
    pub status: QpStatus,
    pub stationarity: f64,
    pub primal_violation: f64,
    pub complementarity: f64,
    pub iterations: usize,
}

/// Gradients of a scalar loss with respect to the problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct QpGrad {
    pub dq: Vec<f64>,
    pub df: Vec<f64>,
    pub dg: Vec<f64>,
    pub dh: Vec<f64>,
    /// Weakly active rows left out of the KKT system.
    pub dropped: usize,
}

impl QpProblem {
    pub fn new(n: usize, q: Vec<f64>, f: Vec<f64>, g: Vec<f64>, h: Vec<f64>) -> Self {
        Self { n, q, f, g, h }
    }

    pub fn rows(&self) -> usize {
        self.h.len()
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n;
        if n == 0 || self.q.len() != n * n || self.f.len() != n || self.g.len() != self.h.len() * n {
            return Err(QpError::Shape);
        }
        Ok(())
    }

    fn sym_q(&self) -> Vec<f64> {
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = 0.5 * (self.q[i * n + j] + self.q[j * n + i]);
            }
        }
        s
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.g[i * self.n..(i + 1) * self.n]
    }

    /// `h_i - G_i u`, nonnegative when row `i` holds.
    pub fn slack(&self, u: &[f64], i: usize) -> f64 {
        self.h[i] - dot(self.row(i), u)
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let qu = matvec(&self.q, self.n, self.n, u);
        0.5 * dot(u, &qu) + dot(&self.f, u)
    }
}

/// Solve `[Qs Aᵀ; A 0] [x; y] = [r1; r2]` for the rows `act` of `G`.
fn kkt_solve(qs: &[f64], p: &QpProblem, act: &[usize], r1: &[f64], r2: &[f64]) -> Result<(Vec<f64>, Vec<f64>), QpError> {
    let n = p.n;
    let k = act.len();
    let d = n + k;
    let mut a = vec![0.0; d * d];
    for i in 0..n {
        a[i * d..i * d + n].copy_from_slice(&qs[i * n..(i + 1) * n]);
    }
    for (j, &row) in act.iter().enumerate() {
        for c in 0..n {
            let v = p.g[row * n + c];
            a[(n + j) * d + c] = v;
            a[c * d + n + j] = v;
        }
    }
    let mut b: Vec<f64> = r1.iter().chain(r2).copied().collect();
    linalg::solve_in_place(&mut a, d, &mut b).map_err(|_| QpError::Singular)?;
    let y = b.split_off(n);
    Ok((b, y))
}

fn residuals(p: &QpProblem, qs: &[f64], u: &[f64], lambda: &[f64]) -> (f64, f64, f64) {
    let n = p.n;
    let mut stat = matvec(qs, n, n, u);
    for i in 0..n {
        stat[i] += p.f[i];
    }
    let mut viol = 0.0f64;
    let mut comp = 0.0f64;
    for (r, &l) in lambda.iter().enumerate() {
        for c in 0..n {
            stat[c] += l * p.g[r * n + c];
        }
        let s = p.slack(u, r);
        viol = viol.max(-s);
        comp = comp.max((l * s).abs());
    }
    (norm(&stat), viol.max(0.0), comp)
}

/// Dual active-set solve.
pub fn solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.check()?;
    let n = p.n;
    let m = p.rows();
    let qs = p.sym_q();
    if !linalg::is_positive_definite(&qs, n, 0.0) {
        return Err(QpError::NotPositiveDefinite);
    }
    let qscale = qs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let neg_f: Vec<f64> = p.f.iter().map(|v| -v).collect();
    let mut u = linalg::solve(&qs, n, &neg_f).map_err(|_| QpError::Singular)?;
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();
    let max_iter = 20 * (m + n) + 50;
    let mut iterations = 0;
    let mut status = QpStatus::Optimal;

    'outer: loop {
        // Most violated row, scaled by its norm.
        let mut pick = None;
        let mut worst = 0.0;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let row = p.row(i);
            let rn = norm(row);
            if rn == 0.0 {
                if p.h[i] < -1e-12 {
                    status = QpStatus::Infeasible;
                    break 'outer;
                }
                continue;
            }
            let v = -p.slack(&u, i) / rn;
            if v > 1e-11 * (1.0 + p.h[i].abs() / rn) && v > worst {
                worst = v;
                pick = Some(i);
            }
        }
        let Some(pi) = pick else { break };
        let np = p.row(pi).to_vec();
        let np2 = dot(&np, &np);
        let mut lam_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                status = QpStatus::MaxIter;
                break 'outer;
            }
            let r1: Vec<f64> = np.iter().map(|v| -v).collect();
            let r2 = vec![0.0; active.len()];
            let (z, r) = kkt_solve(&qs, p, &active, &r1, &r2)?;
            // Largest dual step before an active multiplier hits zero.
            let mut t2 = f64::INFINITY;
            let mut block = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj < 0.0 {
                    let t = lam[j] / -rj;
                    if t < t2 {
                        t2 = t;
                        block = Some(j);
                    }
                }
            }
            let curv = -dot(&np, &z);
            if curv <= 1e-12 * np2 / qscale.max(1e-300) {
                // Row is dependent on the active set: only the duals move.
                let Some(k) = block else {
                    status = QpStatus::Infeasible;
                    break 'outer;
                };
                for j in 0..lam.len() {
                    lam[j] += t2 * r[j];
                }
                lam_p += t2;
                active.remove(k);
                lam.remove(k);
                continue;
            }
            let t1 = -p.slack(&u, pi) / curv;
            let t = t1.min(t2);
            for c in 0..n {
                u[c] += t * z[c];
            }
            for j in 0..lam.len() {
                lam[j] += t * r[j];
            }
            lam_p += t;
            if t1 <= t2 {
                active.push(pi);
                lam.push(lam_p);
                break;
            }
            let k = block.expect("partial step has a blocking row");
            active.remove(k);
            lam.remove(k);
        }
    }

    let mut lambda = vec![0.0; m];
    for (j, &row) in active.iter().enumerate() {
        lambda[row] = lam[j].max(0.0);
    }
    let (stationarity, primal_violation, complementarity) = residuals(p, &qs, &u, &lambda);
    Ok(QpSolution {
        u,
        lambda,
        active,
        status,
        stationarity,
        primal_violation,
        complementarity,
        iterations,
    })
}

/// Gradients of `upstream · u*` with respect to `Q`, `F`, `G`, `h`.
pub fn backward(p: &QpProblem, sol: &QpSolution, upstream: &[f64]) -> Result<QpGrad, QpError> {
    if sol.status != QpStatus::Optimal {
        return Err(QpError::NotOptimal);
    }
    let n = p.n;
    let qs = p.sym_q();
    let mut act = Vec::new();
    let mut dropped = 0;
    for &row in &sol.active {
        if sol.lambda[row] > WEAK_TOL {
            act.push(row);
        } else if p.slack(&sol.u, row).abs() < WEAK_TOL {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::debug!("qp backward: dropped {dropped} weakly active rows");
    }
    let (du, dl) = kkt_solve(&qs, p, &act, upstream, &vec![0.0; act.len()])?;
    let u = &sol.u;
    let mut dq = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dq[i * n + j] = -0.5 * (du[i] * u[j] + u[i] * du[j]);
        }
    }
    let df: Vec<f64> = du.iter().map(|v| -v).collect();
    let mut dg = vec![0.0; p.g.len()];
    let mut dh = vec![0.0; p.rows()];
    for (j, &row) in act.iter().enumerate() {
        dh[row] = dl[j];
        let l = sol.lambda[row];
        for c in 0..n {
            dg[row * n + c] = -l * du[c] - dl[j] * u[c];
        }
    }
    Ok(QpGrad { dq, df, dg, dh, dropped })
}

/// Result of the violation-minimizing fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct Fallback {
    pub u: Vec<f64>,
    /// Rows violated at `u`.
    pub violated: Vec<usize>,
}

fn fallback_objective(p: &QpProblem, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.rows() {
        let v = (-p.slack(u, i)).max(0.0);
        s += 0.5 * v * v;
    }
    s + FALLBACK_REG * p.objective(u)
}

fn violated_set(p: &QpProblem, u: &[f64]) -> Vec<usize> {
    (0..p.rows()).filter(|&i| p.slack(u, i) < 0.0).collect()
}

fn fallback_system(p: &QpProblem, qs: &[f64], set: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = p.n;
    let mut a: Vec<f64> = qs.iter().map(|v| FALLBACK_REG * v).collect();
    let mut rhs: Vec<f64> = p.f.iter().map(|v| -FALLBACK_REG * v).collect();
    for &i in set {
        let g = p.row(i);
        for r in 0..n {
            rhs[r] += g[r] * p.h[i];
            for c in 0..n {
                a[r * n + c] += g[r] * g[c];
            }
        }
    }
    (a, rhs)
}

/// Minimize `½‖max(Gu - h, 0)‖² + μ(½uᵀQu + Fᵀu)` by a damped semismooth
/// Newton iteration on the violated set.
pub fn fallback(p: &QpProblem) -> Result<Fallback, QpError> {
    p.check()?;
    let n = p.n;
    let qs = p.sym_q();
    let neg_f: Vec<f64> = p.f.iter().map(|v| -v).collect();
    let mut u = linalg::solve(&qs, n, &neg_f).map_err(|_| QpError::Singular)?;
    let mut obj = fallback_objective(p, &u);
    for _ in 0..100 {
        let set = violated_set(p, &u);
        let (a, rhs) = fallback_system(p, &qs, &set);
        let cand = linalg::solve(&a, n, &rhs).map_err(|_| QpError::Singular)?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = u.iter().zip(&cand).map(|(a, b)| a + t * (b - a)).collect();
            let o = fallback_objective(p, &trial);
            if o <= obj {
                let moved = u.iter().zip(&trial).any(|(a, b)| (a - b).abs() > 1e-15 * (1.0 + a.abs()));
                u = trial;
                obj = o;
                accepted = moved;
                break;
            }
            t *= 0.5;
        }
        if !accepted || violated_set(p, &u) == set {
            break;
        }
    }
    // Re-solve on the final set so that `u` is the exact stationary point
    // the backward pass differentiates.
    let set = violated_set(p, &u);
    let (a, rhs) = fallback_system(p, &qs, &set);
    let exact = linalg::solve(&a, n, &rhs).map_err(|_| QpError::Singular)?;
    if violated_set(p, &exact) == set {
        u = exact;
    }
    Ok(Fallback { violated: set, u })
}

/// Gradients of `upstream · u` for the fallback solution.
pub fn fallback_backward(p: &QpProblem, fb: &Fallback, upstream: &[f64]) -> Result<QpGrad, QpError> {
    let n = p.n;
    let qs = p.sym_q();
    let (a, _) = fallback_system(p, &qs, &fb.violated);
    let w = linalg::solve(&a, n, upstream).map_err(|_| QpError::Singular)?;
    let u = &fb.u;
    let mu = FALLBACK_REG;
    let mut dq = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dq[i * n + j] = -0.5 * mu * (w[i] * u[j] + u[i] * w[j]);
        }
    }
    let df: Vec<f64> = w.iter().map(|v| -mu * v).collect();
    let mut dg = vec![0.0; p.g.len()];
    let mut dh = vec![0.0; p.rows()];
    for &i in &fb.violated {
        let g = p.row(i);
        let gw = dot(g, &w);
        let gu = dot(g, u);
        dh[i] = gw;
        for c in 0..n {
            dg[i * n + c] = (p.h[i] - gu) * w[c] - gw * u[c];
        }
    }
    Ok(QpGrad {
        dq,
        df,
        dg,
        dh,
        dropped: 0,
    })
}

enum Recorded {
    Optimal(QpSolution),
    Fallback(Fallback),
}

struct QpBlock {
    n: usize,
    m: usize,
    kind: Recorded,
}

impl BlockOp for QpBlock {
    fn vjp(&self, inputs: &[f64], out_adj: &[f64], in_adj: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let p = QpProblem {
            n,
            q: inputs[..n * n].to_vec(),
            f: inputs[n * n..n * n + n].to_vec(),
            g: inputs[n * n + n..n * n + n + m * n].to_vec(),
            h: inputs[n * n + n + m * n..].to_vec(),
        };
        let grad = match &self.kind {
            Recorded::Optimal(sol) => backward(&p, sol, out_adj),
            Recorded::Fallback(fb) => fallback_backward(&p, fb, out_adj),
        };
        match grad {
            Ok(g) => {
                let parts = g.dq.iter().chain(&g.df).chain(&g.dg).chain(&g.dh);
                for (dst, v) in in_adj.iter_mut().zip(parts) {
                    *dst += v;
                }
            }
            Err(e) => log::warn!("qp backward failed ({e}); gradient through this step is zero"),
        }
    }
}

/// What the layer did at one call.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub status: QpStatus,
    pub lambda: Vec<f64>,
    pub primal_violation: f64,
}

/// Solve the QP with tape-valued data and record it as one differentiable block.
///
/// An infeasible problem (or one that hits the iteration cap) is replaced by
/// [`fallback`]; the returned status says which happened.
pub fn qp_layer<'t>(q: &[Var<'t>], f: &[Var<'t>], g: &[Var<'t>], h: &[Var<'t>]) -> Result<(Vec<Var<'t>>, LayerInfo), QpError> {
    let n = f.len();
    let m = h.len();
    let vals = |v: &[Var<'t>]| v.iter().map(|x| x.value()).collect::<Vec<_>>();
    let p = QpProblem::new(n, vals(q), vals(f), vals(g), vals(h));
    let sol = solve(&p)?;
    let (u, kind, info) = if sol.status == QpStatus::Optimal {
        let info = LayerInfo {
            status: sol.status,
            lambda: sol.lambda.clone(),
            primal_violation: sol.primal_violation,
        };
        (sol.u.clone(), Recorded::Optimal(sol), info)
    } else {
        let fb = fallback(&p)?;
        let viol = (0..m).map(|i| (-p.slack(&fb.u, i)).max(0.0)).fold(0.0, f64::max);
        let info = LayerInfo {
            status: sol.status,
            lambda: vec![0.0; m],
            primal_violation: viol,
        };
        (fb.u.clone(), Recorded::Fallback(fb), info)
    };
    let inputs: Vec<Var<'t>> = q.iter().chain(f).chain(g).chain(h).copied().collect();
    let tape = f[0].tape();
    let out = tape.custom_block(&inputs, &u, Box::new(QpBlock { n, m, kind }));
    Ok((out, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eye2() -> Vec<f64> {
        vec![1.0, 0.0, 0.0, 1.0]
    }

    #[test]
    fn unconstrained_minimizer() {
        let p = QpProblem::new(2, eye2(), vec![-1.0, -2.0], vec![], vec![]);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u, vec![1.0, 2.0]);
        let g = backward(&p, &s, &[1.0, -3.0]).unwrap();
        assert_eq!(g.df, vec![-1.0, 3.0]);
    }

    #[test]
    fn single_active_bound() {
        // u1 >= 1.5  <=>  -u1 <= -1.5
        let p = QpProblem::new(2, eye2(), vec![-1.0, -2.0], vec![-1.0, 0.0], vec![-1.5]);
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.u[0], 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.u[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.lambda[0], 0.5, epsilon = 1e-14);
        let g = backward(&p, &s, &[1.0, 0.0]).unwrap();
        // Raising the bound 1.5 by δ moves u1 by δ; h = -bound so dL/dh = -1.
        assert_abs_diff_eq!(g.dh[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.df[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn contradictory_box_is_infeasible() {
        let p = QpProblem::new(2, eye2(), vec![0.0, 0.0], vec![-1.0, 0.0, 1.0, 0.0], vec![-1.0, 0.0]);
        assert_eq!(solve(&p).unwrap().status, QpStatus::Infeasible);
        let fb = fallback(&p).unwrap();
        assert_abs_diff_eq!(fb.u[0], 0.5, epsilon = 1e-5);
    }

    #[test]
    fn inactive_row_has_zero_gradient() {
        let p = QpProblem::new(2, eye2(), vec![-1.0, -2.0], vec![1.0, 0.0], vec![5.0]);
        let s = solve(&p).unwrap();
        let g = backward(&p, &s, &[1.0, 1.0]).unwrap();
        assert_eq!(g.dh[0], 0.0);
        assert_eq!(&g.dg[..], &[0.0, 0.0]);
    }

    #[test]
    fn rejects_indefinite_q() {
        let p = QpProblem::new(2, vec![1.0, 0.0, 0.0, -1.0], vec![0.0, 0.0], vec![], vec![]);
        assert_eq!(solve(&p), Err(QpError::NotPositiveDefinite));
    }
}
