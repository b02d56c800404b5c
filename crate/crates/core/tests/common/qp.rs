use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stlcbf_core::diffqp::QpProblem;

/// Random strictly convex, feasible problem with `q = 2`.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q = vec![
        a[0] * a[0] + a[1] * a[1] + 0.2,
        a[0] * a[2] + a[1] * a[3],
        a[0] * a[2] + a[1] * a[3],
        a[2] * a[2] + a[3] * a[3] + 0.2,
    ];
    let f: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let m = rng.gen_range(0..=8);
    let u0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let mut g = Vec::with_capacity(2 * m);
    let mut h = Vec::with_capacity(m);
    for _ in 0..m {
        let row = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        g.extend_from_slice(&row);
        h.push(row[0] * u0[0] + row[1] * u0[1] + rng.gen_range(0.0..1.0));
    }
    QpProblem::new(2, q, f, g, h)
}

/// Dense solve with partial pivoting, `None` when singular.
fn gauss(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        for c in 0..n {
            a.swap(col * n + c, piv * n + c);
        }
        b.swap(col, piv);
        for r in col + 1..n {
            let k = a[r * n + col] / a[col * n + col];
            for c in col..n {
                a[r * n + c] -= k * a[col * n + c];
            }
            b[r] -= k * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

/// Minimizer over every candidate active set of size <= 2, keeping the
/// primal and dual feasible one with the smallest objective.
pub fn brute_force(p: &QpProblem) -> Vec<f64> {
    let m = p.rows();
    let mut sets: Vec<Vec<usize>> = vec![vec![]];
    for i in 0..m {
        sets.push(vec![i]);
        for j in i + 1..m {
            sets.push(vec![i, j]);
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for act in sets {
        let k = act.len();
        let d = 2 + k;
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for i in 0..2 {
            for j in 0..2 {
                a[i * d + j] = 0.5 * (p.q[i * 2 + j] + p.q[j * 2 + i]);
            }
            b[i] = -p.f[i];
        }
        for (r, &row) in act.iter().enumerate() {
            for c in 0..2 {
                a[(2 + r) * d + c] = p.g[row * 2 + c];
                a[c * d + 2 + r] = p.g[row * 2 + c];
            }
            b[2 + r] = p.h[row];
        }
        let Some(x) = gauss(a, d, b) else {
            continue;
        };
        let u = x[..2].to_vec();
        let primal = (0..m).all(|i| p.slack(&u, i) >= -1e-10);
        let dual = x[2..].iter().all(|&l| l >= -1e-10);
        if primal && dual {
            let obj = p.objective(&u);
            if best.as_ref().map_or(true, |(o, _)| obj < *o) {
                best = Some((obj, u));
            }
        }
    }
    best.expect("feasible problem").1
}
