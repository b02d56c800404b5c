//! Tiny dense helpers for the QP layer. Matrices are row-major slices.

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

/// Solve `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is consumed as scratch; the solution is left in `b`.
pub fn solve_in_place(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<(), Singular> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= 1e-14 * scale {
            return Err(Singular);
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col * n + c] * b[c];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(())
}

pub fn solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>, Singular> {
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    solve_in_place(&mut a, n, &mut x)?;
    Ok(x)
}

/// Smallest eigenvalue bound check via Cholesky: `true` if `A - shift I` is
/// positive definite.
pub fn is_positive_definite(a: &[f64], n: usize, shift: f64) -> bool {
    let mut l = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j] - if i == j { shift } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| dot(&a[r * cols..(r + 1) * cols], x)).collect()
}

pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}
