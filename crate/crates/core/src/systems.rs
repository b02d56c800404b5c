//! Control-affine models `ẋ = f(x) + g(x) u` and the Lie derivatives that
//! position barriers of relative degree two need.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::stl::Predicate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemModel {
    /// State `(x, y, vx, vy)`, input `(ax, ay)`.
    DoubleIntegrator,
    /// State `(x, y, θ, v)`, input `(θ̇, v̇)`.
    Unicycle,
}

/// Elementwise input limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

impl InputBounds {
    pub fn symmetric(q: usize, limit: f64) -> Self {
        Self {
            u_min: vec![-limit; q],
            u_max: vec![limit; q],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.u_min.len() == self.u_max.len()
            && self
                .u_min
                .iter()
                .zip(&self.u_max)
                .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi)
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.u_min.iter().zip(&self.u_max))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Time offset `γ(t)` with its first two derivatives.
#[derive(Debug, Clone, Copy)]
pub struct TimeJet<R> {
    pub value: R,
    pub d1: R,
    pub d2: R,
}

impl<R: Real> TimeJet<R> {
    pub fn zero(like: R) -> Self {
        let z = like.lift(0.0);
        Self { value: z, d1: z, d2: z }
    }
}

/// Terms of `b(x,t) = h(x) + γ(t)` and its first two time derivatives along
/// the dynamics, with `b̈ = b̈_drift + gain · u`.
#[derive(Debug, Clone)]
pub struct BarrierDerivs<R> {
    pub b: R,
    pub b_dot: R,
    pub b_ddot_drift: R,
    pub gain: Vec<R>,
}

impl SystemModel {
    pub fn state_dim(self) -> usize {
        4
    }

    pub fn input_dim(self) -> usize {
        2
    }

    /// Relative degree of position barriers.
    pub fn relative_degree(self) -> usize {
        2
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemModel::DoubleIntegrator => "double_integrator",
            SystemModel::Unicycle => "unicycle",
        }
    }

    pub fn drift<R: Real>(self, x: &[R]) -> Vec<R> {
        let zero = x[0].lift(0.0);
        match self {
            SystemModel::DoubleIntegrator => vec![x[2], x[3], zero, zero],
            SystemModel::Unicycle => vec![x[3] * x[2].cos(), x[3] * x[2].sin(), zero, zero],
        }
    }

    /// Input matrix, row-major `n × q`. Constant for both models.
    pub fn input_matrix(self) -> [[f64; 2]; 4] {
        [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    }

    pub fn dynamics<R: Real>(self, x: &[R], u: &[R]) -> Vec<R> {
        let mut dx = self.drift(x);
        dx[2] = dx[2] + u[0];
        dx[3] = dx[3] + u[1];
        dx
    }

    /// One forward-Euler step with the input held constant.
    pub fn step<R: Real>(self, x: &[R], u: &[R], dt: f64) -> Vec<R> {
        let dx = self.dynamics(x, u);
        x.iter().zip(&dx).map(|(&xi, &di)| xi + di * dt).collect()
    }

    /// Position `l(x)`.
    pub fn position<R: Real>(self, x: &[R]) -> [R; 2] {
        [x[0], x[1]]
    }

    /// Analytic `b`, `ḃ`, drift part of `b̈` and `L_g L_f b` for a position
    /// predicate shifted by `γ`.
    pub fn barrier_derivatives<R: Real>(self, pred: &Predicate, gamma: &TimeJet<R>, x: &[R]) -> BarrierDerivs<R> {
        let z = pred.position_offset(x);
        let jet = pred.gauge.jet(z);
        let s = pred.sign;
        let h = jet.value.rsub(pred.radius) * s;
        // ∇h = -s ∇σ, ∇²h = -s ∇²σ.
        let g = [jet.grad[0] * -s, jet.grad[1] * -s];
        let hm = [
            [jet.hess[0][0] * -s, jet.hess[0][1] * -s],
            [jet.hess[1][0] * -s, jet.hess[1][1] * -s],
        ];
        let quad = |v: [R; 2]| {
            v[0] * (hm[0][0] * v[0] + hm[0][1] * v[1]) + v[1] * (hm[1][0] * v[0] + hm[1][1] * v[1])
        };
        let b = h + gamma.value;
        match self {
            SystemModel::DoubleIntegrator => {
                let v = [x[2], x[3]];
                BarrierDerivs {
                    b,
                    b_dot: g[0] * v[0] + g[1] * v[1] + gamma.d1,
                    b_ddot_drift: quad(v) + gamma.d2,
                    gain: vec![g[0], g[1]],
                }
            }
            SystemModel::Unicycle => {
                let (c, sn, v) = (x[2].cos(), x[2].sin(), x[3]);
                let e = [c, sn];
                let along = g[0] * c + g[1] * sn;
                let across = g[1] * c - g[0] * sn;
                BarrierDerivs {
                    b,
                    b_dot: v * along + gamma.d1,
                    b_ddot_drift: v.square() * quad(e) + gamma.d2,
                    gain: vec![v * across, along],
                }
            }
        }
    }
}
