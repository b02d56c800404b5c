//! Random formulas and trajectories drawn from a plain RNG.

use rand::Rng;
use stlcbf_core::stl::{Formula, Gauge, Predicate, Trajectory};

pub const DT: f64 = 0.1;

fn predicate<R: Rng>(rng: &mut R) -> Predicate {
    let c = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
    let r = rng.gen_range(0.2..2.0);
    let g = if rng.gen_bool(0.5) {
        Gauge::Euclidean
    } else {
        Gauge::Superellipse {
            a: rng.gen_range(0.3..2.0),
            b: rng.gen_range(0.3..2.0),
        }
    };
    if rng.gen_bool(0.5) {
        Predicate::reach("p", c, r, g)
    } else {
        Predicate::avoid("p", c, r, g)
    }
}

fn state_formula<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.4) {
        return if rng.gen_bool(0.5) { Formula::pred(predicate(rng)) } else { Formula::not(predicate(rng)) };
    }
    let args = (0..rng.gen_range(1..3)).map(|_| state_formula(rng, depth - 1)).collect();
    if rng.gen_bool(0.5) {
        Formula::And { args }
    } else {
        Formula::Or { args }
    }
}

/// Top-level conjunction of temporal operators over Boolean state formulas.
pub fn formula<R: Rng>(rng: &mut R) -> Formula {
    let args = (0..rng.gen_range(1..4))
        .map(|_| {
            let a = rng.gen_range(0..10) as f64 * DT;
            let b = a + rng.gen_range(1..10) as f64 * DT;
            match rng.gen_range(0..3) {
                0 => Formula::eventually(a, b, state_formula(rng, 2)),
                1 => Formula::always(a, b, state_formula(rng, 2)),
                _ => Formula::pred(predicate(rng)),
            }
        })
        .collect();
    Formula::TopAnd { args }
}

pub fn trajectory<R: Rng>(rng: &mut R, samples: usize) -> Trajectory {
    let states = (0..samples).map(|_| vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).collect();
    Trajectory::new(DT, states)
}
