//! Numerical exploration of one-dimensional affine actions on a cyclic axis.
//!
//! A nonconstant map `f` on `Z_N` is equivariant for `rho(v) = a v + b` when
//! `a f(x) + b = f(x + 1)` for every `x`. Iterating `2N` times gives the
//! necessary condition `(a^{2N} - 1) f(x) + c = 0` with
//! `c = b (1 + a + ... + a^{2N-1})`. The probe measures both quantities on a
//! grid of `(a, b)` and a family of bump maps.

use crate::autodiff::NoiseSource;

/// Threshold used to call a map constant or an action the identity.
pub const ESCAPE_TOL: f64 = 1e-6;

/// Grid points per side: `(a, b)` range over `-2, -1.95, ..., 2`.
const GRID: usize = 81;

fn grid_value(i: usize) -> f64 {
    (i as f64 - 40.0) / 20.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub grid_size: usize,
    pub maps: usize,
    pub grid_points: usize,
    /// Smallest one-step residual over `(a, b) != (1, 0)` and nonconstant maps.
    pub best_nonconstant_residual: f64,
    /// `(a, b)` where that minimum occurs.
    pub best_action: (f64, f64),
    /// Largest iterated-condition residual at `(a, b) = (1, 0)`; zero for any map.
    pub identity_escape_residual: f64,
    /// Largest one-step residual of the fixed-point constant map over `|a| < 1`.
    pub constant_escape_residual: f64,
    /// A point outside both escape clauses where the iterated condition
    /// vanishes for a nonconstant map although the one-step residual does not.
    pub iterated_condition_gap: Option<(f64, f64)>,
    /// No nonconstant map gets within `bound` of equivariance away from the
    /// identity.
    pub identity_forced: bool,
    pub bound: f64,
}

/// `max_x |a f(x) + b - f(x + 1)|`.
pub fn one_step_residual(a: f64, b: f64, f: &[f64]) -> f64 {
    let n = f.len();
    (0..n)
        .map(|x| (a * f[x] + b - f[(x + 1) % n]).abs())
        .fold(0.0, f64::max)
}

/// `max_x |(a^{2N} - 1) f(x) + c|`.
pub fn iterated_residual(a: f64, b: f64, f: &[f64]) -> f64 {
    let n2 = 2 * f.len() as i32;
    let c = b * (0..n2).map(|k| a.powi(k)).sum::<f64>();
    let k = a.powi(n2) - 1.0;
    f.iter().map(|v| (k * v + c).abs()).fold(0.0, f64::max)
}

fn variance(f: &[f64]) -> f64 {
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64
}

/// Bump maps `offset + height * onehot(k)`: the plain one-hot on state 0
/// first, then `trials - 1` seeded draws with heights in `[0.5, 2]`.
pub fn bump_maps(grid_size: usize, trials: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut src = NoiseSource::new(seed);
    let mut maps = Vec::with_capacity(trials);
    for t in 0..trials {
        let (k, offset, height) = if t == 0 {
            (0, 0.0, 1.0)
        } else {
            (
                src.index(grid_size),
                src.uniform(-1.0, 1.0),
                src.uniform(0.5, 2.0),
            )
        };
        let mut f = vec![offset; grid_size];
        f[k] += height;
        maps.push(f);
    }
    maps
}

/// Grid search over `(a, b)` in `[-2, 2]^2` at step 0.05.
pub fn linear_collapse_probe(grid_size: usize, trials: usize) -> CollapseReport {
    assert!(grid_size >= 2 && trials >= 1);
    let bound = 0.1;
    let maps = bump_maps(grid_size, trials, 0x5eed);
    let mut report = CollapseReport {
        grid_size,
        maps: maps.len(),
        grid_points: 0,
        best_nonconstant_residual: f64::INFINITY,
        best_action: (f64::NAN, f64::NAN),
        identity_escape_residual: 0.0,
        constant_escape_residual: 0.0,
        iterated_condition_gap: None,
        identity_forced: false,
        bound,
    };
    for i in 0..GRID {
        let a = grid_value(i);
        for j in 0..GRID {
            let b = grid_value(j);
            let is_identity = (a - 1.0).abs() < ESCAPE_TOL && b.abs() < ESCAPE_TOL;
            if is_identity {
                for f in &maps {
                    report.identity_escape_residual = report
                        .identity_escape_residual
                        .max(iterated_residual(a, b, f));
                }
                continue;
            }
            report.grid_points += 1;
            if a.abs() < 1.0 {
                let fixed = vec![b / (1.0 - a); grid_size];
                report.constant_escape_residual = report
                    .constant_escape_residual
                    .max(one_step_residual(a, b, &fixed));
            }
            for f in maps.iter().filter(|f| variance(f) >= ESCAPE_TOL) {
                let r = one_step_residual(a, b, f);
                if r < report.best_nonconstant_residual {
                    report.best_nonconstant_residual = r;
                    report.best_action = (a, b);
                }
                if report.iterated_condition_gap.is_none()
                    && iterated_residual(a, b, f) < ESCAPE_TOL
                    && r >= bound
                {
                    report.iterated_condition_gap = Some((a, b));
                }
            }
        }
    }
    report.identity_forced = report.best_nonconstant_residual > bound;
    report
}
