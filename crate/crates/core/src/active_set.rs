//! Primal active-set method for `min ½ xᵀKx - bᵀx` subject to `l ≤ x ≤ u`.

use serde::Serialize;

use crate::assembly::{solve_spd, CsrMatrix, SolverOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundStatus {
    Free,
    AtLower,
    AtUpper,
}

/// Final working set, multiplier estimates, and the iterate.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub x: Vec<f64>,
    pub status: Vec<BoundStatus>,
    /// Zero for free dofs; `g_i` at a lower bound and `-g_i` at an upper
    /// bound, with `g = Kx - b`. Non-negative at a KKT point.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

impl ActiveSet {
    pub fn n_active(&self) -> usize {
        self.status.iter().filter(|s| **s != BoundStatus::Free).count()
    }
}

pub fn objective(k: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    0.5 * k.quadratic_form(x) - b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>()
}

fn gradient(k: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    k.mul_vec(x).iter().zip(b).map(|(kx, b)| kx - b).collect()
}

fn multiplier(status: BoundStatus, g: f64) -> f64 {
    match status {
        BoundStatus::Free => 0.0,
        BoundStatus::AtLower => g,
        BoundStatus::AtUpper => -g,
    }
}

/// Scale against which multiplier signs are judged.
fn kkt_tolerance(k: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kmax = (0..k.n()).map(|i| k.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0f64, f64::max);
    let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-12 * (bmax + kmax * xmax).max(f64::MIN_POSITIVE)
}

/// Largest violation of primal feasibility or multiplier sign.
pub fn kkt_violation(k: &CsrMatrix, b: &[f64], lower: &[f64], upper: &[f64], x: &[f64]) -> f64 {
    let g = gradient(k, b, x);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        worst = worst.max(lower[i] - x[i]).max(x[i] - upper[i]);
        // projected gradient
        let pg = if x[i] <= lower[i] {
            g[i].min(0.0)
        } else if x[i] >= upper[i] {
            g[i].max(0.0)
        } else {
            g[i]
        };
        worst = worst.max(pg.abs());
    }
    worst
}

/// Solves the bound-constrained problem starting from the unconstrained
/// minimizer `x_free` (computed if `None`). `max_iter` defaults to `2n + 10`.
pub fn solve_box_qp(
    k: &CsrMatrix,
    b: &[f64],
    lower: &[f64],
    upper: &[f64],
    x_free: Option<&[f64]>,
    solver: &SolverOptions,
    max_iter: Option<usize>,
) -> Result<ActiveSet> {
    let n = k.n();
    for v in [b.len(), lower.len(), upper.len()] {
        if v != n {
            return Err(Error::DimensionMismatch { expected: n, found: v });
        }
    }
    if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
        return Err(Error::InvalidArgument(format!("empty bound interval at dof {i}")));
    }
    let mut x = match x_free {
        Some(x) if x.len() == n => x.to_vec(),
        Some(x) => return Err(Error::DimensionMismatch { expected: n, found: x.len() }),
        None => solve_spd(k, b, solver)?.0,
    };
    let mut status = vec![BoundStatus::Free; n];
    for i in 0..n {
        if x[i] < lower[i] {
            x[i] = lower[i];
            status[i] = BoundStatus::AtLower;
        } else if x[i] > upper[i] {
            x[i] = upper[i];
            status[i] = BoundStatus::AtUpper;
        }
    }
    if status.iter().all(|s| *s == BoundStatus::Free) {
        return Ok(ActiveSet { x, status, multipliers: vec![0.0; n], iterations: 0 });
    }

    let cap = max_iter.unwrap_or(2 * n + 10);
    for it in 1..=cap {
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == BoundStatus::Free).collect();
        // minimizer over the free dofs with the working set held fixed
        let mut step = vec![0.0; n];
        if !free.is_empty() {
            let g = gradient(k, b, &x);
            let reduced = k.principal_submatrix(&free);
            let rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
            let (p, _) = solve_spd(&reduced, &rhs, solver)?;
            for (&i, p) in free.iter().zip(p) {
                step[i] = p;
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let p = step[i];
            let (a, s) = if p < 0.0 {
                ((lower[i] - x[i]) / p, BoundStatus::AtLower)
            } else if p > 0.0 {
                ((upper[i] - x[i]) / p, BoundStatus::AtUpper)
            } else {
                continue;
            };
            if a < alpha {
                alpha = a.max(0.0);
                blocking = Some((i, s));
            }
        }
        for &i in &free {
            x[i] += alpha * step[i];
        }
        if let Some((i, s)) = blocking {
            status[i] = s;
            x[i] = if s == BoundStatus::AtLower { lower[i] } else { upper[i] };
            continue;
        }
        let g = gradient(k, b, &x);
        let tol = kkt_tolerance(k, b, &x);
        let release = (0..n)
            .filter(|&i| status[i] != BoundStatus::Free)
            .map(|i| (i, multiplier(status[i], g[i])))
            .filter(|&(_, m)| m < -tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match release {
            Some((i, _)) => status[i] = BoundStatus::Free,
            None => {
                for i in 0..n {
                    x[i] = x[i].clamp(lower[i], upper[i]);
                }
                let multipliers = (0..n).map(|i| multiplier(status[i], g[i])).collect();
                return Ok(ActiveSet { x, status, multipliers, iterations: it });
            }
        }
    }
    Err(Error::ActiveSetCap { iterations: cap, violation: kkt_violation(k, b, lower, upper, &x) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Projected gradient with fixed step `1/λ_max`, run to stagnation.
    pub(crate) fn projected_gradient(k: &DMatrix<f64>, b: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
        let n = b.len();
        let lmax = k.clone().symmetric_eigenvalues().max();
        let mut x: Vec<f64> = (0..n).map(|i| 0.0f64.clamp(lower[i], upper[i])).collect();
        for _ in 0..200_000 {
            let kx = k * nalgebra::DVector::from_column_slice(&x);
            let mut change: f64 = 0.0;
            for i in 0..n {
                let xi = (x[i] - (kx[i] - b[i]) / lmax).clamp(lower[i], upper[i]);
                change = change.max((xi - x[i]).abs());
                x[i] = xi;
            }
            if change < 1e-15 {
                break;
            }
        }
        x
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let k = m.transpose() * &m + DMatrix::identity(n, n);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
        let upper: Vec<f64> =
            (0..n).map(|i| if rng.random_bool(0.2) { f64::INFINITY } else { lower[i] + rng.random_range(0.1..1.5) }).collect();
        (k, b, lower, upper)
    }

    #[test]
    fn feasible_unconstrained_solution_is_returned_unchanged() {
        let k = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let r = solve_box_qp(&k, &[0.3, 0.3], &[0.0, 0.0], &[1.0, 1.0], None, &SolverOptions::default(), None).unwrap();
        assert_eq!(r.n_active(), 0);
        assert!((r.x[0] - 0.1).abs() < 1e-15 && (r.x[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn one_dof_upper_bound() {
        // (x - 2)^2 = x^2 - 4x + 4  ->  K = 2, b = 4
        let k = CsrMatrix::from_dense(&DMatrix::from_element(1, 1, 2.0));
        let r = solve_box_qp(&k, &[4.0], &[f64::NEG_INFINITY], &[1.0], None, &SolverOptions::default(), None).unwrap();
        assert_eq!(r.x, vec![1.0]);
        assert_eq!(r.status[0], BoundStatus::AtUpper);
        assert!((r.multipliers[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..25 {
            let (kd, b, lower, upper) = random_problem(&mut rng, 20);
            let k = CsrMatrix::from_dense(&kd);
            let r = solve_box_qp(&k, &b, &lower, &upper, None, &SolverOptions::default(), None).unwrap();
            assert!(r.iterations <= 20, "{} iterations", r.iterations);
            for i in 0..20 {
                assert!(r.x[i] >= lower[i] && r.x[i] <= upper[i]);
                assert!(r.multipliers[i] >= -1e-12);
            }
            let oracle = projected_gradient(&kd, &b, &lower, &upper);
            let diff = objective(&k, &b, &r.x) - objective(&k, &b, &oracle);
            assert!(diff.abs() <= 1e-8, "objective gap {diff}");
        }
    }

    #[test]
    fn beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (kd, b, lower, upper) = random_problem(&mut rng, 20);
        let k = CsrMatrix::from_dense(&kd);
        let r = solve_box_qp(&k, &b, &lower, &upper, None, &SolverOptions::default(), None).unwrap();
        let best = objective(&k, &b, &r.x);
        for _ in 0..100 {
            let y: Vec<f64> = (0..20).map(|i| rng.random_range(lower[i]..upper[i].min(lower[i] + 3.0))).collect();
            assert!(best <= objective(&k, &b, &y) + 1e-12);
        }
    }

    #[test]
    fn cap_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (kd, b, lower, upper) = random_problem(&mut rng, 20);
        let k = CsrMatrix::from_dense(&kd);
        let unc = solve_spd(&k, &b, &SolverOptions::default()).unwrap().0;
        if (0..20).all(|i| unc[i] >= lower[i] && unc[i] <= upper[i]) {
            return;
        }
        let err = solve_box_qp(&k, &b, &lower, &upper, None, &SolverOptions::default(), Some(0)).unwrap_err();
        assert!(matches!(err, Error::ActiveSetCap { iterations: 0, .. }));
    }
}
