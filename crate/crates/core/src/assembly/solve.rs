use faer::linalg::solvers::Solve;
use faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::linalg::LltError as SparseLltError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Meshes up to this resolution use the direct factorization under `Auto`.
pub const AUTO_DIRECT_MAX_MESH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    #[default]
    Auto,
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub linear: LinearSolver,
    pub cg_tol: f64,
    /// `None` means `10 n`.
    pub cg_max_iter: Option<usize>,
    /// Mesh resolution used to resolve `Auto`.
    #[serde(skip)]
    pub mesh_n: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { linear: LinearSolver::Auto, cg_tol: 1e-10, cg_max_iter: None, mesh_n: 0 }
    }
}

impl SolverOptions {
    pub fn resolved(&self) -> LinearSolver {
        match self.linear {
            LinearSolver::Auto if self.mesh_n <= AUTO_DIRECT_MAX_MESH => LinearSolver::Direct,
            LinearSolver::Auto => LinearSolver::Cg,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveStats {
    pub direct: bool,
    /// CG iterations, or refinement sweeps for the direct solver.
    pub iterations: usize,
    pub relative_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let mut out = solve_spd_many(a, &[b], opts)?;
    Ok(out.pop().expect("one right-hand side"))
}

/// Same as [`solve_spd`] for several right-hand sides sharing one factorization.
pub fn solve_spd_many(
    a: &CsrMatrix,
    rhs: &[&[f64]],
    opts: &SolverOptions,
) -> Result<Vec<(Vec<f64>, SolveStats)>> {
    for b in rhs {
        if b.len() != a.n() {
            return Err(Error::DimensionMismatch { expected: a.n(), found: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side".into()));
        }
    }
    match opts.resolved() {
        LinearSolver::Cg => rhs.iter().map(|b| pcg(a, b, opts.cg_tol, opts.cg_max_iter)).collect(),
        _ => {
            let chol = ScaledCholesky::new(a)?;
            Ok(rhs.iter().map(|b| chol.solve(a, b)).collect())
        }
    }
}

/// Sparse Cholesky of `D A D` with `D = diag(A)^{-1/2}`.
struct ScaledCholesky {
    scale: Vec<f64>,
    llt: Llt<usize, f64>,
}

impl ScaledCholesky {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let diag = a.diagonal();
        if let Some(pivot) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::NotPositiveDefinite { pivot });
        }
        let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let triplets: Vec<_> =
            a.triplets().map(|(i, j, v)| Triplet::new(i, j, v * scale[i] * scale[j])).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::InvalidArgument(format!("sparse matrix: {e:?}")))?;
        faer::set_global_parallelism(faer::Par::Seq);
        let llt = mat.sp_cholesky(Side::Lower).map_err(|e| match e {
            SparseLltError::Numeric(NonPositivePivot { index }) => Error::NotPositiveDefinite { pivot: index },
            other => Error::InvalidArgument(format!("sparse Cholesky: {other:?}")),
        })?;
        Ok(Self { scale, llt })
    }

    fn solve_scaled(&self, r: &[f64]) -> Vec<f64> {
        let rhs = Col::from_fn(r.len(), |i| r[i] * self.scale[i]);
        let y = self.llt.solve(&rhs);
        (0..r.len()).map(|i| y[i] * self.scale[i]).collect()
    }

    /// Factor solve followed by a few sweeps of iterative refinement.
    fn solve(&self, a: &CsrMatrix, b: &[f64]) -> (Vec<f64>, SolveStats) {
        let mut x = self.solve_scaled(b);
        let mut res = relative_residual(a, &x, b);
        let mut sweeps = 0;
        while sweeps < 3 && res > 1e-14 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
            let dx = self.solve_scaled(&r);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
            let trial_res = relative_residual(a, &trial, b);
            sweeps += 1;
            if trial_res >= res {
                break;
            }
            x = trial;
            res = trial_res;
        }
        (x, SolveStats { direct: true, iterations: sweeps, relative_residual: res })
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: Option<usize>) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.n();
    let max_iter = max_iter.unwrap_or(10 * n).max(1);
    let diag = a.diagonal();
    if let Some(pivot) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NotPositiveDefinite { pivot });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let nb = norm(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok((x, SolveStats { direct: false, iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverBreakdown {
                iteration: it,
                reason: format!("non-positive curvature p'Ap = {pap:e}"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / nb;
        if res <= tol {
            let true_res = relative_residual(a, &x, b);
            return Ok((x, SolveStats { direct: false, iterations: it, relative_residual: true_res }));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverNotConverged { iterations: max_iter, residual: relative_residual(a, &x, b) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn both() -> [SolverOptions; 2] {
        [
            SolverOptions { linear: LinearSolver::Direct, ..Default::default() },
            SolverOptions { linear: LinearSolver::Cg, ..Default::default() },
        ]
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.0, -2.0, 3.5, 0.25];
        for opts in both() {
            let (x, _) = solve_spd(&CsrMatrix::identity(4), &b, &opts).unwrap();
            for (x, b) in x.iter().zip(&b) {
                assert!((x - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_by_two() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        for opts in both() {
            let (x, stats) = solve_spd(&a, &[3.0, 3.0], &opts).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12, "{x:?}");
            assert!(stats.relative_residual <= 1e-10);
        }
    }

    #[test]
    fn random_spd_matches_dense_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
        let dense = m.transpose() * &m + DMatrix::identity(50, 50);
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = dense.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_column_slice(&b));
        let a = CsrMatrix::from_dense(&dense);
        for opts in both() {
            let (x, _) = solve_spd(&a, &b, &opts).unwrap();
            for (x, o) in x.iter().zip(oracle.iter()) {
                assert!((x - o).abs() <= 1e-8 * (1.0 + o.abs()), "{x} vs {o}");
            }
        }
    }

    #[test]
    fn indefinite_reports_pivot() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        let direct = SolverOptions { linear: LinearSolver::Direct, ..Default::default() };
        assert!(matches!(solve_spd(&a, &[1.0, 0.0], &direct), Err(Error::NotPositiveDefinite { .. })));
        let zero_diag = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(
            solve_spd(&zero_diag, &[1.0, 0.0], &both()[1]),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn auto_switches_on_mesh_size() {
        let mut o = SolverOptions { mesh_n: 64, ..Default::default() };
        assert_eq!(o.resolved(), LinearSolver::Direct);
        o.mesh_n = 65;
        assert_eq!(o.resolved(), LinearSolver::Cg);
    }
}
