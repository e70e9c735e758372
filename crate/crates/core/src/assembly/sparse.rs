use nalgebra::DMatrix;

use super::dofmap::DofMap;
use crate::error::{Error, Result};

/// Square compressed-row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside a {n}x{n} matrix");
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry magnitude.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max) / scale
    }

    /// Principal submatrix on `keep` (ascending indices), renumbered `0..keep.len()`.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    t.push((k, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), t)
    }
}

/// Normal-equation system with optional Dirichlet constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Prescribed value per dof, `None` for free dofs.
    pub constraints: Vec<Option<f64>>,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        assert_eq!(matrix.n(), rhs.len());
        let constraints = vec![None; rhs.len()];
        Self { matrix, rhs, constraints }
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    /// Symmetric elimination of prescribed values: rows and columns of
    /// constrained dofs are zeroed, their diagonal set to one and the
    /// right-hand side moved accordingly.
    pub fn eliminate(&mut self, values: &[(usize, f64)]) {
        if values.is_empty() {
            return;
        }
        for &(dof, v) in values {
            self.constraints[dof] = Some(v);
        }
        let fixed = &self.constraints;
        let mut triplets = Vec::with_capacity(self.matrix.nnz());
        for (i, j, a) in self.matrix.triplets() {
            match (fixed[i], fixed[j]) {
                (None, None) => triplets.push((i, j, a)),
                (None, Some(g)) => self.rhs[i] -= a * g,
                _ => {}
            }
        }
        for (i, c) in fixed.iter().enumerate() {
            if let Some(g) = c {
                triplets.push((i, i, 1.0));
                self.rhs[i] = *g;
            }
        }
        self.matrix = CsrMatrix::from_triplets(self.n(), triplets);
    }
}

/// Prescribes `values` (pairs of dof index within `dofmap`, value) on the block
/// of `system` starting at `offset`. Only boundary dofs may be constrained.
pub fn apply_dirichlet(
    system: &mut SparseSystem,
    dofmap: &DofMap,
    offset: usize,
    values: &[(usize, f64)],
) -> Result<()> {
    for &(dof, _) in values {
        if !dofmap.is_boundary(dof) {
            return Err(Error::NotBoundaryDof { dof });
        }
        if offset + dof >= system.n() {
            return Err(Error::DimensionMismatch { expected: system.n(), found: offset + dof + 1 });
        }
    }
    let shifted: Vec<_> = values.iter().map(|&(d, v)| (offset + d, v)).collect();
    system.eliminate(&shifted);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::dofmap::{build_dofmap, Space};
    use crate::elements::ElementKind;
    use crate::mesh::Mesh;

    #[test]
    fn triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, 2.0]);
    }

    #[test]
    fn elimination_keeps_symmetry() {
        let dense = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let mut s = SparseSystem::new(CsrMatrix::from_dense(&dense), vec![1.0, 2.0, 3.0]);
        s.eliminate(&[(1, 0.5)]);
        assert_eq!(s.matrix.symmetry_defect(), 0.0);
        assert_eq!(s.matrix.get(1, 1), 1.0);
        assert_eq!(s.matrix.get(0, 1), 0.0);
        approx::assert_relative_eq!(s.rhs.as_slice(), [0.5, 0.5, 2.9].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_without_constraints_is_identity() {
        let mesh = Mesh::build_structured(2).unwrap();
        let d = build_dofmap(&mesh, Space::scalar(ElementKind::P1)).unwrap();
        let mut s = SparseSystem::new(CsrMatrix::identity(d.n_global()), vec![1.0; d.n_global()]);
        let before = s.matrix.clone();
        apply_dirichlet(&mut s, &d, 0, &[]).unwrap();
        assert_eq!(s.matrix, before);
    }

    #[test]
    fn dirichlet_rejects_interior_dof() {
        let mesh = Mesh::build_structured(2).unwrap();
        let d = build_dofmap(&mesh, Space::scalar(ElementKind::P1)).unwrap();
        let mut s = SparseSystem::new(CsrMatrix::identity(d.n_global()), vec![0.0; d.n_global()]);
        // vertex 4 is the centre of the 2x2 grid
        assert!(matches!(apply_dirichlet(&mut s, &d, 0, &[(4, 1.0)]), Err(Error::NotBoundaryDof { dof: 4 })));
        apply_dirichlet(&mut s, &d, 0, &[(0, 1.0)]).unwrap();
    }
}
