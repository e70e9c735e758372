use rayon::prelude::*;

use super::dofmap::DofMap;
use super::fe::{CellContext, FeContext};
use super::sparse::{CsrMatrix, SparseSystem};
use crate::elements::ElementKind;
use crate::error::{Error, Result};

/// Pointwise least-squares integrand: a residual `r(x)` with `n_components`
/// entries and its linearization `L` applied to every local basis function of
/// the unknown blocks.
///
/// Local unknown numbering concatenates the blocks passed to [`assemble_ls`];
/// within a block, basis `j` of component `c` sits at `c * n_basis + j`.
/// `ops` is laid out `[local * n_components + component]`.
pub trait LsIntegrand: Sync {
    fn n_components(&self) -> usize;

    /// Local unknowns per cell the integrand writes operators for.
    fn n_local(&self) -> usize;

    /// Element kinds (unknown and data fields) to tabulate on each cell.
    fn kinds(&self) -> Vec<ElementKind>;

    fn evaluate(&self, cell: &CellContext, q: usize, ops: Option<&mut [f64]>, residual: &mut [f64]);
}

/// Normal equations plus the per-component squared residual norms at the
/// linearization point.
#[derive(Debug, Clone)]
pub struct LsSystem {
    pub system: SparseSystem,
    pub residual_norms: Vec<f64>,
}

impl LsSystem {
    pub fn functional(&self) -> f64 {
        self.residual_norms.iter().sum()
    }
}

struct CellBlock {
    dofs: Vec<usize>,
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    norms: Vec<f64>,
}

/// Start offsets of each block in the global unknown vector, plus the total.
pub fn block_offsets(blocks: &[&DofMap]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut n = 0;
    for b in blocks {
        offsets.push(n);
        n += b.n_global();
    }
    (offsets, n)
}

fn local_to_global(blocks: &[&DofMap], offsets: &[usize], cell: usize) -> Vec<usize> {
    let mut dofs = Vec::new();
    for (b, &off) in blocks.iter().zip(offsets) {
        for c in 0..b.space().components {
            dofs.extend(b.cell_dofs(cell).iter().map(|&g| off + b.global_index(c, g)));
        }
    }
    dofs
}

fn cell_block(fe: &FeContext, blocks: &[&DofMap], offsets: &[usize], integrand: &dyn LsIntegrand, cell: usize, with_matrix: bool) -> CellBlock {
    let ncomp = integrand.n_components();
    let nl = integrand.n_local();
    let ctx = fe.cell(cell, &integrand.kinds());
    let mut ops = vec![0.0; nl * ncomp];
    let mut r = vec![0.0; ncomp];
    let mut matrix = vec![0.0; if with_matrix { nl * nl } else { 0 }];
    let mut rhs = vec![0.0; if with_matrix { nl } else { 0 }];
    let mut norms = vec![0.0; ncomp];
    for q in 0..ctx.n_points {
        let w = ctx.jxw[q];
        r.iter_mut().for_each(|v| *v = 0.0);
        if with_matrix {
            ops.iter_mut().for_each(|v| *v = 0.0);
            integrand.evaluate(&ctx, q, Some(&mut ops), &mut r);
            for i in 0..nl {
                let li = &ops[i * ncomp..(i + 1) * ncomp];
                rhs[i] -= w * li.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
                for j in i..nl {
                    let lj = &ops[j * ncomp..(j + 1) * ncomp];
                    matrix[i * nl + j] += w * li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        } else {
            integrand.evaluate(&ctx, q, None, &mut r);
        }
        for (n, v) in norms.iter_mut().zip(&r) {
            *n += w * v * v;
        }
    }
    if with_matrix {
        for i in 0..nl {
            for j in 0..i {
                matrix[i * nl + j] = matrix[j * nl + i];
            }
        }
    }
    let dofs = if with_matrix { local_to_global(blocks, offsets, cell) } else { Vec::new() };
    CellBlock { dofs, matrix, rhs, norms }
}

fn check_dims(blocks: &[&DofMap], integrand: &dyn LsIntegrand) -> Result<()> {
    let expected: usize = blocks.iter().map(|b| b.n_local()).sum();
    if expected != integrand.n_local() {
        return Err(Error::DimensionMismatch { expected, found: integrand.n_local() });
    }
    Ok(())
}

/// Assembles `Σ_T Σ_q w (L φ_i)·(L φ_j)` and `-Σ w r·(L φ_i)` over all cells.
pub fn assemble_ls(fe: &FeContext, blocks: &[&DofMap], integrand: &dyn LsIntegrand) -> Result<LsSystem> {
    let cells: Vec<usize> = (0..fe.n_cells()).collect();
    assemble_ls_cells(fe, blocks, integrand, &cells)
}

/// [`assemble_ls`] restricted to a subset of cells, with the global numbering
/// of the full mesh.
pub fn assemble_ls_cells(
    fe: &FeContext,
    blocks: &[&DofMap],
    integrand: &dyn LsIntegrand,
    cells: &[usize],
) -> Result<LsSystem> {
    check_dims(blocks, integrand)?;
    let (offsets, n) = block_offsets(blocks);
    // parallel over cells, collected in cell order; the scatter below is serial
    let locals: Vec<CellBlock> =
        cells.par_iter().map(|&c| cell_block(fe, blocks, &offsets, integrand, c, true)).collect();
    let nl = integrand.n_local();
    let mut triplets = Vec::with_capacity(locals.len() * nl * nl);
    let mut rhs = vec![0.0; n];
    let mut norms = vec![0.0; integrand.n_components()];
    for cb in &locals {
        for (i, &gi) in cb.dofs.iter().enumerate() {
            rhs[gi] += cb.rhs[i];
            for (j, &gj) in cb.dofs.iter().enumerate() {
                triplets.push((gi, gj, cb.matrix[i * nl + j]));
            }
        }
        for (a, b) in norms.iter_mut().zip(&cb.norms) {
            *a += b;
        }
    }
    let matrix = CsrMatrix::from_triplets(n, triplets);
    Ok(LsSystem { system: SparseSystem::new(matrix, rhs), residual_norms: norms })
}

/// Per-component `∫ |r_c|²` without forming the normal equations.
pub fn residual_norms(fe: &FeContext, integrand: &dyn LsIntegrand) -> Vec<f64> {
    let locals: Vec<Vec<f64>> =
        (0..fe.n_cells()).into_par_iter().map(|c| cell_block(fe, &[], &[], integrand, c, false).norms).collect();
    let mut norms = vec![0.0; integrand.n_components()];
    for l in &locals {
        for (a, b) in norms.iter_mut().zip(l) {
            *a += b;
        }
    }
    norms
}
