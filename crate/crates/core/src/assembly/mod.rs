//! Degrees of freedom, least-squares assembly, boundary conditions and SPD solvers.

mod assemble;
mod dofmap;
mod fe;
mod solve;
mod sparse;

pub use assemble::{assemble_ls, assemble_ls_cells, block_offsets, residual_norms, LsIntegrand, LsSystem};
pub use dofmap::{build_dofmap, DofMap, Space};
pub use fe::{
    cell_signs, integrate_lagrange, interpolate_lagrange, interpolate_rt, max_normal_jump, vertex_average,
    CellContext, FeContext, Tabulation,
};
pub use solve::{pcg, solve_spd, solve_spd_many, LinearSolver, SolveStats, SolverOptions, AUTO_DIRECT_MAX_MESH};
pub use sparse::{apply_dirichlet, CsrMatrix, SparseSystem};
