use serde::{Deserialize, Serialize};

use crate::elements::{ElementKind, Family};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// A finite element family/degree with a vector multiplicity. Raviart-Thomas
/// spaces with two components hold the two rows of a tensor field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Space {
    pub element: ElementKind,
    pub components: usize,
}

impl Space {
    pub fn new(element: ElementKind, components: usize) -> Self {
        Self { element, components }
    }

    pub fn scalar(element: ElementKind) -> Self {
        Self::new(element, 1)
    }
}

/// Local-to-global numbering for one space. Global index of scalar dof `g`
/// in component `c` is `c * n_scalar + g`.
#[derive(Debug, Clone)]
pub struct DofMap {
    space: Space,
    n_scalar: usize,
    n_basis: usize,
    cell_dofs: Vec<usize>,
    cell_signs: Vec<f64>,
    boundary: Vec<bool>,
}

pub fn build_dofmap(mesh: &Mesh, space: Space) -> Result<DofMap> {
    DofMap::new(mesh, space)
}

impl DofMap {
    pub fn new(mesh: &Mesh, space: Space) -> Result<Self> {
        if !(1..=2).contains(&space.components) {
            return Err(Error::Unsupported(format!("{} components", space.components)));
        }
        let (nv, ne, nt) = (mesh.n_vertices(), mesh.n_edges(), mesh.n_triangles());
        let n_basis = space.element.n_basis();
        let mut cell_dofs = Vec::with_capacity(nt * n_basis);
        let mut cell_signs = Vec::with_capacity(nt * n_basis);
        let boundary_vertices = mesh.boundary_vertices();
        let boundary_edges: Vec<bool> = (0..ne).map(|e| mesh.is_boundary_edge(e)).collect();

        let (n_scalar, boundary) = match space.element {
            ElementKind::P1 => {
                for t in 0..nt {
                    cell_dofs.extend(mesh.triangle(t));
                    cell_signs.extend([1.0; 3]);
                }
                (nv, boundary_vertices)
            }
            ElementKind::P2 => {
                for t in 0..nt {
                    cell_dofs.extend(mesh.triangle(t));
                    cell_dofs.extend(mesh.triangle_edges(t).map(|e| nv + e));
                    cell_signs.extend([1.0; 6]);
                }
                let mut b = boundary_vertices;
                b.extend(&boundary_edges);
                (nv + ne, b)
            }
            ElementKind::Rt0 => {
                for t in 0..nt {
                    cell_dofs.extend(mesh.triangle_edges(t));
                    cell_signs.extend(mesh.triangle_edge_signs(t));
                }
                (ne, boundary_edges)
            }
            ElementKind::Rt1 => {
                for t in 0..nt {
                    let edges = mesh.triangle_edges(t);
                    let signs = mesh.triangle_edge_signs(t);
                    for i in 0..3 {
                        cell_dofs.extend([2 * edges[i], 2 * edges[i] + 1]);
                        // the odd moment flips sign twice (normal and parametrization)
                        cell_signs.extend([signs[i], 1.0]);
                    }
                    cell_dofs.extend([2 * ne + 2 * t, 2 * ne + 2 * t + 1]);
                    cell_signs.extend([1.0, 1.0]);
                }
                let mut b: Vec<bool> = boundary_edges.iter().flat_map(|&f| [f, f]).collect();
                b.extend(std::iter::repeat_n(false, 2 * nt));
                (2 * ne + 2 * nt, b)
            }
        };
        Ok(Self { space, n_scalar, n_basis, cell_dofs, cell_signs, boundary })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn family(&self) -> Family {
        self.space.element.family()
    }

    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    pub fn n_global(&self) -> usize {
        self.n_scalar * self.space.components
    }

    /// Scalar basis functions per cell.
    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Local degrees of freedom per cell across all components.
    pub fn n_local(&self) -> usize {
        self.n_basis * self.space.components
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_dofs[cell * self.n_basis..(cell + 1) * self.n_basis]
    }

    pub fn cell_signs(&self, cell: usize) -> &[f64] {
        &self.cell_signs[cell * self.n_basis..(cell + 1) * self.n_basis]
    }

    pub fn global_index(&self, component: usize, scalar: usize) -> usize {
        component * self.n_scalar + scalar
    }

    pub fn is_boundary_scalar(&self, scalar: usize) -> bool {
        self.boundary[scalar]
    }

    pub fn is_boundary(&self, global: usize) -> bool {
        global < self.n_global() && self.boundary[global % self.n_scalar]
    }

    /// All boundary dofs over every component, ascending.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.space.components)
            .flat_map(|c| {
                self.boundary
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(move |(g, _)| c * self.n_scalar + g)
            })
            .collect()
    }
}
