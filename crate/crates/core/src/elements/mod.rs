//! Reference elements, quadrature and reference-to-physical maps.

mod geometry;
mod quadrature;
mod reference;

pub use geometry::{piola_push, GeometryMap};
pub use quadrature::{gauss_legendre, quadrature, QuadratureRule};
pub use reference::{
    eval_lagrange, eval_rt, lagrange_nodes, reference_edge, reference_normal, reference_vertex,
    rt_reference_dofs, ElementKind, Family, LagrangeEval, RtEval,
};
