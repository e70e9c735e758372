//! Discrete spaces and coefficient vectors for one time level.

use serde::{Deserialize, Serialize};

use crate::assembly::{DofMap, Space};
use crate::elements::ElementKind;
use crate::error::Result;
use crate::mesh::Mesh;

/// Stress/velocity element pair. Tracers are always continuous P1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ElementPair {
    #[default]
    #[serde(rename = "rt0-p1")]
    Rt0P1,
    #[serde(rename = "rt1-p2")]
    Rt1P2,
}

impl std::fmt::Display for ElementPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rt0P1 => "rt0-p1",
            Self::Rt1P2 => "rt1-p2",
        })
    }
}

impl ElementPair {
    pub fn stress(self) -> ElementKind {
        match self {
            Self::Rt0P1 => ElementKind::Rt0,
            Self::Rt1P2 => ElementKind::Rt1,
        }
    }

    pub fn velocity(self) -> ElementKind {
        match self {
            Self::Rt0P1 => ElementKind::P1,
            Self::Rt1P2 => ElementKind::P2,
        }
    }
}

/// Dof maps of the stress rows, velocity components and scalar tracers.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub pair: ElementPair,
    pub sigma: DofMap,
    pub u: DofMap,
    pub tracer: DofMap,
}

impl Spaces {
    pub fn new(mesh: &Mesh, pair: ElementPair) -> Result<Self> {
        Ok(Self {
            pair,
            sigma: DofMap::new(mesh, Space::new(pair.stress(), 2))?,
            u: DofMap::new(mesh, Space::new(pair.velocity(), 2))?,
            tracer: DofMap::new(mesh, Space::scalar(ElementKind::P1))?,
        })
    }

    /// Length of the stacked momentum unknown `[σ | u]`.
    pub fn n_momentum(&self) -> usize {
        self.sigma.n_global() + self.u.n_global()
    }
}

/// Coefficients of `(σ, u, A, H)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFields {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub a: Vec<f64>,
    pub h: Vec<f64>,
}

impl StateFields {
    /// Stacked `[σ | u]`.
    pub fn momentum(&self) -> Vec<f64> {
        let mut x = self.sigma.clone();
        x.extend_from_slice(&self.u);
        x
    }

    pub fn set_momentum(&mut self, x: &[f64]) {
        let ns = self.sigma.len();
        self.sigma.copy_from_slice(&x[..ns]);
        self.u.copy_from_slice(&x[ns..]);
    }

    pub fn is_finite(&self) -> bool {
        [&self.sigma, &self.u, &self.a, &self.h].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
