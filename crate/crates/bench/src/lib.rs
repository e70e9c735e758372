//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seaice_core::assembly::FeContext;
use seaice_core::constitutive::PhysParams;
use seaice_core::scenario::{initial_state, InitialCondition};
use seaice_core::state::{ElementPair, Spaces, StateFields};
use seaice_core::Mesh;

/// Scenario initial state on an `n × n` mesh, with a small random interior
/// velocity so the rheology is away from the rest state.
pub struct Fixture {
    pub mesh: Mesh,
    pub spaces: Spaces,
    pub params: PhysParams,
    pub state: StateFields,
}

impl Fixture {
    pub fn new(n: usize, pair: ElementPair) -> Self {
        let mesh = Mesh::build_structured(n).expect("mesh");
        let spaces = Spaces::new(&mesh, pair).expect("spaces");
        let params = PhysParams::default();
        let fe = FeContext::new(&mesh, 1.0, 4).expect("fe");
        let mut state = initial_state(&fe, &spaces, &InitialCondition::default(), &params).expect("initial state");
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for (i, u) in state.u.iter_mut().enumerate() {
            if !spaces.u.is_boundary(i) {
                *u = rng.random_range(-1e-3..1e-3);
            }
        }
        Self { mesh, spaces, params, state }
    }

    pub fn fe(&self) -> FeContext<'_> {
        FeContext::new(&self.mesh, 1.0, 4).expect("fe")
    }
}
