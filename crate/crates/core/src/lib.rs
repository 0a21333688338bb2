//! Simulation of a two-photon, high-dimensional Hong-Ou-Mandel test that
//! compares two unitary modules `W` and `V` through the overlap of their
//! Choi states.
//!
//! The pipeline is: encode each unitary as a maximally entangled path/time
//! state, interfere the two states on a bank of beamsplitters, count bunching
//! events and turn the bunching rate into a gate fidelity with a confidence
//! interval. A qubit SWAP-test variant and a model of the two-port chip
//! modules sit alongside.

pub mod chip;
pub mod choi;
pub mod error;
pub mod hom;
pub mod io;
pub mod linalg;
pub mod qubit;
pub mod rng;
pub mod stats;

use serde::{Deserialize, Serialize};

pub use num_complex::Complex64;

pub use crate::chip::{mzi_from_unitary, unitary_from_mzi, MziSettings, ModulePairRecord};
pub use crate::choi::{encode_choi, fidelity_chain, ChoiState, FidelityReport};
pub use crate::error::{Error, Result};
pub use crate::hom::{bunching_probability, Beamsplitter};
pub use crate::io::{load_unitary, save_unitary, LoadOptions, UnitaryJson};
pub use crate::linalg::{haar_random_unitary, nearest_unitary, ComplexMatrix, PureState, UnitaryMatrix};
pub use crate::rng::RandomStream;
pub use crate::stats::{EventTally, FidelityEstimate, PlanMethod, SamplePlan};

/// Which side of the interferometer the two photons left on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    /// Both photons on the same output rail.
    Bunching,
    AntiBunching,
}
