//! Numerical study of the Dicke model in the dispersive and deep-strong
//! coupling regimes: frame transformations, effective resonant models,
//! photon-resonance chains and off-resonant depopulation analysis.

pub mod analysis;
pub mod chains;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod hamiltonians;
pub mod hilbert;
pub mod propagate;

pub use error::{Error, Result};
pub use hamiltonians::{Frame, ModelConfig};
pub use hilbert::{HalfInteger, OperatorMatrix, SpinBosonBasis, StateVector, C64};
