//! Physics-driven neural network solver for 2-D TM electromagnetic inverse
//! scattering.
//!
//! A single fully connected layer with the trainable GLOW activation maps a
//! fixed initial estimate to the permittivity map. The network is trained
//! against a physics loss (data misfit through a method-of-moments forward
//! model, a lower-bound penalty and total variation) with adjoint-state
//! gradients and Adam, while the set of cells entering the forward solve is
//! refined during training.

pub mod bessel;
pub mod em;
mod error;
pub mod inversion;
pub mod linalg;
pub mod net;
pub mod objective;
pub mod par;
pub mod scenario;
pub mod subregion;

pub use error::{Error, Result};

pub use em::{MeasurementSet, PermittivityMap, Setup};
pub use inversion::{invert, InversionConfig, ReconstructionResult};
pub use net::{Activation, NetworkParams};
pub use subregion::BinaryMask;
