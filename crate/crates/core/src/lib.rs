//! Ground states, linear stability, and propagation of nematicons: optical
//! solitons of the coupled Schrödinger and director-angle system
//!
//! ```text
//! i ∂_z u + ½ Δu + u sin 2θ = 0,      -λ Δθ + q sin 2θ = 2 |u|² cos 2θ.
//! ```

pub mod analysis;
pub mod angle;
pub mod energy;
pub mod evolution;
pub mod error;
pub mod grid;
pub mod io;
pub mod groundstate;
pub mod linalg;
pub mod nehari;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{
    Field, Field2D, Geometry, InnerProduct, PlaneGrid, RadialField, RadialGrid, RealField2D, Scalar,
};
pub use energy::{EnergyReport, MediumParams};
