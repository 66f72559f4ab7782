//! Particle-in-cell solver for the electrostatic Vlasov-Poisson system on
//! periodic Cartesian domains in one and two spatial dimensions.
//!
//! Two schemes share the same pipeline (deposit, field solve, gradient,
//! interpolate, push, remap) and differ only in the pieces bound to the order:
//!
//! | order | transfer kernel | Laplacian / gradient | push         | remap kernel |
//! |-------|-----------------|----------------------|--------------|--------------|
//! | 2     | `W2` (CIC)      | 3-point / centered   | RK2          | `W3`         |
//! | 4     | `W4`            | 5-point / 4th-order  | 3-stage RK4  | `W6`         |

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod integrator;
pub mod kernels;
pub mod particles;
pub mod problems;
pub mod remap;

pub use error::{Error, Result};
pub use field::{Mesh, MultigridConfig, Order, ScalarField, VectorField};
pub use kernels::KernelId;
pub use particles::{ParticleSet, PhaseSpaceGridSpec};
