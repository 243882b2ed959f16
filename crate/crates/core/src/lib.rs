//! Design, certification, scheduling and execution of frugal resolvent
//! splitting methods for monotone inclusions `0 ∈ Σ A_i(x)`.
//!
//! A method is described by a [`design::Design`]: a consensus matrix `W`,
//! a coupling matrix `Z` (with its strictly lower part `L` giving the
//! resolvent dependency order) and a step size. Designs can be built from
//! presets, optimized by semidefinite programs ([`sdpdesign`]), selected by
//! branch-and-bound over sparsity patterns ([`discrete`]), certified by
//! performance estimation ([`pep`]), timed ([`sched`]) and executed
//! ([`runtime`]).

extern crate openblas_src;

pub mod conic;
pub mod design;
pub mod discrete;
pub mod error;
pub mod experiments;
pub mod factor;
pub mod linalg;
pub mod par;
pub mod pep;
pub mod runtime;
pub mod sched;
pub mod sdpdesign;

pub use design::Design;
pub use error::{Error, Result};
