// SPDX-License-Identifier: Apache-2.0
//! Open-system simulator for driven cavity-QED with qubit cloaking.
//!
//! A cavity drive displaces the intracavity field; a matched tone on the qubit
//! port cancels the coherent part of that field as seen by the qubit, so the
//! qubit couples only to vacuum fluctuations. The crate provides the operator
//! algebra, the model variants, tone synthesis, a Lindblad integrator and the
//! measurement and gate protocols built on top of them.
//!
//! Units: frequencies are angular (rad/ns) and times are ns everywhere inside
//! the library. Conversion from GHz/MHz happens in [`units`] and in the CLI
//! scenario parser only.

pub mod cli;
pub mod cloaking;
pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod ode;
pub mod optimize;
pub mod protocols;
pub mod transmon;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
