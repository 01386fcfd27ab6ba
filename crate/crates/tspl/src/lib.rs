//! Pseudo-spectral random operator splitting for the Allen-Cahn equation in
//! a divergence-free background flow on the periodic torus.
//!
//! The crate solves
//!
//! ```text
//! du/dt + v(x) . grad u = nu Laplacian(u) - (u^3 - u)
//! ```
//!
//! on [0, L)^2 by composing the exact flows of the three terms in an
//! independently drawn random order each time step, and ships the machinery
//! to measure how fast that scheme converges: an exponential-midpoint
//! reference integrator, Monte Carlo ensembles for the expected single-run
//! error and the bias, a local-truncation laboratory, and a CLI harness that
//! reproduces the convergence plots.
//!
//! See the book under `book/` for a guided tour; its code snippets are
//! compiled as doc-tests of this crate.

pub mod config;
pub mod ensemble;
pub mod error;
mod fft;
pub mod field;
pub mod flow;
pub mod grid;
pub mod harness;
pub mod norms;
pub mod operators;
pub mod plot;
pub mod reference;
pub mod semigroups;
pub mod splitting;
pub mod truncation;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Field, Representation};
pub use flow::{divergence, FlowField};
pub use grid::TorusGrid;
pub use norms::{norm_wkp, Exponent};
pub use operators::{apply_advection, apply_diffusion, apply_poly, apply_reaction, ExpansionTerm, ModelParams};
pub use semigroups::{advect_step, heat_step, react_step, semigroup_step, SemigroupId};
pub use splitting::{
    evolve, fixed_split_step, mean_split_step, random_split_step, symmetric_split_step,
    PermutationStream, SchemeKind, SchemeSpec,
};

#[cfg(doctest)]
mod book;
