//! Lévy–Khintchine triplets with polar Lévy measures, the classes `K_alpha`,
//! and the stochastic-integral mappings `Phi_alpha^{m+1}` as exact triplet
//! transforms, cross-checked by Monte Carlo.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ell;
pub mod error;
pub mod ext;
pub mod kernel;
pub mod membership;
pub mod phi;
pub mod quad;
pub mod radial;
pub mod sim;
pub mod special;
pub mod tol;
pub mod triplet;

pub use error::{Error, Result};
pub use ext::ExtReal;
pub use tol::Tolerances;
