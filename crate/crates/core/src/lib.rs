//! Explicit solver and verification harness for the nonlinear heat
//! p-sub-Laplacian
//!
//! ```text
//! u_t − L_p u = −γ|u|^{β−1}u + α|u|^{q−2}u   in Ω,   u = 0 on ∂Ω,
//! ```
//!
//! on stratified (Carnot) groups, together with the algebraic kernels and
//! the exponential barrier used to check the comparison principle and
//! global-in-time boundedness numerically.

pub mod barrier;
pub mod calculus;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod group;
pub mod inequalities;
mod power;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
