//! Finite-horizon LQG control through its covariance SDP and dual.
//!
//! The crate solves the same control problem three ways: the backward
//! Riccati recursion ([`riccati`]), a primal covariance-bound SDP and its
//! Lagrangian dual ([`sdp`]), both handed to a first-order conic solver
//! ([`solver`]). A structured relaxation restricts gains to block-diagonal
//! (decentralized) form. [`sim`] checks any gain schedule by Monte Carlo.

pub mod cli;
pub mod design;
pub mod error;
pub mod files;
pub mod matrix;
pub mod model;
pub mod riccati;
pub mod sdp;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::SymMatrix;
pub use model::{GainSchedule, LqgProblem, Partition};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problem.md")]
    mod problem {}
    #[doc = include_str!("../../../book/src/riccati.md")]
    mod riccati {}
    #[doc = include_str!("../../../book/src/sdp.md")]
    mod sdp {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/decentralized.md")]
    mod decentralized {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
