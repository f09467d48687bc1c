//! Radial variational toolkit for the Schrödinger–Bopp–Podolsky system:
//! discretisation, the electrostatic potential, the energy and its fiber
//! maps, extremal charge estimates, critical-point solvers and an invariant
//! suite.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod exec;
pub mod extremal;
pub mod fibering;
pub mod grid;
pub(crate) mod optimizer;
pub mod params;
pub mod potential;
pub mod profiles;
pub mod solve;
pub mod verify;
