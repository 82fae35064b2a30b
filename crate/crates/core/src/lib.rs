#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Rational compression of Dirichlet-to-Neumann maps into complex
//! finite-difference grids.

pub mod gridgen;
pub mod harness;
pub mod numerics;
pub mod operators;
pub mod rkfit;
pub mod rkspace;
