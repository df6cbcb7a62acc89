//! Time-domain boundary-element solver for electromagnetic scattering from
//! perfectly conducting surfaces.
//!
//! The electric field integral equation is discretised in space with RWG and
//! Buffa-Christiansen functions and in time with Runge-Kutta (Radau IIA)
//! convolution quadrature. Three marching schemes are provided: the
//! time-differentiated equation, a quasi-Helmholtz rescaled baseline and a
//! Calderon-preconditioned scheme that is well conditioned for large time
//! steps and dense meshes and free of DC instabilities.

pub mod basis;
pub mod config;
pub mod constants;
pub mod cq;
pub mod error;
pub mod excitation;
pub mod experiments;
pub mod formulations;
pub mod linalg;
pub mod mesh;
pub mod mot;
pub mod operators;
pub mod quadrature;
pub mod singular;

pub use error::{Error, Result};
