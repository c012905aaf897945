//! Pseudospectral laboratory for fractional nonlinear wave equations
//! `u_tt + D^{2 alpha} u + f(u) = 0` on the torus `T^d`, `d = 1, 2`.
//!
//! The crate provides Fourier-coefficient fields and projectors
//! ([`spectral`]), Gaussian and Gibbs random data ([`random`], [`gibbs`]),
//! a kick-rotate-kick integrator with exact linear rotation ([`dynamics`]),
//! the periodic ODE profiles behind norm-inflation data ([`inflation`]),
//! statistical tests ([`stats`]), configuration files ([`config`]) and the
//! experiment runners ([`experiments`]).

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod inflation;
pub mod random;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
