//! Numerical laboratory for random perturbations of standard-map-like
//! area-preserving torus maps: orbit simulation of the position and
//! projectivized Markov chains, Lyapunov exponent estimation, and
//! statistical verification of transition-density, cone-propagation,
//! symbolic-grammar and measure-concentration properties at desk scale.

pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod fd;
pub mod lyapunov;
pub mod regions;
pub mod report;
pub mod scalar_maps;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
pub use scalar_maps::{standard_map_f, CircleMap, CriticalData, Psi};
pub use torus::{Jacobian2, NoiseTriple, ProjPoint, TorusPoint};
