//! Dynamical-systems verification of deterministic control policies.
//!
//! A policy coupled with its environment is treated as an autonomous map
//! `s_{k+1} = f(s_k)`. From that map the crate computes finite-time Lyapunov
//! exponent (FTLE) fields, final-state density maps, the MBR / ASAS / TASAS
//! safety metrics and local (δ, ε) stability certificates.
//!
//! ```
//! use ftle_verify::env::{builtin_layout, GridSystem};
//! use ftle_verify::policy::{make_scripted, ScriptedRule};
//! use ftle_verify::ftle::compute_ftle_field;
//!
//! let world = builtin_layout("simple_wall").unwrap();
//! let policy = make_scripted(&ScriptedRule::ShortestPath, &world).unwrap();
//! let sys = GridSystem::new(world, policy);
//! let field = compute_ftle_field(&sys, 30, 1.0).unwrap();
//! assert!(field.valid_values().all(f64::is_finite));
//! ```

pub mod attractor;
pub mod certificate;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod experiment;
pub mod ftle;
pub mod io;
pub mod metrics;
pub mod policy;
pub mod state;

pub use error::{Error, Result};
pub use state::{Cell, StateVector};
