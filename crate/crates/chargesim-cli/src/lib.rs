//! Orchestration layer: declarative experiment configs in, deterministic
//! simulation and analysis artifacts out.
//!
//! The binary in `main.rs` is a thin shell over these modules so that the
//! whole pipeline, including the acceptance suite, is callable from tests.

pub mod acceptance;
pub mod config;
pub mod manifest;
pub mod runner;
