//! Numerical toolkit for crown-shaped sign-changing solutions of the critical
//! Lane–Emden equation on a ball with a small hole.

pub mod appendix;
pub mod crown;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod field;
pub mod fit;
pub mod geometry;
pub mod kelvin;
pub mod probes;
pub mod projection;

pub use error::{Error, Result};
pub mod quadrature;
pub mod reduced;
