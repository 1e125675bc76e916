//! Morley finite elements for the von Karman plate obstacle problem.

#![cfg_attr(test, allow(clippy::needless_range_loop, clippy::type_complexity))]

pub mod config;
pub mod error;
pub mod expr;
pub mod forms;
pub mod mesh;
pub mod morley;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod study;
pub mod svg;

pub use error::{Error, Result};
