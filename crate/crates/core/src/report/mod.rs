//! CSV and SVG artifacts, figure sweeps and the validation suite.

pub mod csv;
pub mod figures;
pub mod svg;
pub mod validate;

pub use csv::{write_atomic, Table};
