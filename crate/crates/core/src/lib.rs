//! Spreadsheet audit toolkit.
//!
//! The crate is organised bottom-up: [`model`] holds the workbook grid,
//! [`formula`] parses and normalises formulas, [`graph`] derives precedent
//! chains, [`engine`] evaluates, and the remaining modules build on those:
//! rule checks, the cell-error-rate risk model, inspection planning, seeded
//! corpora with Monte Carlo oracles, and cell-level change control.

pub mod formula;
pub mod model;
pub mod graph;
pub mod engine;
pub mod rules;
pub mod risk;
pub mod inspect;
pub mod simlab;
pub mod diffcheck;
