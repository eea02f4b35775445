//! File formats, reports and the command-line interface over `pqk-core`.

pub mod cli;
pub mod doc;

pub use doc::{InputError, StateDocument, SystemDocument};
