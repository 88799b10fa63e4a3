//! Deterministic data plumbing for mapping province-level poverty from
//! satellite imagery: nightlight/population grid extraction, overhead
//! image annotation preparation and chip sampling, detection evaluation,
//! and ridge regression over per-province object counts.
//!
//! Everything outside the object detector itself lives here. All
//! randomized stages draw from a counter-based generator keyed by an
//! explicit seed and a stage label, so identical inputs and seeds give
//! byte-identical outputs on every platform.

pub mod annotations;
pub mod config;
pub mod deteval;
pub mod error;
pub mod etl;
pub mod geo;
pub mod gmm;
pub mod grid;
pub mod raster;
pub mod ridge;
pub mod sampler;
pub mod seed;
pub mod table;

pub use error::{Error, Result};
