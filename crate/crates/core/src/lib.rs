//! Multiscale analysis of weighted point clouds: density differences,
//! square functions, dyadic martingales, Calderón–Zygmund decompositions
//! and tangent blowups.

pub mod cz;
pub mod density;
pub mod diagnostics;
pub mod dyadic;
pub mod error;
pub mod generators;
pub mod index;
pub mod io;
pub mod measure;
pub mod numeric;
pub mod tangent;

pub use density::ScaleGrid;
pub use error::{Error, Result};
pub use generators::{GeneratedMeasure, MeasureMeta};
pub use measure::{DiscreteMeasure, Region, SignedMeasure};
