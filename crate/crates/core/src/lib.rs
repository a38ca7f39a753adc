//! Attribute spaces and intersection search.
//!
//! The crate estimates an attribute space from labeled vectors (a small
//! autoencoder trained with reconstruction, attribute-classification and
//! aspect-gap losses), searches for points where several attributes meet by
//! iterated weighted K-nearest-neighbor averaging, and analyzes the geometry
//! with PCA projections, kernel density grids and center reports.

pub mod analyze;
pub mod error;
pub mod intersect;
pub mod neighbors;
pub mod points;
pub mod rng;
pub mod space;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use points::PointMatrix;
pub use space::{AttributeId, AttributeSchema, AttributeSpace, LabeledPoint};
