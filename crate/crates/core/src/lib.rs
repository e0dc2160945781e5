//! Finite-sample verification workbench for Cuntz-Pimsner algebras of
//! vector bundles over sampled compact spaces.

pub mod error;
pub mod linalg;
pub mod space;
pub mod bundle;
pub mod cpalg;
pub mod report;
pub mod symmetry;
pub mod groups;
pub mod crossed;
pub mod ncpullback;

pub use error::{Error, Result};
