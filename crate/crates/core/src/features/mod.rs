//! Target- and grid-based features for motion classification.

mod grid;
mod hog;
mod moments;

pub use grid::{grid_transform, write_pgm, DopplerGrid, GridConfig, GridError};
pub use hog::{hog, HogDescriptor, HogError, DEFAULT_BINS};
pub use moments::{moment_features, MomentFeatures};
