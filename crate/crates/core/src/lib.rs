//! Pedestrian height estimation and motion classification from sparse radar
//! targets.

pub mod bundle;
pub mod data;
pub mod dataset;
pub mod dictionary;
pub mod eval;
pub mod features;
pub mod forest;
pub mod gait_spectrum;
pub mod height;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sim;
pub mod trajectory;
