//! Adaptive finite elements for the electrically and flexoelectrically
//! coupled Frank-Oseen liquid crystal model on quadrilateral meshes.

pub mod adapt;
pub mod assembly;
pub mod bench;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod mesh;
pub mod physics;
pub mod solver;
pub mod vtk;

pub use error::{Error, Result};
