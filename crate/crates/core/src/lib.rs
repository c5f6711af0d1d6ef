//! Punctured fatgraphs with decorations, filtered screens, partially paired
//! fatgraphs and the nest calculus on stratum graphs, together with the
//! enumeration of the resulting cell complex for small surfaces.

pub mod census;
pub mod coords;
pub mod error;
pub mod fatgraph;
pub mod limits;
pub mod orient;
pub mod pairing;
pub mod rational;
pub mod screens;
pub mod strata;

pub use error::{Error, Result};
pub use fatgraph::{EdgeSet, Fatgraph, SurfaceType};
pub use rational::Q;
