pub mod error;
pub mod geo;

pub use error::{Error, Result};
pub mod rng;
pub mod scene;
pub mod render;
pub mod imageio;
pub mod gan;
pub mod ismap;
pub mod dataset;
