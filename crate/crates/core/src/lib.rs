//! Compact retinal OCT classifier built from scratch, with the data
//! pipeline, training loop, metrics, and LIME / Grad-CAM explanations
//! around it.

pub mod class;
pub mod data;
pub mod error;
pub mod gradcam;
pub mod gradcheck;
pub mod lime;
pub mod net;
pub mod synthetic;
pub mod ops;
pub mod render;
pub mod tensor;
pub mod train;

pub use class::{Class, NUM_CLASSES};
pub use error::{Error, Result};
pub use net::{OctNet, Network};
pub use tensor::{Element, Tensor};
