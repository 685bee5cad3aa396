pub mod dgp;
pub mod did;
pub mod economy;
pub mod error;
pub mod numerics;
pub mod panel;
pub mod synth;

pub use error::{Error, Result};
