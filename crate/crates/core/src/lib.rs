//! Event-level rumor detection with word attention, author context and a
//! convolutional event classifier.

mod binfmt;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod users;

pub use error::{Error, Result};
