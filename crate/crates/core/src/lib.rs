pub mod altgdmin;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod operators;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod sampling;
pub mod tracking;

pub use error::{Error, Result};
