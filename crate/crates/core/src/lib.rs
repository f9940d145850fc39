pub mod cluster;
pub mod error;
pub mod kg;
pub mod populate;
pub mod providers;
pub mod refine;
pub mod schema;
pub mod skr;
pub mod text;

pub use error::{Error, ErrorCategory, Result};
