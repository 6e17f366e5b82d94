pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod forward;
pub mod io;
pub mod lf;
pub mod net;
pub mod patterns;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
