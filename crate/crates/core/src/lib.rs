pub mod ambient;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod optimizer;
pub mod sampling;
pub mod snn;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};
