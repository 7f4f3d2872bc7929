pub mod error;
pub mod impact;
pub mod lipm;
pub mod maxvel;
pub mod optim;
pub mod polytope;
pub mod report;
pub mod region;
pub mod stance;
pub mod wrench;

pub use error::{Error, ErrorClass, Result};
