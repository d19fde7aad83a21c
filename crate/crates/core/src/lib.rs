pub mod dynsys;
pub mod error;
pub mod analysis;
pub mod benchgen;
pub mod linalg;
pub mod nonlinear;
pub mod projection;
pub mod stabilize;

pub use error::{Error, Result};
