pub mod density;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod hjb;
pub mod microsim;
pub mod model;
pub mod network;
pub mod nls;
pub mod tridiag;

pub use error::{Error, Result};
