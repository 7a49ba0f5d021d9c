//! Secret key rates for continuous-variable measurement-device-independent
//! QKD over terahertz MIMO links.

pub mod asymptotic;
pub mod channel;
pub mod driver;
pub mod estimators;
pub mod config;
pub mod error;
pub mod finite;
pub mod numeric;

pub use error::{Error, Result};
