//! REST service, peer transport and command-line plumbing for dvspace.

pub mod config;
pub mod error;
pub mod http;
pub mod ops;
pub mod peer;

pub use config::ServiceConfig;
pub use error::ApiError;
pub use ops::Service;
