//! The movie advisor service: persistent accounts, search sessions with
//! feedback, the HTTP/JSON API, and the batch commands behind the `diva`
//! binary.

pub mod advisor;
pub mod api;
pub mod commands;
pub mod store;

pub use advisor::{Advisor, AdvisorConfig, ServiceError};
pub use store::{Store, StoreError};
