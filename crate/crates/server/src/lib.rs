//! HTTP API and command-line front end for `seqlod-core`.

pub mod api;
pub mod engine;
pub mod svg;

pub use api::{router, API_VERSION};
pub use engine::{BuildStatus, Dataset, Engine, EngineError};
