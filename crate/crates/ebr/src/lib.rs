//! The analysis service: persistence, the staged pipeline, reports, the HTTP
//! API and the `ebr` command line, on top of `ebr-core`.

pub mod bundle;
pub mod files;
pub mod http;
pub mod pipeline;
pub mod repository;
pub mod report;
pub mod service;
pub mod store;
