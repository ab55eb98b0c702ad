//! Virtual towing tank service: catalogue, orchestration, job pipeline,
//! result handling, HTTP API and command line.

pub mod api;
pub mod blobs;
pub mod catalogue;
pub mod cli;
pub mod clock;
pub mod config;
pub mod error;
pub mod fields;
pub mod inp;
pub mod machine;
pub mod model;
pub mod notify;
pub mod orchestrator;
pub mod pipeline;
pub mod rangerun;
pub mod results;
pub mod search;
pub mod service;
pub mod setup;
pub mod store;

pub use error::{Error, Result};
