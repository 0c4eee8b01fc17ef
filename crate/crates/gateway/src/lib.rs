//! HTTP service and command line for valrank.
//!
//! [`service::Service`] holds the single-writer state; [`http`] maps it to
//! JSON endpoints and [`cli`] to subcommands. Both render responses through
//! [`service::render`], so an HTTP body and the `--json` output of the
//! matching command are the same bytes.

pub mod cli;
pub mod error;
pub mod http;
pub mod service;

pub use error::ApiError;
pub use service::{Service, ServiceConfig};
