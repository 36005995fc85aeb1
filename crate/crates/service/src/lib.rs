//! Live capture service for the tactile skin: a single-writer session state
//! machine, device sources, the HTTP/SSE API and the offline subcommands of
//! the `tactile` tool.

pub mod commands;
pub mod http;
pub mod live;
pub mod runtime;
pub mod source;

pub use live::{LiveEvent, LiveSession, Phase, ServiceError, SessionState};
pub use runtime::{spawn_service, ServiceConfig, ServiceHandle, SessionSummary, LOG_DIR_ENV};
pub use source::{open_source, SimSource, SourceSpec};
