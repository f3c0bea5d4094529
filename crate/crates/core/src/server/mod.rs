//! Websocket sync server: control plane as text frames, pose plane as
//! binary frames, plus health, metrics and asset endpoints.

mod config;
mod connection;
mod http;
mod hub;
pub mod metrics;

use thiserror::Error;

pub use config::{
    serve_main, start, RunningServer, ServerArgs, ServerConfig, DEFAULT_PORT, EXIT_BAD_CONFIG,
    EXIT_BIND_FAILURE,
};
pub use connection::{Binding, Connection, ConnectionCounters, Outgoing, CLOSE_GOING_AWAY, CLOSE_NORMAL, CLOSE_POLICY, SLOW_CONSUMER};
pub use http::{router, AppState, ADMIN_TOKEN_HEADER};
pub use hub::{
    Hub, HubConfig, TickReport, DEFAULT_HEARTBEAT_TIMEOUT_MS, DEFAULT_OUTBOX_LIMIT,
    DEFAULT_SETTLE_TICKS, DEFAULT_TICK_HZ, HEARTBEAT_INTERVAL_MS, MALFORMED_CONTROL_LIMIT,
};
pub use metrics::{parse_metrics, Sample};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServerError {
    #[error("cannot bind: {0}")]
    BindFailure(String),
    #[error("bad config: {0}")]
    BadConfig(String),
}
