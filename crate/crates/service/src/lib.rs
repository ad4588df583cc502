//! Session service: event-sourced planner sessions over HTTP, with a
//! WebSocket push channel per session.

pub mod config;
pub mod event;
pub mod http;
pub mod session;
pub mod store;

pub use config::{ConfigError, SessionConfig};
pub use event::{AgentRecord, Event, EventBody, Fold, SessionSnapshot, SCHEMA_VERSION};
pub use http::{router, serve};
pub use session::{Session, SessionError};
pub use store::SessionStore;
