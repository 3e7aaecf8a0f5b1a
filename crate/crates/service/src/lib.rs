//! HTTP service around the declutter pipeline.
//!
//! A session holds one uploaded photo, its segmented elements, their
//! assessment and the user's category overrides. Sessions live in a
//! directory store (JSON plus PNG files) and survive restarts.

pub mod config;
pub mod error;
pub mod http;
pub mod pipeline;
pub mod session;
pub mod store;

pub use crate::config::ServiceConfig;
pub use crate::error::{Error, Result};
pub use crate::http::{router, serve, AppState};
pub use crate::pipeline::{Analysis, CleanOutcome, Pipeline};
pub use crate::session::{CleanStatus, CleanView, ElementView, Session, SessionView, SuggestionsView};
pub use crate::store::SessionStore;
pub use crate::service::Service;

mod service;
