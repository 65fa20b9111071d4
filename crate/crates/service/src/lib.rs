//! Collaborative review service: one write path per patient, eager view
//! recomputation, per-tab dirty flags and a long-poll change feed.

pub mod http;
pub mod hub;
pub mod store;
pub mod tabs;
pub mod users;
pub mod views;

use std::future::Future;
use std::sync::Arc;

pub use hub::{
    AnswerRequest, ChangeNotification, ChangeRequest, EventBatch, EventKind, Hub, HubConfig,
    HubError, Snapshot, StartupError,
};
pub use tabs::{DependencyMap, Tab, TabDirtyFlags};
pub use users::{Role, Session, Users};

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    hub: Arc<Hub>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, http::router(hub))
        .with_graceful_shutdown(shutdown)
        .await
}
