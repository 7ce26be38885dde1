//! The mock hub served over HTTP, and a blocking client for it.
//!
//! `GET /{platform}/accounts/{handle}/posts?start=..&end=..&cursor=..&limit=..`
//! answers `{"items":[...],"next_cursor":...}`. Items are spliced into the
//! body verbatim so the client sees the exact stored bytes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::{DateTime, Utc};
use serde::Deserialize;
use serde_json::value::RawValue;
use tokio::sync::oneshot;

use super::mock::MockPlatformHub;
use super::{ConnectorError, FetchPage, FetchRequest, PlatformConnector};
use crate::clock::SharedClock;
use crate::platform::Platform;

fn error_response(err: &ConnectorError) -> Response {
    let (status, msg) = match err {
        ConnectorError::NotFound(m) => (StatusCode::NOT_FOUND, m.clone()),
        ConnectorError::Throttled { retry_after } => {
            let secs = retry_after.as_secs_f64().ceil().max(1.0) as u64;
            let mut resp = (StatusCode::TOO_MANY_REQUESTS, "throttled").into_response();
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
            return resp;
        }
        ConnectorError::Retryable(m) => (StatusCode::SERVICE_UNAVAILABLE, m.clone()),
        ConnectorError::BadRequest(m) => (StatusCode::BAD_REQUEST, m.clone()),
        ConnectorError::Unsupported(p) => (StatusCode::NOT_FOUND, format!("unsupported platform {p}")),
    };
    (status, msg).into_response()
}

async fn posts(
    State(hub): State<Arc<MockPlatformHub>>,
    Path((platform, handle)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let Ok(platform) = platform.parse::<Platform>() else {
        return (StatusCode::NOT_FOUND, "unknown platform").into_response();
    };
    let parse_ts = |k: &str| q.get(k).and_then(|v| DateTime::parse_from_rfc3339(v).ok()).map(|t| t.with_timezone(&Utc));
    let (Some(start), Some(end)) = (parse_ts("start"), parse_ts("end")) else {
        return (StatusCode::BAD_REQUEST, "start and end are required").into_response();
    };
    let limit = q.get("limit").and_then(|v| v.parse::<usize>().ok()).unwrap_or(100);
    let page = match hub.serve(platform, &handle, start, end, q.get("cursor").map(String::as_str), limit) {
        Ok(p) => p,
        Err(e) => return error_response(&e),
    };
    let mut body = Vec::with_capacity(page.items.iter().map(|i| i.len() + 1).sum::<usize>() + 64);
    body.extend_from_slice(b"{\"items\":[");
    for (i, item) in page.items.iter().enumerate() {
        if i > 0 {
            body.push(b',');
        }
        body.extend_from_slice(item);
    }
    body.extend_from_slice(b"],\"next_cursor\":");
    body.extend_from_slice(serde_json::to_string(&page.next_cursor).expect("serializes").as_bytes());
    body.push(b'}');
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    (headers, body).into_response()
}

pub fn router(hub: Arc<MockPlatformHub>) -> Router {
    Router::new().route("/{platform}/accounts/{handle}/posts", get(posts)).with_state(hub)
}

/// A mock platform server running on a background thread.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `127.0.0.1:0` and serves until dropped.
    pub fn start(hub: Arc<MockPlatformHub>) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let _ = axum::serve(listener, router(hub))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Blocking HTTP client for a mock platform server.
pub struct HttpConnector {
    base: reqwest::Url,
    client: reqwest::blocking::Client,
    clock: SharedClock,
}

impl HttpConnector {
    pub fn new(base_url: &str, clock: SharedClock) -> Result<Self, ConnectorError> {
        let base = reqwest::Url::parse(base_url).map_err(|e| ConnectorError::BadRequest(e.to_string()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ConnectorError::Retryable(e.to_string()))?;
        Ok(Self { base, client, clock })
    }
}

#[derive(Deserialize)]
struct WirePage<'a> {
    #[serde(borrow)]
    items: Vec<&'a RawValue>,
    next_cursor: Option<String>,
}

impl PlatformConnector for HttpConnector {
    fn fetch(&self, req: &FetchRequest) -> Result<FetchPage, ConnectorError> {
        req.validate()?;
        let mut url = self.base.clone();
        url.path_segments_mut()
            .map_err(|_| ConnectorError::BadRequest("base url cannot be a base".into()))?
            .pop_if_empty()
            .extend([req.platform.as_str(), "accounts", &req.handle, "posts"]);
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("start", &req.start.to_rfc3339());
            q.append_pair("end", &req.end.to_rfc3339());
            q.append_pair("limit", &req.page_size.to_string());
            if let Some(c) = &req.cursor {
                q.append_pair("cursor", c);
            }
        }
        let resp = self.client.get(url).send().map_err(|e| ConnectorError::Retryable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get(header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(Duration::from_secs);
            let body = resp.text().unwrap_or_default();
            return Err(match status.as_u16() {
                404 => ConnectorError::NotFound(body),
                429 => ConnectorError::Throttled { retry_after: retry_after.unwrap_or(Duration::from_secs(1)) },
                400 => ConnectorError::BadRequest(body),
                _ => ConnectorError::Retryable(format!("{status}: {body}")),
            });
        }
        let bytes = resp.bytes().map_err(|e| ConnectorError::Retryable(e.to_string()))?;
        let page: WirePage<'_> =
            serde_json::from_slice(&bytes).map_err(|e| ConnectorError::Retryable(format!("malformed page: {e}")))?;
        Ok(FetchPage {
            payloads: page.items.iter().map(|r| r.get().as_bytes().to_vec()).collect(),
            next_cursor: page.next_cursor,
            collected_at: self.clock.now(),
        })
    }
}
