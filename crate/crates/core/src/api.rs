//! HTTP data and analysis API over an [`Observatory`].
//!
//! Every route except `/health` requires `Authorization: Bearer <token>`
//! with a token from `api.tokens`. List endpoints page with `offset` and
//! `limit`.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, NaiveDate, NaiveTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    build_interaction_graph, cluster_embeddings, daily_series, detect_communities, engagement_change, modularity,
    pagerank, temporal_match, AnalysisError, InteractionGraph, PageRankParams, SeriesValue, TimeSeries,
};
use crate::index::{Filters, Fusion, HybridQuery, SearchHit};
use crate::ledger::{DayInterval, TaskState};
use crate::normalize::{Metric, UnifiedPost};
use crate::orchestrator::metrics::render_text;
use crate::orchestrator::Observatory;
use crate::platform::{MainType, Platform};
use crate::stats::{self, TABLE2_COLUMNS, TABLE2_ROWS};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let status = match e {
            AnalysisError::BadK { .. }
            | AnalysisError::EdgeList { .. }
            | AnalysisError::BadWeight
            | AnalysisError::UnlabeledNode(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub op: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Default)]
struct Jobs {
    next: AtomicU64,
    records: Mutex<BTreeMap<String, JobRecord>>,
}

#[derive(Clone)]
pub struct ApiState {
    obs: Arc<Observatory>,
    jobs: Arc<Jobs>,
    tokens: Arc<BTreeSet<String>>,
}

pub fn router(obs: Arc<Observatory>) -> Router {
    let tokens = Arc::new(obs.config().api.tokens.iter().cloned().collect());
    let state = ApiState { obs, jobs: Arc::new(Jobs::default()), tokens };
    let protected = Router::new()
        .route("/seeds", get(list_seeds))
        .route("/seeds/{id}", get(get_seed))
        .route("/posts", get(list_posts))
        .route("/posts/search", get(search_posts))
        .route("/posts/{id}", get(get_post))
        .route("/timeline", get(timeline))
        .route("/stats/table1", get(table1))
        .route("/stats/table2", get(table2))
        .route("/analysis/jobs/{id}", get(get_job))
        .route("/analysis/{op}", post(analysis))
        .route("/gaps", get(list_gaps))
        .route("/backfills", get(list_backfills).post(create_backfills))
        .route("/runs", get(list_runs))
        .route("/metrics", get(metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/health", get(health)).merge(protected).with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(obs: Arc<Observatory>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "api listening");
    axum::serve(listener, router(obs)).await
}

async fn require_token(State(st): State<ApiState>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| st.tokens.contains(t.trim()));
    if !ok {
        return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
    }
    next.run(req).await
}

struct Params(BTreeMap<String, String>);

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(|d| d.and_time(NaiveTime::MIN).and_utc()))
}

impl Params {
    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|s| !s.is_empty())
    }

    fn parse<T: FromStr>(&self, key: &str) -> ApiResult<Option<T>> {
        self.str(key)
            .map(|s| s.parse::<T>().map_err(|_| ApiError::bad(format!("bad value for {key}: {s:?}"))))
            .transpose()
    }

    fn time(&self, key: &str) -> ApiResult<Option<DateTime<Utc>>> {
        self.str(key)
            .map(|s| parse_time(s).ok_or_else(|| ApiError::bad(format!("bad timestamp for {key}: {s:?}"))))
            .transpose()
    }

    fn filters(&self) -> ApiResult<Filters> {
        Ok(Filters {
            platform: self.parse("platform")?,
            seed_id: self.str("seed_id").map(String::from),
            main_type: self.parse("main_type")?,
            sub_type: self.str("sub_type").map(String::from),
            federal_party: self.str("party").or(self.str("federal_party")).map(String::from),
            province: self.str("province").map(String::from),
            tag: self.str("tag").map(String::from),
            from: self.time("from")?,
            to: self.time("to")?,
        })
    }

    fn page(&self, st: &ApiState, default_limit: Option<usize>) -> ApiResult<(usize, usize)> {
        let cfg = &st.obs.config().api;
        let offset = self.parse::<usize>("offset")?.unwrap_or(0);
        let limit = self.parse::<usize>("limit")?.or(default_limit).unwrap_or(cfg.default_limit);
        if limit == 0 || limit > cfg.max_limit {
            return Err(ApiError::bad(format!("limit must be in 1..={}", cfg.max_limit)));
        }
        Ok((offset, limit))
    }

    fn wants_text(&self) -> bool {
        matches!(self.str("format"), Some("text" | "csv"))
    }
}

#[derive(Debug, Serialize)]
struct Page<T> {
    total: usize,
    offset: usize,
    limit: usize,
    next_offset: Option<usize>,
    items: Vec<T>,
}

fn paginate<T>(all: Vec<T>, (offset, limit): (usize, usize)) -> Page<T> {
    let total = all.len();
    let items: Vec<T> = all.into_iter().skip(offset).take(limit).collect();
    let end = offset.saturating_add(items.len());
    Page { total, offset, limit, next_offset: (end < total).then_some(end), items }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn health(State(st): State<ApiState>) -> Json<Value> {
    let o = &st.obs;
    let index_ok = o.index().consistency_check().is_ok();
    Json(json!({
        "status": if index_ok { "ok" } else { "degraded" },
        "components": {
            "seed_registry": {"status": "ok", "seeds": o.registry().len()},
            "raw_store": {"status": "ok", "objects": o.raw_store().total_count()},
            "unified_store": {"status": "ok", "posts": o.store().len(), "quarantined": o.store().quarantine_count()},
            "index": {"status": if index_ok { "ok" } else { "inconsistent" }, "documents": o.index().len()},
            "crawl_ledger": {"status": "ok", "backfill_pending": o.ledger().count_in_state(TaskState::Pending)},
        }
    }))
}

async fn list_seeds(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let main_type: Option<MainType> = q.parse("main_type")?;
    let platform: Option<Platform> = q.parse("platform")?;
    let province = q.str("province");
    let party = q.str("party");
    let ci = |want: Option<&str>, have: &Option<String>| {
        want.is_none_or(|w| have.as_deref().is_some_and(|h| h.eq_ignore_ascii_case(w)))
    };
    let seeds: Vec<_> = st
        .obs
        .registry()
        .entities()
        .into_iter()
        .filter(|e| main_type.is_none_or(|t| t == e.main_type))
        .filter(|e| platform.is_none_or(|p| e.handles.contains_key(&p)))
        .filter(|e| ci(province, &e.province))
        .filter(|e| ci(party, &e.federal_party) || ci(party, &e.provincial_party))
        .collect();
    Ok(Json(paginate(seeds, q.page(&st, None)?)).into_response())
}

async fn get_seed(State(st): State<ApiState>, Path(id): Path<String>) -> ApiResult<Response> {
    let seed = st.obs.registry().get(&id).ok_or_else(|| ApiError::not_found(format!("no seed {id}")))?;
    Ok(Json(seed).into_response())
}

fn sorted_posts(st: &ApiState, f: &Filters) -> Vec<UnifiedPost> {
    let mut posts: Vec<UnifiedPost> = st.obs.store().posts().into_iter().filter(|p| f.matches_post(p)).collect();
    posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    posts
}

async fn list_posts(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let f = q.filters()?;
    let page = q.page(&st, None)?;
    Ok(Json(paginate(sorted_posts(&st, &f), page)).into_response())
}

async fn get_post(State(st): State<ApiState>, Path(id): Path<String>) -> ApiResult<Response> {
    let p = st.obs.store().get(&id).ok_or_else(|| ApiError::not_found(format!("no post {id}")))?;
    Ok(Json(p).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchItem {
    pub post_id: String,
    pub platform: Platform,
    pub seed_id: String,
    pub text: String,
    pub published_at: DateTime<Utc>,
    pub score: f64,
}

fn hydrate(st: &ApiState, hits: Vec<SearchHit>) -> Vec<SearchItem> {
    hits.into_iter()
        .filter_map(|h| {
            let p = st.obs.store().get(&h.post_id)?;
            Some(SearchItem {
                post_id: h.post_id,
                platform: p.platform,
                seed_id: p.seed_id,
                text: p.text,
                published_at: p.published_at,
                score: h.score,
            })
        })
        .collect()
}

async fn search_posts(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let f = q.filters()?;
    let k = q.parse::<usize>("k")?.unwrap_or(10);
    if k == 0 {
        return Err(ApiError::bad("k must be positive"));
    }
    let text = q.str("q").unwrap_or("").to_string();
    let mode = q.str("mode").unwrap_or("hybrid");
    let page = q.page(&st, Some(k.min(st.obs.config().api.max_limit)))?;
    let index = st.obs.index();
    let err = |e: crate::index::IndexError| ApiError::bad(e.to_string());
    let hits = match mode {
        "lexical" => index.search_lexical(&text, &f, k).map_err(err)?,
        "semantic" => {
            let v = index.embed(&text);
            index.search_semantic(&v, &f, k).map_err(err)?
        }
        "hybrid" => {
            let fusion = if text.trim().is_empty() { Fusion::Browse } else { Fusion::Rrf };
            let hq = HybridQuery { text: Some(text), vector: None, filters: f, k, fusion };
            index.search_hybrid(&hq).map_err(err)?
        }
        other => return Err(ApiError::bad(format!("unknown mode {other:?}"))),
    };
    Ok(Json(paginate(hydrate(&st, hits), page)).into_response())
}

fn window(q: &Params, st: &ApiState) -> ApiResult<(NaiveDate, NaiveDate)> {
    let posts = st.obs.store().posts();
    let from = match q.time("from")? {
        Some(t) => t.date_naive(),
        None => posts.iter().map(|p| p.published_at.date_naive()).min().unwrap_or_else(|| st.obs.clock().now().date_naive()),
    };
    let to = match q.time("to")? {
        Some(t) if t.time() == NaiveTime::MIN => t.date_naive(),
        Some(t) => t.date_naive() + Duration::days(1),
        None => posts.iter().map(|p| p.published_at.date_naive()).max().map(|d| d + Duration::days(1)).unwrap_or(from),
    };
    if to < from {
        return Err(ApiError::bad("to precedes from"));
    }
    Ok((from, to))
}

async fn timeline(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    if let Some(b) = q.str("bucket") {
        if b != "day" {
            return Err(ApiError::bad("only bucket=day is supported"));
        }
    }
    let mut f = q.filters()?;
    let (from, to) = window(&q, &st)?;
    f.from = None;
    f.to = None;
    let platforms: Vec<Platform> = match f.platform {
        Some(p) => vec![p],
        None => Platform::ALL.to_vec(),
    };
    let posts: Vec<UnifiedPost> = st.obs.store().posts().into_iter().filter(|p| f.matches_post(p)).collect();
    let tl = stats::timeline(&posts, &platforms, from, to);
    if q.wants_text() {
        return Ok(([(header::CONTENT_TYPE, "text/csv")], tl.to_csv()).into_response());
    }
    let total = tl.total();
    Ok(Json(json!({ "bucket": "day", "days": tl.days, "series": tl.series, "total": total })).into_response())
}

async fn table1(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let report = st.obs.registry().distribution_report();
    if q.wants_text() {
        return Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], report.render()).into_response());
    }
    Ok(Json(json!({ "report": report, "rendered": report.render() })).into_response())
}

async fn table2(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let f = q.filters()?;
    let posts: Vec<UnifiedPost> = st.obs.store().posts().into_iter().filter(|p| f.matches_post(p)).collect();
    let table = stats::table2(&posts);
    let rendered = table.render();
    if q.wants_text() {
        return Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], rendered).into_response());
    }
    let rows: Vec<Value> = TABLE2_ROWS
        .iter()
        .map(|p| {
            let cells: BTreeMap<String, Value> = TABLE2_COLUMNS
                .iter()
                .map(|t| {
                    let c = table.cell(*p, *t);
                    (
                        t.as_str().to_string(),
                        json!({
                            "total_posts": c.total_posts,
                            "seeds_with_posts": c.seeds_with_posts,
                            "avg_posts_per_seed": c.avg_posts_per_seed(),
                            "rendered": c.render(),
                        }),
                    )
                })
                .collect();
            json!({ "platform": p, "cells": cells })
        })
        .collect();
    Ok(Json(json!({ "rows": rows, "rendered": rendered })).into_response())
}

// ---- analysis ----

fn default_k() -> usize {
    10
}
fn default_max_lag() -> u32 {
    7
}
fn default_metric() -> Metric {
    Metric::Likes
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilarReq {
    post_id: Option<String>,
    text: Option<String>,
    vector: Option<Vec<f32>>,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    filters: Filters,
    #[serde(default, rename = "async")]
    force_async: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SeriesSpec {
    Explicit { start: NaiveDate, values: Vec<f64> },
    Query {
        #[serde(default)]
        filters: Filters,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        #[serde(default)]
        value: Option<Metric>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemporalReq {
    a: SeriesSpec,
    b: SeriesSpec,
    #[serde(default = "default_max_lag")]
    max_lag: u32,
    #[serde(default, rename = "async")]
    force_async: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphReq {
    edge_list: Option<String>,
    edges: Option<Vec<(String, String, f64)>>,
    #[serde(default)]
    nodes: Vec<String>,
    #[serde(default)]
    filters: Filters,
    damping: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    #[serde(default, rename = "async")]
    force_async: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClustersReq {
    k: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    filters: Filters,
    #[serde(default, rename = "async")]
    force_async: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngagementReq {
    #[serde(default)]
    filters: Filters,
    period_a: (DateTime<Utc>, DateTime<Utc>),
    period_b: (DateTime<Utc>, DateTime<Utc>),
    #[serde(default = "default_metric")]
    metric: Metric,
    #[serde(default, rename = "async")]
    force_async: bool,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Value) -> ApiResult<T> {
    serde_json::from_value(body.clone()).map_err(|e| ApiError::bad(format!("bad request body: {e}")))
}

fn series(obs: &Observatory, key: &str, spec: &SeriesSpec) -> TimeSeries {
    match spec {
        SeriesSpec::Explicit { start, values } => TimeSeries::new(key, *start, values.clone()),
        SeriesSpec::Query { filters, from, to, value } => {
            let posts: Vec<UnifiedPost> = obs.store().posts().into_iter().filter(|p| filters.matches_post(p)).collect();
            let v = value.map(SeriesValue::Engagement).unwrap_or(SeriesValue::Count);
            daily_series(key, &posts, from.date_naive(), to.date_naive(), v)
        }
    }
}

fn graph_of(obs: &Observatory, r: &GraphReq) -> ApiResult<InteractionGraph> {
    if let Some(text) = &r.edge_list {
        let mut g = InteractionGraph::parse_edge_list(text)?;
        for n in &r.nodes {
            g.add_node(n);
        }
        return Ok(g);
    }
    if let Some(edges) = &r.edges {
        return Ok(InteractionGraph::from_edges(&r.nodes, edges)?);
    }
    let posts: Vec<UnifiedPost> = obs.store().posts().into_iter().filter(|p| r.filters.matches_post(p)).collect();
    Ok(build_interaction_graph(&posts, obs.registry()))
}

/// Input size that decides between synchronous and job execution.
fn input_size(obs: &Observatory, op: &str, body: &Value) -> ApiResult<(usize, bool)> {
    let count_posts = |f: &Filters| obs.store().posts().iter().filter(|p| f.matches_post(p)).count();
    Ok(match op {
        "similar" => {
            let r: SimilarReq = parse_body(body)?;
            (obs.index().len(), r.force_async)
        }
        "temporal" => {
            let r: TemporalReq = parse_body(body)?;
            let n = |s: &SeriesSpec| match s {
                SeriesSpec::Explicit { values, .. } => values.len(),
                SeriesSpec::Query { filters, .. } => count_posts(filters),
            };
            (n(&r.a) + n(&r.b), r.force_async)
        }
        "pagerank" | "communities" => {
            let r: GraphReq = parse_body(body)?;
            let n = match (&r.edge_list, &r.edges) {
                (Some(t), _) => t.lines().count() + r.nodes.len(),
                (None, Some(e)) => e.len() + r.nodes.len(),
                (None, None) => count_posts(&r.filters),
            };
            (n, r.force_async)
        }
        "clusters" => {
            let r: ClustersReq = parse_body(body)?;
            (count_posts(&r.filters), r.force_async)
        }
        "engagement-change" => {
            let r: EngagementReq = parse_body(body)?;
            (count_posts(&r.filters), r.force_async)
        }
        other => return Err(ApiError::not_found(format!("unknown analysis {other:?}"))),
    })
}

fn run_analysis(obs: &Observatory, op: &str, body: &Value) -> ApiResult<Value> {
    match op {
        "similar" => {
            let r: SimilarReq = parse_body(body)?;
            if r.k == 0 {
                return Err(ApiError::bad("k must be positive"));
            }
            let index = obs.index();
            let (query, exclude) = match (&r.post_id, &r.text, &r.vector) {
                (Some(id), _, _) => {
                    let v = index.vector(id).ok_or_else(|| ApiError::bad(format!("post {id} is not indexed")))?;
                    (v, Some(id.clone()))
                }
                (None, Some(t), _) => (index.embed(t), None),
                (None, None, Some(v)) => (v.clone(), None),
                _ => return Err(ApiError::bad("one of post_id, text or vector is required")),
            };
            let want = r.k + usize::from(exclude.is_some());
            let mut hits = index.search_semantic(&query, &r.filters, want).map_err(|e| ApiError::bad(e.to_string()))?;
            hits.retain(|h| Some(&h.post_id) != exclude.as_ref());
            hits.truncate(r.k);
            Ok(json!({ "hits": hits }))
        }
        "temporal" => {
            let r: TemporalReq = parse_body(body)?;
            let m = temporal_match(&series(obs, "a", &r.a), &series(obs, "b", &r.b), r.max_lag)?;
            Ok(to_json(&m))
        }
        "pagerank" => {
            let r: GraphReq = parse_body(body)?;
            let g = graph_of(obs, &r)?;
            let d = PageRankParams::default();
            let params = PageRankParams {
                damping: r.damping.unwrap_or(d.damping),
                tol: r.tol.unwrap_or(d.tol),
                max_iter: r.max_iter.unwrap_or(d.max_iter),
            };
            if !(0.0..1.0).contains(&params.damping) {
                return Err(ApiError::bad("damping must be in [0, 1)"));
            }
            Ok(to_json(&pagerank(&g, params)?))
        }
        "communities" => {
            let r: GraphReq = parse_body(body)?;
            let g = graph_of(obs, &r)?;
            if g.is_empty() {
                return Err(AnalysisError::EmptyGraph.into());
            }
            let p = detect_communities(&g);
            let q = modularity(&g, &p)?;
            Ok(json!({ "labels": p.labels, "communities": p.communities(), "modularity": q }))
        }
        "clusters" => {
            let r: ClustersReq = parse_body(body)?;
            let vectors = obs.index().vectors_where(&r.filters);
            Ok(to_json(&cluster_embeddings(&vectors, r.k, r.seed)?))
        }
        "engagement-change" => {
            let r: EngagementReq = parse_body(body)?;
            let posts = obs.store().posts();
            Ok(to_json(&engagement_change(&posts, &r.filters, r.period_a, r.period_b, r.metric)?))
        }
        other => Err(ApiError::not_found(format!("unknown analysis {other:?}"))),
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("analysis results serialize")
}

async fn analysis(State(st): State<ApiState>, Path(op): Path<String>, Json(body): Json<Value>) -> ApiResult<Response> {
    let obs = st.obs.clone();
    let (size, force) = {
        let (op, body) = (op.clone(), body.clone());
        blocking(move || input_size(&obs, &op, &body)).await?
    };
    if force || size > st.obs.config().api.async_threshold {
        let id = format!("job-{:06}", st.jobs.next.fetch_add(1, Ordering::SeqCst) + 1);
        let rec = JobRecord { job_id: id.clone(), op: op.clone(), status: JobStatus::Running, result: None, error: None };
        st.jobs.records.lock().insert(id.clone(), rec.clone());
        let (obs, jobs, job_id) = (st.obs.clone(), st.jobs.clone(), id.clone());
        std::thread::spawn(move || {
            let out = run_analysis(&obs, &op, &body);
            let mut recs = jobs.records.lock();
            let r = recs.get_mut(&job_id).expect("job registered");
            match out {
                Ok(v) => {
                    r.status = JobStatus::Done;
                    r.result = Some(v);
                }
                Err(e) => {
                    r.status = JobStatus::Failed;
                    r.error = Some(e.message);
                }
            }
        });
        return Ok((StatusCode::ACCEPTED, Json(rec)).into_response());
    }
    let obs = st.obs.clone();
    let v = blocking(move || run_analysis(&obs, &op, &body)).await?;
    Ok(Json(v).into_response())
}

async fn get_job(State(st): State<ApiState>, Path(id): Path<String>) -> ApiResult<Response> {
    let rec = st.jobs.records.lock().get(&id).cloned().ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
    Ok(Json(rec).into_response())
}

// ---- ledger ----

#[derive(Debug, Clone, Serialize)]
struct GapItem {
    platform: Platform,
    handle: String,
    start: NaiveDate,
    end: NaiveDate,
    days: i64,
}

fn default_window(st: &ApiState) -> (DateTime<Utc>, DateTime<Utc>) {
    let today = st.obs.clock().now().date_naive().and_time(NaiveTime::MIN).and_utc();
    (today - Duration::days(i64::from(st.obs.config().pipeline.initial_lookback_days)), today)
}

async fn list_gaps(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let platform: Option<Platform> = q.parse("platform")?;
    let (dfrom, dto) = default_window(&st);
    let from = q.time("from")?.unwrap_or(dfrom);
    let to = q.time("to")?.unwrap_or(dto);
    if from >= to {
        return Err(ApiError::bad("from must precede to"));
    }
    let mut accounts: Vec<(Platform, String)> = Vec::new();
    for p in Platform::ALL {
        if platform.is_some_and(|x| x != p) {
            continue;
        }
        match q.str("handle") {
            Some(h) => accounts.push((p, h.to_string())),
            None => accounts.extend(st.obs.registry().handles_on(p).into_iter().map(|(_, h)| (p, h))),
        }
    }
    accounts.sort();
    let mut items = Vec::new();
    for (p, h) in accounts {
        for g in st.obs.detect_gaps(p, &h, from, to) {
            items.push(GapItem { platform: p, handle: h.clone(), start: g.start, end: g.end, days: g.days() });
        }
    }
    Ok(Json(paginate(items, q.page(&st, None)?)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackfillReq {
    platform: Platform,
    handle: String,
    gaps: Option<Vec<DayInterval>>,
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
}

async fn create_backfills(State(st): State<ApiState>, Json(body): Json<Value>) -> ApiResult<Response> {
    let r: BackfillReq = parse_body(&body)?;
    let obs = &st.obs;
    let gaps = match r.gaps {
        Some(g) => g,
        None => {
            let (dfrom, dto) = default_window(&st);
            obs.detect_gaps(r.platform, &r.handle, r.from.unwrap_or(dfrom), r.to.unwrap_or(dto))
        }
    };
    if gaps.iter().any(|g| g.is_empty()) {
        return Err(ApiError::bad("empty gap interval"));
    }
    let key = r.handle.to_lowercase();
    let queued: Vec<DayInterval> = obs
        .ledger()
        .tasks()
        .into_iter()
        .filter(|t| !t.state.is_terminal() && t.platform == r.platform && t.handle.to_lowercase() == key)
        .map(|t| t.gap)
        .collect();
    if let Some(dup) = gaps.iter().find(|g| queued.contains(g)) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("backfill for {}/{} {}..{} already queued", r.platform, r.handle, dup.start, dup.end),
        ));
    }
    let tasks = obs
        .ledger()
        .emit_backfill(r.platform, &r.handle, &gaps, obs.clock().now())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(json!({ "tasks": tasks }))).into_response())
}

async fn list_backfills(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let state = match q.str("state") {
        None => None,
        Some(s) => Some(
            serde_json::from_value::<TaskState>(json!(s)).map_err(|_| ApiError::bad(format!("bad state {s:?}")))?,
        ),
    };
    let tasks: Vec<_> = st.obs.ledger().tasks().into_iter().filter(|t| state.is_none_or(|s| s == t.state)).collect();
    Ok(Json(paginate(tasks, q.page(&st, None)?)).into_response())
}

async fn list_runs(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let platform: Option<Platform> = q.parse("platform")?;
    let handle = q.str("handle").map(str::to_lowercase);
    let runs: Vec<_> = st
        .obs
        .ledger()
        .runs()
        .into_iter()
        .filter(|r| platform.is_none_or(|p| p == r.platform))
        .filter(|r| handle.as_ref().is_none_or(|h| *h == r.handle.to_lowercase()))
        .collect();
    Ok(Json(paginate(runs, q.page(&st, None)?)).into_response())
}

async fn metrics(State(st): State<ApiState>, Query(q): Query<BTreeMap<String, String>>) -> ApiResult<Response> {
    let q = Params(q);
    let snap = st.obs.metrics_snapshot();
    if q.wants_text() {
        return Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], render_text(&snap)).into_response());
    }
    Ok(Json(snap).into_response())
}
