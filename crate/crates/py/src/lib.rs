//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists; domain failures raise `meo.MeoError`.

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use meo_core::analysis::{self, InteractionGraph, PageRankParams, TimeSeries};
use meo_core::clock::{SharedClock, SimClock, SystemClock};
use meo_core::config::Config;
use meo_core::connectors::http::HttpConnector;
use meo_core::connectors::{FixtureDataset, MockConnector, MockPlatformHub, PlatformConnector};
use meo_core::fixtures::{build_scenario, ScenarioSpec};
use meo_core::index::{self, Embedder, Filters, Fusion, HashingEmbedder, HybridQuery, SearchHit};
use meo_core::orchestrator;
use meo_core::platform::{MainType, Platform};
use meo_core::stats;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(meo, MeoError, PyException);

fn domain(e: impl std::fmt::Display) -> PyErr {
    MeoError::new_err(e.to_string())
}

fn bad(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_time(s: &str) -> PyResult<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| bad(format!("bad date {s:?}")))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

fn platform(s: &str) -> PyResult<Platform> {
    s.parse().map_err(bad)
}

/// Serializable value to native Python objects via `json.loads`.
fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(domain)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn hits(h: Vec<SearchHit>) -> Vec<(String, f64)> {
    h.into_iter().map(|h| (h.post_id, h.score)).collect()
}

/// A data directory plus the connector feeding it.
#[pyclass(frozen, module = "meo")]
struct Observatory {
    inner: Arc<orchestrator::Observatory>,
}

#[pymethods]
impl Observatory {
    /// `fixtures` serves a saved corpus from an in-process mock platform;
    /// `connector_url` points at a mock platform server instead. `now`
    /// switches to simulated time.
    #[new]
    #[pyo3(signature = (data_dir, fixtures=None, connector_url=None, now=None, config=None))]
    fn new(
        data_dir: PathBuf,
        fixtures: Option<PathBuf>,
        connector_url: Option<String>,
        now: Option<&str>,
        config: Option<PathBuf>,
    ) -> PyResult<Self> {
        let mut cfg = Config::load(config.as_deref()).map_err(domain)?;
        cfg.storage.root = data_dir;
        if let Some(url) = connector_url {
            cfg.pipeline.connector_url = url;
        }
        let clock: SharedClock = match now {
            Some(t) => Arc::new(SimClock::new(parse_time(t)?)),
            None => Arc::new(SystemClock),
        };
        let conn: Arc<dyn PlatformConnector> = if cfg.pipeline.connector_url.is_empty() {
            let hub = MockPlatformHub::new(clock.clone());
            if let Some(dir) = fixtures {
                hub.load(FixtureDataset::load(&dir).map_err(domain)?);
            }
            Arc::new(MockConnector::new(Arc::new(hub), clock.clone()))
        } else {
            Arc::new(HttpConnector::new(&cfg.pipeline.connector_url, clock.clone()).map_err(domain)?)
        };
        let inner = orchestrator::Observatory::open(cfg, conn, clock).map_err(domain)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    /// Seed rows as CSV text. Returns `{accepted, rejected: [{row, reason}]}`.
    fn import_seeds<'py>(&self, py: Python<'py>, csv: &str) -> PyResult<Bound<'py, PyAny>> {
        let report = self.inner.import_seeds(csv.as_bytes()).map_err(domain)?;
        to_py(py, &report)
    }

    fn seed_count(&self) -> usize {
        self.inner.registry().len()
    }

    /// Fetch, store, normalize and index `[start, end)` for the given
    /// handles, or every seed handle on the platform.
    #[pyo3(signature = (platform_name, start, end, handles=None))]
    fn run_pipeline<'py>(
        &self,
        py: Python<'py>,
        platform_name: &str,
        start: &str,
        end: &str,
        handles: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = platform(platform_name)?;
        let (s, e) = (parse_time(start)?, parse_time(end)?);
        let handles = handles.unwrap_or_else(|| self.inner.registry().handles_on(p).into_iter().map(|(_, h)| h).collect());
        let obs = self.inner.clone();
        let report = py.detach(move || obs.run_pipeline(p, &handles, s, e)).map_err(domain)?;
        to_py(py, &report)
    }

    /// Uncovered `(start, end)` day ranges, end exclusive, as ISO dates.
    fn detect_gaps(&self, platform_name: &str, handle: &str, start: &str, end: &str) -> PyResult<Vec<(String, String)>> {
        let gaps = self.inner.detect_gaps(platform(platform_name)?, handle, parse_time(start)?, parse_time(end)?);
        Ok(gaps.into_iter().map(|g| (g.start.to_string(), g.end.to_string())).collect())
    }

    /// Detects gaps and drains the backfill queue.
    #[pyo3(signature = (platform_name, start, end, handles=None))]
    fn recover<'py>(
        &self,
        py: Python<'py>,
        platform_name: &str,
        start: &str,
        end: &str,
        handles: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = platform(platform_name)?;
        let (s, e) = (parse_time(start)?, parse_time(end)?);
        let handles = handles.unwrap_or_else(|| self.inner.registry().handles_on(p).into_iter().map(|(_, h)| h).collect());
        let obs = self.inner.clone();
        let report = py.detach(move || obs.recover(p, &handles, s, e)).map_err(domain)?;
        to_py(py, &report)
    }

    /// `mode` is lexical, semantic, hybrid or browse. Returns
    /// `[(post_id, score)]`.
    #[pyo3(signature = (text=None, mode="hybrid", k=10, platform_name=None, main_type=None))]
    fn search(
        &self,
        text: Option<String>,
        mode: &str,
        k: usize,
        platform_name: Option<&str>,
        main_type: Option<&str>,
    ) -> PyResult<Vec<(String, f64)>> {
        let fusion = match mode {
            "lexical" => Fusion::LexicalOnly,
            "semantic" => Fusion::SemanticOnly,
            "hybrid" => Fusion::Rrf,
            "browse" => Fusion::Browse,
            other => return Err(bad(format!("unknown mode {other:?}"))),
        };
        let filters = Filters {
            platform: platform_name.map(platform).transpose()?,
            main_type: main_type.map(|t| t.parse::<MainType>().map_err(bad)).transpose()?,
            ..Default::default()
        };
        let q = HybridQuery { text, vector: None, filters, k, fusion };
        self.inner.index().search_hybrid(&q).map(hits).map_err(bad)
    }

    fn get_post<'py>(&self, py: Python<'py>, post_id: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner.store().get(post_id).map(|p| to_py(py, &p)).transpose()
    }

    fn post_count(&self) -> usize {
        self.inner.store().len()
    }

    fn __len__(&self) -> usize {
        self.inner.index().len()
    }

    /// Seed distribution table as rendered text.
    fn table1(&self) -> String {
        self.inner.registry().distribution_report().render()
    }

    /// Post volume table as rendered text.
    fn table2(&self) -> String {
        stats::table2(&self.inner.store().posts()).render()
    }

    fn metrics(&self) -> std::collections::BTreeMap<String, f64> {
        self.inner.metrics_snapshot()
    }

    /// Writes posts published in `[start, end)` as NDJSON; returns the count.
    #[pyo3(signature = (path, start=None, end=None))]
    fn export_ndjson(&self, path: PathBuf, start: Option<&str>, end: Option<&str>) -> PyResult<usize> {
        let f = Filters { from: start.map(parse_time).transpose()?, to: end.map(parse_time).transpose()?, ..Default::default() };
        let mut posts = self.inner.store().posts_where(|p| f.matches_post(p));
        posts.sort_by(|a, b| (a.published_at, &a.post_id).cmp(&(b.published_at, &b.post_id)));
        let file = std::fs::File::create(&path).map_err(domain)?;
        stats::export_ndjson(&posts, std::io::BufWriter::new(file)).map_err(domain)
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    index::tokenize(text)
}

/// Unit-norm hashed embedding (all zeros for empty text).
#[pyfunction]
fn embed(text: &str) -> Vec<f32> {
    HashingEmbedder::default().embed(text)
}

/// Reciprocal rank fusion of ranked id lists.
#[pyfunction]
#[pyo3(signature = (lists, k=100))]
fn rrf_fuse(lists: Vec<Vec<String>>, k: usize) -> Vec<(String, f64)> {
    let lists: Vec<Vec<SearchHit>> =
        lists.into_iter().map(|l| l.into_iter().map(|post_id| SearchHit { post_id, score: 0.0 }).collect()).collect();
    hits(index::rrf_fuse(&lists, k))
}

fn graph(edges: Vec<(String, String, f64)>, nodes: Option<Vec<String>>) -> PyResult<InteractionGraph> {
    let nodes = nodes.unwrap_or_default();
    InteractionGraph::from_edges(&nodes, &edges).map_err(bad)
}

/// Weighted directed PageRank over `(src, dst, weight)` edges.
#[pyfunction]
#[pyo3(signature = (edges, nodes=None, damping=0.85))]
fn pagerank(edges: Vec<(String, String, f64)>, nodes: Option<Vec<String>>, damping: f64) -> PyResult<std::collections::BTreeMap<String, f64>> {
    let g = graph(edges, nodes)?;
    let params = PageRankParams { damping, ..Default::default() };
    analysis::pagerank(&g, params).map(|r| r.scores).map_err(domain)
}

/// Community label per node.
#[pyfunction]
#[pyo3(signature = (edges, nodes=None))]
fn detect_communities(edges: Vec<(String, String, f64)>, nodes: Option<Vec<String>>) -> PyResult<std::collections::BTreeMap<String, usize>> {
    Ok(analysis::detect_communities(&graph(edges, nodes)?).labels)
}

/// Best lag of `b` behind `a` within `max_lag` days, with its Pearson r.
/// Both series start on the same day.
#[pyfunction]
#[pyo3(signature = (a, b, max_lag, start="2000-01-01"))]
fn temporal_match(a: Vec<f64>, b: Vec<f64>, max_lag: u32, start: &str) -> PyResult<(i64, f64)> {
    let day = parse_time(start)?.date_naive();
    let m = analysis::temporal_match(&TimeSeries::new("a", day, a), &TimeSeries::new("b", day, b), max_lag).map_err(domain)?;
    Ok((m.best_lag, m.correlation))
}

/// Generates a synthetic scenario from a TOML spec into `out`: seeds.csv,
/// corpus/ and expected.json. Returns the expected-values ledger.
#[pyfunction]
fn build_scenario_to<'py>(py: Python<'py>, spec_toml: &str, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let spec = ScenarioSpec::from_toml(spec_toml).map_err(bad)?;
    let sc = build_scenario(&spec).map_err(bad)?;
    std::fs::create_dir_all(&out).map_err(domain)?;
    std::fs::write(out.join("seeds.csv"), &sc.seeds_csv).map_err(domain)?;
    std::fs::write(out.join("expected.json"), sc.expected.to_json()).map_err(domain)?;
    sc.dataset.save(&out.join("corpus")).map_err(domain)?;
    to_py(py, &sc.expected)
}

/// Volume table cell: `"7 322 094 (10 961)"`, or a dash when empty.
#[pyfunction]
fn render_cell(total_posts: u64, seeds_with_posts: u64) -> String {
    stats::StatsCell { total_posts, seeds_with_posts }.render()
}

/// Adds every class, function and constant to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MeoError", m.py().get_type::<MeoError>())?;
    m.add_class::<Observatory>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(rrf_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(pagerank, m)?)?;
    m.add_function(wrap_pyfunction!(detect_communities, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_match, m)?)?;
    m.add_function(wrap_pyfunction!(build_scenario_to, m)?)?;
    m.add_function(wrap_pyfunction!(render_cell, m)?)?;
    m.add("PLATFORMS", Platform::ALL.iter().map(|p| p.as_str()).collect::<Vec<_>>())?;
    m.add("EMBED_DIM", index::EMBED_DIM)?;
    Ok(())
}

#[pymodule]
fn meo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
