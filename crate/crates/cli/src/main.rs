//! `meo`: operator CLI. Every subcommand is a thin client of the core
//! library. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use meo_core::clock::{SharedClock, SimClock, SystemClock};
use meo_core::config::Config;
use meo_core::connectors::http::{HttpConnector, MockServer};
use meo_core::connectors::{FixtureDataset, MockConnector, MockPlatformHub, PlatformConnector};
use meo_core::fixtures::{build_scenario, ScenarioSpec};
use meo_core::index::{Filters, Fusion, HybridQuery};
use meo_core::orchestrator::Observatory;
use meo_core::platform::{MainType, Platform};
use meo_core::seeds::{PartyMap, SeedRegistry};
use meo_core::stats;
use serde_json::json;

#[derive(Parser)]
#[command(name = "meo", version, about = "Media ecosystem observatory")]
struct Cli {
    /// TOML config file; MEO_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides storage.root.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Run on simulated time starting here (date or RFC 3339). Waits cost
    /// no wall time.
    #[arg(long, global = true)]
    now: Option<String>,
    /// Fixture corpus served by an in-process mock platform. Ignored when
    /// pipeline.connector_url is set.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Log pipeline progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    #[command(subcommand)]
    Seeds(SeedsCmd),
    #[command(subcommand)]
    Crawl(CrawlCmd),
    #[command(subcommand)]
    Gaps(GapsCmd),
    #[command(subcommand)]
    Backfill(BackfillCmd),
    /// Search indexed posts.
    Query(QueryArgs),
    /// Distribution, volume and timeline reports.
    Stats(StatsArgs),
    /// Dump unified posts.
    Export(ExportArgs),
    /// Start the HTTP API.
    Serve {
        /// Overrides api.bind.
        #[arg(long)]
        bind: Option<String>,
    },
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    #[command(subcommand)]
    Mock(MockCmd),
}

#[derive(Subcommand)]
enum SeedsCmd {
    /// Load seed rows into the registry.
    Import { file: PathBuf },
    /// Check a seed file without loading it.
    Validate { file: PathBuf },
}

#[derive(Args)]
struct Window {
    #[arg(long)]
    platform: Platform,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Restrict to these handles (repeatable); default is every seed
    /// handle on the platform.
    #[arg(long = "handle")]
    handles: Vec<String>,
}

#[derive(Subcommand)]
enum CrawlCmd {
    Run(Window),
}

#[derive(Subcommand)]
enum GapsCmd {
    Detect(Window),
}

#[derive(Subcommand)]
enum BackfillCmd {
    /// Plan tasks for the window's gaps (when given), then drain the queue.
    Run {
        #[arg(long, requires_all = ["from", "to"])]
        platform: Option<Platform>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        #[arg(long = "handle")]
        handles: Vec<String>,
        #[arg(long)]
        max_tasks: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lexical,
    Semantic,
    Hybrid,
    Browse,
}

#[derive(Args, Default)]
struct FilterArgs {
    #[arg(long)]
    platform: Option<Platform>,
    #[arg(long)]
    main_type: Option<MainType>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    province: Option<String>,
    #[arg(long)]
    party: Option<String>,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    /// `FROM..TO`, same as --from/--to.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    window: Option<String>,
}

impl FilterArgs {
    fn filters(&self) -> Result<Filters> {
        let (from, to) = match &self.window {
            Some(w) => {
                let (a, b) = w.split_once("..").ok_or_else(|| anyhow!("--window wants FROM..TO, got {w:?}"))?;
                (Some(parse_time(a)?), Some(parse_time(b)?))
            }
            None => (self.from.as_deref().map(parse_time).transpose()?, self.to.as_deref().map(parse_time).transpose()?),
        };
        Ok(Filters {
            platform: self.platform,
            main_type: self.main_type,
            seed_id: self.seed.clone(),
            province: self.province.clone(),
            federal_party: self.party.clone(),
            from,
            to,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct QueryArgs {
    /// Query text; optional in browse mode.
    text: Option<String>,
    #[arg(long, value_enum, default_value = "hybrid")]
    mode: Mode,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    /// Seed distribution across platforms.
    Table1,
    /// Total and per-seed average posts.
    Table2,
    /// Daily posts per platform.
    Timeline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(value_enum)]
    report: Report,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Ndjson,
    Csv,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, value_enum, default_value = "ndjson")]
    format: ExportFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Generate seeds.csv, a fixture corpus and expected.json from a spec.
    Build {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MockCmd {
    /// Serve a fixture corpus over HTTP until killed.
    Serve { dir: PathBuf },
}

fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("bad date {s:?}"))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
}

struct Ctx {
    config: Config,
    clock: SharedClock,
    fixtures: Option<PathBuf>,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = Config::load(cli.config.as_deref())?;
        if let Some(dir) = &cli.data_dir {
            config.storage.root = dir.clone();
        }
        let clock: SharedClock = match &cli.now {
            Some(t) => Arc::new(SimClock::new(parse_time(t)?)),
            None => Arc::new(SystemClock),
        };
        Ok(Self { config, clock, fixtures: cli.fixtures.clone() })
    }

    fn open(&self) -> Result<Observatory> {
        let conn: Arc<dyn PlatformConnector> = if !self.config.pipeline.connector_url.is_empty() {
            Arc::new(HttpConnector::new(&self.config.pipeline.connector_url, self.clock.clone())?)
        } else {
            let hub = MockPlatformHub::new(self.clock.clone());
            if let Some(dir) = &self.fixtures {
                hub.load(FixtureDataset::load(dir).with_context(|| format!("loading fixtures from {}", dir.display()))?);
            }
            Arc::new(MockConnector::new(Arc::new(hub), self.clock.clone()))
        };
        Ok(Observatory::open(self.config.clone(), conn, self.clock.clone())?)
    }
}

fn handles_for(obs: &Observatory, platform: Platform, given: &[String]) -> Vec<String> {
    if !given.is_empty() {
        return given.to_vec();
    }
    obs.registry().handles_on(platform).into_iter().map(|(_, h)| h).collect()
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let level = if cli.verbose { tracing::Level::INFO } else { tracing::Level::WARN };
    tracing_subscriber::fmt().with_writer(io::stderr).with_max_level(level).init();
    let ctx = Ctx::new(&cli)?;
    match cli.cmd {
        Cmd::Seeds(SeedsCmd::Validate { file }) => {
            let f = fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?;
            let report = SeedRegistry::validate(f, PartyMap::default())?;
            for r in &report.rejected {
                eprintln!("row {}: {}", r.row, r.reason);
            }
            println!("{} valid, {} rejected", report.accepted, report.rejected.len());
            if !report.rejected.is_empty() {
                bail!("{} invalid rows in {}", report.rejected.len(), file.display());
            }
        }
        Cmd::Seeds(SeedsCmd::Import { file }) => {
            let obs = ctx.open()?;
            let f = fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?;
            let report = obs.import_seeds(f)?;
            for r in &report.rejected {
                eprintln!("row {}: {}", r.row, r.reason);
            }
            println!("{} accepted, {} rejected, {} seeds in registry", report.accepted, report.rejected.len(), obs.registry().len());
            if !report.rejected.is_empty() {
                bail!("{} rows rejected", report.rejected.len());
            }
        }
        Cmd::Crawl(CrawlCmd::Run(w)) => {
            let obs = ctx.open()?;
            let handles = handles_for(&obs, w.platform, &w.handles);
            if handles.is_empty() {
                bail!("no seed handles on {}", w.platform);
            }
            let report = obs.run_pipeline(w.platform, &handles, parse_time(&w.from)?, parse_time(&w.to)?)?;
            print_json(&report)?;
            if !report.errors.is_empty() {
                bail!("{} account runs reported errors; run `meo backfill run` to recover", report.errors.len());
            }
        }
        Cmd::Gaps(GapsCmd::Detect(w)) => {
            let obs = ctx.open()?;
            let (from, to) = (parse_time(&w.from)?, parse_time(&w.to)?);
            let mut out = io::stdout().lock();
            for h in handles_for(&obs, w.platform, &w.handles) {
                for g in obs.detect_gaps(w.platform, &h, from, to) {
                    writeln!(out, "{}", json!({"platform": w.platform, "handle": h, "start": g.start, "end": g.end}))?;
                }
            }
        }
        Cmd::Backfill(BackfillCmd::Run { platform, from, to, handles, max_tasks }) => {
            let obs = ctx.open()?;
            if let (Some(p), Some(from), Some(to)) = (platform, from, to) {
                let handles = handles_for(&obs, p, &handles);
                let planned = obs.plan_backfill(p, &handles, parse_time(&from)?, parse_time(&to)?)?;
                eprintln!("planned {} tasks", planned.len());
            }
            let report = obs.run_backfills(max_tasks)?;
            print_json(&report)?;
            if !report.failed.is_empty() || !report.abandoned.is_empty() {
                bail!("{} failed, {} abandoned", report.failed.len(), report.abandoned.len());
            }
        }
        Cmd::Query(q) => {
            let obs = ctx.open()?;
            let filters = q.filters.filters()?;
            let text = q.text.filter(|t| !t.trim().is_empty());
            let fusion = match q.mode {
                Mode::Lexical => Fusion::LexicalOnly,
                Mode::Semantic => Fusion::SemanticOnly,
                Mode::Hybrid => Fusion::Rrf,
                Mode::Browse => Fusion::Browse,
            };
            let hits = obs.index().search_hybrid(&HybridQuery { text, vector: None, filters, k: q.k, fusion })?;
            let mut out = io::stdout().lock();
            for h in hits {
                let Some(p) = obs.store().get(&h.post_id) else { continue };
                let row = json!({
                    "post_id": p.post_id,
                    "platform": p.platform,
                    "seed_id": p.seed_id,
                    "published_at": stats::rfc3339(p.published_at),
                    "score": h.score,
                    "text": p.text,
                });
                writeln!(out, "{row}")?;
            }
        }
        Cmd::Stats(s) => {
            let obs = ctx.open()?;
            stats_cmd(&obs, &s)?;
        }
        Cmd::Export(e) => {
            let obs = ctx.open()?;
            let f = e.filters.filters()?;
            let mut posts = obs.store().posts_where(|p| f.matches_post(p));
            posts.sort_by(|a, b| (a.published_at, &a.post_id).cmp(&(b.published_at, &b.post_id)));
            let sink: Box<dyn Write> = match &e.out {
                Some(path) => Box::new(io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?)),
                None => Box::new(io::stdout().lock()),
            };
            let n = match e.format {
                ExportFormat::Ndjson => stats::export_ndjson(&posts, sink)?,
                ExportFormat::Csv => stats::export_csv(&posts, sink)?,
            };
            eprintln!("exported {n} posts");
        }
        Cmd::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| ctx.config.api.bind.clone());
            let obs = Arc::new(ctx.open()?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, meo_core::api::router(obs)).await?;
                anyhow::Ok(())
            })?;
        }
        Cmd::Scenario(ScenarioCmd::Build { spec, out }) => scenario_build(&spec, &out)?,
        Cmd::Mock(MockCmd::Serve { dir }) => {
            let hub = MockPlatformHub::new(ctx.clock.clone());
            hub.load(FixtureDataset::load(&dir).with_context(|| format!("loading fixtures from {}", dir.display()))?);
            let server = MockServer::start(Arc::new(hub))?;
            println!("{}", server.base_url());
            io::stdout().flush()?;
            loop {
                std::thread::park();
            }
        }
    }
    Ok(())
}

fn stats_cmd(obs: &Observatory, s: &StatsArgs) -> Result<()> {
    let f = s.filters.filters()?;
    let text = match (s.report, s.format) {
        (Report::Table1, ReportFormat::Text) => obs.registry().distribution_report().render(),
        (Report::Table1, ReportFormat::Json) => serde_json::to_string_pretty(&obs.registry().distribution_report())? + "\n",
        (Report::Table2, fmt) => {
            let posts = obs.store().posts_where(|p| f.matches_post(p));
            let table = stats::table2(&posts);
            match fmt {
                ReportFormat::Json => serde_json::to_string_pretty(&table)? + "\n",
                _ => table.render(),
            }
        }
        (Report::Timeline, fmt) => {
            let (Some(from), Some(to)) = (f.from, f.to) else { bail!("timeline needs --from and --to") };
            let platforms: Vec<Platform> = match f.platform {
                Some(p) => vec![p],
                None => Platform::ALL.to_vec(),
            };
            let scoped = Filters { from: None, to: None, ..f.clone() };
            let posts = obs.store().posts_where(|p| scoped.matches_post(p));
            let tl = stats::timeline(&posts, &platforms, from.date_naive(), to.date_naive());
            match fmt {
                ReportFormat::Json => serde_json::to_string_pretty(&tl)? + "\n",
                _ => tl.to_csv(),
            }
        }
        (Report::Table1, ReportFormat::Csv) => bail!("table1 has no csv form"),
    };
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn scenario_build(spec_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = if spec_path.extension().is_some_and(|e| e == "json") {
        ScenarioSpec::from_json(&text)?
    } else {
        ScenarioSpec::from_toml(&text)?
    };
    let scenario = build_scenario(&spec)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("seeds.csv"), &scenario.seeds_csv)?;
    fs::write(out.join("expected.json"), scenario.expected.to_json())?;
    scenario.dataset.save(&out.join("corpus"))?;
    println!("{} seeds, {} documents written to {}", spec.seed_handles().len(), scenario.expected.total_docs, out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
