//! `relaq`: ingest datasets, run queries and recommendations, serve, benchmark.
//!
//! `query` and `recommend` always go through the HTTP service: against
//! `--server` when given, otherwise against a private in-process server
//! loaded from the artifact directory. Output is the service body verbatim.

mod bench;

use std::fmt;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use relaq_client::{Client, ClientError};
use relaq_core::datamodel::{parse_config, parse_dataset, MetaLabels, PreprocessParams};
use relaq_core::matcher::QueryResponse;
use relaq_core::preprocess::{preprocess, BuildConfig};
use relaq_core::querymodel::parse_query;
use relaq_core::store::{self, dataset_id};
use relaq_core::wire::GuidanceRequest;
use relaq_server::{AppState, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "relaq", version, about = "Relation-driven retrieval over multiple time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and preprocess a dataset into an artifact directory.
    Ingest {
        data: PathBuf,
        /// Label config CSV (`name,<key>,...`).
        config: Option<PathBuf>,
        /// Original samples per compressed sample.
        #[arg(long)]
        sampling: usize,
        /// Original samples per query window.
        #[arg(long = "box")]
        box_length: usize,
        #[arg(long, default_value = "step")]
        step_unit: String,
        /// Output directory; defaults to $RELAQ_DATA_DIR/<dataset id>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a query graph against a dataset.
    Query {
        /// Artifact directory, or a dataset id with --server.
        dataset: String,
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Force fuzzy mode regardless of the query's own setting.
        #[arg(long)]
        fuzzy: bool,
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recommend extensions from a focus timebox.
    Recommend {
        dataset: String,
        query: PathBuf,
        #[arg(long)]
        focus: String,
        /// Largest lag to try, in compressed steps (default: one window).
        #[arg(long)]
        max_lag_steps: Option<usize>,
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one artifact directory, or every artifact directory under a root.
    Serve {
        dir: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Time preprocessing and queries on synthetic data of growing size.
    Bench {
        /// Where synthetic artifacts and the report are written.
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [20usize, 40, 80])]
        series: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 2000, 4000])]
        length: Vec<usize>,
        /// Timeboxes per query (chains linked by correlation).
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3])]
        boxes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        sampling: usize,
        #[arg(long = "box", default_value_t = 100)]
        box_length: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const QUERY: u8 = 3;

impl Failure {
    fn new(code: u8, message: impl fmt::Display) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e.status() {
            Some(s) if s.is_client_error() => Failure::new(QUERY, e),
            _ => Failure::new(DATA, e),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("relaq: {}", f.message.lines().next().unwrap_or_default());
            ExitCode::from(f.code)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().map_err(|e| Failure::new(DATA, format!("cannot start runtime: {e}")))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn data_root() -> Option<PathBuf> {
    std::env::var_os("RELAQ_DATA_DIR").map(PathBuf::from)
}

/// An artifact directory given directly or as a name under $RELAQ_DATA_DIR.
fn resolve_dir(arg: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(arg);
    if direct.join(store::MANIFEST).is_file() {
        return Ok(direct);
    }
    if let Some(root) = data_root() {
        let under = root.join(arg);
        if under.join(store::MANIFEST).is_file() {
            return Ok(under);
        }
    }
    Err(Failure::new(DATA, format!("{arg}: not an artifact directory (no {})", store::MANIFEST)))
}

fn write_output(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::new(DATA, format!("stdout: {e}")))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { data, config, sampling, box_length, step_unit, out } => {
            ingest(&data, config.as_deref(), sampling, box_length, &step_unit, out)
        }
        Command::Query { dataset, query, format, fuzzy, server, out } => {
            let mut text = read_text(&query)?;
            if fuzzy {
                text = force_fuzzy(&text)?;
            }
            let body = with_service(&dataset, server.as_deref(), |client, id| async move {
                client.query_raw(&id, &text).await
            })?;
            let body = match format {
                Format::Json => body,
                Format::Csv => results_csv(&body)?,
            };
            write_output(out.as_deref(), &body)
        }
        Command::Recommend { dataset, query, focus, max_lag_steps, server, out } => {
            let query = parse_query(&read_text(&query)?).map_err(|e| Failure::new(QUERY, e))?;
            let request = GuidanceRequest { query, focus, max_lag_steps };
            let body = with_service(&dataset, server.as_deref(), |client, id| async move {
                client.guidance_raw(&id, &request).await
            })?;
            write_output(out.as_deref(), &body)
        }
        Command::Serve { dir, port, host } => serve(dir, SocketAddr::new(host, port)),
        Command::Bench { dir, series, length, boxes, sampling, box_length } => {
            let params = PreprocessParams::new(sampling, box_length).map_err(|e| Failure::new(USAGE, e))?;
            let report = bench::run(&dir, &series, &length, &boxes, params).map_err(|e| Failure::new(DATA, e))?;
            write_output(None, &report)
        }
    }
}

fn ingest(data: &Path, config: Option<&Path>, sampling: usize, box_length: usize, step_unit: &str, out: Option<PathBuf>) -> Result<()> {
    let params = PreprocessParams::new(sampling, box_length).map_err(|e| Failure::new(USAGE, e))?;
    let data_bytes = read(data)?;
    let config_bytes = config.map(read).transpose()?.unwrap_or_default();
    let id = dataset_id(&data_bytes, &config_bytes, params, step_unit);
    let out = match out.or_else(|| data_root().map(|r| r.join(&id))) {
        Some(out) => out,
        None => return Err(Failure::new(USAGE, "no --out given and RELAQ_DATA_DIR is not set")),
    };
    let text = String::from_utf8(data_bytes).map_err(|e| Failure::new(DATA, e))?;
    let dataset = parse_dataset(&text).map_err(|e| Failure::new(DATA, e))?.with_step_unit(step_unit);
    let labels = if config_bytes.is_empty() {
        MetaLabels::default()
    } else {
        parse_config(&String::from_utf8(config_bytes).map_err(|e| Failure::new(DATA, e))?).map_err(|e| Failure::new(DATA, e))?
    };
    for warning in relaq_core::datamodel::validate(&dataset, &labels) {
        eprintln!("relaq: warning: {warning}");
    }
    if params.window_symbols() > params.compressed_len(dataset.len()) {
        return Err(Failure::new(DATA, format!("box length {box_length} exceeds the series length {}", dataset.len())));
    }
    let artifacts = preprocess(dataset, labels, params, &BuildConfig::default()).map_err(|e| Failure::new(DATA, e))?;
    // A CLI ingest is a batch job: wait for every index rather than backgrounding.
    store::save(&out, &id, &artifacts, Duration::MAX).map_err(|e| Failure::new(DATA, e))?;
    println!("{}", out.display());
    Ok(())
}

fn force_fuzzy(text: &str) -> Result<String> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| Failure::new(QUERY, format!("query: {e}")))?;
    let obj = value.as_object_mut().ok_or_else(|| Failure::new(QUERY, "query must be a JSON object"))?;
    obj.insert("mode".into(), "fuzzy".into());
    Ok(value.to_string())
}

/// Run `f` against either `server` (with `dataset` as id) or a private
/// in-process server holding the artifact directory `dataset`.
fn with_service<F, Fut>(dataset: &str, server: Option<&str>, f: F) -> Result<String>
where
    F: FnOnce(Client, String) -> Fut,
    Fut: std::future::Future<Output = std::result::Result<String, ClientError>>,
{
    let rt = runtime()?;
    match server {
        Some(url) => rt.block_on(f(Client::new(url), dataset.to_string())).map_err(Failure::from),
        None => {
            let dir = resolve_dir(dataset)?;
            let state = AppState::new(ServerConfig::default());
            let id = state.load_dir(&dir).map_err(|e| Failure::new(DATA, e))?;
            rt.block_on(async move {
                let running = relaq_server::start(SocketAddr::from(([127, 0, 0, 1], 0)), Arc::new(state))
                    .await
                    .map_err(|e| Failure::new(DATA, format!("cannot start local service: {e}")))?;
                f(Client::new(running.url()), id).await.map_err(Failure::from)
            })
        }
    }
}

fn results_csv(body: &str) -> Result<String> {
    let response: QueryResponse = serde_json::from_str(body).map_err(|e| Failure::new(DATA, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["rank", "score", "timebox", "series", "start", "length", "start_time", "end_time", "degree"];
    let csv_err = |e: csv::Error| Failure::new(DATA, e);
    w.write_record(header).map_err(csv_err)?;
    for (rank, r) in response.results.iter().enumerate() {
        for (id, f) in &r.fragments {
            w.write_record([
                (rank + 1).to_string(),
                r.score.to_string(),
                id.clone(),
                f.series.clone(),
                f.start.to_string(),
                f.length.to_string(),
                f.start_time.clone(),
                f.end_time.clone(),
                f.degree.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::new(DATA, e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::new(DATA, e))
}

fn serve(dir: Option<PathBuf>, addr: SocketAddr) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("RELAQ_LOG").unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let dir = dir.or_else(data_root).ok_or_else(|| Failure::new(USAGE, "no directory given and RELAQ_DATA_DIR is not set"))?;
    let state = if dir.join(store::MANIFEST).is_file() {
        let state = AppState::new(ServerConfig::default());
        state.load_dir(&dir).map_err(|e| Failure::new(DATA, e))?;
        state
    } else {
        AppState::open(ServerConfig { data_dir: Some(dir), ..ServerConfig::default() }).map_err(|e| Failure::new(DATA, e))?
    };
    for id in state.ids() {
        eprintln!("relaq: serving dataset {id}");
    }
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::new(DATA, format!("{addr}: {e}")))?;
        eprintln!("relaq: listening on http://{}", listener.local_addr().map_err(|e| Failure::new(DATA, e))?);
        relaq_server::serve(listener, Arc::new(state)).await.map_err(|e| Failure::new(DATA, e))
    })
}
