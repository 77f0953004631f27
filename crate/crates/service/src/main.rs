use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dvspace::fixtures::populate_demo;
use dvspace::{DomainDefinition, UlRef};
use dvspace_service::config::ServiceConfig;
use dvspace_service::{http, Service};
use rand::{Rng, SeedableRng};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Domain Vector spaces: publish definitions, ingest vectors, search and
/// pool statistics across peers.
#[derive(Parser)]
#[command(name = "dvs", version)]
struct Cli {
    /// Config file; overrides DVS_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data directory; overrides the config file.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Domain Space definitions.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Domain Vectors.
    #[command(subcommand)]
    Dv(DvCmd),
    /// k-nearest / range search; QUERY is a search body.
    Search(SpaceQuery),
    /// Group statistics; QUERY is a stats body.
    Stats(SpaceQuery),
    #[command(subcommand)]
    Suggest(SuggestCmd),
    /// Evaluates decision variants; QUERY is an evaluate body.
    Evaluate(SpaceQuery),
    /// Runs the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Pools statistics from the configured peers; QUERY is a federated search body.
    Federate { query: PathBuf },
    /// Publishes the nested demo space and fills it with random vectors.
    Demo {
        #[arg(long, default_value_t = 10_001)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Publishes a JSON definition file.
    Publish { file: PathBuf },
    /// Checks a JSON definition file without publishing it.
    Validate { file: PathBuf },
    List,
    Show {
        id: String,
        #[arg(long)]
        version: Option<u64>,
    },
    /// Writes a space with its definitions and vectors as a binary export.
    Export {
        id: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    Import { file: PathBuf },
}

#[derive(Args)]
struct Format {
    #[arg(long, conflicts_with = "binary")]
    json: bool,
    #[arg(long)]
    binary: bool,
}

#[derive(Subcommand)]
enum DvCmd {
    /// JSON vectors to a binary stream.
    Encode {
        id: String,
        file: PathBuf,
        #[arg(long)]
        version: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Binary stream to JSON vectors.
    Decode {
        id: String,
        file: PathBuf,
        #[arg(long)]
        version: Option<u64>,
    },
    Insert {
        id: String,
        file: PathBuf,
        #[arg(long)]
        version: Option<u64>,
        #[command(flatten)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum SuggestCmd {
    /// Ranks dimensions by how often the matching group fills them.
    Dimensions(SpaceQuery),
    /// Proposes intervals around chosen values.
    Intervals(SpaceQuery),
}

#[derive(Args)]
struct SpaceQuery {
    /// Short index, content hash or UL.
    id: String,
    /// JSON file, or `-` for stdin.
    query: PathBuf,
}

fn read_input(path: &Path) -> anyhow::Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf)?;
        return Ok(buf);
    }
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_slice(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn print<T: Serialize>(v: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    write_output(None, text.as_bytes())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => match std::io::stdout().lock().write_all(bytes) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

fn config(cli: &Cli) -> anyhow::Result<ServiceConfig> {
    let mut c = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::from_env()?,
    };
    if let Some(d) = &cli.data_dir {
        c.data_dir = d.clone();
    }
    Ok(c)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = config(&cli)?;
    if let Cmd::Serve { listen } = cli.cmd {
        let addr = listen.unwrap_or(config.listen);
        let svc = Arc::new(Service::from_config(config)?);
        let rt = tokio::runtime::Runtime::new()?;
        return rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind(addr).await?;
            tracing::info!("listening on {}", listener.local_addr()?);
            http::serve(listener, svc).await?;
            Ok(())
        });
    }
    let svc = Service::from_config(config)?;
    match cli.cmd {
        Cmd::Space(SpaceCmd::Publish { file }) => {
            let def: DomainDefinition = read_json(&file)?;
            print(&svc.publish("new", &def)?)
        }
        Cmd::Space(SpaceCmd::Validate { file }) => print(&svc.validate(&read_json(&file)?)?),
        Cmd::Space(SpaceCmd::List) => print(&svc.list_spaces()),
        Cmd::Space(SpaceCmd::Show { id, version }) => print(&svc.space_detail(&id, version)?),
        Cmd::Space(SpaceCmd::Export { id, out }) => {
            let ul = svc.resolve_id(&id)?.ul;
            write_output(out.as_deref(), &svc.store.export_space(&ul)?)
        }
        Cmd::Space(SpaceCmd::Import { file }) => {
            let n = svc.store.import_space(&read_input(&file)?)?;
            print(&serde_json::json!({ "inserted": n }))
        }
        Cmd::Dv(DvCmd::Encode { id, file, version, out }) => {
            let body: Value = read_json(&file)?;
            write_output(out.as_deref(), &svc.encode(&id, version, &body)?)
        }
        Cmd::Dv(DvCmd::Decode { id, file, version }) => print(&svc.decode(&id, version, &read_input(&file)?)?),
        Cmd::Dv(DvCmd::Insert { id, file, version, format }) => {
            let binary = format.binary || (!format.json && file.extension().is_some_and(|e| e == "dvs" || e == "bin"));
            let report = if binary {
                svc.insert_binary(&id, version, &read_input(&file)?)?
            } else {
                svc.insert_json(&id, version, &read_json(&file)?)?
            };
            print(&report)
        }
        Cmd::Search(q) => print(&svc.search(&q.id, read_json(&q.query)?)?),
        Cmd::Stats(q) => print(&svc.stats(&q.id, read_json(&q.query)?)?),
        Cmd::Suggest(SuggestCmd::Dimensions(q)) => print(&svc.suggest_dimensions(&q.id, read_json(&q.query)?)?),
        Cmd::Suggest(SuggestCmd::Intervals(q)) => print(&svc.suggest_intervals(&q.id, read_json(&q.query)?)?),
        Cmd::Evaluate(q) => print(&svc.evaluate_variants(&q.id, read_json(&q.query)?)?),
        Cmd::Federate { query } => {
            if svc.peers.is_empty() {
                bail!("no peers configured");
            }
            print(&svc.federated_search(read_json(&query)?)?)
        }
        Cmd::Demo { count, seed } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ul: UlRef = populate_demo(&svc.store, count, || rng.gen_range(0..=10))?;
            print(&svc.space_detail(&ul.to_string(), None)?["local_index"])
        }
        Cmd::Serve { .. } => unreachable!(),
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
