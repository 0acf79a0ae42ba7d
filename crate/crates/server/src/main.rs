use std::io::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use seqlod_core::aggtree::{ClusterOrder, Frontier};
use seqlod_core::analytics::Filter;
use seqlod_core::{synth, Config, Snapshot};
use seqlod_server::api::{payload_bytes, spawn_build};
use seqlod_server::{router, svg, Dataset, Engine};

#[derive(Parser)]
#[command(name = "seqlod", version, about = "Multilevel overviews of event sequences")]
struct Cli {
    /// TOML or JSON settings file; SEQLOD_* variables override it.
    #[arg(long, global = true, env = "SEQLOD_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    SvgSkeleton,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Similarity,
    Frequency,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// 21,805 records over 962 unique sequences
    Care,
    /// 1,425 records over 1,311 unique sequences
    Icu,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest CSVs, build the tree, and write it to a cache directory.
    Build {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        attrs: Option<PathBuf>,
        /// q-gram length (overrides the config file)
        #[arg(long)]
        q: Option<usize>,
        /// JSON file holding a list of filters to build as well
        #[arg(long)]
        filters: Option<PathBuf>,
        #[arg(long, default_value = "cache")]
        out: PathBuf,
    },
    /// Print the overview at a vertical and horizontal level of detail.
    Overview {
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        /// Number of clusters; defaults to the top recommendation.
        #[arg(long)]
        k: Option<usize>,
        /// Explicit frontier as comma-separated node ids.
        #[arg(long, conflicts_with = "k")]
        frontier: Option<String>,
        #[arg(long)]
        itau: Option<f64>,
        #[arg(long, value_enum, default_value = "similarity")]
        order: Order,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        filters_sig: Option<String>,
    },
    /// Print the recommended numbers of clusters with their silhouettes.
    Recommend {
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        filters_sig: Option<String>,
        /// Print the full silhouette curve as CSV instead.
        #[arg(long)]
        csv: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "cache")]
        cache: PathBuf,
    },
    /// Write a synthetic event log and attribute table.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    let base = match path {
        Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    Ok(base.with_env()?)
}

fn open(engine: &Engine, dataset: Option<&str>, sig: Option<&str>) -> Result<Arc<Snapshot>> {
    engine.load_root()?;
    let ds = engine.pick(dataset)?;
    let sig = sig.map(str::to_owned).unwrap_or_else(Dataset::base_signature);
    let filters = if sig == Dataset::base_signature() {
        Vec::new()
    } else {
        ds.filters(&sig)
            .with_context(|| format!("no filters with signature {sig} were built"))?
    };
    Ok(ds.run_build(&filters, &engine.config)?)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut config = load_config(cli.config.as_ref())?;
    let mut stdout = std::io::stdout().lock();

    match cli.command {
        Command::Build {
            events,
            attrs,
            q,
            filters,
            out,
        } => {
            if let Some(q) = q {
                config.q = q;
                config.validate()?;
            }
            let engine = Engine::new(config, Some(out));
            let events = std::fs::read(&events).with_context(|| format!("reading {}", events.display()))?;
            let attrs = attrs
                .map(|p| std::fs::read(&p).with_context(|| format!("reading {}", p.display())))
                .transpose()?;
            let (ds, _) = engine.register(events, attrs)?;
            let base = ds.run_build(&[], &engine.config)?;
            eprintln!(
                "dataset {}: {} records, {} unique sequences, built in {:.2?}",
                ds.id,
                base.total_records(),
                base.n_sequences(),
                base.build_time()
            );
            if let Some(path) = filters {
                let list: Vec<Filter> = serde_json::from_slice(&std::fs::read(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?;
                let snap = ds.run_build(&list, &engine.config)?;
                eprintln!(
                    "filters {}: {} records, {} unique sequences",
                    snap.filter_signature,
                    snap.total_records(),
                    snap.n_sequences()
                );
            }
            writeln!(stdout, "{}", ds.id)?;
        }
        Command::Overview {
            cache,
            dataset,
            k,
            frontier,
            itau,
            order,
            format,
            filters_sig,
        } => {
            let engine = Engine::new(config, Some(cache));
            let snap = open(&engine, dataset.as_deref(), filters_sig.as_deref())?;
            let frontier = match frontier {
                Some(raw) => Frontier {
                    nodes: raw
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_, _>>()
                        .context("frontier must be comma-separated node ids")?,
                },
                None => snap
                    .tree
                    .cut_at_k(k.unwrap_or_else(|| snap.curve.recommendations.first().copied().unwrap_or(1)))?,
            };
            let order = match order {
                Order::Similarity => ClusterOrder::Similarity,
                Order::Frequency => ClusterOrder::Frequency,
            };
            let itau = itau.unwrap_or(engine.config.default_itau);
            let overview = snap.overview(&frontier, itau, order, &engine.config)?;
            match format {
                Format::Json => {
                    stdout.write_all(&payload_bytes(&overview))?;
                    writeln!(stdout)?;
                }
                Format::SvgSkeleton => stdout.write_all(svg::render(&overview).as_bytes())?,
            }
        }
        Command::Recommend {
            cache,
            dataset,
            filters_sig,
            csv,
        } => {
            let engine = Engine::new(config, Some(cache));
            let snap = open(&engine, dataset.as_deref(), filters_sig.as_deref())?;
            if csv {
                stdout.write_all(snap.curve.to_csv().as_bytes())?;
            } else {
                writeln!(stdout, "k,avg_silhouette_width")?;
                for &k in &snap.curve.recommendations {
                    writeln!(stdout, "{k},{}", snap.curve.get(k).unwrap_or(0.0))?;
                }
            }
        }
        Command::Serve { port, host, cache } => {
            let engine = Arc::new(Engine::new(config, Some(cache)));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                for ds in engine.load_root()? {
                    spawn_build(&engine, &ds, Vec::new());
                    for filters in ds.known_filters() {
                        spawn_build(&engine, &ds, filters);
                    }
                }
                let addr: SocketAddr = format!("{host}:{port}").parse().context("bad host/port")?;
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!(%addr, "listening");
                axum::serve(listener, router(engine))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Synth { kind, seed, out } => {
            let log = match kind {
                SynthKind::Care => synth::care_pathways(seed),
                SynthKind::Icu => synth::icu_stays(seed),
            };
            std::fs::create_dir_all(&out)?;
            let events = out.join("events.csv");
            let attrs = out.join("attributes.csv");
            std::fs::write(&events, &log.events_csv)?;
            std::fs::write(&attrs, &log.attributes_csv)?;
            eprintln!("wrote {} and {}", events.display(), attrs.display());
        }
    }
    Ok(())
}
