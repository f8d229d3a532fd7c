//! The `mrta` command line.

pub mod args;
mod chat;
mod error;
mod eval;
mod generate;
mod settings;

pub use args::{Cli, Command};
pub use error::{CliError, ExitKind};
pub use settings::FileConfig;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use mrta_core::config::BackendConfig;
use mrta_core::manual::{chunk_manual, corpus_stats, load_manual_dir, InstructionManual};
use mrta_service::{system_clocks, Service, ServiceConfig};

use crate::args::{IngestArgs, ServeArgs};
use crate::error::Context;
use crate::settings::{pick, require, DEFAULT_HOST, DEFAULT_PORT};

pub const DEFAULT_CHUNK_SIZE: usize = 10;

/// Runs one parsed command line.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Ingest(args) => ingest(&args, &file, out),
        Command::Generate(args) => generate::run(&args, &file, out),
        Command::Eval(args) => eval::run(&args, out),
        Command::Serve(args) => serve(&args, &file),
        Command::Chat(args) => chat::run(&args, &file, input, out),
    }
}

pub(crate) fn load_manuals(dir: &Path) -> Result<Vec<InstructionManual>, CliError> {
    load_manual_dir(dir).map_err(CliError::data)
}

pub(crate) fn load_backend(path: &Path) -> Result<BackendConfig, CliError> {
    Ok(BackendConfig::from_file(path)?)
}

pub(crate) fn write_line(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).data_err("writing output")
}

fn ingest(args: &IngestArgs, file: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = require(pick(&args.manuals, &file.manuals), "manuals")?;
    let chunk_size = pick(&args.chunk_size, &file.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE);
    let manuals = load_manuals(&dir)?;
    let stats = corpus_stats(&manuals);
    let chunks: usize = manuals
        .iter()
        .map(|m| chunk_manual(m, chunk_size).len())
        .sum();
    let rows = [
        ("manuals", stats.manual_count.to_string()),
        ("steps", stats.total_steps.to_string()),
        (
            "avg steps per manual",
            format!("{:.2}", stats.avg_steps_per_manual),
        ),
        ("tokens", stats.total_tokens.to_string()),
        ("unique tokens", stats.unique_tokens.to_string()),
        ("theme entities", stats.theme_entity_count.to_string()),
        ("theme mentions", stats.theme_mentions.to_string()),
        (&*format!("chunks (size {chunk_size})"), chunks.to_string()),
    ];
    for (name, value) in rows {
        write_line(out, format!("{name:<22}{value:>10}"))?;
    }
    for m in &manuals {
        write_line(
            out,
            format!("  {:<20} {:>3} steps  {}", m.id, m.steps.len(), m.title),
        )?;
    }
    if let Some(path) = &args.out {
        let mut json = serde_json::to_vec_pretty(&stats).expect("stats serialize");
        json.push(b'\n');
        std::fs::write(path, json).data_err(format!("writing {}", path.display()))?;
    }
    Ok(())
}

struct ServeSettings {
    manuals: PathBuf,
    backend: Option<PathBuf>,
    host: String,
    port: u16,
    log_dir: Option<PathBuf>,
    chunk_size: usize,
}

fn serve(args: &ServeArgs, file: &FileConfig) -> Result<(), CliError> {
    let settings = ServeSettings {
        manuals: require(pick(&args.manuals, &file.manuals), "manuals")?,
        backend: pick(&args.backend, &file.backend),
        host: pick(&args.host, &file.host).unwrap_or_else(|| DEFAULT_HOST.to_string()),
        port: pick(&args.port, &file.port).unwrap_or(DEFAULT_PORT),
        log_dir: pick(&args.log_dir, &file.log_dir),
        chunk_size: pick(&args.chunk_size, &file.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE),
    };
    let manuals = load_manuals(&settings.manuals)?;
    let mut config = ServiceConfig::new(manuals)
        .with_chunk_size(settings.chunk_size)
        .with_clocks(system_clocks());
    if let Some(path) = &settings.backend {
        let backend = load_backend(path)?;
        backend.build_llm()?;
        backend.build_vlm()?;
        config = config.with_backend(backend);
    }
    if let Some(dir) = &settings.log_dir {
        config = config.with_log_dir(dir);
    }
    let service = Service::new(config).map_err(CliError::data)?;

    let runtime = tokio::runtime::Runtime::new().data_err("starting runtime")?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", settings.host, settings.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .data_err(format!("binding {addr}"))?;
        let local = listener.local_addr().data_err("reading bound address")?;
        tracing::info!("listening on http://{local}");
        eprintln!("listening on http://{local}");
        service
            .serve(listener, async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await
            .data_err("serving")
    })
}
