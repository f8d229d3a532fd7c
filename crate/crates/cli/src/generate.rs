use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mrta_core::backend::BackendError;
use mrta_core::forge::{
    dataset_stats, run_pipeline, write_outputs, ForgeConfig, ForgeError, ForgeOutput,
};

use crate::args::GenerateArgs;
use crate::error::{CliError, Context};
use crate::settings::{pick, require, FileConfig};
use crate::{load_backend, load_manuals, write_line};

pub const STATS_FILE: &str = "stats.json";
const TOP_K: usize = 20;

pub(crate) fn run(
    args: &GenerateArgs,
    file: &FileConfig,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let manuals_dir = require(pick(&args.manuals, &file.manuals), "manuals")?;
    let backend_path = require(pick(&args.backend, &file.backend), "backend")?;
    let out_dir = require(pick(&args.out, &file.out), "out")?;
    let defaults = ForgeConfig::default();
    let config = ForgeConfig {
        seed: pick(&args.seed, &file.seed).unwrap_or(defaults.seed),
        chunk_size: pick(&args.chunk_size, &file.chunk_size).unwrap_or(defaults.chunk_size),
        test_fraction: pick(&args.test_fraction, &file.test_fraction)
            .unwrap_or(defaults.test_fraction),
        conversations_per_chunk: pick(&args.conversations_per_chunk, &file.conversations_per_chunk)
            .unwrap_or(defaults.conversations_per_chunk),
    };
    if config.chunk_size == 0 || config.conversations_per_chunk == 0 {
        return Err(CliError::usage(
            "--chunk-size and --conversations-per-chunk must be positive",
        ));
    }

    let manuals = load_manuals(&manuals_dir)?;
    let backend = load_backend(&backend_path)?;
    let llm = backend.build_llm()?;
    let vlm = backend.build_vlm()?.ok_or_else(|| {
        BackendError::Config(format!(
            "{}: generation needs a `vlm` backend",
            backend_path.display()
        ))
    })?;

    let output =
        run_pipeline(&manuals, &config, llm.as_ref(), vlm.as_ref()).map_err(|e| match e {
            ForgeError::Backend(b) => CliError::backend(b),
            ForgeError::InvalidFraction(_) => CliError::usage(e),
            other => CliError::data(other),
        })?;

    write_atomically(&out_dir, &output, &manuals)?;
    let m = &output.manifest;
    write_line(
        out,
        format!(
            "{} conversations ({} rejected), {} pairs ({} train / {} test), {} vqa ({} dropped) -> {}",
            m.counts.conversations,
            m.rejected.len(),
            m.counts.pairs,
            m.splits.train,
            m.splits.test,
            m.counts.vqa,
            m.vqa_dropped,
            out_dir.display()
        ),
    )
}

fn staging_dir(out_dir: &Path) -> PathBuf {
    let name = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out_dir.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

/// Writes everything to a staging directory first so a failure leaves no
/// partial dataset behind.
fn write_atomically(
    out_dir: &Path,
    output: &ForgeOutput,
    manuals: &[mrta_core::manual::InstructionManual],
) -> Result<(), CliError> {
    let staging = staging_dir(out_dir);
    let result = (|| {
        write_outputs(&staging, output)?;
        let pairs: Vec<_> = output.pairs.iter().map(|p| p.pair.clone()).collect();
        let stats = dataset_stats(manuals, &output.conversations, &pairs, &output.vqa, TOP_K);
        let mut json = serde_json::to_vec_pretty(&stats).map_err(std::io::Error::other)?;
        json.push(b'\n');
        fs::write(staging.join(STATS_FILE), json)?;
        fs::create_dir_all(out_dir)?;
        for entry in fs::read_dir(&staging)? {
            let entry = entry?;
            fs::rename(entry.path(), out_dir.join(entry.file_name()))?;
        }
        fs::remove_dir(&staging)
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result.data_err(format!("writing {}", out_dir.display()))
}
