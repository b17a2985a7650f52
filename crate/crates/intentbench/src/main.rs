//! Command-line entry point: validate datasets, run evaluations, re-render
//! reports. Every subcommand is a thin shell over the library; no logic
//! lives here that examples/tests cannot reach directly.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use intentbench::config::HarnessConfig;
use intentbench::dataset::{load, resolve_frames, DatasetManifest};
use intentbench::runner::report::{read_report, render_report, ReportFormat};
use intentbench::runner::{run, RunOptions, RunnerError};

// exit codes: 0 success, 2 usage (clap default), 3 config, 4 dataset, 5 runtime
const EXIT_CONFIG: u8 = 3;
const EXIT_DATASET: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

#[derive(Parser)]
#[command(name = "intentbench", version, about = "Two-stage intention inference over video QA benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strict-mode check of every record in a dataset manifest.
    Validate {
        /// Dataset manifest JSON file.
        #[arg(long)]
        manifest: PathBuf,
        /// Also verify that every record's frames resolve on disk.
        #[arg(long)]
        check_media: bool,
    },
    /// Run an evaluation and write its report.
    Run {
        /// Dataset manifest JSON file.
        #[arg(long)]
        dataset: PathBuf,
        /// closed | open-direct | open-2step (overrides the config file).
        #[arg(long)]
        mode: Option<String>,
        /// Harness config TOML.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report files (default: runs/<run_id>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Process only the first N records.
        #[arg(long)]
        limit: Option<usize>,
        /// Ignore cached responses and refresh them.
        #[arg(long)]
        refresh_cache: bool,
        /// Skip malformed records instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Re-render the report of a finished run.
    Report {
        /// Directory containing report.json.
        #[arg(long)]
        run_dir: PathBuf,
        /// json | markdown
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    match Cli::parse().command {
        Command::Validate { manifest, check_media } => cmd_validate(&manifest, check_media),
        Command::Run { dataset, mode, config, out, limit, refresh_cache, lenient } => {
            cmd_run(&dataset, mode.as_deref(), &config, out, limit, refresh_cache, lenient)
        }
        Command::Report { run_dir, format } => cmd_report(&run_dir, &format),
    }
}

fn cmd_validate(manifest_path: &Path, check_media: bool) -> ExitCode {
    let manifest = match DatasetManifest::load_file(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_DATASET);
        }
    };
    let records = match load(&manifest) {
        Ok(iter) => iter,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_DATASET);
        }
    };
    let mut ok = 0usize;
    let mut errors = 0usize;
    for result in records {
        match result {
            Ok(sample) => {
                if check_media {
                    if let Err(e) = resolve_frames(&manifest.media_root, &sample.media) {
                        println!("sample {}: {e}", sample.id);
                        errors += 1;
                        continue;
                    }
                }
                ok += 1;
            }
            Err(e) => {
                println!("{e}");
                errors += 1;
            }
        }
    }
    if errors == 0 {
        println!("{ok} records OK");
        ExitCode::SUCCESS
    } else {
        println!("{ok} records OK, {errors} errors");
        ExitCode::from(EXIT_DATASET)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    dataset: &Path,
    mode: Option<&str>,
    config_path: &Path,
    out: Option<PathBuf>,
    limit: Option<usize>,
    refresh_cache: bool,
    lenient: bool,
) -> ExitCode {
    let config = match HarnessConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cfg = match config.run_config(mode) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let registry = match config.build_registry() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let manifest = match DatasetManifest::load_file(dataset) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_DATASET);
        }
    };

    // the run id is deterministic, so resolve the default out dir in two
    // passes: run first, then write, would break atomic reporting — instead
    // derive it by running with an explicit out dir only when given
    let options = RunOptions { limit, refresh_cache, lenient, out_dir: out };
    let outcome = match run(&manifest, &cfg, &registry, &options) {
        Ok(o) => o,
        Err(RunnerError::Dataset(e)) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_DATASET);
        }
        Err(RunnerError::Config(e)) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };

    let out_dir = match &options.out_dir {
        Some(dir) => dir.clone(),
        None => {
            let dir = PathBuf::from("runs").join(&outcome.report.run_id);
            if let Err(e) = intentbench::runner::report::write_report_files(&outcome.report, &dir)
            {
                eprintln!("{e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            dir
        }
    };

    print!("{}", render_report(&outcome.report, ReportFormat::MarkdownTable));
    let total_calls = outcome.cache_hits + outcome.cache_misses;
    let hit_pct = if total_calls == 0 {
        100
    } else {
        (outcome.cache_hits * 100) / total_calls
    };
    println!("\ncache hits: {hit_pct}% ({}/{total_calls})", outcome.cache_hits);
    if outcome.skipped_records > 0 {
        println!("skipped records: {}", outcome.skipped_records);
    }
    println!("report written to {}", out_dir.display());
    ExitCode::SUCCESS
}

fn cmd_report(run_dir: &Path, format: &str) -> ExitCode {
    let format = match format {
        "json" => ReportFormat::Json,
        "markdown" | "md" | "markdown_table" => ReportFormat::MarkdownTable,
        other => {
            eprintln!("unknown format {other:?} (expected json or markdown)");
            return ExitCode::from(2);
        }
    };
    match read_report(run_dir) {
        Ok(report) => {
            print!("{}", render_report(&report, format));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
