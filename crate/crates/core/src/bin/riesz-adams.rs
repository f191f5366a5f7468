use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riesz_adams::catalog;
use riesz_adams::manifest::{self, Manifest, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "riesz-adams", version, about = "Reproducible experiments on Adams-type inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a manifest; writes <out>.csv, <out>.verdict.json and <out>.log.
    Run {
        /// JSON manifest.
        #[arg(long, conflicts_with = "preset")]
        manifest: Option<PathBuf>,
        /// Built-in preset to check instead of a manifest (see `list`).
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the command's sample size.
        #[arg(long)]
        samples: Option<usize>,
        /// Output prefix; defaults to the manifest `output`, then `./<command>`.
        #[arg(long)]
        out: Option<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List built-in presets, optionally only one category (kernel, domain, symbol).
    List { filter: Option<String> },
}

fn run(cli: Cli) -> Result<i32, riesz_adams::Error> {
    match cli.command {
        Cmd::List { filter } => {
            for p in catalog::list(filter.as_deref()) {
                println!("{p}");
            }
            Ok(0)
        }
        Cmd::Run { manifest, preset, seed, samples, out, threads } => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| riesz_adams::Error::Manifest { field: "--threads".into(), reason: e.to_string() })?;
            }
            let m = match (manifest, preset) {
                (Some(path), _) => Manifest::load(&path)?,
                (None, Some(name)) => manifest::preset_manifest(&name)?,
                (None, None) => {
                    return Err(riesz_adams::Error::Manifest { field: "--manifest".into(), reason: "give --manifest or --preset".into() })
                }
            };
            let prefix = out.or_else(|| m.output.clone()).unwrap_or_else(|| m.command.name().to_string());
            let artifacts = manifest::run(&m, &RunOptions { seed, samples })?;
            for path in artifacts.write(&prefix)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(artifacts.status.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
