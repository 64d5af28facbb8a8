//! `skilldyn`: run presets or config files, validate configs, and emit plot
//! data.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime fault, 3 partial sweep
//! failure.

mod config;
mod plotdata;
mod presets;
mod runner;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use runner::Subrun;

#[derive(Parser)]
#[command(name = "skilldyn", version, about = "Skill-learning dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset or a TOML config file.
    Run {
        /// Preset name (see `list-presets`) or path to a config file.
        target: String,
        /// Replace the seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's `out`, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Set a config value, e.g. `geometry.n_dim=64` (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config file and print it with every default filled in.
    Validate { config: PathBuf },
    /// Print long-format (series, x, y) CSV for a run directory.
    Plotdata {
        rundir: PathBuf,
        /// One of the kinds listed by `list-presets`.
        kind: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List presets and plot-data kinds.
    ListPresets,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            target,
            seed,
            out,
            overrides,
        } => run(&target, seed, out, overrides),
        Command::Validate { config } => validate(&config),
        Command::Plotdata { rundir, kind, out } => plot(&rundir, &kind, out.as_deref()),
        Command::ListPresets => {
            println!("presets:");
            for p in presets::PRESETS {
                println!("  {:<24} {}", p.name, p.about);
            }
            println!("plot kinds:");
            for (k, about) in plotdata::KINDS {
                println!("  {k:<24} {about}");
            }
            ExitCode::SUCCESS
        }
    }
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprint!("{e}");
    ExitCode::from(EXIT_CONFIG)
}

fn run(target: &str, seed: Option<u64>, out: Option<PathBuf>, mut overrides: Vec<String>) -> ExitCode {
    if let Some(s) = seed {
        overrides.push(format!("seeds=[{s}]"));
    }
    let (name, parts): (String, Vec<(String, String)>) = if let Some(p) = presets::find(target) {
        (
            p.name.to_string(),
            p.parts.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
        )
    } else if Path::new(target).is_file() {
        match std::fs::read_to_string(target) {
            Ok(text) => {
                let stem = Path::new(target)
                    .file_stem()
                    .map_or("run".into(), |s| s.to_string_lossy().into_owned());
                (stem, vec![(String::new(), text)])
            }
            Err(e) => {
                eprintln!("cannot read {target}: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    } else {
        eprintln!("unknown preset `{target}` (and no such file); valid presets:");
        for n in presets::names() {
            eprintln!("  {n}");
        }
        return ExitCode::from(EXIT_CONFIG);
    };

    let mut subruns = Vec::new();
    for (sub, text) in &parts {
        let source = if sub.is_empty() { target.to_string() } else { format!("{target}/{sub}") };
        match ExperimentConfig::load(text, &source, &overrides) {
            Ok(config) => subruns.push(Subrun {
                name: sub.clone(),
                config,
            }),
            Err(e) => return config_failure(&e),
        }
    }
    let out = out.unwrap_or_else(|| match subruns[0].config.out.as_str() {
        "" => PathBuf::from("runs").join(&name),
        dir => PathBuf::from(dir),
    });
    match runner::run(&subruns, &out) {
        Ok(report) => {
            for f in &report.failed {
                let sub = if f.subrun.is_empty() { String::new() } else { format!("{}/", f.subrun) };
                eprintln!("failed cell {sub}{}: {}", f.cell, f.error);
            }
            println!(
                "{}: {} cell(s), {} failed, {} file(s) in {}",
                name,
                report.cells,
                report.failed.len(),
                report.files.len() + 1,
                out.display()
            );
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn validate(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match ExperimentConfig::load(&text, &path.display().to_string(), &[]) {
        Ok(cfg) => {
            print!("{}", cfg.to_toml());
            ExitCode::SUCCESS
        }
        Err(e) => config_failure(&e),
    }
}

fn plot(rundir: &Path, kind: &str, out: Option<&Path>) -> ExitCode {
    let bytes = match plotdata::emit(rundir, kind).and_then(|rows| plotdata::to_csv(&rows)) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let written = match out {
        Some(p) => runner::write_atomic(p, &bytes),
        None => std::io::stdout().write_all(&bytes).map_err(Into::into),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
