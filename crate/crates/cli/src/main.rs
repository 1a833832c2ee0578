//! Command-line front end for the federated learning simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cffl::harness::{
    emit_plot_data, read_metrics_csv, read_summary, run_experiment, summarize, write_summary, ExperimentConfig,
    Framework, METRICS_FILE, SUMMARY_FILE,
};
use cffl::{Error, ErrorKind, Result};
use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cffl", version, about = "Collaborative fair federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured framework and seed, writing one directory per run.
    Run {
        /// TOML experiment config.
        config: PathBuf,
        /// Replace the config's seed list (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        /// Replace the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated frameworks: standalone, cffl, fedavg, dssgd.
        #[arg(long, value_delimiter = ',')]
        frameworks: Option<Vec<Framework>>,
    },
    /// Recompute summary.json for run directories from their metrics.csv.
    Fairness {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Standalone run directory to score against. Defaults to the
        /// `standalone/seed_<s>` sibling of each run.
        #[arg(long)]
        standalone: Option<PathBuf>,
        /// Seed recorded in the summary when it cannot be read from the run.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write series_<participant>.csv files for run directories.
    PlotData {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Directory for the series files; defaults to each run directory.
        /// With several runs, each gets a subdirectory named after it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(config_path: &Path, seeds: Vec<u64>, out: Option<PathBuf>, frameworks: Option<Vec<Framework>>) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if !seeds.is_empty() {
        config.seeds = seeds;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    if let Some(frameworks) = frameworks {
        config.frameworks = frameworks;
    }
    for record in run_experiment(&config)? {
        let s = &record.summary;
        let fairness = s.fairness.map_or_else(|| "undefined".to_string(), |f| format!("{f:.4}"));
        println!(
            "{:<10} seed {:<6} fairness {:<9} max accuracy {:.4}  {}",
            record.framework,
            record.seed,
            fairness,
            s.max_accuracy,
            record.dir.display()
        );
    }
    Ok(())
}

/// Framework and seed of a run directory: from its summary if one exists,
/// otherwise from the `<framework>/seed_<s>` layout.
fn identify(dir: &Path, seed: Option<u64>) -> Result<(Framework, u64)> {
    if let Ok(s) = read_summary(&dir.join(SUMMARY_FILE)) {
        return Ok((s.framework, seed.unwrap_or(s.seed)));
    }
    let name = |p: Option<&Path>| p.and_then(|p| p.file_name()).and_then(|n| n.to_str()).map(str::to_owned);
    let framework: Framework = name(dir.parent())
        .ok_or_else(|| Error::InvalidConfig(format!("cannot tell the framework of {}", dir.display())))?
        .parse()?;
    let seed = match seed {
        Some(s) => s,
        None => name(Some(dir))
            .and_then(|n| n.strip_prefix("seed_").and_then(|s| s.parse().ok()))
            .ok_or_else(|| Error::InvalidConfig(format!("cannot tell the seed of {}", dir.display())))?,
    };
    Ok((framework, seed))
}

fn fairness(run_dirs: &[PathBuf], standalone: Option<&Path>, seed: Option<u64>) -> Result<()> {
    for dir in run_dirs {
        let (framework, seed) = identify(dir, seed)?;
        let standalone_dir = match standalone {
            Some(p) => p.to_path_buf(),
            None => dir
                .parent()
                .and_then(Path::parent)
                .map(|root| root.join(Framework::Standalone.name()).join(format!("seed_{seed}")))
                .ok_or_else(|| Error::InvalidConfig("pass --standalone".into()))?,
        };
        let metrics = read_metrics_csv(&dir.join(METRICS_FILE))?;
        let baseline = read_metrics_csv(&standalone_dir.join(METRICS_FILE))?;
        let summary = summarize(framework, seed, &metrics, &baseline)?;
        write_summary(&dir.join(SUMMARY_FILE), &summary)?;
        match (summary.fairness, &summary.fairness_error) {
            (Some(f), _) => println!("{} fairness {f}", dir.display()),
            (None, err) => println!("{} fairness undefined: {}", dir.display(), err.as_deref().unwrap_or("")),
        }
    }
    Ok(())
}

fn plot_data(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    for dir in run_dirs {
        let target = match out {
            Some(o) if run_dirs.len() > 1 => {
                let parts: Vec<_> = dir.components().rev().take(2).collect();
                let mut t = o.to_path_buf();
                for c in parts.into_iter().rev() {
                    t.push(c);
                }
                Some(t)
            }
            Some(o) => Some(o.to_path_buf()),
            None => None,
        };
        let paths = emit_plot_data(dir, target.as_deref())?;
        println!("{}: {} series", dir.display(), paths.len());
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Runtime => 2,
        ErrorKind::Io => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            frameworks,
        } => run(&config, seed, out, frameworks),
        Command::Fairness {
            run_dirs,
            standalone,
            seed,
        } => fairness(&run_dirs, standalone.as_deref(), seed),
        Command::PlotData { run_dirs, out } => plot_data(&run_dirs, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
