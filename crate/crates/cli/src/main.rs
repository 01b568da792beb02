use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use brightdyn::config::Settings;
use brightdyn::experiment::{
    read_record, run_experiment, write_record, Condition, ExperimentConfig, ExternalStimulus,
    StimulusId,
};
use brightdyn::pgm::{read_pgm, write_pgm};
use brightdyn::plot::{plot_orientation_profiles, plot_predictions};

#[derive(Parser)]
#[command(
    name = "brightdyn",
    version,
    about = "Brightness induction with orientation feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one condition over the configured stimuli and write CSV tables and SVG charts.
    Run {
        /// I, II or III.
        #[arg(long)]
        condition: String,
        /// TOML settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Extra display (PGM, same size as the generated displays) to evaluate.
        #[arg(long)]
        external: Vec<PathBuf>,
        /// Skip SVG output.
        #[arg(long)]
        no_plots: bool,
    },
    /// Render a standard stimulus display to a 16-bit PGM.
    Stimulus {
        /// Stimulus id, e.g. thin-31-12 or white-on-black.
        id: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Regenerate SVG charts from the tables of an earlier run.
    Plot {
        /// Directory holding predictions.csv (and optionally profiles.csv).
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the standard stimulus ids.
    List,
}

fn load_settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        Some(p) => Ok(Settings::load(p)?),
        None => Ok(Settings::default()),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BRIGHTDYN_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("BRIGHTDYN_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            condition,
            config,
            out,
            external,
            no_plots,
        } => {
            configure_threads()?;
            let condition: Condition = condition.parse()?;
            let settings = load_settings(config.as_deref())?;
            let mut cfg = ExperimentConfig::from_settings(condition, settings)?;
            for path in external {
                let file =
                    File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
                let display = read_pgm(std::io::BufReader::new(file))
                    .with_context(|| format!("cannot read {}", path.display()))?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "display".into());
                cfg.external.push(ExternalStimulus {
                    id: format!("external-{stem}"),
                    display,
                });
            }
            let record = run_experiment(&cfg)?;
            let mut written = write_record(&record, &out)?;
            if !no_plots {
                written.extend(plot_predictions(&record, &out)?);
                written.extend(plot_orientation_profiles(&record, &out)?);
            }
            for p in written {
                log::info!("wrote {}", p.display());
            }
        }
        Command::Stimulus { id, out, config } => {
            let settings = load_settings(config.as_deref())?;
            let id: StimulusId = id.parse()?;
            let display = id.display(&settings)?;
            let file =
                File::create(&out).with_context(|| format!("cannot write {}", out.display()))?;
            write_pgm(BufWriter::new(file), &display)?;
        }
        Command::Plot { csv, out } => {
            let record = read_record(&csv)?;
            let mut written = plot_predictions(&record, &out)?;
            written.extend(plot_orientation_profiles(&record, &out)?);
            for p in written {
                log::info!("wrote {}", p.display());
            }
        }
        Command::List => {
            for id in StimulusId::all() {
                println!("{id}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let line = serde_json::json!({
                "status": "error",
                "error": chain.first().cloned().unwrap_or_default(),
                "causes": &chain[1..],
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
