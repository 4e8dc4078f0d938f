use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treebandit::harness::{emit_plot_data, summarize, Experiment, ExperimentConfig, OUTPUT_ROOT_ENV};
use treebandit::Error;

/// Tree-ensemble contextual bandit experiments.
#[derive(Parser)]
#[command(name = "treebandit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config, writing traces and summaries.
    Run {
        config: PathBuf,
        /// Root that relative output directories resolve against.
        #[arg(long, env = OUTPUT_ROOT_ENV, default_value = ".")]
        output_root: PathBuf,
    },
    /// Rebuild summary.json from the traces in an output directory.
    Summarize { dir: PathBuf },
    /// Write the long-format plot CSV (step, agent, mean, sd).
    Plotdata {
        dir: PathBuf,
        /// Destination file; `-` for stdout. Defaults to DIR/plot.csv.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a config and its inputs without running anything.
    Validate {
        config: PathBuf,
        #[arg(long, env = OUTPUT_ROOT_ENV, default_value = ".")]
        output_root: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Validation(problems) => {
                    eprintln!("invalid configuration:");
                    for p in problems {
                        eprintln!("  {p}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) => 2,
        _ => 1,
    }
}

fn execute(command: Command) -> treebandit::Result<()> {
    match command {
        Command::Run { config, output_root } => {
            let config = ExperimentConfig::load(&config)?;
            let exp = Experiment::prepare(&config, &output_root)?;
            let summary = exp.run()?;
            println!("{}", exp.out_dir.display());
            for a in &summary.agents {
                println!("{:<40} mean {:>12.3}  sd {:>10.3}", a.agent, a.mean, a.sd);
            }
            Ok(())
        }
        Command::Summarize { dir } => {
            let summary = summarize(&dir)?;
            let text = serde_json::to_string_pretty(&summary)? + "\n";
            let path = dir.join("summary.json");
            std::fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
            print!("{text}");
            Ok(())
        }
        Command::Plotdata { dir, output } => {
            let csv = emit_plot_data(&dir)?;
            match output {
                Some(p) if p.as_os_str() == "-" => std::io::stdout()
                    .write_all(csv.as_bytes())
                    .map_err(|e| io_error(&p, e)),
                other => {
                    let path = other.unwrap_or_else(|| dir.join("plot.csv"));
                    std::fs::write(&path, csv).map_err(|e| io_error(&path, e))
                }
            }
        }
        Command::Validate { config, output_root } => {
            let config = ExperimentConfig::load(&config)?;
            let exp = Experiment::prepare(&config, &output_root)?;
            for note in &exp.notes {
                eprintln!("note: {note}");
            }
            print!("{}", exp.config.to_toml());
            Ok(())
        }
    }
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}
