use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uqbench::harness::{self, StudyConfig, StudySummary, PAPER_SCALE_REPLICATES};
use uqbench::{Error, MethodTag, Result};

#[derive(Parser)]
#[command(name = "uqbench", version, about = "Uncertainty quantification benchmark on a simulated two-class problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated study and write summary.json, table.md, table.csv and grids.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Use the full replicate count of the reference study.
        #[arg(long)]
        paper_scale: bool,
        /// Comma-separated method tags, e.g. bnn-mcmc,deep-ensemble.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the markdown table of an existing summary.json.
    Table {
        #[arg(long)]
        summary: PathBuf,
    },
    /// Fit every configured method on one replicate and write grids/<method>.csv.
    Grids {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicate: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, paper_scale, methods, seed, out, jobs } => {
            let mut cfg = StudyConfig::load(&config)?;
            if paper_scale {
                cfg.study.replicates = PAPER_SCALE_REPLICATES;
            }
            if let Some(list) = methods {
                cfg.study.methods = list.iter().map(|m| m.parse::<MethodTag>()).collect::<Result<_>>()?;
            }
            if let Some(s) = seed {
                cfg.study.seed = s;
            }
            if let Some(o) = out {
                cfg.study.output_dir = o;
            }
            if let Some(j) = jobs {
                cfg.study.jobs = j;
            }
            let study = harness::execute(&cfg)?;
            print!("{}", harness::render_table(&study.summary));
            eprintln!("wrote {}", cfg.study.output_dir.display());
            if study.summary.is_complete() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("study incomplete: at least one method failed on too many replicates");
                Ok(ExitCode::from(3))
            }
        }
        Command::Table { summary } => {
            print!("{}", harness::render_table(&StudySummary::read_json(&summary)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Grids { config, replicate, out, jobs } => {
            let mut cfg = StudyConfig::load(&config)?;
            if let Some(o) = out {
                cfg.study.output_dir = o;
            }
            if let Some(j) = jobs {
                cfg.study.jobs = j;
            }
            harness::prepare_output_dir(&cfg.study.output_dir)?;
            let grids = harness::export_grids(&cfg, replicate)?;
            harness::write_grids(&cfg.study.output_dir, &grids)?;
            eprintln!("wrote {}", cfg.study.output_dir.join("grids").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
