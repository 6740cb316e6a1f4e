use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use opte_core::constructions::zoo_names;
use opte_core::harness::{expression_names, run_experiment, run_reduction, ExperimentConfig, ReductionConfig, RunReport};
use opte_core::vm::{eval_traced, Program};
use opte_core::Word;

#[derive(Parser)]
#[command(name = "opte", version, about = "Optimal polynomial-time estimators at desk scale")]
struct Cli {
    /// Run with this single seed instead of the config's seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory receiving `<name>.csv`, `<name>.json` and ERM audit records.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Report printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run { config: PathBuf },
    /// Build and verify a canonical reduction into the complete problem.
    VerifyReduction { config: PathBuf },
    /// Registry listings.
    Zoo {
        #[command(subcommand)]
        command: ZooCommand,
    },
    /// Virtual machine tools.
    Vm {
        #[command(subcommand)]
        command: VmCommand,
    },
}

#[derive(Subcommand)]
enum ZooCommand {
    /// Problems and estimator expressions accepted in configs.
    List,
}

#[derive(Subcommand)]
enum VmCommand {
    /// Run a program and print one line per step.
    Trace {
        /// Program bits, most significant nibble first.
        program: String,
        budget: u64,
        /// Input tapes as bit strings; `-` is the empty word.
        inputs: Vec<String>,
    },
}

/// A failure before any check ran: bad arguments, config or registry names.
struct Usage(anyhow::Error);

fn word(s: &str) -> Result<Word> {
    if s == "-" {
        return Ok(Word::new());
    }
    s.parse().map_err(|_| anyhow::anyhow!("not a bit string: {s:?}"))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn emit(cli: &Cli, report: &RunReport) -> Result<()> {
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let name = &report.summary.name;
        std::fs::write(dir.join(format!("{name}.csv")), report.csv())?;
        std::fs::write(dir.join(format!("{name}.json")), report.json())?;
        if !report.audit.is_empty() {
            std::fs::write(dir.join(format!("{name}.erm.jsonl")), report.audit_jsonl())?;
        }
    }
    match cli.format {
        Format::Csv => print!("{}", report.csv()),
        Format::Json => print!("{}", report.json()),
    }
    for e in &report.summary.errors {
        eprintln!("error: {e}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode, Usage> {
    let report = match &cli.command {
        Command::Run { config } => {
            let src = read(config).map_err(Usage)?;
            let mut cfg = ExperimentConfig::parse(&src)
                .with_context(|| format!("parsing {}", config.display()))
                .map_err(Usage)?;
            if let Some(s) = cli.seed {
                cfg = cfg.with_seed(s);
            }
            run_experiment(&cfg, jobs(cli), config.parent())
                .with_context(|| format!("resolving {}", config.display()))
                .map_err(Usage)?
        }
        Command::VerifyReduction { config } => {
            let src = read(config).map_err(Usage)?;
            let cfg = ReductionConfig::parse(&src)
                .with_context(|| format!("parsing {}", config.display()))
                .map_err(Usage)?;
            run_reduction(&cfg, jobs(cli)).map_err(|e| Usage(e.into()))?
        }
        Command::Zoo { command: ZooCommand::List } => {
            println!("problems:");
            for (name, doc) in zoo_names() {
                println!("  {name:<28} {doc}");
            }
            println!("estimators:");
            for (name, doc) in expression_names() {
                println!("  {name:<28} {doc}");
            }
            return Ok(ExitCode::SUCCESS);
        }
        Command::Vm {
            command: VmCommand::Trace { program, budget, inputs },
        } => {
            let code = word(program).map_err(Usage)?;
            let tapes = inputs.iter().map(|s| word(s)).collect::<Result<Vec<_>>>().map_err(Usage)?;
            let (res, trace) = eval_traced(&Program::new(code), *budget, &tapes).map_err(|e| Usage(e.into()))?;
            println!("step\tpc\topcode\tdepth");
            for t in trace {
                println!("{t}");
            }
            println!("halted={} steps={} output={}", res.halted, res.steps_used, res.output);
            return Ok(ExitCode::SUCCESS);
        }
    };
    emit(cli, &report).map_err(Usage)?;
    Ok(if report.pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
