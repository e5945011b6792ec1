use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deqgan::problems::ProblemKey;
use deqgan::training::LossKind;
use deqgan_cli::{compare, run, CliError, ExperimentConfig, Mode, Result};

#[derive(Parser)]
#[command(
    name = "deqgan",
    version,
    about = "Unsupervised neural solvers for differential equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, search, build oracles or evaluate saved weights.
    Run(RunArgs),
    /// Generate and cache reference and traditional solutions.
    Oracle(RunArgs),
    /// Summarize run.json / oracle.json files into table.csv.
    Compare {
        /// Files or directories (searched recursively).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Problem key: exp, sho, nlo, nas, sir or pos.
    #[arg(long)]
    preset: Option<ProblemKey>,
    /// TOML experiment file; flags given alongside override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gan, l1, l2 or huber.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// train, search, oracle or evaluate.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Use the classical-loss tuned settings.
    #[arg(long)]
    tuned: bool,
    /// Override the preset's iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    save_weights: bool,
    #[arg(long)]
    load_weights: Option<PathBuf>,
}

impl RunArgs {
    fn experiment(self) -> Result<ExperimentConfig> {
        let mut exp = match (&self.config, self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(key)) => ExperimentConfig::new(key),
            (None, None) => return Err(CliError::Usage("give --preset <key> or --config <file>".into())),
        };
        if let Some(key) = self.preset {
            exp.preset = key;
        }
        if let Some(v) = self.loss {
            exp.loss = v;
        }
        if let Some(v) = self.seed {
            exp.seed = v;
        }
        if let Some(v) = self.out {
            exp.out = v;
        }
        if let Some(v) = self.trials {
            exp.trials = v;
        }
        if let Some(v) = self.workers {
            exp.workers = v;
        }
        if let Some(v) = self.mode {
            exp.mode = v;
        }
        if let Some(v) = self.master_seed {
            exp.master_seed = v;
        }
        if let Some(v) = self.iterations {
            exp.train.insert("iterations".into(), toml::Value::Integer(v as i64));
        }
        exp.tuned |= self.tuned;
        exp.save_weights |= self.save_weights;
        if self.load_weights.is_some() {
            exp.load_weights = self.load_weights;
        }
        Ok(exp)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let outcome = run(&args.experiment()?)?;
            print!("{}", outcome.summary);
        }
        Command::Oracle(args) => {
            let mut exp = args.experiment()?;
            exp.mode = Mode::Oracle;
            print!("{}", run(&exp)?.summary);
        }
        Command::Compare { inputs, out } => {
            let table = compare(&inputs, &out)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", table.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
