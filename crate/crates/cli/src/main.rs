use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use freshquery::experiments::{
    compare_policies, preset, run_experiment, write_csv, ExperimentConfig, ExperimentError,
    RunOptions, PRESET_NAMES,
};
use freshquery::numeric::fmt_sig;
use freshquery::policy::{synthesize, PolicyFamily};
use freshquery::waiting::format_table;

/// Optimal query-waiting policies for remote CTMC monitoring.
///
/// Log verbosity is read from FRESHQUERY_LOG (error, warn, info, debug).
#[derive(Parser)]
#[command(name = "freshquery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write one CSV row per (sweep value, policy).
    Run {
        /// Preset name (exp1, exp2, exp3) or path to a TOML config.
        target: String,
        /// Skip the Monte Carlo simulation.
        #[arg(long)]
        no_sim: bool,
        /// Base simulation seed; job k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of worker threads.
        #[arg(long)]
        workers: Option<usize>,
        /// Output file; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank policies in a run CSV and check the containment chain.
    Compare {
        csv: PathBuf,
    },
    /// Print the wait table of one synthesized policy.
    Policy {
        /// Preset name or path to a TOML config.
        target: String,
        /// Value of the sweep parameter.
        #[arg(long = "d1", alias = "value")]
        value: f64,
        /// One of zw, cw, state_ind, delay_ind, greedy, opt_wait.
        #[arg(long)]
        policy: PolicyFamily,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRESHQUERY_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            target,
            no_sim,
            seed,
            workers,
            out,
        } => run(&target, RunOptions { no_sim, seed, workers }, out),
        Command::Compare { csv } => compare(&csv),
        Command::Policy {
            target,
            value,
            policy,
        } => show_policy(&target, value, policy),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Numerical { .. } => 3,
        ExperimentError::ConfigParse(_)
        | ExperimentError::MissingColumn(_)
        | ExperimentError::Dataset(_)
        | ExperimentError::Csv(_) => 2,
        ExperimentError::Io(_) => 1,
    }
}

fn load(target: &str) -> Result<ExperimentConfig, ExperimentError> {
    if let Some(cfg) = preset(target) {
        return Ok(cfg);
    }
    let path = Path::new(target);
    if !path.exists() {
        return Err(ExperimentError::ConfigParse(format!(
            "'{target}' is neither a preset ({}) nor a file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::ConfigParse(format!("{target}: {e}")))?;
    ExperimentConfig::from_toml(&text)
}

fn run(target: &str, opts: RunOptions, out: Option<PathBuf>) -> Result<ExitCode, ExperimentError> {
    let cfg = load(target)?;
    let rows = run_experiment(&cfg, &opts)?;
    match out.or_else(|| cfg.output.as_ref().map(PathBuf::from)) {
        Some(path) => {
            write_csv(&rows, BufWriter::new(File::create(&path)?))?;
            log::info!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(csv: &Path) -> Result<ExitCode, ExperimentError> {
    let file = File::open(csv).map_err(|e| ExperimentError::Dataset(format!("{}: {e}", csv.display())))?;
    let report = compare_policies(file)?;
    print!("{report}");
    Ok(if report.is_consistent() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn show_policy(target: &str, value: f64, family: PolicyFamily) -> Result<ExitCode, ExperimentError> {
    let cfg = load(target)?;
    let model = cfg.model_at(value)?;
    let outcome = synthesize(&model, family, &cfg.policy_config()).map_err(|e| {
        ExperimentError::Numerical {
            point: value,
            policy: Some(family),
            message: e.to_string(),
        }
    })?;
    let atoms: Vec<f64> = match model.backward_atoms() {
        Some(a) => a.iter().map(|a| a.value).collect(),
        None => model
            .backward()
            .discretize(cfg.policy_config().delay_bins)
            .atom_list()
            .unwrap_or_default()
            .iter()
            .map(|a| a.value)
            .collect(),
    };
    let mut stdout = io::stdout().lock();
    write!(stdout, "{}", format_table(&outcome.policy.table_rows(model.states(), &atoms)))?;
    writeln!(stdout, "mbf\t{}", fmt_sig(outcome.mbf(), 9))?;
    if let Some(lb) = outcome.lower_bound {
        writeln!(stdout, "lower_bound\t{}", fmt_sig(lb, 9))?;
    }
    Ok(ExitCode::SUCCESS)
}
