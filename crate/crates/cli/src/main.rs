use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use hiera_core::excitation::{
    gain_bound, quantized_bounds, switched_feasibility, ExcitationConstants,
};
use hiera_core::sim::{
    analyze_resolved, apply_override, run_scenario_with, run_sweep, write_run_dir, write_sweep,
    Scenario, ScenarioConfig, SweepAxis,
};
use hiera_core::{Error, Execution};
use serde_json::json;

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_UNWRITABLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "hiera-est",
    version,
    about = "Hierarchical distributed parameter estimation simulator"
)]
struct Cli {
    /// Run data-parallel work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write traces.csv, metrics.json,
    /// constants.json and config-echo.json.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the excitation constants and bounds of a scenario as JSON.
    Analyze {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Smallest admissible consensus gain.
    GainBound(ConstantArgs),
    /// Feasibility margin and ultimate bounds of a (k, epsilon) design.
    Feasibility {
        #[command(flatten)]
        constants: ConstantArgs,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// Largest Laplacian eigenvalue (defaults to lambda_g).
        #[arg(long = "lambda-max")]
        lambda_max: Option<f64>,
        #[arg(long = "theta-norm", default_value_t = 0.0)]
        theta_norm: f64,
    },
    /// Run one scenario per value of an axis and write summary.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// epsilon, seed, k or noise_sd
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ConstantArgs {
    #[arg(long)]
    n: usize,
    #[arg(long = "N")]
    big_n: usize,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long = "T", allow_negative_numbers = true)]
    window: f64,
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long = "lambda-g", allow_negative_numbers = true)]
    lambda_g: f64,
}

impl ConstantArgs {
    fn constants(&self) -> ExcitationConstants {
        ExcitationConstants {
            beta: self.beta,
            gamma: self.gamma,
            alpha: self.alpha,
            window: self.window,
            n_params: self.n,
            n_agents: self.big_n,
        }
    }

    fn echo(&self) -> serde_json::Value {
        json!({
            "n": self.n, "N": self.big_n, "beta": self.beta, "gamma": self.gamma,
            "T": self.window, "alpha": self.alpha, "lambda_g": self.lambda_g,
        })
    }
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn validation(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            error: error.into(),
        }
    }

    fn unwritable(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_UNWRITABLE,
            error: error.into(),
        }
    }

    /// Divergence aborts get their own code; everything else the library
    /// reports is a validation failure.
    fn from_core(error: Error) -> Self {
        let code = match error {
            Error::Diverged { .. } => EXIT_DIVERGENCE,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            error: error.into(),
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config file {}", args.config.display()))
        .map_err(Failure::validation)?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", args.config.display()))
        .map_err(Failure::validation)?;
    for o in &args.overrides {
        apply_override(&mut value, o).map_err(Failure::validation)?;
    }
    ScenarioConfig::from_value(value)
        .with_context(|| format!("invalid scenario {}", args.config.display()))
        .map_err(Failure::validation)
}

/// Creates the output directory and writes the config echo first, so an
/// unwritable destination fails before any computation.
fn prepare_output(dir: &Path, cfg: &ScenarioConfig) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join("config-echo.json"), cfg.to_json_pretty() + "\n"))
        .with_context(|| format!("output directory {} is not writable", dir.display()))
        .map_err(Failure::unwritable)
}

fn write_failure(dir: &Path, e: Error) -> Failure {
    match e {
        Error::Io(_) | Error::Csv(_) => {
            Failure::unwritable(anyhow!(e).context(format!("cannot write to {}", dir.display())))
        }
        other => Failure::from_core(other),
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("JSON value serializes")
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Run { config, output } => {
            let cfg = load_config(&config)?;
            prepare_output(&output, &cfg)?;
            let out = run_scenario_with(&cfg, exec).map_err(Failure::from_core)?;
            write_run_dir(&output, &out).map_err(|e| write_failure(&output, e))?;
            let summary: serde_json::Map<String, serde_json::Value> = out
                .metrics
                .estimators
                .iter()
                .map(|e| {
                    let worst_final = e.final_error.iter().copied().fold(0.0, f64::max);
                    let worst_rate = e.decay_rate.iter().flatten().copied().reduce(f64::max);
                    (
                        e.kind.tag().to_string(),
                        json!({ "max_final_error": worst_final, "max_decay_rate": worst_rate }),
                    )
                })
                .collect();
            print_json(&json!({
                "output": output.display().to_string(),
                "k": out.constants.k,
                "estimators": summary,
            }));
        }
        Command::Analyze { config } => {
            let cfg = load_config(&config)?;
            let scenario = Scenario::build(&cfg).map_err(Failure::from_core)?;
            let report = analyze_resolved(&scenario, exec).map_err(Failure::from_core)?;
            print_json(&serde_json::to_value(&report).expect("report serializes"));
        }
        Command::GainBound(args) => {
            let k_min = gain_bound(&args.constants(), args.lambda_g).map_err(Failure::from_core)?;
            print_json(&json!({ "k_min": k_min, "inputs": args.echo() }));
        }
        Command::Feasibility {
            constants,
            k,
            epsilon,
            lambda_max,
            theta_norm,
        } => {
            let c = constants.constants();
            let lambda_max = lambda_max.unwrap_or(constants.lambda_g);
            let q = quantized_bounds(&c, k, constants.lambda_g, lambda_max, epsilon, theta_norm)
                .map_err(Failure::from_core)?;
            let s = switched_feasibility(&c, k, constants.lambda_g, lambda_max, epsilon)
                .map_err(Failure::from_core)?;
            let mut inputs = constants.echo();
            inputs["k"] = json!(k);
            inputs["epsilon"] = json!(epsilon);
            inputs["lambda_max"] = json!(lambda_max);
            inputs["theta_norm"] = json!(theta_norm);
            print_json(&json!({
                "feasible": q.feasible,
                "margin": q.margin,
                "b_eps": q.b_eps,
                "r_eps": q.r_eps,
                "switched": s,
                "inputs": inputs,
            }));
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
        } => {
            let cfg = load_config(&config)?;
            let axis: SweepAxis = axis.parse().map_err(Failure::validation)?;
            prepare_output(&output, &cfg)?;
            let runs = run_sweep(&cfg, axis, &values, exec).map_err(Failure::from_core)?;
            write_sweep(&output, axis, &runs).map_err(|e| write_failure(&output, e))?;
            let rows: Vec<_> = runs
                .iter()
                .map(|r| match &r.outcome {
                    Ok(_) => json!({ "value": r.value, "status": "ok" }),
                    Err(e) => {
                        json!({ "value": r.value, "status": "failed", "error": e.to_string() })
                    }
                })
                .collect();
            print_json(
                &json!({ "axis": axis.to_string(), "output": output.display().to_string(), "runs": rows }),
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
