//! Command-line front end: subcommand dispatch, flag parsing, exit codes.

use std::path::PathBuf;

use volcast_core::forecaster::UpdateMode;

use crate::config::{Overrides, RunConfig, Task};
use crate::error::{CliError, Result};
use crate::pipeline;

const USAGE: &str = "volcast — generative stock-volume forecasting

USAGE:
    volcast <COMMAND> --config <FILE> [FLAGS]

COMMANDS:
    prepare     Normalize the panel and write feature artifacts
    train       Train the configured model(s)
    forecast    Generate forecast ensembles (--task long|rolling)
    baseline    Fit and forecast the ARMA(1,1)/VAR(1) baselines
    scenario    Paired baseline/counterfactual generation (--zero-rb, --set-x1)
    evaluate    Score forecasts against actuals and write report tables

FLAGS:
    --config <FILE>                 Run configuration (required)
    --task <long|rolling>           Forecast task (default: long)
    --sigma <X>                     Override generation-time sigma
    --samples <N>                   Override ensemble sample count
    --seed <N>                      Override the master seed
    --workers <N>                   Override worker thread count
    --zero-rb                       Scenario: zero the rebalance flags
    --set-x1 <X>                    Scenario: replace the initial lag value
    --update-mode <per-path|ensemble-average>
                                    Ordinary-block update rule (default: ensemble-average)

EXIT CODES:
    0 success, 1 usage error, 2 data error, 3 numeric failure
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    Prepare,
    Train,
    Forecast,
    Baseline,
    Scenario,
    Evaluate,
}

struct Invocation {
    command: Command,
    config_path: PathBuf,
    overrides: Overrides,
}

fn parse_args(args: &[String]) -> Result<Invocation> {
    let mut it = args.iter();
    let command = match it.next().map(String::as_str) {
        Some("prepare") => Command::Prepare,
        Some("train") => Command::Train,
        Some("forecast") => Command::Forecast,
        Some("baseline") => Command::Baseline,
        Some("scenario") => Command::Scenario,
        Some("evaluate") => Command::Evaluate,
        Some("--help") | Some("-h") | Some("help") => return Err(CliError::Usage(String::new())),
        Some(other) => return Err(CliError::Usage(format!("unknown command `{other}`"))),
        None => return Err(CliError::Usage("missing command".into())),
    };

    let mut config_path = None;
    let mut overrides = Overrides::default();
    while let Some(flag) = it.next() {
        let mut value_for = |flag: &str| -> Result<String> {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("flag `{flag}` needs a value")))
        };
        match flag.as_str() {
            "--config" => config_path = Some(PathBuf::from(value_for("--config")?)),
            "--task" => {
                overrides.task = Some(match value_for("--task")?.as_str() {
                    "long" => Task::Long,
                    "rolling" => Task::Rolling,
                    other => {
                        return Err(CliError::Usage(format!(
                            "--task expects long|rolling, got `{other}`"
                        )))
                    }
                })
            }
            "--sigma" => {
                let v = value_for("--sigma")?;
                let sigma: f64 = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("--sigma expects a number, got `{v}`")))?;
                if sigma <= 0.0 {
                    return Err(CliError::Usage("--sigma must be positive".into()));
                }
                overrides.sigma = Some(sigma);
            }
            "--samples" => {
                let v = value_for("--samples")?;
                let samples: usize = v.parse().map_err(|_| {
                    CliError::Usage(format!("--samples expects an integer, got `{v}`"))
                })?;
                if samples == 0 {
                    return Err(CliError::Usage("--samples must be at least 1".into()));
                }
                overrides.samples = Some(samples);
            }
            "--seed" => {
                let v = value_for("--seed")?;
                overrides.seed = Some(v.parse().map_err(|_| {
                    CliError::Usage(format!("--seed expects an integer, got `{v}`"))
                })?);
            }
            "--workers" => {
                let v = value_for("--workers")?;
                let workers: usize = v.parse().map_err(|_| {
                    CliError::Usage(format!("--workers expects an integer, got `{v}`"))
                })?;
                if workers == 0 {
                    return Err(CliError::Usage("--workers must be at least 1".into()));
                }
                overrides.workers = Some(workers);
            }
            "--zero-rb" => overrides.zero_rb = true,
            "--set-x1" => {
                let v = value_for("--set-x1")?;
                overrides.set_x1 = Some(v.parse().map_err(|_| {
                    CliError::Usage(format!("--set-x1 expects a number, got `{v}`"))
                })?);
            }
            "--update-mode" => {
                overrides.update_mode = Some(match value_for("--update-mode")?.as_str() {
                    "per-path" => UpdateMode::PerPath,
                    "ensemble-average" => UpdateMode::EnsembleAverage,
                    other => {
                        return Err(CliError::Usage(format!(
                            "--update-mode expects per-path|ensemble-average, got `{other}`"
                        )))
                    }
                })
            }
            other => return Err(CliError::Usage(format!("unknown flag `{other}`"))),
        }
    }
    let config_path =
        config_path.ok_or_else(|| CliError::Usage("`--config <FILE>` is required".into()))?;
    Ok(Invocation {
        command,
        config_path,
        overrides,
    })
}

fn dispatch(invocation: &Invocation) -> Result<()> {
    let mut config = RunConfig::from_file(&invocation.config_path)?;
    config.apply_overrides(&invocation.overrides);
    let task = invocation.overrides.task.unwrap_or(Task::Long);
    let update_mode = invocation
        .overrides
        .update_mode
        .unwrap_or(UpdateMode::EnsembleAverage);
    match invocation.command {
        Command::Prepare => pipeline::cmd_prepare(&config),
        Command::Train => pipeline::cmd_train(&config),
        Command::Forecast => pipeline::cmd_forecast(&config, task, update_mode),
        Command::Baseline => pipeline::cmd_baseline(&config, task),
        Command::Scenario => pipeline::cmd_scenario(&config, &invocation.overrides),
        Command::Evaluate => pipeline::cmd_evaluate(&config, task),
    }
}

/// Runs the CLI; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match parse_args(args) {
        Ok(invocation) => match dispatch(&invocation) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        },
        Err(CliError::Usage(msg)) => {
            if msg.is_empty() {
                print!("{USAGE}");
                0
            } else {
                eprintln!("usage error: {msg}");
                eprint!("{USAGE}");
                1
            }
        }
        Err(other) => {
            eprintln!("{other}");
            other.exit_code()
        }
    }
}
