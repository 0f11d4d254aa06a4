use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minibatch_sfl::data::ParamScope;
use msfl_cli::check::{default_checks, run_checks, Injection, CHECKS};
use msfl_cli::compare::{compare, render_table};
use msfl_cli::config::{parse_config, ExperimentConfig};
use msfl_cli::constants::estimate_all;
use msfl_cli::sweep::{plan_cells, run_sweep, Summary, SUMMARY_FILE};
use msfl_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "msfl", version, about = "Split federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set rounds=20 --set schedule.mode=diminishing`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Full,
    ClientSide,
    ServerSide,
}

impl From<Scope> for ParamScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Full => ParamScope::Full,
            Scope::ClientSide => ParamScope::ClientSide,
            Scope::ServerSide => ParamScope::ServerSide,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every (algorithm, r, L_c, seed) cell and write CSV run logs
    /// plus a JSON summary.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory. Falls back to the config, then $MSFL_OUT_DIR.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Print the resolved config and the planned cells, then stop.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare two or more sweep summaries over the same cells.
    Compare {
        /// Summary files or directories containing summary.json.
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the invariant and oracle checks; exits non-zero on any failure.
    Check {
        /// Run only these checks.
        #[arg(long = "only", value_name = "NAME")]
        only: Vec<String>,
        /// Include the slower statistical checks.
        #[arg(long)]
        all: bool,
        /// Inject a fault that the suite should catch.
        #[arg(long, value_enum)]
        inject: Vec<Injection>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// List check names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Estimate the gradient constants around each cell's initial model.
    EstimateConstants {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value = "full")]
        scope: Scope,
        #[arg(long, default_value_t = 8)]
        probes: usize,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let parsed = parse_config(args.config.as_deref(), &args.overrides)?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.config)
}

fn write(path: &std::path::Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            dry_run,
        } => {
            let cfg = load(&config)?;
            let out_dir = cfg.resolve_out_dir(out.as_deref());
            if dry_run {
                print!("{}", cfg.to_toml());
                for cell in plan_cells(&cfg) {
                    println!("# {}", cell.file_name());
                }
                return Ok(ExitCode::SUCCESS);
            }
            log::info!("resolved config:\n{}", cfg.to_toml());
            let summary = run_sweep(&cfg, &out_dir)?;
            let failures = summary.failures();
            println!(
                "{} cells, {} failed; summary at {}",
                summary.cells.len(),
                failures,
                out_dir.join(SUMMARY_FILE).display()
            );
            for c in summary.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "{}: {}",
                    c.cell.file_name(),
                    c.error.as_deref().unwrap_or_default()
                );
            }
            Ok(if failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Compare { summaries, json } => {
            let loaded = summaries
                .iter()
                .map(|p| {
                    let file = if p.is_dir() {
                        p.join(SUMMARY_FILE)
                    } else {
                        p.clone()
                    };
                    Ok((p.display().to_string(), Summary::read(&file)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let c = compare(&loaded)?;
            print!("{}", render_table(&c));
            if let Some(path) = json {
                write(
                    &path,
                    &serde_json::to_string_pretty(&c).expect("comparison serializes"),
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            only,
            all,
            inject,
            report,
            list,
        } => {
            if list {
                for (name, module, default) in CHECKS {
                    let tag = if default { "" } else { " (--all)" };
                    println!("{name}\t{module}{tag}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let names: Vec<&str> = if !only.is_empty() {
                only.iter().map(String::as_str).collect()
            } else if all {
                CHECKS.iter().map(|c| c.0).collect()
            } else {
                default_checks()
            };
            let r = run_checks(&names, &inject);
            for c in &r.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                eprintln!("{verdict} {} [{}] {}", c.name, c.module, c.tolerance);
            }
            let json = serde_json::to_string_pretty(&r).expect("report serializes");
            match report {
                Some(path) => write(&path, &json)?,
                None => println!("{json}"),
            }
            Ok(if r.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::EstimateConstants {
            config,
            scope,
            probes,
        } => {
            let cfg = load(&config)?;
            let rows = estimate_all(&cfg, scope.into(), probes)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&rows).expect("rows serialize")
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
