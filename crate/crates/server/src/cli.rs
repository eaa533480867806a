//! The `dw` command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dw_core::format::decode;
use dw_core::sensitivity::{evpi, sweep, thresholds, ParamRef};
use dw_core::{solve, solve_oracle, InfluenceDiagram, SolveResult};

use crate::store::SessionStore;

#[derive(Debug, Parser)]
#[command(name = "dw", version, about = "Solve and analyse influence diagrams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a diagram document and list any violations.
    Validate { file: PathBuf },
    /// Find the policy that maximizes expected utility.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Re-solve over an evenly spaced grid of values for one parameter.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        param: ParamRef,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        steps: u32,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Probability values at which the optimal first-stage choice changes.
    Thresholds {
        file: PathBuf,
        #[arg(long)]
        param: ParamRef,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Expected value of observing a chance node before a decision.
    Evpi {
        file: PathBuf,
        #[arg(long)]
        chance: String,
        #[arg(long)]
        decision: String,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Solve by enumerating every policy.
    Oracle {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "DW_DATA_DIR", default_value = "dw-data")]
        data_dir: PathBuf,
    },
}

/// Evenly spaced grid of `steps` points from `from` to `to`.
pub fn grid(from: f64, to: f64, steps: u32) -> Vec<f64> {
    if steps == 1 {
        return vec![from];
    }
    let n = (steps - 1) as f64;
    (0..steps)
        .map(|i| {
            if i == steps - 1 {
                to
            } else {
                from + (to - from) * i as f64 / n
            }
        })
        .collect()
}

/// A domain error, already formatted for stderr.
struct Failure(String);

impl From<dw_core::Error> for Failure {
    fn from(e: dw_core::Error) -> Self {
        let mut message = format!("error[{}]: {e}", e.code());
        if let dw_core::Error::Invalid(report) = &e {
            for v in &report.violations {
                let _ = write!(message, "\n  {} {}: {}", v.code, v.subject, v.message);
            }
        }
        Failure(message)
    }
}

fn load(path: &Path) -> Result<InfluenceDiagram, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure(format!("error[IO]: cannot read {}: {e}", path.display())))?;
    Ok(decode(&text)?)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("results always serialize")
}

fn describe(d: &InfluenceDiagram, result: &SolveResult) -> String {
    let mut out = format!("expected utility: {}\n", result.expected_utility);
    for rule in &result.policy.rules {
        let outcomes = d.variable(&rule.decision).unwrap().outcomes();
        if rule.information.is_empty() {
            let _ = writeln!(out, "{}: {}", rule.decision, outcomes[rule.choices[0]]);
            continue;
        }
        let _ = writeln!(out, "{} given {}:", rule.decision, rule.information.join(", "));
        for (i, &c) in rule.choices.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {} -> {}",
                d.row_labels(&rule.information, i).join(", "),
                outcomes[c]
            );
        }
    }
    out
}

fn execute(command: Command) -> Result<String, Failure> {
    match command {
        Command::Validate { file } => {
            let d = load(&file)?;
            Ok(format!("{}: valid ({} nodes)\n", d.name(), d.nodes().len()))
        }
        Command::Solve { file, output } => {
            let d = load(&file)?;
            let result = solve(&d)?;
            Ok(match output {
                Output::Text => describe(&d, &result),
                Output::Machine => json(&result),
            })
        }
        Command::Oracle { file, output } => {
            let d = load(&file)?;
            let result = solve_oracle(&d)?;
            Ok(match output {
                Output::Text => describe(&d, &result),
                Output::Machine => json(&result),
            })
        }
        Command::Sweep {
            file,
            param,
            from,
            to,
            steps,
            output,
        } => {
            let d = load(&file)?;
            let result = sweep(&d, &param, &grid(from, to, steps))?;
            Ok(match output {
                Output::Machine => json(&result),
                Output::Text => {
                    let mut out = format!("{param}\tEU\toptimal\n");
                    for p in &result.points {
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}",
                            p.value,
                            p.expected_utility,
                            p.optimal_alternative.as_deref().unwrap_or("-")
                        );
                    }
                    out
                }
            })
        }
        Command::Thresholds {
            file,
            param,
            output,
        } => {
            let d = load(&file)?;
            let found = thresholds(&d, &param)?;
            Ok(match output {
                Output::Machine => json(&found),
                Output::Text if found.is_empty() => "no threshold\n".to_string(),
                Output::Text => found.iter().map(|t| format!("{t}\n")).collect(),
            })
        }
        Command::Evpi {
            file,
            chance,
            decision,
            output,
        } => {
            let d = load(&file)?;
            let value = evpi(&d, &chance, &decision)?;
            Ok(match output {
                Output::Machine => json(&serde_json::json!({ "evpi": value })),
                Output::Text => format!("{value}\n"),
            })
        }
        Command::Serve { port, data_dir } => {
            let store = SessionStore::open(&data_dir)
                .map_err(|e| Failure(format!("error[STORAGE_ERROR]: {e}")))?;
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| Failure(format!("error[IO]: {e}")))?;
            runtime
                .block_on(crate::api::serve(store, port))
                .map_err(|e| Failure(format!("error[IO]: {e}")))?;
            Ok(String::new())
        }
    }
}

/// Runs a parsed command: 0 on success, 1 on a domain error. Usage errors
/// (exit 2) are reported by clap before this is reached.
pub fn run(cli: Cli) -> ExitCode {
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            if !out.is_empty() && !out.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(Failure(message)) => {
            eprintln!("{message}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        assert_eq!(grid(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid(0.3, 0.9, 1), vec![0.3]);
        assert_eq!(*grid(0.1, 0.7, 7).last().unwrap(), 0.7);
    }

    #[test]
    fn arguments_parse() {
        Cli::try_parse_from(["dw", "sweep", "d.json", "--param", "S//good", "--from", "0", "--to", "1", "--steps", "11"])
            .unwrap();
        assert!(Cli::try_parse_from(["dw", "sweep", "d.json", "--param", "S//good"]).is_err());
        assert!(Cli::try_parse_from(["dw", "solve", "d.json", "--output", "xml"]).is_err());
    }
}
