//! Batch driver: conditional moments, option pricing, the non-commutative
//! counterexample report, path simulation and the full validation suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use polymoment::cli::{self, Format};
use polymoment::config::RunConfig;
use polymoment::validate::{run_suite, ValidateOptions};

#[derive(Parser)]
#[command(
    name = "polymoment",
    version,
    about = "Conditional moments and forward option pricing for independent-increment processes in discretized Banach algebras"
)]
struct Cli {
    /// Path to the JSON run configuration (defaults are used when absent).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the report to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional moment E[X^k(t) | ℱ_s] from an observed forward curve.
    Moments {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        /// Forward curve CSV (header `maturity,price`, ascending maturities).
        #[arg(long)]
        curve: PathBuf,
        /// Gate the closed form against the frozen-path Monte Carlo oracle.
        #[arg(long)]
        validate: bool,
    },
    /// Price a European option from a JSON request file.
    Price {
        #[arg(long)]
        request: PathBuf,
        /// Cross-check the closed form against the exact-payoff MC price.
        #[arg(long)]
        mc_check: bool,
    },
    /// Reconstruct the non-commutative counterexample and print verdicts.
    Counterexample {
        /// Per-unit-time entry drift of the matrix Lévy increments.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Per-unit-time entry variance.
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
    },
    /// Simulate an OU forward-curve path and write it as CSV.
    Simulate {
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: f64,
        /// Optional initial curve CSV (zero curve when absent).
        #[arg(long)]
        x0_curve: Option<PathBuf>,
    },
    /// Run every oracle gate and invariant suite.
    Validate {
        /// Also write the report as JUnit-style XML to this path.
        #[arg(long)]
        junit: Option<PathBuf>,
    },
}

fn emit(
    value: &serde_json::Value,
    rendered: Option<String>,
    out: &Option<PathBuf>,
    format: Format,
) -> std::io::Result<()> {
    let text = match (format, rendered) {
        (Format::Csv, Some(r)) => r,
        _ => serde_json::to_string_pretty(value).expect("report serializes"),
    };
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run() -> Result<i32, (i32, String)> {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.mc.seed);
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };

    let (report, rendered, exit) = match &cli.command {
        Command::Moments {
            k,
            s,
            t,
            curve,
            validate,
        } => {
            let (report, exit) = cli::cmd_moments(&config, *k, *s, *t, curve, *validate, seed)
                .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?;
            let rendered = (format == Format::Csv).then(|| {
                let dx = config.grid.x_max / (config.grid.n_points - 1) as f64;
                let mut text = String::from("x,value\n");
                if let Some(values) = report["result"]["value"].as_array() {
                    for (i, v) in values.iter().enumerate() {
                        text.push_str(&format!("{},{v}\n", i as f64 * dx));
                    }
                }
                text
            });
            (report, rendered, exit)
        }
        Command::Price { request, mc_check } => {
            let (report, exit) = cli::cmd_price(&config, request, *mc_check, seed)
                .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?;
            let rendered = (format == Format::Csv).then(|| {
                format!(
                    "price,se,bernstein_sup_error,domain_exit_prob\n{},{},{},{}\n",
                    report["price"],
                    report["mc_check"]["se"],
                    report["diagnostics"]["bernstein_sup_error"],
                    report["diagnostics"]["domain_exit_prob"],
                )
            });
            (report, rendered, exit)
        }
        Command::Counterexample { mu, sigma2 } => {
            let (report, exit) = cli::cmd_counterexample(&config, *mu, *sigma2)
                .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?;
            eprintln!("{}", cli::counterexample_text(&report));
            (report, None, exit)
        }
        Command::Simulate {
            t_end,
            dt,
            x0_curve,
        } => {
            // The path itself goes to --out (or stdout); the JSON summary to
            // stderr so the CSV stream stays clean.
            let mut buf: Vec<u8> = Vec::new();
            let (report, exit) =
                cli::cmd_simulate(&config, *t_end, *dt, x0_curve.as_deref(), seed, &mut buf)
                    .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?;
            let csv = String::from_utf8(buf).expect("path CSV is UTF-8");
            match &cli.out {
                Some(path) => std::fs::write(path, &csv)
                    .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?,
                None => print!("{csv}"),
            }
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializes")
            );
            return Ok(exit);
        }
        Command::Validate { junit } => {
            let suite = run_suite(&config, &ValidateOptions::new(seed));
            let exit = if suite.all_passed() {
                cli::EXIT_OK
            } else {
                cli::EXIT_VALIDATION_FAILURE
            };
            if let Some(path) = junit {
                std::fs::write(path, suite.to_junit_xml())
                    .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?;
            }
            let report = suite.to_json();
            eprintln!("{}", cli::validation_table(&report));
            let rendered = (format == Format::Csv).then(|| suite.to_csv());
            (report, rendered, exit)
        }
    };

    emit(&report, rendered, &cli.out, format)
        .map_err(|e| (cli::EXIT_INPUT_ERROR, e.to_string()))?;
    Ok(exit)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
