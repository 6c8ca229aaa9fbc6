use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod commands;
mod report;

use commands::{CliError, Output};

#[derive(Parser, Debug)]
#[command(name = "birsym", version, about = "Symbol modules of finite abelian group actions and their invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct Format {
    /// Emit the structured JSON report.
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// Emit comma-separated rows.
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Isomorphism type of a graded piece B_n^[e], optionally modulo split symbols.
    Compute {
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        torsion: u64,
        #[arg(long)]
        mod_c: bool,
        /// Expected group, e.g. "Z/2 ⊕ Z^3"; sets the match flag.
        #[arg(long)]
        expect: Option<String>,
        /// Compare against the built-in table when it has an entry.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 4)]
        degree_cap: usize,
        #[arg(long, default_value_t = 100_000)]
        symbol_cap: usize,
        #[command(flatten)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// The degree-two quotients for the primes 5..43 against the built-in table.
    Table1 {
        #[command(flatten)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare the four descriptions of the degree-two quotient for a range of primes.
    CrossCheck {
        /// Inclusive range `A..B`.
        #[arg(long, default_value = "5..199")]
        primes: String,
        /// Largest prime for which the symbol module itself is computed.
        #[arg(long, default_value_t = 60)]
        obar_limit: u64,
        #[command(flatten)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Apply a blow-up script to a surface model and track its class.
    Blowup {
        #[arg(long)]
        model: PathBuf,
        /// One step per line: `point I`, `curve I`, `free`, `special C P`.
        #[arg(long)]
        script: Option<PathBuf>,
        #[command(flatten)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Randomized blow-up invariance checks.
    Campaign {
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Comma-separated torsion bounds.
        #[arg(long, default_value = "4,5,7,8,9,12", value_delimiter = ',')]
        torsion: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[command(flatten)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Terms of the equivariant identification rule for a symbol such as `[5;(1),(2)]`.
    Expand {
        symbol: String,
        #[arg(long, short)]
        j: Option<usize>,
        #[command(flatten)]
        format: Format,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<(Output, Option<PathBuf>, Format), CliError> {
    Ok(match cmd {
        Command::Compute { degree, torsion, mod_c, expect, check, degree_cap, symbol_cap, format, output } => {
            let cfg = birsym::obar::PieceConfig { degree_cap, symbol_cap, ..Default::default() };
            (commands::compute(degree, torsion, mod_c, expect.as_deref(), check, &cfg)?, output, format)
        }
        Command::Table1 { format, output } => (commands::table1()?, output, format),
        Command::CrossCheck { primes, obar_limit, format, output } => {
            (commands::cross_check(&primes, obar_limit)?, output, format)
        }
        Command::Blowup { model, script, format, output } => {
            (commands::blowup(&model, script.as_deref())?, output, format)
        }
        Command::Campaign { seed, torsion, models, steps, format, output } => {
            (commands::campaign(seed, &torsion, models, steps)?, output, format)
        }
        Command::Expand { symbol, j, format, output } => (commands::expand(&symbol, j)?, output, format),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(cli.command) {
        Ok((mut out, path, format)) => {
            out.report.timing_ms = start.elapsed().as_millis();
            let body = if format.json {
                out.report.to_json()
            } else if format.csv {
                out.csv.clone()
            } else {
                report::text(&out.report, &out.lines)
            };
            if let Err(e) = commands::emit(&body, path.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if let Some(err) = &out.failure {
                eprintln!("error: {err}");
            }
            ExitCode::from(out.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
