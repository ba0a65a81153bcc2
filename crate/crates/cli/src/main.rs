//! `quadform`: distribution functions of Gaussian quadratic forms and their
//! ratios from a JSON form document.
//!
//! Exit codes: 0 success, 2 invalid input, 3 convergence failure,
//! 4 method not applicable.

mod doc;
mod pretty;
mod run;

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quadform::Error;

use run::{Command, Grid, Options};

#[derive(Parser)]
#[command(name = "quadform", version, about = "Distribution functions of Gaussian quadratic forms and their ratios")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// auto, central_even, ruben, kotz, laguerre, imhof, davies, spa_lr,
    /// spa_bn, satterthwaite, pearson, hbe, wood, liu (ratio-moment also
    /// takes bao_kan_series and magnus_integral)
    #[arg(long, global = true)]
    method: Option<String>,
    /// Absolute error target
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Evaluate at `count` evenly spaced points, start:stop:count
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<Grid>,
    /// Human-readable table instead of JSON
    #[arg(long, global = true)]
    pretty: bool,
    /// Term cap for series methods
    #[arg(long, global = true)]
    max_terms: Option<usize>,
    #[arg(long, global = true, default_value_t = 1e-10)]
    quadrature_tol: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reduced parameters (ω, ν, δ², σ, c″) of a form
    Reduce { file: PathBuf },
    /// P(Q ≤ q)
    Cdf {
        #[arg(long, allow_hyphen_values = true)]
        q: Option<f64>,
        file: PathBuf,
    },
    /// Density of Q at q
    Pdf {
        #[arg(long, allow_hyphen_values = true)]
        q: Option<f64>,
        file: PathBuf,
    },
    /// Solves P(Q ≤ x) = p
    Quantile {
        #[arg(long)]
        p: Option<f64>,
        file: PathBuf,
    },
    /// Raw moments E[Q^k], k = 1..order
    Moments {
        #[arg(long, default_value_t = 4)]
        order: usize,
        file: PathBuf,
    },
    /// Cumulants κ_1..κ_order
    Cumulants {
        #[arg(long, default_value_t = 4)]
        order: usize,
        file: PathBuf,
    },
    /// P(R ≤ r) for a ratio document
    RatioCdf {
        #[arg(long, allow_hyphen_values = true)]
        r: Option<f64>,
        file: PathBuf,
    },
    /// Saddlepoint density of R at r
    RatioPdf {
        #[arg(long, allow_hyphen_values = true)]
        r: Option<f64>,
        /// Divide by the numerically integrated total mass
        #[arg(long)]
        normalized: bool,
        file: PathBuf,
    },
    /// E[R^p]
    RatioMoment {
        #[arg(long)]
        p: u32,
        file: PathBuf,
    },
    /// Compares the library against Monte Carlo: CDF at q (forms), CDF at
    /// r or moment p (ratios)
    McCheck {
        #[arg(long, allow_hyphen_values = true)]
        q: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        r: Option<f64>,
        #[arg(long)]
        p: Option<u32>,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        file: PathBuf,
    },
}

fn read(path: &PathBuf) -> Result<String, Error> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Error::invalid(format!("cannot read stdin: {e}")))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) => 2,
        Error::Convergence { .. } => 3,
        Error::NotApplicable(_) | Error::Domain { .. } | Error::DegenerateConstant(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, file) = match cli.command {
        Cmd::Reduce { file } => (Command::Reduce, file),
        Cmd::Cdf { q, file } => (Command::Cdf { q }, file),
        Cmd::Pdf { q, file } => (Command::Pdf { q }, file),
        Cmd::Quantile { p, file } => (Command::Quantile { p }, file),
        Cmd::Moments { order, file } => (Command::Moments { order }, file),
        Cmd::Cumulants { order, file } => (Command::Cumulants { order }, file),
        Cmd::RatioCdf { r, file } => (Command::RatioCdf { r }, file),
        Cmd::RatioPdf { r, normalized, file } => (Command::RatioPdf { r, normalized }, file),
        Cmd::RatioMoment { p, file } => (Command::RatioMoment { p }, file),
        Cmd::McCheck { q, r, p, n, file } => (Command::McCheck { q, r, p, n }, file),
    };
    let c = cli.common;
    let result = read(&file).and_then(|text| doc::parse(&text)).and_then(|d| {
        let opts = Options {
            method: c.method.or(d.method.clone()),
            tol: c.tol.or(d.tol).unwrap_or(1e-8),
            seed: c.seed,
            grid: c.grid,
            max_terms: c.max_terms,
            quadrature_tol: c.quadrature_tol,
        };
        run::run(&command, &d, &opts)
    });
    match result {
        Ok(v) => {
            if c.pretty {
                print!("{}", pretty::render(&v));
            } else {
                println!("{v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Convergence { partial: Some(p), .. } = &e {
                eprintln!("partial result: {}", serde_json::to_string(p).unwrap_or_default());
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
