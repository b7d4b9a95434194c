use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use membrane_integrals::forms::Scalar;
use membrane_integrals::integrate::Engine;
use membrane_integrals::scenario::{builtin_suite, run_suite, Prepared, RunOptions, Scenario, Suite};
use membrane_integrals::Error;

#[derive(Parser)]
#[command(
    name = "membint",
    version,
    about = "Iterated integrals over membranes and checks of their identities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(clap::Args)]
struct Flags {
    /// exact, quadrature or montecarlo
    #[arg(long, global = true, value_parser = parse_engine)]
    engine: Option<Engine>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    #[arg(long, global = true)]
    quad_order: Option<usize>,
    /// Relative tolerance for quadrature comparisons
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
    /// Also write the JSON report to this path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Negate one summand of every check (negative control)
    #[arg(long, global = true)]
    inject_sign_flip: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the `compute` section of a scenario file
    Compute { file: PathBuf },
    /// Run the checks of a scenario or suite file, or of a built-in suite
    Verify { target: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_out(path: &Option<PathBuf>, json: &str) -> Result<(), Error> {
    if let Some(p) = path {
        std::fs::write(p, format!("{json}\n")).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn compute(file: &Path, opts: &RunOptions, flags: &Flags) -> Result<ExitCode, Error> {
    let scenario = Scenario::parse(&read(file)?)?;
    let prepared = Prepared::new(&scenario)?;
    let result = prepared.compute(opts)?;
    let z = result.value.to_complex64();
    let doc = serde_json::json!({
        "id": scenario.id,
        "value": result.value.to_string(),
        "re": z.re,
        "im": z.im,
        "error_estimate": result.error_estimate,
        "metadata": result.metadata,
    });
    let json = serde_json::to_string_pretty(&doc).expect("result serializes");
    write_out(&flags.out, &json)?;
    match flags.report {
        ReportFormat::Json => println!("{json}"),
        ReportFormat::Text => {
            if let Scalar::Exact(v) = &result.value {
                println!("value    = {v}");
            }
            if z.im == 0.0 {
                println!("decimal  = {:.15}", z.re);
            } else {
                println!("decimal  = {:.15} {:+.15}i", z.re, z.im);
            }
            println!("error    = {:.3e}", result.error_estimate);
            println!("engine   = {}", result.metadata.engine);
            println!("points   = {}", result.metadata.points);
            if let Some(seed) = result.metadata.seed {
                println!("seed     = {seed}");
            }
            if let Some(q) = result.metadata.quad_order {
                println!("order    = {q}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(target: &str, opts: &RunOptions, flags: &Flags) -> Result<ExitCode, Error> {
    let path = Path::new(target);
    let suite = if path.exists() {
        Suite::parse(&read(path)?)?
    } else if let Some(s) = builtin_suite(target) {
        s
    } else {
        return Err(Error::Parse(format!(
            "`{target}` is neither a file nor a built-in suite"
        )));
    };
    let report = run_suite(&suite, opts)?;
    let json = report.to_json();
    write_out(&flags.out, &json)?;
    match flags.report {
        ReportFormat::Json => println!("{json}"),
        ReportFormat::Text => print!("{}", report.to_text()),
    }
    Ok(if report.all_as_expected() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let f = &cli.flags;
    let opts = RunOptions {
        engine: f.engine,
        seed: f.seed,
        mc_samples: f.mc_samples,
        quad_order: f.quad_order,
        tolerance: f.tolerance,
        inject_sign_flip: f.inject_sign_flip,
    };
    let outcome = match &cli.command {
        Command::Compute { file } => compute(file, &opts, f),
        Command::Verify { target } => verify(target, &opts, f),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation { .. } | Error::Parse(_) | Error::InvalidConfig(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
