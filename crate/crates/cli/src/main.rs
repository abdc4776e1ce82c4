use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use srlab_core::ode::IntegratorConfig;
use srlab_core::pipeline::{self, RunConfig};
use srlab_core::report::Bound;
use srlab_core::Error;

const DEFAULT_OUT: &str = "srlab-out";

#[derive(Parser)]
#[command(name = "srlab", version, about = "Numerical checks for sprays, Ehresmann connections and submersion charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run checks on a scenario and write report.json plus plot data.
    Run(RunArgs),
    /// List scenarios and checks.
    List,
    /// Probe the spray exponential domains at the scenario base point.
    Probe {
        #[arg(long, default_value = "flat_projection")]
        scenario: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with the same fields as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated check names, or `all`.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_n: Option<usize>,
    /// Tolerance override for one entry, e.g. `diagram=1e-7`.
    #[arg(long = "tol", value_name = "KEY=VAL", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Output directory (default: $SRLAB_OUT, else `srlab-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit_traces: bool,
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VAL, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad tolerance `{v}`: {e}"))?;
    Ok((k.to_string(), v))
}

fn config(args: RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(c) = args.checks {
        cfg.checks = c;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.grid_n {
        cfg.grid_n = n;
    }
    cfg.tolerances.extend(args.tol);
    if args.out.is_some() {
        cfg.output_dir = args.out;
    }
    if cfg.output_dir.is_none() {
        let dir = std::env::var_os("SRLAB_OUT").map(PathBuf::from).unwrap_or_else(|| DEFAULT_OUT.into());
        cfg.output_dir = Some(dir);
    }
    cfg.emit_traces |= args.emit_traces;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<bool, Error> {
    let cfg = config(args)?;
    let out = pipeline::run(&cfg)?;
    let dir = cfg.output_dir.clone().expect("set by config()");
    out.write(&dir)?;
    for e in &out.report.entries {
        let status = match (e.pass, e.expected_fail) {
            (true, false) => "pass",
            (false, false) => "FAIL",
            (false, true) => "fail (expected)",
            (true, true) => "PASS (expected to fail)",
        };
        let cmp = if e.bound == Bound::Below { "<" } else { ">" };
        match &e.error {
            Some(err) => println!("{:<16} {:<28} {status}: {err}", e.group, e.check),
            None => println!(
                "{:<16} {:<28} {status}  {:.3e} {cmp} {:.1e}  (n={})",
                e.group, e.check, e.max_residual, e.tolerance, e.n_samples
            ),
        }
    }
    let verdict = if out.report.overall { "PASS" } else { "FAIL" };
    println!("overall: {verdict}  ({})", dir.join("report.json").display());
    Ok(out.report.overall)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            print!("{}", pipeline::listing());
            Ok(true)
        }
        Command::Probe { scenario } => pipeline::probe(&scenario, &IntegratorConfig::default()).and_then(|p| {
            println!("{}", serde_json::to_string_pretty(&p)?);
            Ok(true)
        }),
        Command::Run(args) => run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("srlab: {e}");
            ExitCode::from(2)
        }
    }
}
