//! `pmlab`: run a named pipeline from a config file, or summarise results.
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure, 4 checks failed.

mod config;
mod output;
mod pipelines;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use config::Resolved;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CHECKS: u8 = 4;

#[derive(Parser)]
#[command(name = "pmlab", version, about = "Parabolic measure laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random battery (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap; pipelines run sequentially.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parabolic measure with doubling, A∞ and B_p tables.
    Measure(RunArgs),
    Ainfty(RunArgs),
    Doubling(RunArgs),
    Bp(RunArgs),
    /// Hodge pair energies, inf-sup constants and stack conservation.
    Hodge(RunArgs),
    /// Square-function Carleson ratios.
    Squares(RunArgs),
    /// Good set F and κ₀.
    Setf(RunArgs),
    /// Cutoff Ψ, E-set masses and θ bounds.
    Sawtooth(RunArgs),
    /// Interior energy audit over cutoffs.
    Audit(RunArgs),
    /// measure, hodge, squares, setf, sawtooth and audit in turn.
    All(RunArgs),
    /// Summarise every run under a directory.
    Report {
        dir: PathBuf,
    },
}

fn head(r: &Resolved, name: &str) -> Map<String, Value> {
    let c = &r.config;
    let (cube, resolution) = match name {
        "measure" | "ainfty" | "doubling" | "bp" => (json!(c.cube), c.grid.h),
        "audit" => (json!({"x0": c.audit.x0, "t0": c.audit.t0, "r": c.audit.r}), c.grid.audit_h),
        _ => (json!({"x0": c.lab.x0, "t0": c.lab.t0, "r": c.lab.r}), c.grid.lab_h),
    };
    let mut m = Map::new();
    m.insert("pipeline".into(), json!(name));
    m.insert("seed".into(), json!(r.seed));
    m.insert("workers".into(), json!(r.workers));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert(
        "coeffs".into(),
        json!({"name": r.coeffs.name, "params": r.coeffs.params, "kappa": r.coeffs.kappa, "big_c": r.coeffs.big_c}),
    );
    m.insert("cube".into(), cube);
    m.insert("resolution".into(), json!(resolution));
    m.insert("grid".into(), json!(c.grid));
    m.insert("tolerances".into(), json!(c.tolerances));
    m
}

fn run_pipeline(name: &str, args: RunArgs) -> ExitCode {
    let loaded = match config::load(args.config.as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let r = match config::resolve(loaded.config, name, args.out, args.seed, args.workers) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let names: Vec<&str> = if name == "all" {
        vec!["measure", "hodge", "squares", "setf", "sawtooth", "audit"]
    } else {
        vec![name]
    };
    let mut failed = Vec::new();
    for p in names {
        eprintln!("running {p}");
        let out = match pipelines::run(p, &r) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("{p}: solver failure: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
        };
        let dir = r.out.join(p);
        if let Err(e) = output::write_run(&dir, &loaded.text, head(&r, p), &out) {
            eprintln!("{}: {e}", dir.display());
            return ExitCode::from(EXIT_SOLVER);
        }
        for c in out.checks.iter().filter(|c| !c.pass) {
            eprintln!("{p}: check {} failed: {} vs limit {}", c.name, c.value, c.limit);
            failed.push(format!("{p}/{}", c.name));
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECKS)
    }
}

fn run_report(dir: &Path) -> ExitCode {
    let runs = match report::collect(dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match report::render(dir, &runs) {
        Some(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        None => {
            eprintln!("{}: no runs found", dir.display());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Measure(a) => run_pipeline("measure", a),
        Command::Ainfty(a) => run_pipeline("ainfty", a),
        Command::Doubling(a) => run_pipeline("doubling", a),
        Command::Bp(a) => run_pipeline("bp", a),
        Command::Hodge(a) => run_pipeline("hodge", a),
        Command::Squares(a) => run_pipeline("squares", a),
        Command::Setf(a) => run_pipeline("setf", a),
        Command::Sawtooth(a) => run_pipeline("sawtooth", a),
        Command::Audit(a) => run_pipeline("audit", a),
        Command::All(a) => run_pipeline("all", a),
        Command::Report { dir } => run_report(&dir),
    }
}
