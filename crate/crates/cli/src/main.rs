use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::{json, Map, Value};

use qdensity_cli::{parse_job, run, run_json, Report};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CommandArg {
    Density,
    Reduce,
    Gauss,
    Oracle,
    Verify,
}

/// Local densities of quadratic polynomials over unramified p-adic fields.
///
/// Either pass a whole job with `--job`, or a command plus flags. Reports are
/// JSON; exit status 1 means the engine failed, 2 means the input was invalid.
#[derive(Debug, Parser)]
#[command(name = "qdensity", version)]
struct Args {
    /// Subcommand; omit when using --job.
    #[arg(value_enum)]
    command: Option<CommandArg>,
    /// Complete job as a JSON file.
    #[arg(long, conflicts_with = "command")]
    job: Option<PathBuf>,
    /// Field JSON file; overrides the field inside --poly.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Polynomial JSON file.
    #[arg(long)]
    poly: Option<PathBuf>,
    /// Target: an integer, "a/b", or a coefficient object {"val", "unit"}.
    #[arg(long)]
    n: Option<String>,
    /// Oracle level.
    #[arg(long)]
    k: Option<u32>,
    /// Highest oracle level for stabilization.
    #[arg(long)]
    k_max: Option<u32>,
    /// Dyadic evaluation mode: case_table, lemma_sum or both.
    #[arg(long)]
    mode: Option<String>,
    /// Oracle work budget in ring operations (PADIC_DENSITY_BUDGET takes precedence).
    #[arg(long)]
    budget: Option<u64>,
    /// Include case tags, notes and working precision in density reports.
    #[arg(long)]
    trace: bool,
    /// Treat a target that vanishes to working precision as zero.
    #[arg(long)]
    assume_n_zero: bool,
    /// Gauss query JSON file.
    #[arg(long)]
    query: Option<PathBuf>,
    /// Verify grid JSON file: a list of {"poly", "n", "k_max"}.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn read_json(path: &PathBuf) -> Result<Value, Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Report::schema(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Report::schema(format!("{}: {e}", path.display())))
}

/// Integers stay numbers, objects are coefficient JSON, anything else is text.
fn target(s: &str) -> Value {
    match serde_json::from_str::<Value>(s) {
        Ok(v @ (Value::Number(_) | Value::Object(_))) => v,
        _ => Value::String(s.to_string()),
    }
}

fn job_from_flags(args: &Args, command: CommandArg) -> Result<Value, Report> {
    let name = format!("{command:?}").to_lowercase();
    let mut job = Map::new();
    job.insert("command".into(), json!(name));
    for (key, path) in [("field", &args.field), ("poly", &args.poly), ("query", &args.query), ("grid", &args.grid)] {
        if let Some(p) = path {
            job.insert(key.into(), read_json(p)?);
        }
    }
    if let Some(n) = &args.n {
        job.insert("n".into(), target(n));
    }
    if let Some(k) = args.k {
        job.insert("k".into(), json!(k));
    }
    if let Some(k) = args.k_max {
        job.insert("k_max".into(), json!(k));
    }
    if let Some(m) = &args.mode {
        job.insert("mode".into(), json!(m));
    }
    if let Some(b) = args.budget {
        job.insert("budget".into(), json!(b));
    }
    job.insert("trace".into(), json!(args.trace));
    job.insert("assume_n_zero".into(), json!(args.assume_n_zero));
    Ok(Value::Object(job))
}

fn report(args: &Args) -> Report {
    if let Some(path) = &args.job {
        return match std::fs::read_to_string(path) {
            Ok(text) => match parse_job(&text) {
                Ok(job) => run(&job),
                Err(r) => r,
            },
            Err(e) => Report::schema(format!("{}: {e}", path.display())),
        };
    }
    let Some(command) = args.command else {
        return Report::schema("give a command or --job");
    };
    match job_from_flags(args, command) {
        Ok(job) => run_json(job),
        Err(r) => r,
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let rep = report(&args);
    let text = rep.render();
    match &args.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(rep.code as u8)
}
