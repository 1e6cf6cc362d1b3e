use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wedge_dla::config::{parse_config, Command};
use wedge_dla::runner::{self, FileStatus};
use wedge_dla::store::RunManifest;

#[derive(Parser)]
#[command(name = "wedge-dla", version, about = "DLA in lattice wedges and the harmonic estimates behind it")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Grow an aggregate and tabulate stabilization at dial radii.
    Grow(RunArgs),
    /// Escape probability past one boundary ray versus the continuum formula.
    Escape(RunArgs),
    /// Far-field hitting probability of a small ball through a barrier.
    Beurling(RunArgs),
    /// Push-to-boundary dominance over random connected sets.
    Dominance(RunArgs),
    /// Inner-first probability between two rings.
    Ring(RunArgs),
    /// Early far exit and small-set hitting within a step budget.
    FarExit(RunArgs),
    /// Spread of hitting laws from a ring as the ring grows.
    Converge(RunArgs),
    /// Exact hitting law or effective resistance on a truncated wedge.
    Oracle(RunArgs),
    /// Re-run a recorded run and compare every output digest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags are appended to it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lower boundary ray as a tangent p/q.
    #[arg(long, allow_hyphen_values = true)]
    theta1: Option<String>,
    /// Upper boundary ray as a tangent p/q.
    #[arg(long, allow_hyphen_values = true)]
    theta2: Option<String>,
    #[arg(long)]
    particles: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// oracle | mc
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    /// Any other configuration key, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory; defaults to a fresh directory under the output root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default run directories.
    #[arg(long, env = "WEDGE_DLA_OUT", default_value = "runs")]
    out_root: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run directory or manifest file.
    manifest: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "WEDGE_DLA_OUT", default_value = "runs")]
    out_root: PathBuf,
}

fn fresh_dir(root: &Path, name: &str) -> PathBuf {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    root.join(format!("{name}-{stamp}"))
}

fn config_text(command: Command, args: &RunArgs) -> Result<String> {
    let mut text = match &args.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    let has_command = text.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("command"));
    if !has_command {
        text.push_str(&format!("command = {command}\n"));
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            text.push_str(&format!("{k} = {v}\n"));
        }
    };
    push("theta1", args.theta1.clone());
    push("theta2", args.theta2.clone());
    push("particles", args.particles.map(|v| v.to_string()));
    push("seed", args.seed.map(|v| v.to_string()));
    push("workers", args.workers.map(|v| v.to_string()));
    push("backend", args.backend.clone());
    push("trials", args.trials.map(|v| v.to_string()));
    for kv in &args.set {
        if !kv.contains('=') {
            bail!("--set expects key=value, got {kv:?}");
        }
        text.push_str(kv);
        text.push('\n');
    }
    Ok(text)
}

fn run_command(command: Command, args: RunArgs) -> Result<bool> {
    let text = config_text(command, &args)?;
    let request = parse_config(&text).map_err(|e| anyhow::anyhow!("configuration {e}"))?;
    if request.command != command {
        bail!("configuration is for {} but the subcommand is {command}", request.command);
    }
    for w in &request.warnings {
        eprintln!("warning: {w}");
    }
    let dir = args.out.unwrap_or_else(|| fresh_dir(&args.out_root, command.name()));
    let manifest = runner::run(&request, &dir)?;
    let report = wedge_dla::store::load_report(&dir, &manifest.outputs)?;
    println!("run directory: {}", dir.display());
    for c in &report.cells {
        let params: Vec<String> = c.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let reference = c.reference.map_or(String::new(), |r| format!("  (reference {r:.6})"));
        println!("  {:<14} {:<40} {:.6} ± {:.6}{reference}", c.label, params.join(" "), c.estimate, c.stderr);
    }
    for f in &report.fits {
        println!("  fit {}: slope {:.4}, R² {:.4}", f.label, f.slope, f.r_squared);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
    for c in &report.checks {
        println!("  [{}] {} {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
    }
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    Ok(manifest.checks_passed)
}

fn replay_command(args: ReplayArgs) -> Result<bool> {
    let manifest = RunManifest::read(&args.manifest)?;
    let dir = args.out.unwrap_or_else(|| fresh_dir(&args.out_root, "replay"));
    let report = runner::replay(&manifest, &dir, args.workers)?;
    println!("replay directory: {}", dir.display());
    for f in &report.files {
        let status = match f.status {
            FileStatus::Match => "match",
            FileStatus::Mismatch => "MISMATCH",
            FileStatus::Missing => "MISSING",
        };
        println!("  {:<20} {status}", f.name);
    }
    for e in &report.extra {
        println!("  {e:<20} UNEXPECTED");
    }
    println!("{}", if report.certified { "certified: byte-identical" } else { "not certified" });
    Ok(report.certified)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Grow(a) => run_command(Command::Grow, a),
        Cmd::Escape(a) => run_command(Command::Escape, a),
        Cmd::Beurling(a) => run_command(Command::Beurling, a),
        Cmd::Dominance(a) => run_command(Command::Dominance, a),
        Cmd::Ring(a) => run_command(Command::Ring, a),
        Cmd::FarExit(a) => run_command(Command::FarExit, a),
        Cmd::Converge(a) => run_command(Command::Converge, a),
        Cmd::Oracle(a) => run_command(Command::Oracle, a),
        Cmd::Replay(a) => replay_command(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
