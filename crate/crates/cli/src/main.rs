use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vfp_core::experiments::verify::{verify_suite, VerifyOptions};
use vfp_core::experiments::{preset, run_experiment, sweep_table, Command, ExperimentConfig, RunStatus, PRESETS};

/// Vlasov-Fokker-Planck experiments: trajectory runs, epsilon sweeps and the
/// discrete invariant suite.
#[derive(Parser)]
#[command(name = "vfp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every epsilon of a configuration and write CSVs and a manifest.
    Run(RunArgs),
    /// Like `run`, plus the initial-layer / plateau / rate summary table.
    Sweep(RunArgs),
    /// Check operator identities, Poincare constants, elliptic solves and
    /// entropy inequalities on uniform and perturbed meshes.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (test1 or test2).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (defaults to run.output, then out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the epsilon runs; 0 uses all cores.
    #[arg(long, env = "VFP_THREADS")]
    threads: Option<usize>,
    /// Override a configuration entry, e.g. --set run.epsilon=[1e-2].
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Take domain, perturbation and temperature from this configuration;
    /// its cell count replaces the default list.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cell counts to test.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64])]
    n_cells: Vec<usize>,
    /// Random samples per identity.
    #[arg(long, default_value_t = 20)]
    samples: usize,
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, String)> {
    let (config, name) = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            (ExperimentConfig::from_path(path)?, name)
        }
        (None, Some(p)) => (preset(p)?, p.clone()),
        (None, None) => bail!("give --config PATH or --preset {{{}}}", PRESETS.join(",")),
    };
    Ok((config.with_overrides(&args.overrides)?, name))
}

fn run(args: RunArgs, command: Command) -> Result<ExitCode> {
    let (config, name) = load(&args)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.run.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    let report = run_experiment(&config, &out, args.threads.unwrap_or(0), command)
        .with_context(|| format!("experiment writing to {}", out.display()))?;
    let m = &report.manifest;
    println!(
        "C_d = {} (effective {:.6}), alpha0 = {:.6e}, alpha1 = {:.6e}, closure = {:?}",
        m.poincare.c_d.map_or("inf".to_string(), |c| format!("{c:.6}")),
        m.poincare.c_d_effective,
        m.alpha0,
        m.alpha1,
        m.closure
    );
    for r in &m.runs {
        match r.status {
            RunStatus::Ok => println!("eps = {:e}: ok, {} rows -> {}", r.epsilon, r.records, r.csv),
            RunStatus::Failed => println!("eps = {:e}: FAILED: {}", r.epsilon, r.error.as_deref().unwrap_or("")),
        }
    }
    if let Some(rows) = &m.sweep {
        print!("{}", sweep_table(rows));
    }
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(if m.all_ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut opts = VerifyOptions {
        n_cells: args.n_cells,
        samples: args.samples,
        ..VerifyOptions::default()
    };
    if let Some(path) = &args.config {
        let c = ExperimentConfig::from_path(path)?;
        opts.length = c.mesh.b - c.mesh.a;
        opts.temperature = c.equilibrium.temperature;
        opts.n_cells = vec![c.mesh.n_cells];
        if c.mesh.perturbation > 0.0 {
            opts.perturbation = c.mesh.perturbation;
            opts.seed = c.mesh.seed;
        }
    }
    let results = verify_suite(&opts);
    for r in &results {
        println!("{}", r.line());
    }
    let unexpected = results.iter().filter(|r| !r.as_expected()).count();
    println!("{} checks, {} unexpected", results.len(), unexpected);
    Ok(if unexpected == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Run(a) => run(a, Command::Run),
        Cmd::Sweep(a) => run(a, Command::Sweep),
        Cmd::Verify(a) => verify(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
