//! Trajectory runs over an epsilon list, per-run summaries and the manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sink::{format_value, write_equilibrium_csv, DiagnosticsSink, COLUMNS};
use crate::checkpoint;
use crate::diagnostics::{fit_decay_rate, DiagnosticsCollector, DiagnosticsRecord, EntropyContext, EntropyParams, LimitReference};
use crate::elliptic::EllipticSolver;
use crate::equilibrium::EquilibriumField;
use crate::error::{Result, VfpError};
use crate::hermite::{project_initial, CoefficientField};
use crate::kinetic::{self, Closure, GlobalSystem, TauLaw};
use crate::limit::LimitStepper;
use crate::mesh::Mesh;
use crate::operators::TransportOperators;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EQUILIBRIUM_FILE: &str = "equilibrium.csv";
pub const SWEEP_FILE: &str = "sweep_summary.csv";

/// Everything shared by the runs of one experiment.
pub struct Setup {
    pub config: ExperimentConfig,
    pub mesh: Mesh,
    pub field: EquilibriumField,
    pub ops: TransportOperators,
    pub elliptic: EllipticSolver,
    pub tau_law: TauLaw,
    pub tau_bar0: f64,
    pub params: EntropyParams,
    pub initial: CoefficientField,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let resolved = config.resolve()?;
        let mesh = resolved.mesh;
        let field = EquilibriumField::with_form(
            resolved.phi,
            &mesh,
            resolved.temperature,
            resolved.total_mass,
            resolved.field_form,
        )?;
        let ops = TransportOperators::new(&mesh, &field);
        let elliptic = EllipticSolver::new(&mesh, &field, &ops)?;
        let tau_bar0 = config.tau_bar0()?;
        let params = EntropyParams::from_constants(tau_bar0, elliptic.working_c_d());
        let initial = project_initial(&resolved.initial, &field, &mesh, config.scheme.n_modes)?;
        Ok(Setup {
            config: config.clone(),
            mesh,
            field,
            ops,
            elliptic,
            tau_law: resolved.tau_law,
            tau_bar0,
            params,
            initial,
        })
    }

    pub fn context(&self, epsilon: f64) -> EntropyContext<'_> {
        EntropyContext {
            mesh: &self.mesh,
            field: &self.field,
            ops: &self.ops,
            elliptic: &self.elliptic,
            params: self.params,
            tau_over_eps: self.tau_law.tau(epsilon) / epsilon,
        }
    }

    pub fn limit_reference(&self) -> Result<LimitReference> {
        if !self.config.run.attach_limit {
            return Ok(LimitReference::None);
        }
        match self.tau_law.tau0() {
            Some(tau0) => {
                let stepper = LimitStepper::new(&self.elliptic, tau0, self.config.scheme.dt)?;
                let state = stepper.initial_state(self.initial.row(0).to_vec())?;
                Ok(LimitReference::Evolving { stepper, state, step: 0 })
            }
            // Without a quadratic law there is no drift-diffusion scaling;
            // compare against the steady state instead.
            None => Ok(LimitReference::Stationary),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub step: usize,
    pub t: f64,
    pub file: String,
}

/// Outcome of one kinetic trajectory.
#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub tau: f64,
    pub direct: bool,
    pub records: Vec<DiagnosticsRecord>,
    pub checkpoints: Vec<CheckpointEntry>,
}

/// File-name label of an epsilon value, e.g. `1e-2`.
pub fn epsilon_label(epsilon: f64) -> String {
    format_value(epsilon)
}

/// Runs one epsilon. Rows go to `csv` if given; checkpoints to
/// `checkpoint_dir` when the configured cadence is positive. The first
/// `layer_steps` steps are always recorded.
pub fn run_epsilon(
    setup: &Setup,
    epsilon: f64,
    csv: Option<&Path>,
    checkpoint_dir: Option<&Path>,
) -> Result<EpsilonRun> {
    let cfg = &setup.config;
    let scheme = cfg.scheme_for(epsilon)?;
    let system = GlobalSystem::assemble(&setup.ops, &scheme)?;
    let mut collector = DiagnosticsCollector::new(setup.context(epsilon), scheme.dt, setup.limit_reference()?);
    let mut sink = csv.map(DiagnosticsSink::create).transpose()?;
    let every = cfg.run.checkpoint_every;
    let checkpoint_dir = checkpoint_dir.filter(|_| every > 0);
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| VfpError::io(dir, "creating", e))?;
    }
    let mut checkpoints = Vec::new();
    let mut save = |n: usize, d: &CoefficientField| -> Result<()> {
        if let Some(dir) = checkpoint_dir {
            let name = format!("step_{n:08}.vfpd");
            checkpoint::write(&dir.join(&name), d)?;
            checkpoints.push(CheckpointEntry {
                step: n,
                t: n as f64 * scheme.dt,
                file: name,
            });
        }
        Ok(())
    };

    let n_steps = cfg.run.n_steps;
    let mut records = Vec::new();
    let first = collector.record(0, &setup.initial)?;
    if let Some(s) = sink.as_mut() {
        s.write(&first)?;
    }
    records.push(first);
    save(0, &setup.initial)?;

    kinetic::run(&system, &setup.initial, n_steps, 1, |n, d| {
        if n % cfg.run.diag_every == 0 || n <= cfg.run.layer_steps || n == n_steps {
            let r = collector.record(n, d)?;
            if let Some(s) = sink.as_mut() {
                s.write(&r)?;
            }
            records.push(r);
        }
        if every > 0 && (n % every == 0 || n == n_steps) {
            save(n, d)?;
        }
        Ok(())
    })?;
    if let Some(s) = sink {
        s.finish()?;
    }
    Ok(EpsilonRun {
        epsilon,
        tau: scheme.tau(),
        direct: system.is_direct(),
        records,
        checkpoints,
    })
}

/// Measured quantities of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub epsilon: f64,
    /// `(||D_perp^m|| / ||D_perp^0||)^(1/m)` with `m = min(layer_steps, n_steps)`.
    pub layer_factor: Option<f64>,
    /// `(1 + dt / (2 tau0 eps^2))^(-1/2)` for the quadratic law.
    pub layer_bound: Option<f64>,
    /// Largest `||D_0 - Dbar_0||_{H^-1}` over the steps after the layer and up
    /// to `plateau_end`.
    pub plateau: Option<f64>,
    /// Exponential rates of `l2_dist` and `rho_dist` fitted over the second
    /// half of the run.
    pub l2_rate: Option<f64>,
    pub rho_rate: Option<f64>,
    /// `max_n |mass^n - mass^0| / |mass^0|`.
    pub mass_drift: f64,
    pub l2_monotone: bool,
    pub h0_monotone: bool,
}

pub fn summarize(config: &ExperimentConfig, epsilon: f64, records: &[DiagnosticsRecord]) -> Result<TrajectorySummary> {
    let first = records.first().ok_or_else(|| VfpError::invalid("no records to summarize"))?;
    let dt = config.scheme.dt;
    let last_step = records.last().map(|r| r.step).unwrap_or(0);
    let m = config.run.layer_steps.min(last_step);
    let layer_factor = records
        .iter()
        .find(|r| r.step == m)
        .filter(|_| m > 0 && first.dperp > 0.0)
        .map(|r| (r.dperp / first.dperp).powf(1.0 / m as f64));
    let layer_bound = config
        .tau_law()?
        .tau0()
        .map(|tau0| (1.0 + dt / (2.0 * tau0 * epsilon * epsilon)).powf(-0.5));
    let plateau = records
        .iter()
        .filter(|r| r.step >= config.run.layer_steps && r.t <= config.run.plateau_end + 0.5 * dt)
        .filter_map(|r| r.hminus1_macro)
        .reduce(f64::max);
    let t_end = last_step as f64 * dt;
    let tail: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.t >= 0.5 * t_end && r.step > 0).collect();
    let rate = |f: fn(&DiagnosticsRecord) -> f64| {
        let series: Vec<(f64, f64)> = tail.iter().map(|r| (r.t, f(r))).collect();
        fit_decay_rate(&series, 0..series.len()).ok().map(|fit| fit.rate)
    };
    let mass_drift = records
        .iter()
        .map(|r| (r.mass - first.mass).abs() / first.mass.abs())
        .fold(0.0, f64::max);
    Ok(TrajectorySummary {
        epsilon,
        layer_factor,
        layer_bound,
        plateau,
        l2_rate: rate(|r| r.l2_dist),
        rho_rate: rate(|r| r.rho_dist),
        mass_drift,
        l2_monotone: records.windows(2).all(|w| w[1].l2_dist <= w[0].l2_dist),
        h0_monotone: records.windows(2).all(|w| w[1].h0 <= w[0].h0),
    })
}

/// One line of the sweep table; ratios compare with the previous (larger)
/// epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub layer_factor: Option<f64>,
    pub layer_bound: Option<f64>,
    pub plateau: Option<f64>,
    pub l2_rate: Option<f64>,
    pub rho_rate: Option<f64>,
    pub epsilon_ratio: Option<f64>,
    pub plateau_ratio: Option<f64>,
}

/// Sorts by decreasing epsilon and fills in consecutive ratios.
pub fn sweep_rows(summaries: &[TrajectorySummary]) -> Vec<SweepRow> {
    let mut sorted: Vec<&TrajectorySummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let mut rows: Vec<SweepRow> = Vec::with_capacity(sorted.len());
    for (i, s) in sorted.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| sorted[p]);
        rows.push(SweepRow {
            epsilon: s.epsilon,
            layer_factor: s.layer_factor,
            layer_bound: s.layer_bound,
            plateau: s.plateau,
            l2_rate: s.l2_rate,
            rho_rate: s.rho_rate,
            epsilon_ratio: prev.map(|p| p.epsilon / s.epsilon),
            plateau_ratio: prev.and_then(|p| Some(p.plateau? / s.plateau?)),
        });
    }
    rows
}

/// CSV form of the sweep table. Ratio columns appear only with two or more
/// rows.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let with_ratios = rows.len() >= 2;
    let mut header = vec!["epsilon", "layer_factor", "layer_bound", "plateau", "l2_rate", "rho_rate"];
    if with_ratios {
        header.extend(["epsilon_ratio", "plateau_ratio"]);
    }
    let opt = |x: Option<f64>| x.map(format_value).unwrap_or_default();
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let mut fields = vec![
            format_value(r.epsilon),
            opt(r.layer_factor),
            opt(r.layer_bound),
            opt(r.plateau),
            opt(r.l2_rate),
            opt(r.rho_rate),
        ];
        if with_ratios {
            fields.extend([opt(r.epsilon_ratio), opt(r.plateau_ratio)]);
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub epsilon: f64,
    pub tau: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub csv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    pub records: usize,
    pub checkpoints: Vec<CheckpointEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<TrajectorySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareInfo {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_eff: f64,
    /// Absent when the raw constant is infinite.
    pub c_d: Option<f64>,
    pub c_d_effective: f64,
    /// Constant entering the entropy weights.
    pub c_d_used: f64,
    pub degenerate: bool,
    pub kernel_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub n_cells: usize,
    pub h: f64,
    pub regularity: f64,
    pub total_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub command: Command,
    pub config: ExperimentConfig,
    pub mesh: MeshInfo,
    pub poincare: PoincareInfo,
    pub tau_bar0: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub closure: Closure,
    pub columns: Vec<String>,
    pub equilibrium_csv: String,
    /// `"VFPD"`, little-endian u32 version, u64 modes, u64 cells, then f64
    /// values mode by mode.
    pub checkpoint_format: String,
    pub runs: Vec<RunEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VfpError::io(path, "reading", e))?;
        serde_json::from_str(&text).map_err(|e| VfpError::Config(format!("{}: {e}", path.display())))
    }

    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Ok)
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Result of [`run_experiment`]: the manifest and the in-memory trajectories
/// of the runs that succeeded.
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub runs: Vec<Option<EpsilonRun>>,
}

/// Runs every epsilon (in parallel on `threads` workers, 0 meaning the rayon
/// default) and writes CSVs, checkpoints, `equilibrium.csv`, the manifest
/// and, for sweeps, the summary table. A failing epsilon is recorded and
/// does not stop the others.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, threads: usize, command: Command) -> Result<ExperimentReport> {
    let setup = Setup::new(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| VfpError::io(out_dir, "creating", e))?;
    write_equilibrium_csv(&out_dir.join(EQUILIBRIUM_FILE), &setup.mesh, &setup.field)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| VfpError::invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<(String, Result<EpsilonRun>)> = pool.install(|| {
        config
            .run
            .epsilon
            .par_iter()
            .map(|&eps| {
                let label = epsilon_label(eps);
                let csv = format!("eps_{label}.csv");
                let ckpt = out_dir.join("checkpoints").join(format!("eps_{label}"));
                let run = run_epsilon(&setup, eps, Some(&out_dir.join(&csv)), Some(&ckpt));
                (csv, run)
            })
            .collect()
    });

    let mut entries = Vec::new();
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for (&eps, (csv, outcome)) in config.run.epsilon.iter().zip(outcomes) {
        let tau = setup.tau_law.tau(eps);
        match outcome {
            Ok(run) => {
                let summary = summarize(config, eps, &run.records)?;
                summaries.push(summary.clone());
                entries.push(RunEntry {
                    epsilon: eps,
                    tau,
                    status: RunStatus::Ok,
                    error: None,
                    csv,
                    solver: Some(if run.direct { "direct" } else { "krylov" }.into()),
                    records: run.records.len(),
                    checkpoints: run.checkpoints.clone(),
                    summary: Some(summary),
                });
                runs.push(Some(run));
            }
            Err(e) => {
                entries.push(RunEntry {
                    epsilon: eps,
                    tau,
                    status: RunStatus::Failed,
                    error: Some(e.to_string()),
                    csv,
                    solver: None,
                    records: 0,
                    checkpoints: Vec::new(),
                    summary: None,
                });
                runs.push(None);
            }
        }
    }

    let sweep = (command == Command::Sweep).then(|| sweep_rows(&summaries));
    if let Some(rows) = &sweep {
        let path = out_dir.join(SWEEP_FILE);
        std::fs::write(&path, sweep_table(rows)).map_err(|e| VfpError::io(&path, "writing", e))?;
    }
    let p = setup.elliptic.poincare();
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        command,
        config: config.clone(),
        mesh: MeshInfo {
            n_cells: setup.mesh.n_cells(),
            h: setup.mesh.h(),
            regularity: setup.mesh.regularity(),
            total_mass: setup.field.total_mass(),
        },
        poincare: PoincareInfo {
            sigma_min: p.sigma_min,
            sigma_max: p.sigma_max,
            sigma_eff: p.sigma_eff,
            c_d: finite(p.c_d),
            c_d_effective: p.c_d_eff,
            c_d_used: p.working_c_d(),
            degenerate: p.degenerate,
            kernel_dim: p.kernel_dim,
        },
        tau_bar0: setup.tau_bar0,
        alpha0: setup.params.alpha0,
        alpha1: setup.params.alpha1,
        closure: config.scheme.closure,
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        equilibrium_csv: EQUILIBRIUM_FILE.into(),
        checkpoint_format: format!(
            "VFPD v{}: magic, u32 version, u64 n_modes, u64 n_cells, f64 values (mode-major), little endian",
            checkpoint::VERSION
        ),
        runs: entries,
        sweep,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| VfpError::Config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| VfpError::io(&path, "writing", e))?;
    Ok(ExperimentReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        runs,
    })
}
