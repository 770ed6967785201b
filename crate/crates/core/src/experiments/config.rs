//! Experiment configuration: a flat sectioned TOML file, the two reference
//! presets, and `section.key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{FieldForm, PotentialSpec};
use crate::error::{Result, VfpError};
use crate::hermite::{DensityProfile, InitialDataSpec, InitialKind};
use crate::kinetic::{Closure, LinearSolver, SchemeConfig, TauLaw};
use crate::mesh::Mesh;

/// Relative tolerance when comparing a configured `total_mass` with the mass
/// of the initial datum.
pub const MASS_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub equilibrium: EquilibriumSection,
    pub initial: InitialSection,
    pub scheme: SchemeSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default)]
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    /// Interface jitter as a fraction of the uniform half-width; 0 keeps the
    /// mesh uniform.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    /// `0.1 cos(2 pi x / P) + 0.9 cos(4 pi x / P)`.
    TwoCosine,
    Cosine,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    /// Defaults to the domain length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub field_form: FieldForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    #[serde(default = "one")]
    pub temperature: f64,
    /// Defaults to the mass of the initial datum; a different value is
    /// rejected because the entropies need matching masses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_mass: Option<f64>,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        EquilibriumSection {
            temperature: 1.0,
            total_mass: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialVelocity {
    Maxwellian,
    ShiftedMaxwellian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub velocity: InitialVelocity,
    /// Drift of the shifted Maxwellian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    /// Temperature of the initial Maxwellian; defaults to the equilibrium one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub density: DensityKind,
    #[serde(default = "one")]
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Defaults to the domain length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    Quadratic,
    Power,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub tau_law: TauKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub dt: f64,
    pub n_modes: usize,
    #[serde(default)]
    pub closure: Closure,
    #[serde(default)]
    pub solver: LinearSolver,
    #[serde(default = "default_linear_tol")]
    pub linear_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub epsilon: Vec<f64>,
    pub n_steps: usize,
    #[serde(default = "default_diag_every")]
    pub diag_every: usize,
    /// Co-run the drift-diffusion scheme as the macroscopic reference.
    #[serde(default = "yes")]
    pub attach_limit: bool,
    /// Output directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Checkpoint cadence in steps; 0 disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Steps recorded one by one at the start of every run (initial layer).
    #[serde(default = "default_layer_steps")]
    pub layer_steps: usize,
    /// End of the window, in time units, over which the post-layer plateau
    /// of the macroscopic gap is taken.
    #[serde(default = "default_plateau_end")]
    pub plateau_end: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_linear_tol() -> f64 {
    1e-12
}

fn default_diag_every() -> usize {
    10
}

fn default_layer_steps() -> usize {
    20
}

fn default_plateau_end() -> f64 {
    3.0
}

/// Fully resolved inputs shared by every epsilon of an experiment.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub mesh: Mesh,
    pub phi: Vec<f64>,
    pub field_form: FieldForm,
    pub temperature: f64,
    pub total_mass: f64,
    pub initial: InitialDataSpec,
    pub tau_law: TauLaw,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| VfpError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VfpError::io(path, "reading", e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            VfpError::Config(msg) => VfpError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| VfpError::Config(e.to_string()))
    }

    /// Applies `section.key=value` overrides. Values are read as TOML
    /// literals, falling back to a bare string; an empty value removes the key.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| VfpError::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| VfpError::Config(format!("override `{item}` is not of the form section.key=value")))?;
            let (section, key) = path
                .trim()
                .split_once('.')
                .ok_or_else(|| VfpError::Config(format!("override key `{path}` must be section.key")))?;
            let raw = raw.trim();
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) if raw.is_empty() => {
                    t.remove(key);
                }
                toml::Value::Table(t) => {
                    t.insert(key.to_string(), parse_literal(raw));
                }
                _ => return Err(VfpError::Config(format!("`{section}` is not a section"))),
            }
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| VfpError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(VfpError::Config(msg));
        if !(self.mesh.b > self.mesh.a) {
            return bad(format!("mesh needs a < b, got a={} b={}", self.mesh.a, self.mesh.b));
        }
        if self.mesh.n_cells < 2 {
            return bad("mesh.n_cells must be at least 2".into());
        }
        if self.run.epsilon.is_empty() {
            return bad("run.epsilon must list at least one value".into());
        }
        if let Some(e) = self.run.epsilon.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("run.epsilon values must be positive, got {e}"));
        }
        let mut sorted = self.run.epsilon.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("run.epsilon lists a value twice".into());
        }
        if self.run.diag_every == 0 {
            return bad("run.diag_every must be at least 1".into());
        }
        if !(self.run.plateau_end >= 0.0) {
            return bad("run.plateau_end must be nonnegative".into());
        }
        if self.scheme.n_modes == 0 {
            return bad("scheme.n_modes must be at least 1".into());
        }
        if !(self.scheme.dt > 0.0 && self.scheme.dt.is_finite()) {
            return bad(format!("scheme.dt must be positive, got {}", self.scheme.dt));
        }
        if !(self.equilibrium.temperature > 0.0 && self.equilibrium.temperature.is_finite()) {
            return bad("equilibrium.temperature must be positive".into());
        }
        self.tau_law()?.validate()?;
        self.check_potential_keys()?;
        self.check_initial_keys()
    }

    fn check_potential_keys(&self) -> Result<()> {
        let p = &self.potential;
        let unused = |key: &str| Err(VfpError::Config(format!("potential.{key} is not used by kind {:?}", p.kind)));
        match p.kind {
            PotentialKind::Zero => {
                if p.amplitudes.is_some() || p.modes.is_some() || p.values.is_some() || p.period.is_some() {
                    return unused("amplitudes/modes/values/period");
                }
            }
            PotentialKind::TwoCosine => {
                if p.amplitudes.is_some() || p.modes.is_some() || p.values.is_some() {
                    return unused("amplitudes/modes/values");
                }
            }
            PotentialKind::Cosine => {
                if p.values.is_some() {
                    return unused("values");
                }
                if p.amplitudes.is_none() || p.modes.is_none() {
                    return Err(VfpError::Config("cosine potential needs amplitudes and modes".into()));
                }
            }
            PotentialKind::Table => {
                if p.amplitudes.is_some() || p.modes.is_some() || p.period.is_some() {
                    return unused("amplitudes/modes/period");
                }
                match &p.values {
                    Some(v) if v.len() == self.mesh.n_cells => {}
                    Some(v) => {
                        return Err(VfpError::Config(format!(
                            "potential.values has {} entries for {} cells",
                            v.len(),
                            self.mesh.n_cells
                        )))
                    }
                    None => return Err(VfpError::Config("table potential needs values".into())),
                }
            }
        }
        Ok(())
    }

    fn check_initial_keys(&self) -> Result<()> {
        let i = &self.initial;
        match (i.velocity, i.u0) {
            (InitialVelocity::Maxwellian, Some(_)) => {
                return Err(VfpError::Config("initial.u0 is only used by shifted_maxwellian".into()))
            }
            (InitialVelocity::ShiftedMaxwellian, None) => {
                return Err(VfpError::Config("shifted_maxwellian needs initial.u0".into()))
            }
            _ => {}
        }
        if i.density == DensityKind::Constant && (i.delta.is_some() || i.period.is_some()) {
            return Err(VfpError::Config("constant density takes no delta or period".into()));
        }
        if let Some(t) = i.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(VfpError::Config("initial.temperature must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn tau_law(&self) -> Result<TauLaw> {
        let s = &self.scheme;
        let (law, needs, extra) = match s.tau_law {
            TauKind::Quadratic => (s.tau0.map(|tau0| TauLaw::Quadratic { tau0 }), "tau0", s.beta.or(s.tau)),
            TauKind::Power => (s.beta.map(|beta| TauLaw::Power { beta }), "beta", s.tau0.or(s.tau)),
            TauKind::Fixed => (s.tau.map(|tau| TauLaw::Fixed { tau }), "tau", s.tau0.or(s.beta)),
        };
        if extra.is_some() {
            return Err(VfpError::Config(format!(
                "scheme.tau_law = {:?} takes only scheme.{needs}",
                s.tau_law
            )));
        }
        law.ok_or_else(|| VfpError::Config(format!("scheme.tau_law = {:?} needs scheme.{needs}", s.tau_law)))
    }

    pub fn scheme_for(&self, epsilon: f64) -> Result<SchemeConfig> {
        let mut scheme = SchemeConfig::new(epsilon, self.tau_law()?, self.scheme.dt, self.scheme.n_modes);
        scheme.closure = self.scheme.closure;
        scheme.solver = self.scheme.solver;
        scheme.linear_tol = self.scheme.linear_tol;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let m = &self.mesh;
        Mesh::perturbed(m.a, m.b, m.n_cells, m.perturbation, m.seed)
    }

    pub fn potential_spec(&self) -> PotentialSpec {
        let p = &self.potential;
        let period = p.period.unwrap_or(self.mesh.b - self.mesh.a);
        match p.kind {
            PotentialKind::Zero => PotentialSpec::Zero,
            PotentialKind::TwoCosine => PotentialSpec::two_cosine(period),
            PotentialKind::Cosine => PotentialSpec::Cosine {
                amplitudes: p.amplitudes.clone().unwrap_or_default(),
                modes: p.modes.clone().unwrap_or_default(),
                period,
            },
            PotentialKind::Table => PotentialSpec::Table {
                values: p.values.clone().unwrap_or_default(),
            },
        }
    }

    pub fn initial_spec(&self) -> InitialDataSpec {
        let i = &self.initial;
        let density = match i.density {
            DensityKind::Constant => DensityProfile::Constant(i.mean),
            DensityKind::Cosine => DensityProfile::Cosine {
                mean: i.mean,
                delta: i.delta.unwrap_or(0.0),
                period: i.period.unwrap_or(self.mesh.b - self.mesh.a),
            },
        };
        let kind = match i.velocity {
            InitialVelocity::Maxwellian => InitialKind::MaxwellianCentered,
            InitialVelocity::ShiftedMaxwellian => InitialKind::MaxwellianShifted { u0: i.u0.unwrap_or(0.0) },
        };
        InitialDataSpec {
            kind,
            density,
            temperature: i.temperature,
        }
    }

    /// Builds the mesh and samples and settles the total mass.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        self.validate()?;
        let mesh = self.mesh()?;
        let phi = self.potential_spec().sample(&mesh)?;
        let initial = self.initial_spec();
        let initial_mass = initial.discrete_mass(&mesh)?;
        let total_mass = match self.equilibrium.total_mass {
            None => initial_mass,
            Some(m) if (m - initial_mass).abs() <= MASS_MATCH_TOL * initial_mass.abs() => m,
            Some(m) => {
                return Err(VfpError::Config(format!(
                    "equilibrium.total_mass = {m} differs from the initial mass {initial_mass}"
                )))
            }
        };
        Ok(ResolvedConfig {
            mesh,
            phi,
            field_form: self.potential.field_form,
            temperature: self.equilibrium.temperature,
            total_mass,
            initial,
            tau_law: self.tau_law()?,
        })
    }

    /// `tau_bar0 = max tau(eps) / eps` over the configured epsilons.
    pub fn tau_bar0(&self) -> Result<f64> {
        Ok(self.tau_law()?.tau_bar0(&self.run.epsilon))
    }

    pub fn final_time(&self) -> f64 {
        self.run.n_steps as f64 * self.scheme.dt
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 2] = ["test1", "test2"];

/// The reference experiments: centered (`test1`) or shifted (`test2`)
/// Maxwellian with a cosine density modulation, two-cosine potential,
/// quadratic relaxation law.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (velocity, u0, t_final) = match name {
        "test1" => (InitialVelocity::Maxwellian, None, 20.0),
        "test2" => (InitialVelocity::ShiftedMaxwellian, Some(1.0), 30.0),
        other => {
            return Err(VfpError::Config(format!(
                "unknown preset `{other}`, expected one of {PRESETS:?}"
            )))
        }
    };
    let dt = 1e-3;
    Ok(ExperimentConfig {
        mesh: MeshSection {
            a: 0.0,
            b: 10.0,
            n_cells: 64,
            perturbation: 0.0,
            seed: 0,
        },
        potential: PotentialSection {
            kind: PotentialKind::TwoCosine,
            period: None,
            amplitudes: None,
            modes: None,
            values: None,
            field_form: FieldForm::SqrtRho,
        },
        equilibrium: EquilibriumSection::default(),
        initial: InitialSection {
            velocity,
            u0,
            temperature: None,
            density: DensityKind::Cosine,
            mean: 1.0,
            delta: Some(0.5),
            period: None,
        },
        scheme: SchemeSection {
            tau_law: TauKind::Quadratic,
            tau0: Some(5.0),
            beta: None,
            tau: None,
            dt,
            n_modes: 200,
            closure: Closure::Truncate,
            solver: LinearSolver::Auto,
            linear_tol: 1e-12,
        },
        run: RunSection {
            epsilon: vec![1.0, 0.5, 0.2, 0.1, 1e-2, 1e-3],
            n_steps: (t_final / dt).round() as usize,
            diag_every: 10,
            attach_limit: true,
            output: None,
            checkpoint_every: 0,
            layer_steps: default_layer_steps(),
            plateau_end: default_plateau_end(),
        },
    })
}
