//! Drift-diffusion limit: the stationary state and implicit Euler for
//! `(I + dt tau0 A* A) Dbar^{n+1} = Dbar^n`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::diagnostics::{fit_decay_rate, DecayFit};
use crate::elliptic::EllipticSolver;
use crate::equilibrium::EquilibriumField;
use crate::error::{Result, VfpError};
use crate::hermite::CoefficientField;
use crate::mesh::Mesh;

/// `D_inf`: `sqrt(rho_inf)` in mode 0, zero elsewhere.
pub fn stationary_state(field: &EquilibriumField, n_modes: usize) -> CoefficientField {
    let mut d = CoefficientField::zeros(n_modes.max(1), field.n_cells());
    d.row_mut(0).copy_from_slice(field.sqrt_rho_inf());
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    pub d0_bar: Vec<f64>,
    pub tau0: f64,
}

/// Factor-once stepper reusing the elliptic module's `A* A`.
#[derive(Debug, Clone)]
pub struct LimitStepper {
    chol: Cholesky<f64, Dyn>,
    sqrt_dx: Vec<f64>,
    tau0: f64,
    dt: f64,
}

impl LimitStepper {
    pub fn new(elliptic: &EllipticSolver, tau0: f64, dt: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return Err(VfpError::invalid(format!("tau0 must be positive, got {tau0}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(VfpError::invalid(format!("time step must be positive, got {dt}")));
        }
        let n = elliptic.n_cells();
        let m = DMatrix::identity(n, n) + elliptic.normal_weighted() * (dt * tau0);
        let m = (&m + m.transpose()) * 0.5;
        let chol = m
            .cholesky()
            .ok_or_else(|| VfpError::Factorization("limit operator is not positive definite".into()))?;
        Ok(LimitStepper {
            chol,
            sqrt_dx: elliptic.sqrt_dx().to_vec(),
            tau0,
            dt,
        })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn initial_state(&self, d0_bar: Vec<f64>) -> Result<LimitState> {
        if d0_bar.len() != self.sqrt_dx.len() {
            return Err(VfpError::shape(self.sqrt_dx.len(), d0_bar.len()));
        }
        Ok(LimitState { d0_bar, tau0: self.tau0 })
    }

    pub fn step_values(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.sqrt_dx.len() {
            return Err(VfpError::shape(self.sqrt_dx.len(), u.len()));
        }
        let rhs = DVector::from_iterator(u.len(), u.iter().zip(&self.sqrt_dx).map(|(x, s)| x * s));
        let y = self.chol.solve(&rhs);
        Ok(y.iter().zip(&self.sqrt_dx).map(|(y, s)| y / s).collect())
    }

    pub fn step(&self, state: &LimitState) -> Result<LimitState> {
        Ok(LimitState {
            d0_bar: self.step_values(&state.d0_bar)?,
            tau0: state.tau0,
        })
    }
}

/// Outcome of [`limit_decay_check`].
#[derive(Debug, Clone)]
pub struct LimitDecay {
    /// Measured exponential rate of `||Dbar^n - sqrt(rho_inf)||`; infinite
    /// when the initial error is already at roundoff level.
    pub rate: f64,
    /// `log(1 + 2 tau0 dt / C_d^2) / (2 dt)`.
    pub floor: f64,
    pub fit: Option<DecayFit>,
    pub series: Vec<f64>,
}

impl LimitDecay {
    pub fn satisfies_floor(&self) -> bool {
        self.rate >= self.floor * (1.0 - 1e-9)
    }
}

/// Errors below this multiple of `||sqrt(rho_inf)||` are treated as noise.
pub const NOISE_FLOOR: f64 = 1e-12;

pub fn limit_decay_check(
    stepper: &LimitStepper,
    mesh: &Mesh,
    field: &EquilibriumField,
    d0_bar: &[f64],
    n_steps: usize,
    c_d: f64,
) -> Result<LimitDecay> {
    mesh.check_len(d0_bar)?;
    let s = field.sqrt_rho_inf();
    let scale = mesh.norm(s);
    let floor = (1.0 + 2.0 * stepper.tau0 * stepper.dt / (c_d * c_d)).ln() / (2.0 * stepper.dt);
    let mut u = d0_bar.to_vec();
    let mut series = vec![mesh.distance(&u, s)];
    for _ in 0..n_steps {
        u = stepper.step_values(&u)?;
        series.push(mesh.distance(&u, s));
    }
    let noise = NOISE_FLOOR * scale;
    let usable = series.iter().take_while(|&&e| e > noise).count();
    if usable < 2 {
        return Ok(LimitDecay {
            rate: f64::INFINITY,
            floor,
            fit: None,
            series,
        });
    }
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .map(|(n, &e)| (n as f64 * stepper.dt, e))
        .collect();
    let fit = fit_decay_rate(&points, 0..usable)?;
    Ok(LimitDecay {
        rate: fit.rate,
        floor,
        fit: Some(fit),
        series,
    })
}
