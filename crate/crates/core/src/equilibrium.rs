//! External potential, discrete steady density and discrete electric field.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VfpError};
use crate::mesh::Mesh;

/// Built-in potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    /// `sum_i amplitudes[i] * cos(2 pi modes[i] x / period)`.
    Cosine {
        amplitudes: Vec<f64>,
        modes: Vec<f64>,
        period: f64,
    },
    /// One value per cell center.
    Table { values: Vec<f64> },
}

impl PotentialSpec {
    /// The two-cosine potential of the reference experiments on `[0, L)`.
    pub fn two_cosine(period: f64) -> Self {
        PotentialSpec::Cosine {
            amplitudes: vec![0.1, 0.9],
            modes: vec![1.0, 2.0],
            period,
        }
    }

    pub fn is_flat(&self) -> bool {
        match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Cosine { amplitudes, .. } => amplitudes.iter().all(|&a| a == 0.0),
            PotentialSpec::Table { values } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Samples the potential at the cell centers.
    pub fn sample(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let n = mesh.n_cells();
        let values = match self {
            PotentialSpec::Zero => vec![0.0; n],
            PotentialSpec::Cosine { amplitudes, modes, period } => {
                if amplitudes.len() != modes.len() {
                    return Err(VfpError::invalid(format!(
                        "cosine potential has {} amplitudes but {} modes",
                        amplitudes.len(),
                        modes.len()
                    )));
                }
                if !(*period > 0.0) {
                    return Err(VfpError::invalid(format!("potential period must be positive, got {period}")));
                }
                mesh.x_center()
                    .iter()
                    .map(|&x| {
                        amplitudes
                            .iter()
                            .zip(modes)
                            .map(|(a, m)| a * (2.0 * PI * m * x / period).cos())
                            .sum()
                    })
                    .collect()
            }
            PotentialSpec::Table { values } => {
                if values.len() != n {
                    return Err(VfpError::shape(format!("{n} tabulated potential values"), values.len()));
                }
                values.clone()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VfpError::invalid("potential has non-finite samples"));
        }
        Ok(values)
    }
}

/// Which of the two equivalent discrete field formulas to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldForm {
    /// `E_j = (2 T0 / s_j) (s_{j+1} - s_{j-1}) / (2 dx_j)` with `s = sqrt(rho_inf)`.
    /// Makes `A_h sqrt(rho_inf) = 0` hold to roundoff.
    #[default]
    SqrtRho,
    /// `E_j = -(Phi_{j+1} - Phi_{j-1}) / (2 dx_j)`. Only consistent to O(h^2)
    /// with the steady density; kept for ablation studies.
    PhiDifference,
}

/// Discrete steady state and electric field on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumField {
    temperature: f64,
    phi: Vec<f64>,
    field: Vec<f64>,
    sqrt_rho_inf: Vec<f64>,
    c0: f64,
    total_mass: f64,
    form: FieldForm,
}

impl EquilibriumField {
    pub fn new(phi: Vec<f64>, mesh: &Mesh, temperature: f64, total_mass: f64) -> Result<Self> {
        Self::with_form(phi, mesh, temperature, total_mass, FieldForm::SqrtRho)
    }

    pub fn with_form(
        phi: Vec<f64>,
        mesh: &Mesh,
        temperature: f64,
        total_mass: f64,
        form: FieldForm,
    ) -> Result<Self> {
        mesh.check_len(&phi)?;
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(VfpError::invalid(format!("temperature must be positive, got {temperature}")));
        }
        if !(total_mass > 0.0 && total_mass.is_finite()) {
            return Err(VfpError::invalid(format!("total mass must be positive, got {total_mass}")));
        }
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(VfpError::invalid("potential has non-finite samples"));
        }
        // Shift by the minimum so the Boltzmann factors cannot overflow; the
        // shift cancels in the normalization.
        let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let boltzmann: Vec<f64> = phi.iter().map(|p| (-(p - phi_min) / temperature).exp()).collect();
        let raw_mass: f64 = mesh.dx().iter().zip(&boltzmann).map(|(d, b)| d * b).sum();
        let scale = total_mass / raw_mass;
        let sqrt_rho_inf: Vec<f64> = boltzmann.iter().map(|b| (scale * b).sqrt()).collect();
        let c0 = scale * (phi_min / temperature).exp();

        let dx = mesh.dx();
        let field = (0..mesh.n_cells())
            .map(|j| {
                let (jp, jm) = (mesh.next(j), mesh.prev(j));
                match form {
                    FieldForm::SqrtRho => {
                        let q = (sqrt_rho_inf[jp] - sqrt_rho_inf[jm]) / (2.0 * dx[j]);
                        2.0 * temperature * q / sqrt_rho_inf[j]
                    }
                    FieldForm::PhiDifference => -(phi[jp] - phi[jm]) / (2.0 * dx[j]),
                }
            })
            .collect();

        Ok(EquilibriumField {
            temperature,
            phi,
            field,
            sqrt_rho_inf,
            c0,
            total_mass,
            form,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Discrete electric field `E_j`.
    pub fn field(&self) -> &[f64] {
        &self.field
    }

    pub fn sqrt_rho_inf(&self) -> &[f64] {
        &self.sqrt_rho_inf
    }

    pub fn rho_inf(&self) -> Vec<f64> {
        self.sqrt_rho_inf.iter().map(|s| s * s).collect()
    }

    /// Normalization constant in `rho_inf = c0 exp(-Phi / T0)`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn form(&self) -> FieldForm {
        self.form
    }

    pub fn n_cells(&self) -> usize {
        self.sqrt_rho_inf.len()
    }

    /// `max_j |E_j|`, the discrete stand-in for `||Phi'||_inf`.
    pub fn max_field(&self) -> f64 {
        self.field.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Weighted mass `sum_j dx_j u_j sqrt(rho_inf_j)` of a mode-0 coefficient row.
    pub fn weighted_mass(&self, mesh: &Mesh, u: &[f64]) -> f64 {
        mesh.inner(u, &self.sqrt_rho_inf)
    }
}
