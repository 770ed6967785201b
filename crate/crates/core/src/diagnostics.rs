//! Norms, modified entropies and decay-rate fits along trajectories.

use std::ops::Range;

use crate::elliptic::EllipticSolver;
use crate::equilibrium::EquilibriumField;
use crate::error::{Result, VfpError};
use crate::hermite::CoefficientField;
use crate::limit::{stationary_state, LimitState, LimitStepper};
use crate::mesh::Mesh;
use crate::operators::TransportOperators;

/// `sqrt(sum_k sum_j dx_j (D_{k,j} - ref_{k,j})^2)`.
pub fn weighted_l2(mesh: &Mesh, d: &CoefficientField, reference: &CoefficientField) -> Result<f64> {
    d.same_shape(reference)?;
    if d.n_cells() != mesh.n_cells() {
        return Err(VfpError::shape(mesh.n_cells(), d.n_cells()));
    }
    Ok(d.rows()
        .zip(reference.rows())
        .map(|(a, b)| mesh.distance(a, b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// `||D_perp||`: every mode but the zeroth.
pub fn dperp_norm(mesh: &Mesh, d: &CoefficientField) -> f64 {
    d.rows().skip(1).map(|r| mesh.norm(r).powi(2)).sum::<f64>().sqrt()
}

/// `||B_h D||` with `B_0 = A_h` and `B_k = A_h*` for `k >= 1`.
pub fn b_norm(mesh: &Mesh, ops: &TransportOperators, d: &CoefficientField) -> f64 {
    d.rows()
        .enumerate()
        .map(|(k, r)| mesh.norm(&ops.apply_b(k, r)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Weights of the cross terms in the modified entropies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyParams {
    pub alpha0: f64,
    pub alpha1: f64,
}

impl EntropyParams {
    /// Largest weights allowed by the equivalence and dissipation bounds for
    /// the given `tau_bar0 = sup tau / eps` and Poincare constant.
    pub fn from_constants(tau_bar0: f64, c_d: f64) -> Self {
        let alpha0 = (1.0 / (4.0 * tau_bar0 * c_d)).min(1.0 / (tau_bar0 * (1.0 + c_d * c_d)));
        let alpha1 = (1.0 / (2.0 * tau_bar0))
            .min(1.0 / (2.0 + 3.0 * tau_bar0 * tau_bar0))
            .min(1.0 / (tau_bar0 * (1.0 + c_d * c_d)));
        EntropyParams { alpha0, alpha1 }
    }

    pub fn zero() -> Self {
        EntropyParams { alpha0: 0.0, alpha1: 0.0 }
    }
}

/// Everything needed to evaluate the functionals for one `(field, mesh, eps)`.
#[derive(Debug, Clone, Copy)]
pub struct EntropyContext<'a> {
    pub mesh: &'a Mesh,
    pub field: &'a EquilibriumField,
    pub ops: &'a TransportOperators,
    pub elliptic: &'a EllipticSolver,
    pub params: EntropyParams,
    /// `tau(eps) / eps`.
    pub tau_over_eps: f64,
}

fn mode(d: &CoefficientField, k: usize) -> Vec<f64> {
    if k < d.n_modes() {
        d.row(k).to_vec()
    } else {
        vec![0.0; d.n_cells()]
    }
}

impl<'a> EntropyContext<'a> {
    fn l2_dist(&self, d: &CoefficientField) -> Result<f64> {
        weighted_l2(self.mesh, d, &stationary_state(self.field, d.n_modes()))
    }

    /// `1/2 ||D - D_inf||^2 + alpha0 (tau/eps) <A* D_1, u>`, `A* A u = D_0 - sqrt(rho_inf)`.
    pub fn entropy_h0(&self, d: &CoefficientField) -> Result<f64> {
        let dist = self.l2_dist(d)?;
        let mut h = 0.5 * dist * dist;
        if self.params.alpha0 != 0.0 && d.n_modes() > 1 {
            let g: Vec<f64> = d.row(0).iter().zip(self.field.sqrt_rho_inf()).map(|(a, b)| a - b).collect();
            let u = self.elliptic.solve_min_norm(&g)?.u;
            let a_star_d1 = self.ops.apply_a_star(d.row(1));
            h += self.params.alpha0 * self.tau_over_eps * self.mesh.inner(&a_star_d1, &u);
        }
        Ok(h)
    }

    /// `1/2 ||B_h D||^2 + alpha1 (tau/eps) <A D_0, D_1>`.
    pub fn entropy_h1(&self, d: &CoefficientField) -> f64 {
        let b = b_norm(self.mesh, self.ops, d);
        let d1 = mode(d, 1);
        let cross = self.mesh.inner(&self.ops.apply_a(d.row(0)), &d1);
        0.5 * b * b + self.params.alpha1 * self.tau_over_eps * cross
    }

    /// `1/2 ||A v||^2` with `A* A v = D_0 + (tau/eps) A* D_1 - Dbar_0`.
    pub fn functional_e(&self, d: &CoefficientField, d0_bar: &[f64]) -> Result<f64> {
        self.mesh.check_len(d0_bar)?;
        let a_star_d1 = self.ops.apply_a_star(&mode(d, 1));
        let g: Vec<f64> = d
            .row(0)
            .iter()
            .zip(&a_star_d1)
            .zip(d0_bar)
            .map(|((a, b), c)| a + self.tau_over_eps * b - c)
            .collect();
        let v = self.elliptic.solve_min_norm(&g)?.u;
        let e = self.elliptic.energy(&v);
        Ok(0.5 * e * e)
    }

    /// `||D_0 - Dbar_0||_{H^-1}`.
    pub fn hminus1_macro(&self, d: &CoefficientField, d0_bar: &[f64]) -> Result<f64> {
        self.mesh.check_len(d0_bar)?;
        let g: Vec<f64> = d.row(0).iter().zip(d0_bar).map(|(a, b)| a - b).collect();
        self.elliptic.h_minus1_norm_min_norm(&g)
    }
}

/// One row of diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub l2_dist: f64,
    pub rho_dist: f64,
    pub dperp: f64,
    pub d1_norm: f64,
    pub b_norm: f64,
    pub hminus1_macro: Option<f64>,
    pub mass: f64,
    pub h0: f64,
    pub h1: f64,
    pub efun: Option<f64>,
    pub alpha0: f64,
    pub alpha1: f64,
}

/// Reference trajectory that macroscopic distances are measured against.
#[derive(Debug, Clone)]
pub enum LimitReference {
    None,
    /// Drift-diffusion scheme advanced in lockstep with the kinetic run.
    Evolving {
        stepper: LimitStepper,
        state: LimitState,
        step: usize,
    },
    /// The stationary density `sqrt(rho_inf)`.
    Stationary,
}

/// Builds records along a trajectory, advancing the attached limit
/// reference to the requested step.
#[derive(Debug, Clone)]
pub struct DiagnosticsCollector<'a> {
    ctx: EntropyContext<'a>,
    dt: f64,
    limit: LimitReference,
}

impl<'a> DiagnosticsCollector<'a> {
    pub fn new(ctx: EntropyContext<'a>, dt: f64, limit: LimitReference) -> Self {
        DiagnosticsCollector { ctx, dt, limit }
    }

    pub fn context(&self) -> &EntropyContext<'a> {
        &self.ctx
    }

    fn reference_at(&mut self, step: usize) -> Result<Option<Vec<f64>>> {
        match &mut self.limit {
            LimitReference::None => Ok(None),
            LimitReference::Stationary => Ok(Some(self.ctx.field.sqrt_rho_inf().to_vec())),
            LimitReference::Evolving { stepper, state, step: at } => {
                if step < *at {
                    return Err(VfpError::invalid(format!(
                        "limit reference already at step {at}, cannot rewind to {step}"
                    )));
                }
                while *at < step {
                    *state = stepper.step(state)?;
                    *at += 1;
                }
                Ok(Some(state.d0_bar.clone()))
            }
        }
    }

    pub fn record(&mut self, step: usize, d: &CoefficientField) -> Result<DiagnosticsRecord> {
        let ctx = self.ctx;
        let mesh = ctx.mesh;
        let s = ctx.field.sqrt_rho_inf();
        let rho_dist = mesh.distance(d.row(0), s);
        let dperp = dperp_norm(mesh, d);
        let reference = self.reference_at(step)?;
        let (hminus1_macro, efun) = match &reference {
            Some(r) => (Some(ctx.hminus1_macro(d, r)?), Some(ctx.functional_e(d, r)?)),
            None => (None, None),
        };
        Ok(DiagnosticsRecord {
            step,
            t: step as f64 * self.dt,
            l2_dist: (rho_dist * rho_dist + dperp * dperp).sqrt(),
            rho_dist,
            dperp,
            d1_norm: mesh.norm(&mode(d, 1)),
            b_norm: b_norm(mesh, ctx.ops, d),
            hminus1_macro,
            mass: ctx.field.weighted_mass(mesh, d.row(0)),
            h0: ctx.entropy_h0(d)?,
            h1: ctx.entropy_h1(d),
            efun,
            alpha0: ctx.params.alpha0,
            alpha1: ctx.params.alpha1,
        })
    }
}

/// Least-squares fit of `log(value) = c - rate t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Fits over `series[window]`, truncating the window at the first
/// nonpositive value.
pub fn fit_decay_rate(series: &[(f64, f64)], window: Range<usize>) -> Result<DecayFit> {
    let end = window.end.min(series.len());
    if window.start >= end {
        return Err(VfpError::invalid("empty fit window"));
    }
    let pts: Vec<(f64, f64)> = series[window.start..end]
        .iter()
        .take_while(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(VfpError::invalid("fewer than two positive values in the fit window"));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(VfpError::invalid("fit window has no time spread"));
    }
    let sty: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sty / stt;
    let syy: f64 = pts.iter().map(|p| (p.1 - ym).powi(2)).sum();
    let sse: f64 = pts.iter().map(|p| (p.1 - ym - slope * (p.0 - tm)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(DecayFit {
        rate: -slope,
        r_squared,
        n_points: pts.len(),
    })
}
