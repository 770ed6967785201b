//! Implicit Euler for the coupled Hermite / finite-volume system.
//!
//! Row `k` of `(I + dt L) D^{n+1} = D^n` reads
//! `d_k D_k + c_k A D_{k-1} - c_{k+1} A* D_{k+1} = D_k^n` with
//! `d_k = 1 + dt k / tau`, `c_k = dt sqrt(k) / eps`; the coupling to mode
//! `N_H` is dropped. The operator is factored once per configuration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VfpError};
use crate::hermite::CoefficientField;
use crate::operators::{OperatorKind, StencilMatrix, TransportOperators};

/// Relaxation time as a function of the scaling parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauLaw {
    /// `tau = tau0 eps^2` (diffusive regime).
    Quadratic { tau0: f64 },
    /// `tau = eps^beta`, `1 <= beta < 2` (intermediate regime).
    Power { beta: f64 },
    /// `tau = tau_c` independent of `eps`.
    Fixed { tau: f64 },
}

impl TauLaw {
    pub fn tau(&self, epsilon: f64) -> f64 {
        match *self {
            TauLaw::Quadratic { tau0 } => tau0 * epsilon * epsilon,
            TauLaw::Power { beta } => epsilon.powf(beta),
            TauLaw::Fixed { tau } => tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TauLaw::Quadratic { tau0 } if !(tau0 > 0.0 && tau0.is_finite()) => {
                Err(VfpError::invalid(format!("tau0 must be positive, got {tau0}")))
            }
            TauLaw::Power { beta } if !(1.0..2.0).contains(&beta) => {
                Err(VfpError::invalid(format!("power law exponent must lie in [1, 2), got {beta}")))
            }
            TauLaw::Fixed { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(VfpError::invalid(format!("fixed relaxation time must be positive, got {tau}")))
            }
            _ => Ok(()),
        }
    }

    /// Diffusion coefficient of the limit equation, defined for the
    /// quadratic law only.
    pub fn tau0(&self) -> Option<f64> {
        match *self {
            TauLaw::Quadratic { tau0 } => Some(tau0),
            _ => None,
        }
    }

    /// `sup tau(eps) / eps` over the given values.
    pub fn tau_bar0(&self, epsilons: &[f64]) -> f64 {
        epsilons.iter().map(|&e| self.tau(e) / e).fold(0.0, f64::max)
    }

    pub fn name(&self) -> &'static str {
        match self {
            TauLaw::Quadratic { .. } => "quadratic",
            TauLaw::Power { .. } => "power",
            TauLaw::Fixed { .. } => "fixed",
        }
    }
}

/// Treatment of the last retained Hermite equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// Drop the coupling to mode `N_H` (zero-flux spectral truncation).
    #[default]
    Truncate,
}

impl Closure {
    pub fn name(&self) -> &'static str {
        "truncate"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Block elimination up to the size limits, Krylov above.
    #[default]
    Auto,
    Direct,
    Krylov,
}

/// Largest `N_H * N_x` handled by block elimination in `Auto` mode.
pub const DIRECT_DIM_LIMIT: usize = 200_000;
/// Largest number of stored dense-block entries (`N_H * N_x^2`) in `Auto` mode.
pub const DIRECT_STORAGE_LIMIT: usize = 25_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub epsilon: f64,
    pub tau_law: TauLaw,
    pub dt: f64,
    pub n_modes: usize,
    pub closure: Closure,
    /// Relative residual tolerance of the Krylov solver.
    pub linear_tol: f64,
    pub solver: LinearSolver,
}

impl SchemeConfig {
    pub fn new(epsilon: f64, tau_law: TauLaw, dt: f64, n_modes: usize) -> Self {
        SchemeConfig {
            epsilon,
            tau_law,
            dt,
            n_modes,
            closure: Closure::Truncate,
            linear_tol: 1e-12,
            solver: LinearSolver::Auto,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau_law.tau(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(VfpError::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(VfpError::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if self.n_modes == 0 {
            return Err(VfpError::invalid("need at least one Hermite mode"));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return Err(VfpError::invalid("linear tolerance must lie in (0, 1)"));
        }
        self.tau_law.validate()
    }
}

/// Block elimination from the last mode upwards, in the coordinates
/// `sqrt(dx) u` where every Schur complement is symmetric positive definite.
#[derive(Debug, Clone)]
struct BlockElimination {
    /// Inverses of the Schur complements `S_k`.
    inv: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
enum Solver {
    Direct(BlockElimination),
    Krylov { restart: usize, max_iter: usize },
}

/// The time-independent operator `I + dt L` together with its factorization.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    config: SchemeConfig,
    n_cells: usize,
    a: StencilMatrix,
    a_star: StencilMatrix,
    /// Weighted `A`; its transpose is the weighted `A*`.
    a_w: StencilMatrix,
    a_star_w: StencilMatrix,
    sqrt_dx: Vec<f64>,
    diag: Vec<f64>,
    /// `c_k` for `k = 0..n_modes` (`c_0 = 0`).
    coupling: Vec<f64>,
    solver: Solver,
}

impl GlobalSystem {
    pub fn assemble(ops: &TransportOperators, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let n = ops.n_cells();
        let k_max = config.n_modes;
        let tau = config.tau();
        let diag: Vec<f64> = (0..k_max).map(|k| 1.0 + config.dt * k as f64 / tau).collect();
        let coupling: Vec<f64> = (0..k_max).map(|k| config.dt * (k as f64).sqrt() / config.epsilon).collect();
        let sqrt_dx: Vec<f64> = ops.dx().iter().map(|d| d.sqrt()).collect();
        let a = ops.matrix(OperatorKind::A).clone();
        let a_star = ops.matrix(OperatorKind::AStar).clone();
        let a_w = a.similarity(&sqrt_dx);
        let a_star_w = a_star.similarity(&sqrt_dx);

        let dim = k_max * n;
        let direct = match config.solver {
            LinearSolver::Direct => true,
            LinearSolver::Krylov => false,
            LinearSolver::Auto => dim <= DIRECT_DIM_LIMIT && k_max * n * n <= DIRECT_STORAGE_LIMIT,
        };
        let solver = if direct {
            Solver::Direct(Self::eliminate(ops, &diag, &coupling)?)
        } else {
            Solver::Krylov {
                restart: 60,
                max_iter: 20_000,
            }
        };
        Ok(GlobalSystem {
            config: config.clone(),
            n_cells: n,
            a,
            a_star,
            a_w,
            a_star_w,
            sqrt_dx,
            diag,
            coupling,
            solver,
        })
    }

    fn eliminate(ops: &TransportOperators, diag: &[f64], coupling: &[f64]) -> Result<BlockElimination> {
        let n = ops.n_cells();
        let k_max = diag.len();
        let a_w = ops.weighted_dense(OperatorKind::A);
        let a_w_t = a_w.transpose();
        let mut inv = vec![DMatrix::zeros(0, 0); k_max];
        let mut next: Option<DMatrix<f64>> = None;
        for k in (0..k_max).rev() {
            let mut s = DMatrix::identity(n, n) * diag[k];
            if let Some(s_inv) = &next {
                let c = coupling[k + 1];
                let t = s_inv * &a_w;
                s += (&a_w_t * t) * (c * c);
                s = (&s + s.transpose()) * 0.5;
            }
            let chol = s.cholesky().ok_or_else(|| {
                VfpError::Factorization(format!("Schur complement of mode {k} is not positive definite"))
            })?;
            let s_inv = chol.inverse();
            next = Some(s_inv.clone());
            inv[k] = s_inv;
        }
        Ok(BlockElimination { inv })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn n_modes(&self) -> usize {
        self.config.n_modes
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dimension(&self) -> usize {
        self.n_modes() * self.n_cells
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.solver, Solver::Direct(_))
    }

    fn check(&self, d: &CoefficientField) -> Result<()> {
        if d.n_modes() != self.n_modes() || d.n_cells() != self.n_cells {
            return Err(VfpError::shape(
                format!("{}x{}", self.n_modes(), self.n_cells),
                format!("{}x{}", d.n_modes(), d.n_cells()),
            ));
        }
        Ok(())
    }

    /// `L D` (transport coupling plus damping, without the identity).
    pub fn apply_l(&self, d: &CoefficientField) -> Result<CoefficientField> {
        self.check(d)?;
        let k_max = self.n_modes();
        let mut out = CoefficientField::zeros(k_max, self.n_cells);
        let eps = self.config.epsilon;
        let tau = self.config.tau();
        for k in 0..k_max {
            let row = out.row_mut(k);
            let kk = k as f64;
            if k > 0 {
                self.a.apply_add(kk.sqrt() / eps, d.row(k - 1), row);
                for (o, x) in row.iter_mut().zip(d.row(k)) {
                    *o += kk / tau * x;
                }
            }
            if k + 1 < k_max {
                self.a_star.apply_add(-((k + 1) as f64).sqrt() / eps, d.row(k + 1), row);
            }
        }
        Ok(out)
    }

    /// `(I + dt L) D`.
    pub fn apply(&self, d: &CoefficientField) -> Result<CoefficientField> {
        let mut out = self.apply_l(d)?;
        let dt = self.config.dt;
        for (o, x) in out.as_mut_slice().iter_mut().zip(d.as_slice()) {
            *o = x + dt * *o;
        }
        Ok(out)
    }

    /// Dense `I + dt L` in the mode-major ordering; meant for small oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dimension();
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = CoefficientField::zeros(self.n_modes(), self.n_cells);
        for col in 0..dim {
            e.as_mut_slice()[col] = 1.0;
            let image = self.apply(&e).expect("shape is consistent");
            m.column_mut(col).copy_from_slice(image.as_slice());
            e.as_mut_slice()[col] = 0.0;
        }
        m
    }

    /// One implicit Euler step.
    pub fn step(&self, d: &CoefficientField) -> Result<CoefficientField> {
        self.check(d)?;
        match &self.solver {
            Solver::Direct(be) => Ok(self.solve_direct(be, d)),
            Solver::Krylov { restart, max_iter } => self.solve_krylov(d, *restart, *max_iter),
        }
    }

    fn solve_direct(&self, be: &BlockElimination, b: &CoefficientField) -> CoefficientField {
        let n = self.n_cells;
        let k_max = self.n_modes();
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(k_max);
        let mut z: Vec<DVector<f64>> = vec![DVector::zeros(n); k_max];
        for k in 0..k_max {
            y.push(DVector::from_iterator(n, b.row(k).iter().zip(&self.sqrt_dx).map(|(x, s)| x * s)));
        }
        let mut tmp = vec![0.0; n];
        for k in (0..k_max).rev() {
            if k + 1 < k_max {
                // y_k += c_{k+1} A*_w z_{k+1}
                self.a_star_w.apply_into(z[k + 1].as_slice(), &mut tmp);
                let c = self.coupling[k + 1];
                for (yy, t) in y[k].iter_mut().zip(&tmp) {
                    *yy += c * t;
                }
            }
            z[k].gemv(1.0, &be.inv[k], &y[k], 0.0);
        }
        let mut out = CoefficientField::zeros(k_max, n);
        let mut x_prev = z[0].clone();
        let mut rhs = DVector::zeros(n);
        for k in 0..k_max {
            if k > 0 {
                self.a_w.apply_into(x_prev.as_slice(), &mut tmp);
                let c = self.coupling[k];
                for ((r, yy), t) in rhs.iter_mut().zip(y[k].iter()).zip(&tmp) {
                    *r = yy - c * t;
                }
                x_prev.gemv(1.0, &be.inv[k], &rhs, 0.0);
            }
            for ((o, x), s) in out.row_mut(k).iter_mut().zip(x_prev.iter()).zip(&self.sqrt_dx) {
                *o = x / s;
            }
        }
        out
    }

    /// Restarted GMRES with right preconditioning by the mode damping.
    fn solve_krylov(&self, b: &CoefficientField, restart: usize, max_iter: usize) -> Result<CoefficientField> {
        let k_max = self.n_modes();
        let n = self.n_cells;
        let dim = self.dimension();
        let tol = self.config.linear_tol;
        let precond = |v: &[f64]| -> CoefficientField {
            let mut out = CoefficientField::from_flat(k_max, n, v.to_vec()).expect("consistent shape");
            for k in 0..k_max {
                let d = self.diag[k];
                out.row_mut(k).iter_mut().for_each(|x| *x /= d);
            }
            out
        };
        let bnorm = norm(b.as_slice());
        if bnorm == 0.0 {
            return Ok(CoefficientField::zeros(k_max, n));
        }
        // Initial guess: preconditioned right-hand side.
        let mut x = precond(b.as_slice());
        let mut iterations = 0;
        loop {
            let ax = self.apply(&x)?;
            let r: Vec<f64> = b.as_slice().iter().zip(ax.as_slice()).map(|(p, q)| p - q).collect();
            let beta = norm(&r);
            if beta <= tol * bnorm {
                return Ok(x);
            }
            if iterations >= max_iter {
                return Err(VfpError::NotConverged {
                    residual: beta / bnorm,
                    iterations,
                });
            }
            let m = restart.min(dim);
            let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
            let mut h = DMatrix::<f64>::zeros(m + 1, m);
            let mut cs = vec![0.0; m];
            let mut sn = vec![0.0; m];
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut used = 0;
            for j in 0..m {
                iterations += 1;
                let mut w = self.apply(&precond(&basis[j]))?.into_vec();
                for i in 0..=j {
                    let hij = dot(&w, &basis[i]);
                    h[(i, j)] = hij;
                    w.iter_mut().zip(&basis[i]).for_each(|(a, b)| *a -= hij * b);
                }
                let hn = norm(&w);
                h[(j + 1, j)] = hn;
                for i in 0..j {
                    let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                    h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                    h[(i, j)] = t;
                }
                let rho = h[(j, j)].hypot(h[(j + 1, j)]);
                cs[j] = h[(j, j)] / rho;
                sn[j] = h[(j + 1, j)] / rho;
                h[(j, j)] = rho;
                h[(j + 1, j)] = 0.0;
                g[j + 1] = -sn[j] * g[j];
                g[j] *= cs[j];
                used = j + 1;
                if g[j + 1].abs() <= 0.1 * tol * bnorm || hn == 0.0 || iterations >= max_iter {
                    break;
                }
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            let mut coef = vec![0.0; used];
            for i in (0..used).rev() {
                let mut s = g[i];
                for l in (i + 1)..used {
                    s -= h[(i, l)] * coef[l];
                }
                coef[i] = s / h[(i, i)];
            }
            let mut update = vec![0.0; dim];
            for (c, v) in coef.iter().zip(&basis) {
                update.iter_mut().zip(v).for_each(|(u, b)| *u += c * b);
            }
            let update = precond(&update);
            x.as_mut_slice().iter_mut().zip(update.as_slice()).for_each(|(a, b)| *a += b);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Advances `n_steps` implicit Euler steps. `observe(n, D^n)` is called after
/// every step whose index is a multiple of `diag_every`, and after the last.
pub fn run<F>(
    system: &GlobalSystem,
    d0: &CoefficientField,
    n_steps: usize,
    diag_every: usize,
    mut observe: F,
) -> Result<CoefficientField>
where
    F: FnMut(usize, &CoefficientField) -> Result<()>,
{
    if diag_every == 0 {
        return Err(VfpError::invalid("diagnostic cadence must be at least 1"));
    }
    system.check(d0)?;
    let mut d = d0.clone();
    for n in 1..=n_steps {
        d = system.step(&d)?;
        if n % diag_every == 0 || n == n_steps {
            observe(n, &d)?;
        }
    }
    Ok(d)
}
