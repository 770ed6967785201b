//! Constrained weighted Poisson problem `A* A u = g`, `sum dx_j u_j sqrt(rho_inf_j) = 0`,
//! and the discrete H^-1 norm built on it.
//!
//! Everything is solved in the orthonormal coordinates `y = sqrt(dx) u`, where
//! `A*` becomes the transpose and the normal operator is symmetric.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, LU};

use crate::equilibrium::EquilibriumField;
use crate::error::{Result, VfpError};
use crate::linalg::right_svd;
use crate::mesh::Mesh;
use crate::operators::{discrete_poincare, OperatorKind, PoincareReport, TransportOperators, DEGENERACY_TOL};

/// Compatibility threshold relative to `||g||`.
pub const COMPAT_TOL: f64 = 1e-8;
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub u: Vec<f64>,
    /// `||A* A u - g_proj||` in the weighted norm.
    pub residual_norm: f64,
    /// `|sum dx_j g_j sqrt(rho_inf_j)|`.
    pub compat_defect: f64,
    pub compatible: bool,
    /// Lagrange multiplier of the constraint; `compat_defect / mass` up to sign.
    pub multiplier: f64,
}

#[derive(Debug)]
pub struct EllipticSolver {
    dx: Vec<f64>,
    sqrt_dx: Vec<f64>,
    sqrt_rho: Vec<f64>,
    /// `A` in weighted coordinates.
    a_w: DMatrix<f64>,
    /// `A* A` in weighted coordinates (five-point stencil after composition).
    normal: DMatrix<f64>,
    /// `sqrt(dx) * sqrt(rho_inf)`, the kernel direction in weighted coordinates.
    w: DVector<f64>,
    poincare: PoincareReport,
    bordered: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// Pseudo-inverse of the normal operator and the projector onto its range.
    pinv: OnceLock<(DMatrix<f64>, DMatrix<f64>)>,
    tol: f64,
}

impl EllipticSolver {
    pub fn new(mesh: &Mesh, field: &EquilibriumField, ops: &TransportOperators) -> Result<Self> {
        Self::with_tol(mesh, field, ops, DEFAULT_TOL)
    }

    pub fn with_tol(mesh: &Mesh, field: &EquilibriumField, ops: &TransportOperators, tol: f64) -> Result<Self> {
        let n = mesh.n_cells();
        if field.n_cells() != n || ops.n_cells() != n {
            return Err(VfpError::shape(format!("{n} cells"), format!("{} / {}", field.n_cells(), ops.n_cells())));
        }
        if !(tol > 0.0) {
            return Err(VfpError::invalid("elliptic tolerance must be positive"));
        }
        let dx = mesh.dx().to_vec();
        let sqrt_dx: Vec<f64> = dx.iter().map(|d| d.sqrt()).collect();
        let sqrt_rho = field.sqrt_rho_inf().to_vec();
        let a_w = ops.weighted_dense(OperatorKind::A);
        let a_star_w = ops.weighted_dense(OperatorKind::AStar);
        let normal = &a_star_w * &a_w;
        let w = DVector::from_iterator(n, sqrt_dx.iter().zip(&sqrt_rho).map(|(a, b)| a * b));
        let poincare = discrete_poincare(ops, field);

        let bordered = if poincare.degenerate {
            None
        } else {
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((0, 0), (n, n)).copy_from(&normal);
            for i in 0..n {
                m[(i, n)] = w[i];
                m[(n, i)] = w[i];
            }
            Some(m.lu())
        };
        Ok(EllipticSolver {
            dx,
            sqrt_dx,
            sqrt_rho,
            a_w,
            normal,
            w,
            poincare,
            bordered,
            pinv: OnceLock::new(),
            tol,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.dx.len()
    }

    pub fn poincare(&self) -> &PoincareReport {
        &self.poincare
    }

    pub fn c_d(&self) -> f64 {
        self.poincare.c_d
    }

    /// Raw constant when finite, otherwise the one on the complement of the
    /// numerical kernel.
    pub fn working_c_d(&self) -> f64 {
        self.poincare.working_c_d()
    }

    pub fn is_degenerate(&self) -> bool {
        self.poincare.degenerate
    }

    /// `A* A` in the weighted coordinates `sqrt(dx) u`.
    pub(crate) fn normal_weighted(&self) -> &DMatrix<f64> {
        &self.normal
    }

    pub(crate) fn sqrt_dx(&self) -> &[f64] {
        &self.sqrt_dx
    }

    /// The assembled `A* A` in plain (unweighted) coordinates.
    pub fn normal_operator(&self) -> DMatrix<f64> {
        let n = self.n_cells();
        DMatrix::from_fn(n, n, |i, j| self.normal[(i, j)] * self.sqrt_dx[j] / self.sqrt_dx[i])
    }

    fn to_weighted(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(u.len(), u.iter().zip(&self.sqrt_dx).map(|(a, b)| a * b))
    }

    fn from_weighted(&self, y: &DVector<f64>) -> Vec<f64> {
        y.iter().zip(&self.sqrt_dx).map(|(a, b)| a / b).collect()
    }

    fn check(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.n_cells() {
            return Err(VfpError::shape(self.n_cells(), g.len()));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(VfpError::invalid("non-finite elliptic source"));
        }
        Ok(())
    }

    /// Solves through the bordered system; fails on operators with a kernel
    /// beyond `sqrt(rho_inf)`.
    pub fn solve(&self, g: &[f64]) -> Result<EllipticSolution> {
        self.check(g)?;
        let lu = match &self.bordered {
            Some(lu) => lu,
            None => {
                return Err(VfpError::DegenerateOperator {
                    kernel: self.poincare.kernel.clone().unwrap_or_default(),
                })
            }
        };
        let n = self.n_cells();
        let gw = self.to_weighted(g);
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&gw);
        let mut sol = lu
            .solve(&rhs)
            .ok_or_else(|| VfpError::Factorization("bordered elliptic system is singular".into()))?;
        // One step of iterative refinement against the bordered matrix.
        let mut r = rhs.clone();
        let y = sol.rows(0, n).into_owned();
        let mu = sol[n];
        let ky = &self.normal * &y;
        for i in 0..n {
            r[i] -= ky[i] + mu * self.w[i];
        }
        r[n] -= self.w.dot(&y);
        if let Some(corr) = lu.solve(&r) {
            sol += corr;
        }
        let y = sol.rows(0, n).into_owned();
        let wn2 = self.w.norm_squared();
        let target = &gw - &self.w * (self.w.dot(&gw) / wn2);
        self.finish(&gw, &target, y, sol[n])
    }

    /// Minimum-norm least-squares solution; defined for every operator,
    /// including those with a checkerboard kernel.
    pub fn solve_min_norm(&self, g: &[f64]) -> Result<EllipticSolution> {
        self.check(g)?;
        let pinv = self.pinv.get_or_init(|| {
            let svd = right_svd(&self.a_w);
            let smax = svd.sigma.iter().copied().fold(0.0, f64::max);
            let kept: Vec<usize> = (0..svd.sigma.len()).filter(|&i| svd.sigma[i] > DEGENERACY_TOL * smax).collect();
            let v = svd.v.select_columns(&kept);
            let mut scaled = v.clone();
            for (c, &i) in kept.iter().enumerate() {
                scaled.column_mut(c).scale_mut(svd.sigma[i].powi(-2));
            }
            (&scaled * v.transpose(), &v * v.transpose())
        });
        let gw = self.to_weighted(g);
        let y = &pinv.0 * &gw;
        let mu = self.w.dot(&gw) / self.w.norm_squared();
        // Least squares: the residual is measured against the part of g in
        // the range of the operator.
        let target = &pinv.1 * &gw;
        self.finish(&gw, &target, y, mu)
    }

    fn finish(
        &self,
        gw: &DVector<f64>,
        target: &DVector<f64>,
        y: DVector<f64>,
        multiplier: f64,
    ) -> Result<EllipticSolution> {
        let compat = self.w.dot(gw);
        let residual_norm = (&self.normal * &y - target).norm();
        let g_norm = gw.norm();
        let scale = self.normal.amax() * y.norm() + g_norm;
        if residual_norm > self.tol * scale.max(f64::MIN_POSITIVE) * (self.n_cells() as f64) {
            return Err(VfpError::NotConverged {
                residual: residual_norm,
                iterations: 1,
            });
        }
        let compat_defect = compat.abs();
        let u = self.from_weighted(&y);
        Ok(EllipticSolution {
            u,
            residual_norm,
            compat_defect,
            compatible: compat_defect <= COMPAT_TOL * g_norm,
            multiplier,
        })
    }

    /// `||A u||` for the strict solution.
    pub fn h_minus1_norm(&self, g: &[f64]) -> Result<f64> {
        let sol = self.solve(g)?;
        Ok(self.energy(&sol.u))
    }

    /// `||A u||` for the minimum-norm solution.
    pub fn h_minus1_norm_min_norm(&self, g: &[f64]) -> Result<f64> {
        let sol = self.solve_min_norm(g)?;
        Ok(self.energy(&sol.u))
    }

    /// `||A u||` in the weighted norm.
    pub fn energy(&self, u: &[f64]) -> f64 {
        (&self.a_w * self.to_weighted(u)).norm()
    }

    /// `A u` in plain coordinates.
    pub fn apply_a(&self, u: &[f64]) -> Vec<f64> {
        self.from_weighted(&(&self.a_w * self.to_weighted(u)))
    }

    /// `sum dx_j u_j sqrt(rho_inf_j)`.
    pub fn constraint(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.dx).zip(&self.sqrt_rho).map(|((u, d), s)| u * d * s).sum()
    }
}
