//! Hermite basis in velocity: evaluation, Gauss-Hermite quadrature, projection
//! of initial data and reconstruction of the distribution function.
//!
//! `Psi_k(v) = H_k(v / sqrt(T0)) M(v)` with orthonormal Hermite polynomials
//! `xi H_k = sqrt(k) H_{k-1} + sqrt(k+1) H_{k+1}` and the Maxwellian
//! `M(v) = exp(-v^2 / 2T0) / sqrt(2 pi T0)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::equilibrium::EquilibriumField;
use crate::error::{Result, VfpError};
use crate::mesh::Mesh;

/// Hermite coefficients `D_{k,j}` stored mode-major (`index = k * n_cells + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    n_modes: usize,
    n_cells: usize,
    data: Vec<f64>,
}

impl CoefficientField {
    pub fn zeros(n_modes: usize, n_cells: usize) -> Self {
        CoefficientField {
            n_modes,
            n_cells,
            data: vec![0.0; n_modes * n_cells],
        }
    }

    pub fn from_flat(n_modes: usize, n_cells: usize, data: Vec<f64>) -> Result<Self> {
        if n_modes == 0 || n_cells == 0 {
            return Err(VfpError::invalid("coefficient field needs at least one mode and one cell"));
        }
        if data.len() != n_modes * n_cells {
            return Err(VfpError::shape(format!("{n_modes}x{n_cells} coefficients"), data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(VfpError::invalid("non-finite coefficient"));
        }
        Ok(CoefficientField { n_modes, n_cells, data })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_cells..(k + 1) * self.n_cells]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_cells..(k + 1) * self.n_cells]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cells)
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.n_cells + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &CoefficientField) -> Result<()> {
        if self.n_modes != other.n_modes || self.n_cells != other.n_cells {
            return Err(VfpError::shape(
                format!("{}x{}", self.n_modes, self.n_cells),
                format!("{}x{}", other.n_modes, other.n_cells),
            ));
        }
        Ok(())
    }

    /// Keeps the first `n_modes` rows, padding with zeros when growing.
    pub fn resized(&self, n_modes: usize) -> CoefficientField {
        let mut out = CoefficientField::zeros(n_modes, self.n_cells);
        let keep = n_modes.min(self.n_modes) * self.n_cells;
        out.data[..keep].copy_from_slice(&self.data[..keep]);
        out
    }
}

/// Gauss quadrature for the standard normal weight `exp(-x^2/2) / sqrt(2 pi)`;
/// the weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch nodes polished by Newton iterations on `H_n`, with
    /// Christoffel weights `1 / sum_k H_k(x)^2`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut jacobi = DMatrix::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(f64::total_cmp);

        let mut weights = Vec::with_capacity(order);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (hn, hn1, _) = scaled_hermite_tail(order, *x);
                if hn1 == 0.0 {
                    break;
                }
                let step = hn / ((order as f64).sqrt() * hn1);
                *x -= step;
                if step.abs() < 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, _, sum_sq) = scaled_hermite_tail(order, *x);
            // sum_sq carries the factor exp(-x^2/2); the weight is
            // exp(-x^2/2) / sum H_k^2 up to that same factor.
            weights.push((-0.5 * *x * *x).exp() / sum_sq);
        }
        GaussHermite { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ N(0, 1)`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Runs the orthonormal recurrence scaled by `exp(-x^2/4)` up to degree `n`.
/// Returns `(H_n, H_{n-1}, sum_{k<n} H_k^2)`, all carrying the common factor.
fn scaled_hermite_tail(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = (-0.25 * x * x).exp();
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum_sq)
}

/// Orthonormal Hermite polynomials `H_0(xi), ..., H_{k_max}(xi)`.
pub fn hermite_polynomials(k_max: usize, xi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(1.0);
    if k_max >= 1 {
        out.push(xi);
    }
    for k in 1..k_max {
        let next = (xi * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

pub fn maxwellian(v: f64, temperature: f64) -> f64 {
    (-v * v / (2.0 * temperature)).exp() / (2.0 * PI * temperature).sqrt()
}

/// `Psi_k(v)` for `k = 0..=k_max` (rows) and each `v` in the grid (columns).
///
/// The recurrence is started from `M(v)` so large mode counts neither
/// overflow nor underflow before the Gaussian factor is applied.
pub fn hermite_function_values(k_max: usize, v_grid: &[f64], temperature: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(k_max + 1, v_grid.len());
    let st = temperature.sqrt();
    for (c, &v) in v_grid.iter().enumerate() {
        let xi = v / st;
        let mut prev = 0.0;
        let mut cur = maxwellian(v, temperature);
        out[(0, c)] = cur;
        for k in 0..k_max {
            let next = (xi * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
            prev = cur;
            cur = next;
            out[(k + 1, c)] = cur;
        }
    }
    out
}

/// Spatial density profile `rho_0(x)` of the initial datum.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityProfile {
    Constant(f64),
    /// `mean * (1 + delta cos(2 pi x / period))`
    Cosine { mean: f64, delta: f64, period: f64 },
    Table(Vec<f64>),
}

impl DensityProfile {
    /// Values at cell centers (midpoint rule for the cell averages).
    pub fn sample(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let values = match self {
            DensityProfile::Constant(c) => vec![*c; mesh.n_cells()],
            DensityProfile::Cosine { mean, delta, period } => {
                if !(delta.abs() < 1.0) {
                    return Err(VfpError::invalid(format!("density modulation must lie in (-1, 1), got {delta}")));
                }
                if !(*period > 0.0) {
                    return Err(VfpError::invalid("density period must be positive"));
                }
                mesh.x_center()
                    .iter()
                    .map(|x| mean * (1.0 + delta * (2.0 * PI * x / period).cos()))
                    .collect()
            }
            DensityProfile::Table(values) => {
                mesh.check_len(values)?;
                values.clone()
            }
        };
        if values.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(VfpError::invalid("initial density must be positive and finite"));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    MaxwellianCentered,
    MaxwellianShifted { u0: f64 },
    /// Explicit Hermite coefficients `C_{k,j}` (rows are modes).
    Coefficients(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataSpec {
    pub kind: InitialKind,
    pub density: DensityProfile,
    /// Temperature of the initial Maxwellian; `None` means `T0`.
    pub temperature: Option<f64>,
}

impl InitialDataSpec {
    pub fn centered(density: DensityProfile) -> Self {
        InitialDataSpec {
            kind: InitialKind::MaxwellianCentered,
            density,
            temperature: None,
        }
    }

    pub fn shifted(density: DensityProfile, u0: f64) -> Self {
        InitialDataSpec {
            kind: InitialKind::MaxwellianShifted { u0 },
            density,
            temperature: None,
        }
    }

    /// Initial mass `sum_j dx_j C_{0,j}`.
    pub fn discrete_mass(&self, mesh: &Mesh) -> Result<f64> {
        let c0 = match &self.kind {
            InitialKind::Coefficients(rows) => {
                let first = rows.first().ok_or_else(|| VfpError::invalid("no coefficient rows"))?;
                mesh.check_len(first)?;
                first.clone()
            }
            _ => self.density.sample(mesh)?,
        };
        Ok(mesh.dx().iter().zip(&c0).map(|(d, c)| d * c).sum())
    }
}

/// Quadrature order used for projecting `n_modes` coefficients.
pub fn quadrature_order(n_modes: usize) -> usize {
    (2 * n_modes).max(64)
}

/// Projects velocity profiles sampled at the quadrature nodes onto the first
/// `n_modes` Hermite functions.
#[derive(Debug, Clone)]
pub struct VelocityProjector {
    quad: GaussHermite,
    temperature: f64,
    n_modes: usize,
    /// `H_k(xi_i)` for each node `i` (row `i`).
    basis: Vec<Vec<f64>>,
}

impl VelocityProjector {
    pub fn new(n_modes: usize, temperature: f64) -> Result<Self> {
        Self::with_order(n_modes, temperature, quadrature_order(n_modes))
    }

    pub fn with_order(n_modes: usize, temperature: f64, order: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(VfpError::invalid("need at least one Hermite mode"));
        }
        if n_modes > order / 2 {
            return Err(VfpError::invalid(format!(
                "{n_modes} modes exceed the stable range of a {order}-point quadrature"
            )));
        }
        let quad = GaussHermite::new(order);
        let basis = quad.nodes().iter().map(|&x| hermite_polynomials(n_modes - 1, x)).collect();
        Ok(VelocityProjector {
            quad,
            temperature,
            n_modes,
            basis,
        })
    }

    /// Velocity nodes `v_i = sqrt(T0) xi_i`.
    pub fn velocity_nodes(&self) -> Vec<f64> {
        let st = self.temperature.sqrt();
        self.quad.nodes().iter().map(|x| st * x).collect()
    }

    /// `C_k = int f Psi_k M^{-1} dv` from samples `f(v_i)`.
    pub fn project(&self, f_values: &[f64]) -> Vec<f64> {
        assert_eq!(f_values.len(), self.quad.order());
        let st = self.temperature.sqrt();
        let mut c = vec![0.0; self.n_modes];
        for ((h, &w), (&x, &f)) in self
            .basis
            .iter()
            .zip(self.quad.weights())
            .zip(self.quad.nodes().iter().zip(f_values))
        {
            let ratio = f / maxwellian(st * x, self.temperature);
            for (ck, hk) in c.iter_mut().zip(h) {
                *ck += w * ratio * hk;
            }
        }
        c
    }
}

/// Coefficients `C_k` of the Maxwellian with unit density, bulk velocity `u0`
/// and temperature `t_init`, in the basis built on `T0`.
fn maxwellian_coefficients(n_modes: usize, u0: f64, t_init: f64, t0: f64) -> Result<Vec<f64>> {
    if (t_init - t0).abs() <= 1e-15 * t0 {
        // Generating function: E[H_k(xi)] = m^k / sqrt(k!) for xi ~ N(m, 1).
        let m = u0 / t0.sqrt();
        let mut c = Vec::with_capacity(n_modes);
        let mut ck = 1.0;
        for k in 0..n_modes {
            if k > 0 {
                ck *= m / (k as f64).sqrt();
            }
            c.push(ck);
        }
        return Ok(c);
    }
    let order = quadrature_order(n_modes);
    if n_modes > order / 2 {
        return Err(VfpError::invalid("too many modes for the projection quadrature"));
    }
    // v = u0 + sqrt(t_init) z, z ~ N(0,1): C_k = E[H_k(v / sqrt(T0))].
    let quad = GaussHermite::new(order);
    let mut c = vec![0.0; n_modes];
    for (&z, &w) in quad.nodes().iter().zip(quad.weights()) {
        let xi = (u0 + t_init.sqrt() * z) / t0.sqrt();
        for (ck, hk) in c.iter_mut().zip(hermite_polynomials(n_modes - 1, xi)) {
            *ck += w * hk;
        }
    }
    Ok(c)
}

/// Discretizes the initial datum: `D_{k,j} = C_{k,j} / sqrt(rho_inf_j)`.
pub fn project_initial(
    spec: &InitialDataSpec,
    field: &EquilibriumField,
    mesh: &Mesh,
    n_modes: usize,
) -> Result<CoefficientField> {
    if n_modes == 0 {
        return Err(VfpError::invalid("need at least one Hermite mode"));
    }
    let n = mesh.n_cells();
    if field.n_cells() != n {
        return Err(VfpError::shape(format!("{n} cells"), field.n_cells()));
    }
    let t0 = field.temperature();
    let t_init = spec.temperature.unwrap_or(t0);
    if !(t_init > 0.0) {
        return Err(VfpError::invalid("initial temperature must be positive"));
    }
    let mut out = CoefficientField::zeros(n_modes, n);
    match &spec.kind {
        InitialKind::MaxwellianCentered | InitialKind::MaxwellianShifted { .. } => {
            let u0 = match spec.kind {
                InitialKind::MaxwellianShifted { u0 } => u0,
                _ => 0.0,
            };
            let rho = spec.density.sample(mesh)?;
            let velocity = maxwellian_coefficients(n_modes, u0, t_init, t0)?;
            for (k, ck) in velocity.iter().enumerate() {
                for (j, r) in rho.iter().enumerate() {
                    out.row_mut(k)[j] = r * ck;
                }
            }
        }
        InitialKind::Coefficients(rows) => {
            if rows.len() > n_modes {
                return Err(VfpError::invalid(format!(
                    "{} coefficient rows given but only {n_modes} modes retained",
                    rows.len()
                )));
            }
            for (k, row) in rows.iter().enumerate() {
                mesh.check_len(row)?;
                out.row_mut(k).copy_from_slice(row);
            }
        }
    }
    for k in 0..n_modes {
        for (d, s) in out.row_mut(k).iter_mut().zip(field.sqrt_rho_inf()) {
            *d /= s;
        }
    }
    if out.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(VfpError::invalid("projection produced non-finite coefficients"));
    }
    Ok(out)
}

/// `f(x_j, v) = sum_k sqrt(rho_inf_j) D_{k,j} Psi_k(v)`, one row per cell.
pub fn reconstruct_f(coeffs: &CoefficientField, field: &EquilibriumField, v_grid: &[f64]) -> DMatrix<f64> {
    let psi = hermite_function_values(coeffs.n_modes() - 1, v_grid, field.temperature());
    let n = coeffs.n_cells();
    let mut out = DMatrix::zeros(n, v_grid.len());
    for j in 0..n {
        let s = field.sqrt_rho_inf()[j];
        for c in 0..v_grid.len() {
            out[(j, c)] = s * (0..coeffs.n_modes()).map(|k| coeffs.get(k, j) * psi[(k, c)]).sum::<f64>();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::PotentialSpec;

    /// Trapezoid rule on a wide interval; spectrally accurate for smooth
    /// Gaussian-decaying integrands and independent of the Gauss rule.
    fn trapezoid<F: Fn(f64) -> f64>(f: F) -> f64 {
        let (lo, hi, n) = (-40.0, 40.0, 16000);
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn psi_point_values() {
        let v = hermite_function_values(1, &[0.0, 1.0], 1.0);
        assert!((v[(0, 0)] - 0.3989422804014327).abs() < 1e-15);
        assert!((v[(1, 1)] - 0.24197072451914337).abs() < 1e-15);
        assert_eq!(v[(1, 0)], 0.0);
    }

    #[test]
    fn quadrature_weights_and_moments() {
        let q = GaussHermite::new(200);
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!((q.expectation(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((q.expectation(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!(q.expectation(|x| x.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn orthonormality_via_quadrature() {
        let q = GaussHermite::new(200);
        let h: Vec<Vec<f64>> = q.nodes().iter().map(|&x| hermite_polynomials(30, x)).collect();
        for k in 0..=30 {
            for l in 0..=30 {
                let s: f64 = h.iter().zip(q.weights()).map(|(hv, w)| w * hv[k] * hv[l]).sum();
                let expected = if k == l { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 1e-10, "({k},{l}) -> {s}");
            }
        }
    }

    #[test]
    fn orthonormality_with_temperature_via_trapezoid() {
        let t0 = 2.0;
        for (k, l) in [(0, 0), (3, 3), (2, 5), (7, 7), (4, 9)] {
            let s = trapezoid(|v| {
                let p = hermite_function_values(9, &[v], t0);
                p[(k, 0)] * p[(l, 0)] / maxwellian(v, t0)
            });
            let expected = if k == l { 1.0 } else { 0.0 };
            assert!((s - expected).abs() < 1e-10, "({k},{l}) -> {s}");
        }
    }

    #[test]
    fn fokker_planck_eigenfunctions() {
        // d/dv (v Psi_k + T0 Psi_k') = -k Psi_k, checked with centered differences.
        let t0 = 1.5;
        let step = 1e-3;
        for k in 0..6 {
            for &v in &[-1.3, 0.2, 0.9] {
                let flux = |v: f64| {
                    let p = hermite_function_values(k, &[v - step, v, v + step], t0);
                    v * p[(k, 1)] + t0 * (p[(k, 2)] - p[(k, 0)]) / (2.0 * step)
                };
                let lhs = (flux(v + step) - flux(v - step)) / (2.0 * step);
                let rhs = -(k as f64) * hermite_function_values(k, &[v], t0)[(k, 0)];
                assert!((lhs - rhs).abs() < 1e-5, "k={k} v={v}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn shifted_coefficients_match_trapezoid() {
        let c = maxwellian_coefficients(31, 1.0, 1.0, 1.0).unwrap();
        assert!((c[2] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((c[3] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        for k in [0, 1, 2, 3, 10, 20, 30] {
            let oracle = trapezoid(|v| maxwellian(v - 1.0, 1.0) * hermite_polynomials(k, v)[k]);
            assert!((c[k] - oracle).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn hot_maxwellian_uses_quadrature() {
        let (t_init, u0, t0) = (1.4, 0.5, 1.0);
        let c = maxwellian_coefficients(12, u0, t_init, t0).unwrap();
        for k in 0..12 {
            let oracle = trapezoid(|v| maxwellian(v - u0, t_init) * hermite_polynomials(k, v / t0.sqrt())[k]);
            assert!((c[k] - oracle).abs() < 1e-10, "k={k}");
        }
    }

    fn setup(n: usize, l: f64, phi: PotentialSpec) -> (Mesh, EquilibriumField) {
        let m = Mesh::uniform(0.0, l, n).unwrap();
        let f = EquilibriumField::new(phi.sample(&m).unwrap(), &m, 1.0, l).unwrap();
        (m, f)
    }

    #[test]
    fn centered_projection() {
        let (m, f) = setup(16, 10.0, PotentialSpec::two_cosine(10.0));
        let spec = InitialDataSpec::centered(DensityProfile::Constant(1.0));
        let d = project_initial(&spec, &f, &m, 8).unwrap();
        for j in 0..16 {
            assert!((d.get(0, j) - 1.0 / f.sqrt_rho_inf()[j]).abs() < 1e-15);
        }
        assert!(d.as_slice()[16..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn test_one_profile() {
        let (m, f) = setup(64, 10.0, PotentialSpec::two_cosine(10.0));
        let spec = InitialDataSpec::centered(DensityProfile::Cosine { mean: 1.0, delta: 0.5, period: 10.0 });
        let d = project_initial(&spec, &f, &m, 4).unwrap();
        for j in 0..64 {
            let x = m.x_center()[j];
            let c0 = d.get(0, j) * f.sqrt_rho_inf()[j];
            assert!((c0 - (1.0 + 0.5 * (2.0 * PI * x / 10.0).cos())).abs() < 1e-14);
        }
        assert!((spec.discrete_mass(&m).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_projection_values() {
        let (m, f) = setup(8, 1.0, PotentialSpec::Zero);
        let spec = InitialDataSpec::shifted(DensityProfile::Constant(1.0), 1.0);
        let d = project_initial(&spec, &f, &m, 4).unwrap();
        let expected = [1.0, 1.0, std::f64::consts::FRAC_1_SQRT_2, 1.0 / 6f64.sqrt()];
        for (k, e) in expected.iter().enumerate() {
            assert!((d.get(k, 3) * f.sqrt_rho_inf()[3] - e).abs() < 1e-14);
        }
    }

    #[test]
    fn coefficient_rows_checked() {
        let (m, f) = setup(4, 1.0, PotentialSpec::Zero);
        let spec = InitialDataSpec {
            kind: InitialKind::Coefficients(vec![vec![1.0; 4]; 3]),
            density: DensityProfile::Constant(1.0),
            temperature: None,
        };
        assert!(project_initial(&spec, &f, &m, 2).is_err());
        assert!(project_initial(&spec, &f, &m, 3).is_ok());
        assert!(VelocityProjector::with_order(40, 1.0, 64).is_err());
    }

    #[test]
    fn reconstruct_equilibrium_and_single_mode() {
        let (_m, f) = setup(6, 2.0, PotentialSpec::Cosine { amplitudes: vec![0.4], modes: vec![1.0], period: 2.0 });
        let mut d = CoefficientField::zeros(3, 6);
        d.row_mut(0).copy_from_slice(f.sqrt_rho_inf());
        let v = [-1.0, 0.0, 0.7];
        let rec = reconstruct_f(&d, &f, &v);
        let rho = f.rho_inf();
        for j in 0..6 {
            for (c, &vv) in v.iter().enumerate() {
                assert!((rec[(j, c)] - rho[j] * maxwellian(vv, 1.0)).abs() < 1e-15);
            }
        }
        let mut d = CoefficientField::zeros(3, 6);
        for j in 0..6 {
            d.row_mut(1)[j] = 1.0 / f.sqrt_rho_inf()[j];
        }
        let rec = reconstruct_f(&d, &f, &v);
        let psi = hermite_function_values(1, &v, 1.0);
        for j in 0..6 {
            for c in 0..3 {
                assert!((rec[(j, c)] - psi[(1, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn truncated_shifted_series_converges() {
        let (m, f) = setup(4, 4.0, PotentialSpec::Zero);
        let spec = InitialDataSpec::shifted(DensityProfile::Constant(1.0), 1.0);
        let d = project_initial(&spec, &f, &m, 60).unwrap();
        let v: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
        let rec = reconstruct_f(&d, &f, &v);
        for (c, &vv) in v.iter().enumerate() {
            let exact = (-(vv - 1.0f64).powi(2) / 2.0).exp() / (2.0 * PI).sqrt();
            assert!((rec[(0, c)] - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn large_mode_count_is_finite() {
        let v: Vec<f64> = (0..41).map(|i| -20.0 + i as f64).collect();
        let p = hermite_function_values(200, &v, 1.0);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn coefficient_decay_is_monotone_past_shift() {
        let u0: f64 = 1.7;
        let c = maxwellian_coefficients(40, u0, 1.0, 1.0).unwrap();
        let start = (u0 * u0).ceil() as usize;
        for k in start..39 {
            assert!(c[k + 1].abs() < c[k].abs());
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn projection_roundtrip(coeffs in proptest::collection::vec(-1.0f64..1.0, 12), t0 in 0.5f64..2.0) {
            let m = Mesh::uniform(0.0, 1.0, 2).unwrap();
            let f = EquilibriumField::new(vec![0.0; 2], &m, t0, 1.0).unwrap();
            let mut d = CoefficientField::zeros(12, 2);
            for k in 0..12 { d.row_mut(k)[0] = coeffs[k]; }
            let proj = VelocityProjector::new(12, t0).unwrap();
            let samples = reconstruct_f(&d, &f, &proj.velocity_nodes());
            let row: Vec<f64> = samples.row(0).iter().copied().collect();
            let back = proj.project(&row);
            for k in 0..12 {
                // reconstruct multiplies by sqrt(rho_inf) = 1 here
                proptest::prop_assert!((back[k] - coeffs[k]).abs() < 1e-12);
            }
        }
    }
}
