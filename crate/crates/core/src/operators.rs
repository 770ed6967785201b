//! Discrete transport operators `A_h`, `A_h*`, their commutator and the
//! mode-indexed family `B_h`.
//!
//! With `s = sqrt(T0)` and periodic indices,
//!
//! ```text
//! (A  u)_j =  s [ (u_{j+1} - u_{j-1}) / (2 dx_j) - E_j / (2 T0) u_j ]
//! (A* u)_j = -s [ (u_{j+1} - u_{j-1}) / (2 dx_j) + E_j / (2 T0) u_j ]
//! ```
//!
//! `A*` is the adjoint of `A` for the inner product `<u, v> = sum dx_j u_j v_j`.

use nalgebra::{DMatrix, DVector};

use crate::equilibrium::EquilibriumField;
use crate::linalg::right_svd;
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    A,
    AStar,
}

/// Periodic tridiagonal matrix with three coefficients per row, at columns
/// `j-1`, `j` and `j+1` modulo `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl StencilMatrix {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        assert!(lower.len() == diag.len() && diag.len() == upper.len());
        assert!(diag.len() >= 2);
        StencilMatrix { lower, diag, upper }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(out.len(), n);
        out[0] = self.lower[0] * u[n - 1] + self.diag[0] * u[0] + self.upper[0] * u[1];
        for j in 1..n - 1 {
            out[j] = self.lower[j] * u[j - 1] + self.diag[j] * u[j] + self.upper[j] * u[j + 1];
        }
        out[n - 1] = self.lower[n - 1] * u[n - 2] + self.diag[n - 1] * u[n - 1] + self.upper[n - 1] * u[0];
    }

    /// `out += alpha * M u`.
    #[inline]
    pub fn apply_add(&self, alpha: f64, u: &[f64], out: &mut [f64]) {
        let n = self.n();
        let row = |j: usize, jm: usize, jp: usize| {
            self.lower[j] * u[jm] + self.diag[j] * u[j] + self.upper[j] * u[jp]
        };
        out[0] += alpha * row(0, n - 1, 1);
        for j in 1..n - 1 {
            out[j] += alpha * row(j, j - 1, j + 1);
        }
        out[n - 1] += alpha * row(n - 1, n - 2, 0);
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(u, &mut out);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, (j + n - 1) % n)] += self.lower[j];
            m[(j, j)] += self.diag[j];
            m[(j, (j + 1) % n)] += self.upper[j];
        }
        m
    }

    /// `diag(scale) * M * diag(scale)^-1`.
    pub fn similarity(&self, scale: &[f64]) -> StencilMatrix {
        let n = self.n();
        assert_eq!(scale.len(), n);
        let (mut lower, diag, mut upper) = (vec![0.0; n], self.diag.clone(), vec![0.0; n]);
        for j in 0..n {
            lower[j] = self.lower[j] * scale[j] / scale[(j + n - 1) % n];
            upper[j] = self.upper[j] * scale[j] / scale[(j + 1) % n];
        }
        StencilMatrix { lower, diag, upper }
    }

    /// Product `self * rhs` as a dense matrix, `rhs` dense with `n` rows.
    pub fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        assert_eq!(rhs.nrows(), n);
        let mut out = DMatrix::zeros(n, rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = rhs.column(c);
            for j in 0..n {
                let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
                out[(j, c)] = self.lower[j] * col[jm] + self.diag[j] * col[j] + self.upper[j] * col[jp];
            }
        }
        out
    }
}

/// The pair `(A_h, A_h*)` for one mesh and equilibrium field.
#[derive(Debug, Clone)]
pub struct TransportOperators {
    sqrt_t0: f64,
    inv_2dx: Vec<f64>,
    /// `E_j / (2 T0)`
    half_e: Vec<f64>,
    e: Vec<f64>,
    dx: Vec<f64>,
    a: StencilMatrix,
    a_star: StencilMatrix,
}

impl TransportOperators {
    pub fn new(mesh: &Mesh, field: &EquilibriumField) -> Self {
        assert_eq!(mesh.n_cells(), field.n_cells(), "mesh and field sizes differ");
        let t0 = field.temperature();
        let sqrt_t0 = t0.sqrt();
        let inv_2dx: Vec<f64> = mesh.dx().iter().map(|d| 1.0 / (2.0 * d)).collect();
        let e = field.field().to_vec();
        let half_e: Vec<f64> = e.iter().map(|e| e / (2.0 * t0)).collect();

        let a = StencilMatrix::new(
            inv_2dx.iter().map(|c| -sqrt_t0 * c).collect(),
            half_e.iter().map(|h| -sqrt_t0 * h).collect(),
            inv_2dx.iter().map(|c| sqrt_t0 * c).collect(),
        );
        let a_star = StencilMatrix::new(
            inv_2dx.iter().map(|c| sqrt_t0 * c).collect(),
            half_e.iter().map(|h| -sqrt_t0 * h).collect(),
            inv_2dx.iter().map(|c| -sqrt_t0 * c).collect(),
        );
        TransportOperators {
            sqrt_t0,
            inv_2dx,
            half_e,
            e,
            dx: mesh.dx().to_vec(),
            a,
            a_star,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.dx.len()
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    #[inline]
    fn centered(&self, u: &[f64], j: usize) -> f64 {
        let n = self.dx.len();
        let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
        (u[jp] - u[jm]) * self.inv_2dx[j]
    }

    /// Direct stencil evaluation of `A_h u`.
    pub fn apply_a(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_cells());
        (0..u.len())
            .map(|j| self.sqrt_t0 * (self.centered(u, j) - self.half_e[j] * u[j]))
            .collect()
    }

    /// Direct stencil evaluation of `A_h* u`.
    pub fn apply_a_star(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_cells());
        (0..u.len())
            .map(|j| -self.sqrt_t0 * (self.centered(u, j) + self.half_e[j] * u[j]))
            .collect()
    }

    /// `B_{h,k} u`: `A_h` for the zeroth mode, `A_h*` otherwise.
    pub fn apply_b(&self, k: usize, u: &[f64]) -> Vec<f64> {
        if k == 0 {
            self.apply_a(u)
        } else {
            self.apply_a_star(u)
        }
    }

    /// `[A_h, A_h*] u = A_h A_h* u - A_h* A_h u` by composition.
    pub fn apply_commutator(&self, u: &[f64]) -> Vec<f64> {
        let left = self.apply_a(&self.apply_a_star(u));
        let right = self.apply_a_star(&self.apply_a(u));
        left.iter().zip(right).map(|(l, r)| l - r).collect()
    }

    /// Closed form of the commutator:
    /// `-(E_{j+1}-E_{j-1})/(4dx_j) (u_{j+1}+u_{j-1}) - (E_{j+1}-2E_j+E_{j-1})/(4dx_j) (u_{j+1}-u_{j-1})`.
    pub fn commutator_closed_form(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_cells();
        assert_eq!(u.len(), n);
        let e = &self.e;
        (0..n)
            .map(|j| {
                let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
                let q = 0.5 * self.inv_2dx[j];
                -(e[jp] - e[jm]) * q * (u[jp] + u[jm]) - (e[jp] - 2.0 * e[j] + e[jm]) * q * (u[jp] - u[jm])
            })
            .collect()
    }

    /// Diagonal of `A_h + A_h*`, namely `-E_j / sqrt(T0)`.
    pub fn sum_diagonal(&self) -> Vec<f64> {
        self.e.iter().map(|e| -e / self.sqrt_t0).collect()
    }

    /// `max_j max(|E_{j+1}-E_{j-1}|, |E_{j+1}-2E_j+E_{j-1}|) / (2 dx_j)`; the
    /// commutator satisfies `||[A,A*]u|| <= (2 + R_h) M2 ||u||`.
    pub fn commutator_bound_coefficient(&self) -> f64 {
        let n = self.n_cells();
        let e = &self.e;
        (0..n)
            .map(|j| {
                let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
                let first = (e[jp] - e[jm]).abs();
                let second = (e[jp] - 2.0 * e[j] + e[jm]).abs();
                first.max(second) * self.inv_2dx[j]
            })
            .fold(0.0, f64::max)
    }

    /// Assembled sparse form; matrix-vector products agree with the direct
    /// stencils up to roundoff.
    pub fn matrix(&self, kind: OperatorKind) -> &StencilMatrix {
        match kind {
            OperatorKind::A => &self.a,
            OperatorKind::AStar => &self.a_star,
        }
    }

    /// `A_h` in the orthonormal coordinates `u -> sqrt(dx) u`, where the
    /// weighted adjoint becomes the plain transpose.
    pub fn weighted_dense(&self, kind: OperatorKind) -> DMatrix<f64> {
        let n = self.n_cells();
        let mut m = self.matrix(kind).to_dense();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= (self.dx[i] / self.dx[j]).sqrt();
            }
        }
        m
    }
}

/// Outcome of the discrete Poincare-Wirtinger measurement.
///
/// On uniform meshes with an even cell count the centered stencil carries an
/// alternating mode close to `(-1)^j / sqrt(rho_inf_j)`; its periodicity defect
/// decays exponentially in `N_x`, so for smooth potentials it becomes a
/// numerical kernel. `c_d` reports the raw constant (infinite when degenerate)
/// and `c_d_eff` the constant on the complement of the detected kernel.
#[derive(Debug, Clone)]
pub struct PoincareReport {
    /// Smallest singular value of `A_h` restricted to the weighted-mean-zero
    /// subspace, in the weighted L2 norm.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Smallest singular value above the degeneracy threshold.
    pub sigma_eff: f64,
    /// `1 / sigma_min`, infinite when degenerate.
    pub c_d: f64,
    /// `1 / sigma_eff`.
    pub c_d_eff: f64,
    pub degenerate: bool,
    /// Number of restricted singular values under the threshold.
    pub kernel_dim: usize,
    /// Weighted-unit vector achieving `sigma_min` when degenerate.
    pub kernel: Option<Vec<f64>>,
}

impl PoincareReport {
    /// The constant used for entropy weights and decay floors: the raw one
    /// when it exists, the effective one otherwise.
    pub fn working_c_d(&self) -> f64 {
        if self.degenerate {
            self.c_d_eff
        } else {
            self.c_d
        }
    }
}

/// Relative singular-value threshold under which `A_h` is declared to have an
/// extra kernel direction.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Orthonormal basis (columns) of the complement of `w` in `R^n`, via one
/// Householder reflection.
pub(crate) fn complement_basis(w: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    let norm = w.norm();
    let mut v = w / norm;
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv = v.dot(&v);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, n - 1).into_owned()
}

/// Measures `C_d` such that `||u|| <= C_d ||A_h u||` for all `u` with
/// `sum dx_j u_j sqrt(rho_inf_j) = 0`.
pub fn discrete_poincare(ops: &TransportOperators, field: &EquilibriumField) -> PoincareReport {
    let n = ops.n_cells();
    let sqrt_dx: Vec<f64> = ops.dx().iter().map(|d| d.sqrt()).collect();
    if n == 1 {
        // The constraint leaves nothing to bound.
        return PoincareReport {
            sigma_min: f64::INFINITY,
            sigma_max: 0.0,
            sigma_eff: f64::INFINITY,
            c_d: 0.0,
            c_d_eff: 0.0,
            degenerate: false,
            kernel_dim: 0,
            kernel: None,
        };
    }
    let w = DVector::from_iterator(n, sqrt_dx.iter().zip(field.sqrt_rho_inf()).map(|(a, b)| a * b));
    let q = complement_basis(&w);
    let restricted = ops.weighted_dense(OperatorKind::A) * &q;
    let svd = right_svd(&restricted);
    let sv = &svd.sigma;
    let (imin, &sigma_min) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one singular value");
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let threshold = DEGENERACY_TOL * sigma_max;
    let kernel_dim = sv.iter().filter(|&&s| s <= threshold).count();
    let sigma_eff = sv.iter().copied().filter(|&s| s > threshold).fold(f64::INFINITY, f64::min);
    let degenerate = kernel_dim > 0;
    let kernel = degenerate.then(|| {
        let coeffs = svd.v.column(imin).into_owned();
        let y = &q * coeffs;
        let mut u: Vec<f64> = y.iter().zip(&sqrt_dx).map(|(y, s)| y / s).collect();
        let norm: f64 = u.iter().zip(ops.dx()).map(|(x, d)| d * x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        u
    });
    PoincareReport {
        sigma_min,
        sigma_max,
        sigma_eff,
        c_d: if degenerate { f64::INFINITY } else { 1.0 / sigma_min },
        c_d_eff: 1.0 / sigma_eff,
        degenerate,
        kernel_dim,
        kernel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::PotentialSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat4() -> (Mesh, EquilibriumField) {
        let m = Mesh::uniform(0.0, 1.0, 4).unwrap();
        let f = EquilibriumField::new(vec![0.0; 4], &m, 1.0, 1.0).unwrap();
        (m, f)
    }

    fn two_cosine_setup(n: usize, amp: f64) -> (Mesh, EquilibriumField) {
        let m = Mesh::perturbed(0.0, 10.0, n, amp, 5).unwrap();
        let phi = PotentialSpec::two_cosine(10.0).sample(&m).unwrap();
        let f = EquilibriumField::new(phi, &m, 1.0, 10.0).unwrap();
        (m, f)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn stencil_examples_flat_four_cells() {
        let (m, f) = flat4();
        let ops = TransportOperators::new(&m, &f);
        let u = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(ops.apply_a(&u), vec![0.0, -2.0, 0.0, 2.0]);
        assert_eq!(ops.apply_a_star(&u), vec![0.0, 2.0, 0.0, -2.0]);
        let v = [0.0, 1.0, 0.0, 0.0];
        assert!((m.inner(&ops.apply_a(&u), &v) + 0.5).abs() < 1e-15);
        assert!((m.inner(&u, &ops.apply_a_star(&v)) + 0.5).abs() < 1e-15);
        assert_eq!(ops.apply_a(&[3.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn b_family_dispatch() {
        let (m, f) = two_cosine_setup(16, 0.0);
        let ops = TransportOperators::new(&m, &f);
        let u: Vec<f64> = (0..16).map(|j| (j as f64).sin()).collect();
        assert_eq!(ops.apply_b(0, &u), ops.apply_a(&u));
        assert_eq!(ops.apply_b(1, &u), ops.apply_a_star(&u));
        assert_eq!(ops.apply_b(7, &u), ops.apply_a_star(&u));
    }

    #[test]
    fn kernel_of_a_is_sqrt_rho() {
        for amp in [0.0, 0.5] {
            let (m, f) = two_cosine_setup(64, amp);
            let ops = TransportOperators::new(&m, &f);
            let r = ops.apply_a(f.sqrt_rho_inf());
            let scale = f.sqrt_rho_inf().iter().fold(0.0f64, |a, b| a.max(*b));
            for (j, x) in r.iter().enumerate() {
                let q = (f.sqrt_rho_inf()[m.next(j)] - f.sqrt_rho_inf()[m.prev(j)]).abs() / (2.0 * m.dx()[j]);
                assert!(x.abs() <= 8.0 * f64::EPSILON * q.max(scale), "entry {j}: {x:e}");
            }
        }
    }

    #[test]
    fn phi_difference_field_breaks_kernel() {
        let m = Mesh::uniform(0.0, 10.0, 64).unwrap();
        let phi = PotentialSpec::two_cosine(10.0).sample(&m).unwrap();
        let f = EquilibriumField::with_form(phi, &m, 1.0, 10.0, crate::FieldForm::PhiDifference).unwrap();
        let ops = TransportOperators::new(&m, &f);
        let r = m.norm(&ops.apply_a(f.sqrt_rho_inf()));
        assert!(r > 1e-6 * m.norm(f.sqrt_rho_inf()));
    }

    #[test]
    fn commutator_vanishes_without_field() {
        let (m, f) = flat4();
        let ops = TransportOperators::new(&m, &f);
        for x in ops.apply_commutator(&[1.0, -2.0, 0.5, 3.0]) {
            assert!(x.abs() < 1e-13);
        }
    }

    #[test]
    fn matrix_matches_stencil() {
        let (m, f) = two_cosine_setup(32, 0.3);
        let ops = TransportOperators::new(&m, &f);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let u = random_vec(&mut rng, 32);
            for (kind, direct) in [
                (OperatorKind::A, ops.apply_a(&u)),
                (OperatorKind::AStar, ops.apply_a_star(&u)),
            ] {
                let assembled = ops.matrix(kind).apply(&u);
                for (x, y) in assembled.iter().zip(&direct) {
                    assert!((x - y).abs() <= 1e-14 * y.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn flat_row_sums_vanish() {
        let m = Mesh::uniform(0.0, 2.0, 8).unwrap();
        let f = EquilibriumField::new(vec![0.3; 8], &m, 2.0, 1.0).unwrap();
        let ops = TransportOperators::new(&m, &f);
        let dense = ops.matrix(OperatorKind::A).to_dense();
        for i in 0..8 {
            assert!(dense.row(i).sum().abs() < 1e-14);
        }
    }

    #[test]
    fn dense_adjoint_identity() {
        let (m, f) = two_cosine_setup(16, 0.6);
        let ops = TransportOperators::new(&m, &f);
        let a = ops.matrix(OperatorKind::A).to_dense();
        let a_star = ops.matrix(OperatorKind::AStar).to_dense();
        let dxm = DMatrix::from_diagonal(&DVector::from_column_slice(m.dx()));
        let lhs = &dxm * a_star;
        let rhs = a.transpose() * &dxm;
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn two_cell_mesh_stencil_is_consistent() {
        let m = Mesh::uniform(0.0, 1.0, 2).unwrap();
        let f = EquilibriumField::new(vec![0.0, 0.5], &m, 1.0, 1.0).unwrap();
        let ops = TransportOperators::new(&m, &f);
        let u = [0.3, -1.2];
        let dense = ops.matrix(OperatorKind::A).to_dense() * DVector::from_column_slice(&u);
        for (x, y) in dense.iter().zip(ops.apply_a(&u)) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn poincare_two_cosine_potential_is_finite() {
        for (n, amp) in [(63, 0.0), (65, 0.0), (64, 0.3), (32, 0.0)] {
            let (m, f) = two_cosine_setup(n, amp);
            let ops = TransportOperators::new(&m, &f);
            let rep = discrete_poincare(&ops, &f);
            assert!(!rep.degenerate, "n={n}");
            assert!(rep.c_d.is_finite() && rep.c_d > 0.0);
            assert_eq!(rep.c_d, rep.working_c_d());
            assert!(rep.kernel.is_none());
        }
    }

    #[test]
    fn even_uniform_two_cosine_mesh_has_alternating_numerical_kernel() {
        let (m, f) = two_cosine_setup(64, 0.0);
        let ops = TransportOperators::new(&m, &f);
        let rep = discrete_poincare(&ops, &f);
        assert!(rep.degenerate);
        assert_eq!(rep.kernel_dim, 1);
        assert!(rep.c_d.is_infinite());
        assert!(rep.c_d_eff.is_finite() && rep.c_d_eff < 100.0);
        let k = rep.kernel.unwrap();
        let s = f.sqrt_rho_inf();
        // Close to the leapfrog computational mode (-1)^j / s_j.
        let alt: Vec<f64> = (0..64).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / s[j]).collect();
        let cos = m.inner(&k, &alt) / (m.norm(&k) * m.norm(&alt));
        assert!(cos.abs() > 0.99, "{cos}");
        assert!(m.norm(&ops.apply_a(&k)) < 1e-12);
    }

    #[test]
    fn poincare_detects_checkerboard() {
        let m = Mesh::uniform(0.0, 1.0, 8).unwrap();
        let f = EquilibriumField::new(vec![0.0; 8], &m, 1.0, 1.0).unwrap();
        let ops = TransportOperators::new(&m, &f);
        let rep = discrete_poincare(&ops, &f);
        assert!(rep.degenerate);
        let k = rep.kernel.unwrap();
        // alternating sign pattern
        for j in 0..8 {
            assert!((k[j] + k[(j + 1) % 8]).abs() < 1e-8, "{k:?}");
        }
        // odd cell counts have no checkerboard
        let m = Mesh::uniform(0.0, 1.0, 9).unwrap();
        let f = EquilibriumField::new(vec![0.0; 9], &m, 1.0, 1.0).unwrap();
        let rep = discrete_poincare(&TransportOperators::new(&m, &f), &f);
        assert!(!rep.degenerate);
    }

    #[test]
    fn poincare_inequality_on_random_vectors() {
        let (m, f) = two_cosine_setup(32, 0.4);
        let ops = TransportOperators::new(&m, &f);
        let rep = discrete_poincare(&ops, &f);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = f.sqrt_rho_inf();
        let ss = m.inner(s, s);
        for _ in 0..100 {
            let mut u = random_vec(&mut rng, 32);
            let c = m.inner(&u, s) / ss;
            u.iter_mut().zip(s).for_each(|(x, y)| *x -= c * y);
            assert!(m.norm(&u) <= rep.c_d * m.norm(&ops.apply_a(&u)) * (1.0 + 1e-12));
        }
    }
}
