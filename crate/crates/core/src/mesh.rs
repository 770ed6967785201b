//! Periodic one-dimensional finite-volume mesh.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VfpError};

/// Periodic partition of `[a, b)` into control volumes.
///
/// Cell `j` is `]x_half[j], x_half[j+1][`; its center is the interface
/// midpoint. All neighbor arithmetic wraps around modulo the cell count.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    a: f64,
    b: f64,
    x_half: Vec<f64>,
    x_center: Vec<f64>,
    dx: Vec<f64>,
    h: f64,
    regularity: f64,
}

impl Mesh {
    pub fn uniform(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        Self::perturbed(a, b, n_cells, 0.0, 0)
    }

    /// Interfaces are moved by at most `amplitude * (b - a) / (2 n_cells)`
    /// using a seeded generator, so the same arguments always give the same
    /// mesh. The endpoints stay fixed.
    pub fn perturbed(a: f64, b: f64, n_cells: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(VfpError::invalid(format!("mesh needs a < b, got a={a}, b={b}")));
        }
        if n_cells < 2 {
            return Err(VfpError::invalid(format!("mesh needs at least 2 cells, got {n_cells}")));
        }
        if !(0.0..1.0).contains(&amplitude) {
            return Err(VfpError::invalid(format!(
                "perturbation amplitude must lie in [0, 1), got {amplitude}"
            )));
        }
        let width = (b - a) / n_cells as f64;
        let mut x_half: Vec<f64> = (0..=n_cells).map(|i| a + i as f64 * width).collect();
        x_half[n_cells] = b;
        if amplitude > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let max_shift = 0.5 * amplitude * width;
            for x in &mut x_half[1..n_cells] {
                *x += max_shift * rng.random_range(-1.0..=1.0);
            }
        }
        Self::from_interfaces(x_half)
    }

    /// Builds a mesh from explicit, strictly increasing interface positions.
    pub fn from_interfaces(x_half: Vec<f64>) -> Result<Self> {
        if x_half.len() < 3 {
            return Err(VfpError::invalid("mesh needs at least 3 interfaces"));
        }
        if x_half.iter().any(|x| !x.is_finite()) {
            return Err(VfpError::invalid("non-finite interface position"));
        }
        let dx: Vec<f64> = x_half.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(j) = dx.iter().position(|&d| d <= 0.0) {
            return Err(VfpError::invalid(format!("interfaces not strictly increasing at cell {j}")));
        }
        let x_center = x_half.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let h = dx.iter().copied().fold(0.0, f64::max);
        let regularity = regularity_ratio(&dx);
        Ok(Mesh {
            a: x_half[0],
            b: x_half[x_half.len() - 1],
            x_half,
            x_center,
            dx,
            h,
            regularity,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn n_cells(&self) -> usize {
        self.dx.len()
    }

    pub fn x_half(&self) -> &[f64] {
        &self.x_half
    }

    pub fn x_center(&self) -> &[f64] {
        &self.x_center
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    /// Largest cell width.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `R_h = max_{i,j} |dx_j / dx_i - 1|`.
    pub fn regularity(&self) -> f64 {
        self.regularity
    }

    /// Distance between consecutive centers, `x_{j+1} - x_j` (periodic).
    /// Not used by the stencils.
    pub fn dual_width(&self, j: usize) -> f64 {
        let n = self.n_cells();
        if j + 1 < n {
            self.x_center[j + 1] - self.x_center[j]
        } else {
            0.5 * (self.dx[n - 1] + self.dx[0])
        }
    }

    #[inline]
    pub fn next(&self, j: usize) -> usize {
        if j + 1 == self.dx.len() {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub fn prev(&self, j: usize) -> usize {
        if j == 0 {
            self.dx.len() - 1
        } else {
            j - 1
        }
    }

    /// Weighted inner product `sum_j dx_j u_j v_j`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dx.len());
        debug_assert_eq!(v.len(), self.dx.len());
        self.dx.iter().zip(u).zip(v).map(|((d, a), b)| d * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn distance(&self, u: &[f64], v: &[f64]) -> f64 {
        self.dx
            .iter()
            .zip(u.iter().zip(v))
            .map(|(d, (a, b))| d * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n_cells() {
            return Err(VfpError::shape(format!("{} cell values", self.n_cells()), u.len()));
        }
        Ok(())
    }
}

/// `sup_{i,j} |dx_j / dx_i - 1|`, attained at the extreme widths.
pub fn regularity_ratio(dx: &[f64]) -> f64 {
    let (lo, hi) = dx
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if dx.is_empty() {
        return 0.0;
    }
    (hi / lo - 1.0).max(1.0 - lo / hi)
}
