//! Discretized background: a periodic lattice, grid functions on it and the
//! discrete L² pairing.
//!
//! Fields are stored row-major (the last axis varies fastest) and the pairing
//! is `⟪φ,ψ⟫ = (∏ h_j) Σ_x conj(φ(x)) ψ(x)`, conjugate-linear in the first slot.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{apply, Operator};

/// Periodic lattice with `sizes[j]` points and step `spacing[j]` along axis `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    sizes: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `∏ h_j` of the discrete integral.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Period length `N_j h_j` along each axis.
    pub fn lengths(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| n as f64 * h)
            .collect()
    }

    /// Multi-index of a flat row-major index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.sizes[axis];
            flat /= self.sizes[axis];
        }
        idx
    }

    /// Row-major stride of each axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for axis in (0..self.dim().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.sizes[axis + 1];
        }
        strides
    }
}

/// Builds a grid. Every axis needs at least two points and a positive step.
pub fn make_grid(dim: usize, sizes: &[usize], spacing: &[f64]) -> Result<Arc<Grid>> {
    if dim == 0 {
        return Err(Error::InvalidGrid("dimension must be at least 1".into()));
    }
    if sizes.len() != dim || spacing.len() != dim {
        return Err(Error::InvalidGrid(format!(
            "dimension {dim} but {} sizes and {} spacings",
            sizes.len(),
            spacing.len()
        )));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidGrid(format!("axis size {n} < 2")));
    }
    if let Some(&h) = spacing.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidGrid(format!("spacing {h} is not positive")));
    }
    Ok(Arc::new(Grid {
        sizes: sizes.to_vec(),
        spacing: spacing.to_vec(),
    }))
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// The scalar field 𝕂 a grid function takes values in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarKind {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
    kind: ScalarKind,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>, kind: ScalarKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldLength {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if kind == ScalarKind::Real {
            if let Some(i) = values.iter().position(|v| v.im != 0.0) {
                return Err(Error::NotReal(i));
            }
        }
        Ok(Self { grid, values, kind })
    }

    pub fn real(grid: Arc<Grid>, values: &[f64]) -> Result<Self> {
        let values = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::new(grid, values, ScalarKind::Real)
    }

    pub fn complex(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        Self::new(grid, values, ScalarKind::Complex)
    }

    pub fn zeros(grid: Arc<Grid>, kind: ScalarKind) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values, kind }
    }

    /// Discrete Fourier mode `exp(2πi k·x/N)`.
    pub fn fourier_mode(grid: Arc<Grid>, k: &[usize]) -> Result<Self> {
        if k.len() != grid.dim() {
            return Err(Error::MultiIndexLength {
                expected: grid.dim(),
                got: k.len(),
            });
        }
        let values = (0..grid.len())
            .map(|flat| {
                let x = grid.unravel(flat);
                let phase: f64 = x
                    .iter()
                    .zip(k)
                    .zip(grid.sizes())
                    .map(|((&xj, &kj), &nj)| (xj * kj % nj) as f64 / nj as f64)
                    .sum();
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase)
            })
            .collect();
        Ok(Self {
            grid,
            values,
            kind: ScalarKind::Complex,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `‖φ‖² = ⟪φ,φ⟫`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    /// `aφ + bχ`.
    pub fn combine(a: Complex64, phi: &Field, b: Complex64, chi: &Field) -> Result<Field> {
        if !same_grid(&phi.grid, &chi.grid) {
            return Err(Error::GridMismatch);
        }
        let values: Vec<_> = phi
            .values
            .iter()
            .zip(&chi.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let kind = if phi.kind == ScalarKind::Real
            && chi.kind == ScalarKind::Real
            && a.im == 0.0
            && b.im == 0.0
        {
            ScalarKind::Real
        } else {
            ScalarKind::Complex
        };
        Ok(Field {
            grid: phi.grid.clone(),
            values,
            kind,
        })
    }

    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<Complex64>, kind: ScalarKind) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, kind }
    }
}

/// Discrete L² pairing `⟪φ,ψ⟫`.
pub fn inner_product(phi: &Field, psi: &Field) -> Result<Complex64> {
    if !same_grid(&phi.grid, &psi.grid) {
        return Err(Error::GridMismatch);
    }
    let sum: Complex64 = phi
        .values
        .iter()
        .zip(&psi.values)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(sum * phi.grid.cell_volume())
}

/// Action functional `S[φ] = ⟪φ, Ψφ⟫`.
pub fn action_value(phi: &Field, psi_op: &Operator) -> Result<Complex64> {
    let image = apply(psi_op, phi)?;
    inner_product(phi, &image)
}

/// Deterministic standard-normal field. Complex fields draw independent real
/// and imaginary parts.
pub fn sample_field(grid: &Arc<Grid>, seed: u64, kind: ScalarKind) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = match kind {
                ScalarKind::Real => 0.0,
                ScalarKind::Complex => StandardNormal.sample(&mut rng),
            };
            Complex64::new(re, im)
        })
        .collect();
    Field {
        grid: grid.clone(),
        values,
        kind,
    }
}

/// Per-sample generator: one ChaCha stream per sample index so results do
/// not depend on evaluation order.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
