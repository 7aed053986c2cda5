//! The operator algebra: Fourier multipliers and dense matrices on a grid.
//!
//! A symbol is indexed by frequency multi-index in the same row-major order
//! as fields. The forward DFT is unnormalized and the inverse divides by the
//! point count, so the symbol ≡ 1 operator is the identity.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::background::{same_grid, Field, Grid, ScalarKind};
use crate::error::{Error, Result};
use crate::tolerance::{DENSE_MAX_POINTS, NORM_FLOOR};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Symbol(Vec<Complex64>),
    Dense(DMatrix<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    grid: Arc<Grid>,
    backend: Backend,
}

impl Operator {
    pub fn from_symbol(grid: Arc<Grid>, symbol: Vec<Complex64>) -> Result<Self> {
        if symbol.len() != grid.len() {
            return Err(Error::SymbolLength {
                expected: grid.len(),
                got: symbol.len(),
            });
        }
        Ok(Self {
            grid,
            backend: Backend::Symbol(symbol),
        })
    }

    pub fn from_dense(grid: Arc<Grid>, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = grid.len();
        check_dense_size(n)?;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "dense matrix is {}x{}, grid has {n} points",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            grid,
            backend: Backend::Dense(matrix),
        })
    }

    pub fn scalar(grid: Arc<Grid>, c: Complex64) -> Self {
        let n = grid.len();
        Self {
            grid,
            backend: Backend::Symbol(vec![c; n]),
        }
    }

    pub fn identity(grid: Arc<Grid>) -> Self {
        Self::scalar(grid, ONE)
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        Self::scalar(grid, ZERO)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn symbol(&self) -> Option<&[Complex64]> {
        match &self.backend {
            Backend::Symbol(s) => Some(s),
            Backend::Dense(_) => None,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense(_))
    }

    /// The common value of a constant symbol.
    pub fn constant_symbol(&self) -> Option<Complex64> {
        let s = self.symbol()?;
        let first = s[0];
        s.iter().all(|&v| v == first).then_some(first)
    }

    /// Frobenius norm. For symbols this is the 2-norm of the multiplier,
    /// since the normalized DFT is unitary.
    pub fn frobenius_norm(&self) -> f64 {
        match &self.backend {
            Backend::Symbol(s) => s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
            Backend::Dense(m) => m.norm(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Operator {
        let backend = match &self.backend {
            Backend::Symbol(s) => Backend::Symbol(s.iter().map(|v| c * v).collect()),
            Backend::Dense(m) => Backend::Dense(m * c),
        };
        Operator {
            grid: self.grid.clone(),
            backend,
        }
    }

    pub fn adjoint(&self) -> Operator {
        let backend = match &self.backend {
            Backend::Symbol(s) => Backend::Symbol(s.iter().map(|v| v.conj()).collect()),
            Backend::Dense(m) => Backend::Dense(m.adjoint()),
        };
        Operator {
            grid: self.grid.clone(),
            backend,
        }
    }

    /// Dense matrix of the operator. Symbols become block-circulant matrices.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        match &self.backend {
            Backend::Dense(m) => Ok(m.clone()),
            Backend::Symbol(s) => {
                let grid = &self.grid;
                let n = grid.len();
                check_dense_size(n)?;
                // M[x,y] = kernel(x − y) with kernel = inverse DFT of the symbol
                let mut kernel = s.clone();
                fft_nd(grid, &mut kernel, FftDirection::Inverse);
                let inv_n = 1.0 / n as f64;
                let coords: Vec<Vec<usize>> = (0..n).map(|i| grid.unravel(i)).collect();
                let strides = grid.strides();
                Ok(DMatrix::from_fn(n, n, |x, y| {
                    let flat: usize = coords[x]
                        .iter()
                        .zip(&coords[y])
                        .zip(grid.sizes())
                        .zip(&strides)
                        .map(|(((&a, &b), &size), &stride)| ((a + size - b) % size) * stride)
                        .sum();
                    kernel[flat] * inv_n
                }))
            }
        }
    }

    pub fn to_dense_operator(&self) -> Result<Operator> {
        Operator::from_dense(self.grid.clone(), self.to_dense()?)
    }
}

fn check_dense_size(n: usize) -> Result<()> {
    if n > DENSE_MAX_POINTS {
        return Err(Error::DenseTooLarge {
            points: n,
            max: DENSE_MAX_POINTS,
        });
    }
    Ok(())
}

fn check_grid(a: &Operator, b: &Operator) -> Result<()> {
    if same_grid(&a.grid, &b.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Constant-coefficient differential operator `Σ a_α ∂^α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub terms: Vec<(Vec<usize>, Complex64)>,
}

impl StencilSpec {
    pub fn new(terms: Vec<(Vec<usize>, Complex64)>) -> Self {
        Self { terms }
    }

    pub fn term(mut self, alpha: Vec<usize>, coeff: Complex64) -> Self {
        self.terms.push((alpha, coeff));
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(vec![(vec![0; dim], ONE)])
    }

    /// `Δ = Σ_j ∂_j²`.
    pub fn laplacian(dim: usize) -> Self {
        let terms = (0..dim)
            .map(|j| {
                let mut alpha = vec![0; dim];
                alpha[j] = 2;
                (alpha, ONE)
            })
            .collect();
        Self::new(terms)
    }

    /// `I − Δ`.
    pub fn shifted_laplacian(dim: usize) -> Self {
        let mut spec = Self::identity(dim);
        for (alpha, c) in Self::laplacian(dim).terms {
            spec.terms.push((alpha, -c));
        }
        spec
    }

    /// `∂_axis^order`.
    pub fn partial(dim: usize, axis: usize, order: usize) -> Self {
        let mut alpha = vec![0; dim];
        if axis < dim {
            alpha[axis] = order;
        }
        Self::new(vec![(alpha, ONE)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Central first difference and the three-point second difference.
    #[default]
    Central,
    /// Exact derivatives of the trigonometric interpolant.
    Spectral,
}

/// Symbol of `∂^order` along one axis at frequency `k`.
fn derivative_symbol(scheme: DerivativeScheme, k: usize, n: usize, h: f64, order: usize) -> Complex64 {
    if order == 0 {
        return ONE;
    }
    match scheme {
        DerivativeScheme::Central => {
            let s1 = Complex64::new(0.0, (2.0 * PI * k as f64 / n as f64).sin() / h);
            let half = (PI * k as f64 / n as f64).sin();
            let s2 = Complex64::new(-4.0 * half * half / (h * h), 0.0);
            let even = s2.powu((order / 2) as u32);
            if order % 2 == 0 {
                even
            } else {
                s1 * even
            }
        }
        DerivativeScheme::Spectral => {
            if order % 2 == 1 && n % 2 == 0 && k == n / 2 {
                return ZERO;
            }
            let wrapped = if 2 * k <= n { k as f64 } else { k as f64 - n as f64 };
            let l = n as f64 * h;
            Complex64::new(0.0, 2.0 * PI * wrapped / l).powu(order as u32)
        }
    }
}

pub fn diff_operator(grid: &Arc<Grid>, spec: &StencilSpec) -> Result<Operator> {
    diff_operator_with(grid, spec, DerivativeScheme::Central)
}

pub fn diff_operator_with(
    grid: &Arc<Grid>,
    spec: &StencilSpec,
    scheme: DerivativeScheme,
) -> Result<Operator> {
    for (alpha, _) in &spec.terms {
        if alpha.len() != grid.dim() {
            return Err(Error::MultiIndexLength {
                expected: grid.dim(),
                got: alpha.len(),
            });
        }
    }
    let symbol = (0..grid.len())
        .map(|flat| {
            let k = grid.unravel(flat);
            spec.terms
                .iter()
                .map(|(alpha, a)| {
                    let mut v = *a;
                    for (axis, &order) in alpha.iter().enumerate() {
                        v *= derivative_symbol(
                            scheme,
                            k[axis],
                            grid.sizes()[axis],
                            grid.spacing()[axis],
                            order,
                        );
                    }
                    v
                })
                .sum()
        })
        .collect();
    Operator::from_symbol(grid.clone(), symbol)
}

/// `aΨ + bΦ`. A dense operand promotes the other to dense.
pub fn combine(a: Complex64, psi: &Operator, b: Complex64, phi: &Operator) -> Result<Operator> {
    check_grid(psi, phi)?;
    let backend = match (&psi.backend, &phi.backend) {
        (Backend::Symbol(s), Backend::Symbol(t)) => {
            Backend::Symbol(s.iter().zip(t).map(|(x, y)| a * x + b * y).collect())
        }
        _ => Backend::Dense(psi.to_dense()? * a + phi.to_dense()? * b),
    };
    Ok(Operator {
        grid: psi.grid.clone(),
        backend,
    })
}

pub fn add(psi: &Operator, phi: &Operator) -> Result<Operator> {
    combine(ONE, psi, ONE, phi)
}

/// `Ψ∘Φ`.
pub fn compose(psi: &Operator, phi: &Operator) -> Result<Operator> {
    check_grid(psi, phi)?;
    let backend = match (&psi.backend, &phi.backend) {
        (Backend::Symbol(s), Backend::Symbol(t)) => {
            Backend::Symbol(s.iter().zip(t).map(|(x, y)| x * y).collect())
        }
        _ => Backend::Dense(psi.to_dense()? * phi.to_dense()?),
    };
    Ok(Operator {
        grid: psi.grid.clone(),
        backend,
    })
}

/// `Ψ^l`, with `Ψ⁰ = I`.
pub fn pow(psi: &Operator, l: u32) -> Result<Operator> {
    match &psi.backend {
        Backend::Symbol(s) => Operator::from_symbol(
            psi.grid.clone(),
            s.iter().map(|v| if l == 0 { ONE } else { v.powu(l) }).collect(),
        ),
        Backend::Dense(m) => {
            let n = m.nrows();
            let mut acc = DMatrix::<Complex64>::identity(n, n);
            for _ in 0..l {
                acc = &acc * m;
            }
            Operator::from_dense(psi.grid.clone(), acc)
        }
    }
}

pub fn apply(psi: &Operator, phi: &Field) -> Result<Field> {
    if !same_grid(&psi.grid, phi.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = phi.grid().clone();
    match &psi.backend {
        Backend::Symbol(s) => {
            if let Some(c) = psi.constant_symbol() {
                let kind = if phi.kind() == ScalarKind::Real && c.im == 0.0 {
                    ScalarKind::Real
                } else {
                    ScalarKind::Complex
                };
                let values = phi.values().iter().map(|v| c * v).collect();
                return Ok(Field::from_parts(grid, values, kind));
            }
            let mut data = phi.values().to_vec();
            fft_nd(&grid, &mut data, FftDirection::Forward);
            let inv_n = 1.0 / grid.len() as f64;
            for (v, sigma) in data.iter_mut().zip(s) {
                *v *= sigma * inv_n;
            }
            fft_nd(&grid, &mut data, FftDirection::Inverse);
            Ok(Field::from_parts(grid, data, ScalarKind::Complex))
        }
        Backend::Dense(m) => {
            let v = m * DVector::from_column_slice(phi.values());
            Ok(Field::from_parts(grid, v.as_slice().to_vec(), ScalarKind::Complex))
        }
    }
}

/// Verified right inverse `R` with `Ψ∘R = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct RightInverse {
    pub of: Operator,
    pub inverse: Operator,
}

/// Reciprocal symbol, or the pseudo-inverse for dense operators, provided
/// the smallest symbol modulus (singular value) exceeds `tau_inv`.
pub fn right_inverse(psi: &Operator, tau_inv: f64) -> Result<RightInverse> {
    let inverse = match &psi.backend {
        Backend::Symbol(s) => {
            let min = s.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
            if !(min > tau_inv) {
                return Err(Error::NotRightInvertible { min_modulus: min });
            }
            Operator::from_symbol(psi.grid.clone(), s.iter().map(|v| v.inv()).collect())?
        }
        Backend::Dense(m) => {
            let svd = m.clone().svd(true, true);
            let min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min > tau_inv) {
                return Err(Error::NotRightInvertible { min_modulus: min });
            }
            let pinv = svd
                .pseudo_inverse(0.0)
                .map_err(|_| Error::NotRightInvertible { min_modulus: min })?;
            Operator::from_dense(psi.grid.clone(), pinv)?
        }
    };
    Ok(RightInverse {
        of: psi.clone(),
        inverse,
    })
}

/// Best scalar `λ` with `X ≈ λI` and the relative residual `‖X − λI‖_F / ‖X‖_F`.
pub fn scalar_identity_extract(x: &Operator) -> (Complex64, f64) {
    match &x.backend {
        Backend::Symbol(s) => {
            if let Some(c) = x.constant_symbol() {
                return (c, 0.0);
            }
            let lambda = s.iter().sum::<Complex64>() / s.len() as f64;
            let diff = s.iter().map(|v| (v - lambda).norm_sqr()).sum::<f64>().sqrt();
            (lambda, diff / x.frobenius_norm().max(NORM_FLOOR))
        }
        Backend::Dense(m) => {
            let n = m.nrows();
            let d0 = m[(0, 0)];
            let exact = (0..n).all(|j| (0..n).all(|i| m[(i, j)] == if i == j { d0 } else { ZERO }));
            if exact {
                return (d0, 0.0);
            }
            let lambda = m.trace() / n as f64;
            let mut diff = m.clone();
            for i in 0..n {
                diff[(i, i)] -= lambda;
            }
            (lambda, diff.norm() / m.norm().max(NORM_FLOOR))
        }
    }
}

/// `‖Ψ − Ψ*‖_F / ‖Ψ‖_F`.
pub fn self_adjointness_defect(psi: &Operator) -> f64 {
    let norm = psi.frobenius_norm().max(NORM_FLOOR);
    match &psi.backend {
        Backend::Symbol(s) => {
            s.iter().map(|v| (v - v.conj()).norm_sqr()).sum::<f64>().sqrt() / norm
        }
        Backend::Dense(m) => (m - m.adjoint()).norm() / norm,
    }
}

/// `‖Ψ − Φ‖_F / max(‖Ψ‖_F, ‖Φ‖_F)`.
pub fn op_distance(psi: &Operator, phi: &Operator) -> Result<f64> {
    check_grid(psi, phi)?;
    let diff = combine(ONE, psi, -ONE, phi)?;
    let scale = psi.frobenius_norm().max(phi.frobenius_norm()).max(NORM_FLOOR);
    Ok(diff.frobenius_norm() / scale)
}

/// Symbol with i.i.d. complex standard-normal entries.
pub fn random_symbol_operator(grid: &Arc<Grid>, seed: u64) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbol = (0..grid.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    Operator {
        grid: grid.clone(),
        backend: Backend::Symbol(symbol),
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized N-d DFT, one axis at a time.
fn fft_nd(grid: &Grid, data: &mut [Complex64], direction: FftDirection) {
    let strides = grid.strides();
    let total = data.len();
    for (axis, &n) in grid.sizes().iter().enumerate() {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction));
        let stride = strides[axis];
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let block = n * stride;
        let mut line = vec![ZERO; n];
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
    }
}
