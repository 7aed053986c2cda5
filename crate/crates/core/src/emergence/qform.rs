//! The quadratic form `q_T(φ) = ⟪φ, Tφ⟫` determines a self-adjoint (or
//! coercive) `T`, so `q_T ≡ 0` decides `T = 0`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::background::Field;
use crate::error::{Error, Result};
use crate::operators::{apply, self_adjointness_defect, Operator};
use crate::tolerance::QFORM_MAX_POINTS;

const SELF_ADJOINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QformReport {
    /// `T` rebuilt entrywise from values of `q_T`.
    pub reconstruction: DMatrix<Complex64>,
    /// `‖T_rec − T‖_F / ‖T‖_F`.
    pub reconstruction_error: f64,
    /// Largest `|q_T|` over basis fields and polarization pairs.
    pub max_abs_q: f64,
    /// `‖T_rec‖_F`.
    pub norm: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Images `T e_j` of the basis fields, as columns.
fn basis_images(t: &Operator) -> Result<Vec<Vec<Complex64>>> {
    let grid = t.grid();
    let n = grid.len();
    if n > QFORM_MAX_POINTS {
        return Err(Error::DenseTooLarge {
            points: n,
            max: QFORM_MAX_POINTS,
        });
    }
    (0..n)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            Ok(apply(t, &Field::complex(grid.clone(), e)?)?.into_values())
        })
        .collect()
}

/// `q_T(e_i + c·e_j)` from precomputed columns.
fn q_pair(cols: &[Vec<Complex64>], vol: f64, i: usize, j: usize, c: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let x = if i == j { vec![(i, one + c)] } else { vec![(i, one), (j, c)] };
    let q: Complex64 = x
        .iter()
        .map(|&(m, xm)| xm.conj() * x.iter().map(|&(k, xk)| xk * cols[k][m]).sum::<Complex64>())
        .sum();
    q * vol
}

/// Polarization `B(e_i, e_j) = ¼ Σₖ i^{−k} q(e_i + iᵏ e_j)`, with
/// `T_ij = B(e_i, e_j)/vol`. Also returns the largest `|q|` evaluated.
fn polarize(t: &Operator) -> Result<(DMatrix<Complex64>, f64)> {
    let cols = basis_images(t)?;
    let n = cols.len();
    let vol = t.grid().cell_volume();
    let powers = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut max_q: f64 = 0.0;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut b = Complex64::new(0.0, 0.0);
            for ik in powers {
                let q = q_pair(&cols, vol, i, j, ik);
                max_q = max_q.max(q.norm());
                b += ik.conj() * q;
            }
            m[(i, j)] = b / (4.0 * vol);
        }
    }
    Ok((m, max_q))
}

/// `T` reconstructed from its quadratic form alone.
pub fn polarization_matrix(t: &Operator) -> Result<DMatrix<Complex64>> {
    Ok(polarize(t)?.0)
}

/// Passes iff the operator recovered from `q_T` has `‖·‖_F ≤ tol`. Requires
/// `T` self-adjoint unless `coercive` is declared.
pub fn qform_zero_test(t: &Operator, tol: f64, coercive: bool) -> Result<QformReport> {
    let defect = self_adjointness_defect(t);
    if defect > SELF_ADJOINT_TOL && !coercive {
        return Err(Error::NotSelfAdjoint { defect });
    }
    let (reconstruction, max_abs_q) = polarize(t)?;
    let dense = t.to_dense()?;
    let norm = reconstruction.norm();
    let reconstruction_error = (&reconstruction - &dense).norm() / dense.norm().max(f64::MIN_POSITIVE);
    Ok(QformReport {
        reconstruction,
        reconstruction_error,
        max_abs_q,
        norm,
        tolerance: tol,
        passed: norm <= tol,
    })
}
