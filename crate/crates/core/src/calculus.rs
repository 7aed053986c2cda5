//! Parameter actions on operators, inversion of `ε ↦ ε·I`, and the
//! functional calculus `Ψ_f` with `Ψ_f∘(f(ε)Ψ) = ε·Ψ`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::background::{stream_rng, Grid};
use crate::error::{Error, Result};
use crate::operators::{compose, op_distance, random_symbol_operator, scalar_identity_extract, Operator};
use crate::parameters::{Param, ParamKind, ParamSpace};
use crate::theories::CoeffFn;
use crate::tolerance::{TAU_FC, TAU_ID};

/// `ε·Ψ = (∏ εᵢ)Ψ`.
pub fn act(eps: &Param, psi: &Operator) -> Operator {
    psi.scale(eps.product())
}

/// `op_distance((ε·Ψ)∘Φ, ε·(Ψ∘Φ))`.
pub fn check_action_compatibility(eps: &Param, psi: &Operator, phi: &Operator) -> Result<f64> {
    let lhs = compose(&act(eps, psi), phi)?;
    let rhs = act(eps, &compose(psi, phi)?);
    op_distance(&lhs, &rhs)
}

/// The scalar `λ` with `X = λ·I`, checked against the parameter kind.
pub fn identity_multiplier(x: &Operator, kind: ParamKind) -> Result<Complex64> {
    let (mut lambda, residual) = scalar_identity_extract(x);
    if residual > TAU_ID {
        return Err(Error::NotInImage { residual });
    }
    if kind.is_real() && lambda.im != 0.0 {
        if lambda.im.abs() <= TAU_ID * lambda.norm() {
            lambda = Complex64::new(lambda.re, 0.0);
        } else {
            return Err(Error::ConstraintViolation(format!(
                "multiplier {lambda} is not real"
            )));
        }
    }
    if lambda == Complex64::new(0.0, 0.0) {
        return Err(Error::ConstraintViolation("multiplier is 0".into()));
    }
    Ok(lambda)
}

/// Recovers `ε` from `X = ε·I`, returned as `(λ, 1, …, 1)`.
pub fn invert_r_identity(x: &Operator, space: ParamSpace) -> Result<Param> {
    Param::canonical(space, identity_multiplier(x, space.kind)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validity {
    Certified,
    /// `ε/f(ε)` differs between `reference` and `witness`.
    Refuted {
        reference: Param,
        reference_ratio: Complex64,
        witness: Param,
        witness_ratio: Complex64,
        residual: f64,
    },
}

#[derive(Debug, Clone)]
pub struct CalculusEntry {
    pub f: CoeffFn,
    pub space: ParamSpace,
    pub psi_f: Operator,
    pub validity: Validity,
}

impl CalculusEntry {
    pub fn is_certified(&self) -> bool {
        self.validity == Validity::Certified
    }
}

/// Relative defect of `Ψ_f∘(f(ε)Ψ) = ε·Ψ` for one pair.
pub fn functional_calculus_residual(entry: &CalculusEntry, eps: &Param, psi: &Operator) -> Result<f64> {
    let lhs = compose(&entry.psi_f, &psi.scale(entry.f.eval(eps)?))?;
    op_distance(&lhs, &act(eps, psi))
}

/// Candidate `Ψ_f = (1/f(1,…,1))·I`, certified on `samples` random pairs
/// `(ε, Ψ)` of parameters and symbol operators.
pub fn calculus_operator(
    f: &CoeffFn,
    space: ParamSpace,
    grid: &Arc<Grid>,
    samples: usize,
    seed: u64,
) -> Result<CalculusEntry> {
    let reference = space.unit();
    let reference_ratio = reference.product() / f.eval(&reference)?;
    let psi_f = Operator::scalar(grid.clone(), reference_ratio);
    let mut entry = CalculusEntry {
        f: f.clone(),
        space,
        psi_f,
        validity: Validity::Certified,
    };
    for i in 0..samples {
        let mut rng = stream_rng(seed, i as u64);
        let eps = space.sample(&mut rng);
        let psi = random_symbol_operator(grid, seed.wrapping_add(i as u64));
        let residual = functional_calculus_residual(&entry, &eps, &psi)?;
        if residual > TAU_FC {
            let witness_ratio = eps.product() / f.eval(&eps)?;
            entry.validity = Validity::Refuted {
                reference,
                reference_ratio,
                witness: eps,
                witness_ratio,
                residual,
            };
            break;
        }
    }
    Ok(entry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::make_grid;
    use crate::operators::{diff_operator, StencilSpec};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn real1() -> ParamSpace {
        ParamSpace::new(ParamKind::NonzeroReal, 1)
    }

    fn grid() -> Arc<Grid> {
        make_grid(1, &[4], &[1.0]).unwrap()
    }

    #[test]
    fn act_examples() {
        let g = grid();
        let id = Operator::identity(g.clone());
        assert_eq!(act(&Param::real(real1(), &[2.0]).unwrap(), &id).constant_symbol(), Some(c(2.0)));
        let pair = Param::real(real1().with_degree(2), &[2.0, 3.0]).unwrap();
        assert_eq!(act(&pair, &id).constant_symbol(), Some(c(6.0)));
        let lap = diff_operator(&g, &StencilSpec::laplacian(1)).unwrap();
        assert_eq!(act(&real1().with_degree(0).unit(), &lap), lap);
    }

    #[test]
    fn compatibility_with_composition() {
        let g = grid();
        let lap = diff_operator(&g, &StencilSpec::laplacian(1)).unwrap();
        let i = Param::new(ParamSpace::new(ParamKind::NonzeroComplex, 1), vec![Complex64::new(0.0, 1.0)]).unwrap();
        assert!(check_action_compatibility(&i, &lap, &lap).unwrap() <= 1e-12);
    }

    #[test]
    fn invert_r_identity_examples() {
        let g = grid();
        let three = Operator::scalar(g.clone(), c(3.0));
        assert_eq!(invert_r_identity(&three, real1()).unwrap(), Param::real(real1(), &[3.0]).unwrap());

        let lap = diff_operator(&g, &StencilSpec::laplacian(1)).unwrap();
        assert!(matches!(invert_r_identity(&lap, real1()), Err(Error::NotInImage { .. })));

        let zero = Operator::zero(g);
        assert!(matches!(invert_r_identity(&zero, real1()), Err(Error::ConstraintViolation(_))));
    }

    #[test]
    fn invert_r_identity_canonical_form() {
        let s = real1().with_degree(3);
        let x = Operator::scalar(grid(), c(-5.0));
        assert_eq!(invert_r_identity(&x, s).unwrap(), Param::real(s, &[-5.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn invert_r_identity_respects_positivity() {
        let s = ParamSpace::new(ParamKind::PositiveReal, 1);
        let x = Operator::scalar(grid(), c(-1.0));
        assert!(matches!(invert_r_identity(&x, s), Err(Error::ConstraintViolation(_))));
    }

    #[test]
    fn linear_coefficient_is_certified() {
        let entry = calculus_operator(&CoeffFn::linear(2.0), real1(), &grid(), 64, 0).unwrap();
        assert!(entry.is_certified());
        assert_eq!(entry.psi_f.constant_symbol(), Some(c(0.5)));
    }

    #[test]
    fn squared_coefficient_is_refuted() {
        let f = CoeffFn::Power { c: c(1.0), p: 2 };
        let s = ParamSpace::new(ParamKind::PositiveReal, 1);
        let entry = calculus_operator(&f, s, &grid(), 64, 0).unwrap();
        match entry.validity {
            Validity::Refuted {
                reference_ratio,
                witness,
                witness_ratio,
                ..
            } => {
                assert_eq!(reference_ratio, c(1.0));
                let w = witness.components()[0];
                assert!((witness_ratio - w.inv()).norm() < 1e-12 * witness_ratio.norm());
            }
            Validity::Certified => panic!("ε² must not admit a calculus"),
        }
    }

    #[test]
    fn unital_coefficient_is_refuted() {
        let entry = calculus_operator(&CoeffFn::Constant(c(1.0)), real1(), &grid(), 64, 0).unwrap();
        assert!(!entry.is_certified());
    }

    #[test]
    fn unital_coefficient_on_singleton_space_is_certified() {
        let s = real1().with_degree(0);
        let entry = calculus_operator(&CoeffFn::Constant(c(1.0)), s, &grid(), 64, 0).unwrap();
        assert!(entry.is_certified());
    }

    #[test]
    fn vanishing_coefficient_is_an_error() {
        let f = CoeffFn::custom("zero", |_: &Param| Complex64::new(0.0, 0.0));
        assert!(matches!(
            calculus_operator(&f, real1(), &grid(), 4, 0),
            Err(Error::VanishingCoefficient { .. })
        ));
    }
}
