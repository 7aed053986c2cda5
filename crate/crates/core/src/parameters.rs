//! Parameter tuples over a nowhere-vanishing scalar algebra.
//!
//! Sums and scalar multiples are only defined when the result stays in the
//! space; 0 is never a valid component.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::PARAM_LOG10_RANGE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    NonzeroComplex,
    PositiveReal,
    NonzeroReal,
}

impl ParamKind {
    pub fn is_real(self) -> bool {
        !matches!(self, ParamKind::NonzeroComplex)
    }

    fn check(self, index: usize, v: Complex64) -> Result<()> {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidParam(format!("component {index} is not finite")));
        }
        if v.re == 0.0 && v.im == 0.0 {
            return Err(Error::VanishingResult { index });
        }
        match self {
            ParamKind::NonzeroComplex => Ok(()),
            ParamKind::NonzeroReal if v.im == 0.0 => Ok(()),
            ParamKind::PositiveReal if v.im == 0.0 && v.re > 0.0 => Ok(()),
            _ => Err(Error::ConstraintViolation(format!(
                "component {index} = {v} is not in the {self} kind"
            ))),
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::NonzeroComplex => "nonzero-complex",
            ParamKind::PositiveReal => "positive-real",
            ParamKind::NonzeroReal => "nonzero-real",
        })
    }
}

/// `Par^ℓ`: tuples of `degree` nonzero scalars of the given kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamSpace {
    pub kind: ParamKind,
    pub degree: usize,
}

impl ParamSpace {
    pub fn new(kind: ParamKind, degree: usize) -> Self {
        Self { kind, degree }
    }

    pub fn with_degree(self, degree: usize) -> Self {
        Self { degree, ..self }
    }

    /// Every element has a square root inside the space.
    pub fn has_square_roots(&self) -> bool {
        self.kind != ParamKind::NonzeroReal
    }

    pub fn unit(&self) -> Param {
        Param {
            space: *self,
            components: vec![Complex64::new(1.0, 0.0); self.degree],
        }
    }

    /// Log-uniform magnitude, uniform phase for complex kinds, random sign
    /// for nonzero reals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Param {
        let (lo, hi) = PARAM_LOG10_RANGE;
        let components = (0..self.degree)
            .map(|_| {
                let magnitude = 10f64.powf(rng.random_range(lo..hi));
                match self.kind {
                    ParamKind::PositiveReal => Complex64::new(magnitude, 0.0),
                    ParamKind::NonzeroReal => {
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        Complex64::new(sign * magnitude, 0.0)
                    }
                    ParamKind::NonzeroComplex => Complex64::from_polar(
                        magnitude,
                        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                    ),
                }
            })
            .collect();
        Param {
            space: *self,
            components,
        }
    }
}

impl fmt::Display for ParamSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}", self.kind, self.degree)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    space: ParamSpace,
    components: Vec<Complex64>,
}

impl Param {
    pub fn new(space: ParamSpace, components: Vec<Complex64>) -> Result<Self> {
        if components.len() != space.degree {
            return Err(Error::InvalidParam(format!(
                "{} components for a degree-{} space",
                components.len(),
                space.degree
            )));
        }
        for (i, &v) in components.iter().enumerate() {
            space.kind.check(i, v)?;
        }
        Ok(Self { space, components })
    }

    pub fn real(space: ParamSpace, components: &[f64]) -> Result<Self> {
        Self::new(space, components.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// `(λ, 1, …, 1)`.
    pub fn canonical(space: ParamSpace, lambda: Complex64) -> Result<Self> {
        if space.degree == 0 {
            return if lambda == Complex64::new(1.0, 0.0) {
                Ok(space.unit())
            } else {
                Err(Error::ConstraintViolation(format!(
                    "degree-0 space only holds the empty tuple, got multiplier {lambda}"
                )))
            };
        }
        let mut components = vec![Complex64::new(1.0, 0.0); space.degree];
        components[0] = lambda;
        Self::new(space, components)
    }

    pub fn space(&self) -> ParamSpace {
        self.space
    }

    pub fn degree(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Complex64] {
        &self.components
    }

    /// Scalar multiplier of the parameter action: the product of components.
    pub fn product(&self) -> Complex64 {
        self.components.iter().product()
    }

    /// Splits into the first `at` components and the rest.
    pub fn split(&self, at: usize) -> Result<(Param, Param)> {
        if at > self.degree() {
            return Err(Error::InvalidArgument(format!(
                "cannot split degree {} at {at}",
                self.degree()
            )));
        }
        let (a, b) = self.components.split_at(at);
        Ok((
            Param {
                space: self.space.with_degree(at),
                components: a.to_vec(),
            },
            Param {
                space: self.space.with_degree(b.len()),
                components: b.to_vec(),
            },
        ))
    }

    pub fn concat(&self, other: &Param) -> Result<Param> {
        if self.space.kind != other.space.kind {
            return Err(Error::SpaceMismatch(format!("{} vs {}", self.space, other.space)));
        }
        let mut components = self.components.clone();
        components.extend_from_slice(&other.components);
        Ok(Param {
            space: self.space.with_degree(components.len()),
            components,
        })
    }

    pub fn retag(&self, space: ParamSpace) -> Result<Param> {
        Param::new(space, self.components.clone())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if v.im == 0.0 {
                write!(f, "{}", v.re)?;
            } else {
                write!(f, "{v}")?;
            }
        }
        f.write_str(")")
    }
}

fn same_space(a: &Param, b: &Param) -> Result<()> {
    if a.space == b.space {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!("{} vs {}", a.space, b.space)))
    }
}

/// Componentwise product.
pub fn nv_mul(a: &Param, b: &Param) -> Result<Param> {
    same_space(a, b)?;
    let components = a.components.iter().zip(&b.components).map(|(x, y)| x * y).collect();
    Param::new(a.space, components)
}

/// Componentwise `a·x + b·y`, defined only when no component vanishes.
pub fn nv_combine(a: Complex64, x: &Param, b: Complex64, y: &Param) -> Result<Param> {
    same_space(x, y)?;
    if a == Complex64::new(0.0, 0.0) && b == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidArgument("both coefficients are zero".into()));
    }
    let components = x.components.iter().zip(&y.components).map(|(u, v)| a * u + b * v).collect();
    Param::new(x.space, components)
}

/// `c·x`.
pub fn nv_scale(c: Complex64, x: &Param) -> Result<Param> {
    nv_combine(c, x, Complex64::new(0.0, 0.0), x)
}

/// Componentwise principal square root.
pub fn nv_sqrt(x: &Param) -> Result<Param> {
    let components = x
        .components
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if x.space.kind.is_real() {
                if v.re < 0.0 {
                    return Err(Error::NoSquareRoot { index });
                }
                Ok(Complex64::new(v.re.sqrt(), 0.0))
            } else {
                // −0 imaginary parts would select the lower branch
                let v = if v.im == 0.0 { Complex64::new(v.re, 0.0) } else { v };
                Ok(v.sqrt())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Param::new(x.space, components)
}

/// Pads with leading units up to `target_degree`.
pub fn embed_params(x: &Param, target_degree: usize) -> Result<Param> {
    if target_degree < x.degree() {
        return Err(Error::EmbedDegree {
            from: x.degree(),
            to: target_degree,
        });
    }
    let mut components = vec![Complex64::new(1.0, 0.0); target_degree - x.degree()];
    components.extend_from_slice(&x.components);
    Param::new(x.space.with_degree(target_degree), components)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn complex1() -> ParamSpace {
        ParamSpace::new(ParamKind::NonzeroComplex, 1)
    }

    #[test]
    fn multiplication_examples() {
        let s = ParamSpace::new(ParamKind::NonzeroReal, 1);
        let p = |v| Param::real(s, &[v]).unwrap();
        assert_eq!(nv_mul(&p(2.0), &p(3.0)).unwrap(), p(6.0));

        let s2 = s.with_degree(2);
        let a = Param::real(s2, &[1.0, 2.0]).unwrap();
        let b = Param::real(s2, &[3.0, 4.0]).unwrap();
        assert_eq!(nv_mul(&a, &b).unwrap(), Param::real(s2, &[3.0, 8.0]).unwrap());

        let i = Param::new(complex1(), vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(nv_mul(&i, &i).unwrap().components(), &[c(-1.0, 0.0)]);
    }

    #[test]
    fn mul_space_mismatch() {
        let a = Param::real(ParamSpace::new(ParamKind::NonzeroReal, 1), &[2.0]).unwrap();
        let b = Param::real(ParamSpace::new(ParamKind::PositiveReal, 1), &[2.0]).unwrap();
        assert!(matches!(nv_mul(&a, &b), Err(Error::SpaceMismatch(_))));
    }

    #[test]
    fn combine_examples() {
        let s = ParamSpace::new(ParamKind::NonzeroReal, 1);
        let p = |v| Param::real(s, &[v]).unwrap();
        let one = c(1.0, 0.0);
        assert_eq!(nv_combine(one, &p(2.0), one, &p(3.0)).unwrap(), p(5.0));
        assert_eq!(
            nv_combine(one, &p(2.0), one, &p(-2.0)),
            Err(Error::VanishingResult { index: 0 })
        );
        assert_eq!(nv_combine(c(0.5, 0.0), &p(4.0), c(0.0, 0.0), &p(9.0)).unwrap(), p(2.0));
    }

    #[test]
    fn positive_real_rejects_negation() {
        let s = ParamSpace::new(ParamKind::PositiveReal, 1);
        let x = Param::real(s, &[3.0]).unwrap();
        assert!(matches!(nv_scale(c(-1.0, 0.0), &x), Err(Error::ConstraintViolation(_))));
    }

    #[test]
    fn sqrt_examples() {
        let s = ParamSpace::new(ParamKind::PositiveReal, 1);
        assert_eq!(nv_sqrt(&Param::real(s, &[9.0]).unwrap()).unwrap().components(), &[c(3.0, 0.0)]);

        let neg = Param::new(complex1(), vec![c(-4.0, -0.0)]).unwrap();
        assert_eq!(nv_sqrt(&neg).unwrap().components(), &[c(0.0, 2.0)]);

        let r = ParamSpace::new(ParamKind::NonzeroReal, 1);
        assert_eq!(
            nv_sqrt(&Param::real(r, &[-4.0]).unwrap()),
            Err(Error::NoSquareRoot { index: 0 })
        );
    }

    #[test]
    fn embed_examples() {
        let s = ParamSpace::new(ParamKind::NonzeroReal, 1);
        let e = embed_params(&Param::real(s, &[5.0]).unwrap(), 3).unwrap();
        assert_eq!(e, Param::real(s.with_degree(3), &[1.0, 1.0, 5.0]).unwrap());

        let singleton = s.with_degree(0).unit();
        assert_eq!(embed_params(&singleton, 2).unwrap(), s.with_degree(2).unit());

        let x = Param::real(s.with_degree(2), &[2.0, 3.0]).unwrap();
        assert_eq!(embed_params(&x, 2).unwrap(), x);
        assert_eq!(embed_params(&x, 1), Err(Error::EmbedDegree { from: 2, to: 1 }));
    }

    #[test]
    fn zero_is_never_representable() {
        for kind in [ParamKind::NonzeroComplex, ParamKind::PositiveReal, ParamKind::NonzeroReal] {
            let s = ParamSpace::new(kind, 2);
            assert!(Param::real(s, &[1.0, 0.0]).is_err());
        }
    }

    #[test]
    fn real_kinds_reject_imaginary_parts() {
        let s = ParamSpace::new(ParamKind::NonzeroReal, 1);
        assert!(Param::new(s, vec![c(1.0, 1e-20)]).is_err());
    }

    #[test]
    fn degree_zero_space_is_a_singleton() {
        let s = ParamSpace::new(ParamKind::PositiveReal, 0);
        let mut rng = rand::rng();
        assert_eq!(s.sample(&mut rng), s.unit());
        assert_eq!(s.unit().product(), c(1.0, 0.0));
    }

    #[test]
    fn canonical_form() {
        let s = ParamSpace::new(ParamKind::NonzeroReal, 3);
        let p = Param::canonical(s, c(-2.0, 0.0)).unwrap();
        assert_eq!(p.components(), &[c(-2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(Param::canonical(s.with_degree(0), c(2.0, 0.0)).is_err());
    }

    #[test]
    fn split_and_concat_round_trip() {
        let s = ParamSpace::new(ParamKind::PositiveReal, 3);
        let p = Param::real(s, &[1.0, 2.0, 3.0]).unwrap();
        let (a, b) = p.split(1).unwrap();
        assert_eq!(a.degree(), 1);
        assert_eq!(b.components(), &[c(2.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(a.concat(&b).unwrap(), p);
    }

    #[test]
    fn samples_respect_the_kind() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for kind in [ParamKind::NonzeroComplex, ParamKind::PositiveReal, ParamKind::NonzeroReal] {
            let s = ParamSpace::new(kind, 3);
            for _ in 0..200 {
                let p = s.sample(&mut rng);
                assert!(Param::new(s, p.components().to_vec()).is_ok());
                for v in p.components() {
                    assert!(v.norm() >= 1e-2 && v.norm() <= 1e2);
                }
            }
        }
    }
}
