//! Parameterized theories `ε ↦ Ψ_ε` and their homomorphy flags.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::background::{same_grid, stream_rng, Grid};
use crate::error::{Error, Result};
use crate::operators::{add, combine, compose, op_distance, pow, Backend, Operator};
use crate::parameters::{nv_combine, nv_mul, Param, ParamKind, ParamSpace};
use crate::tolerance::{DEFAULT_HOMOMORPHY_SAMPLES, TAU_HOMOMORPHY};

type ScalarFn = Arc<dyn Fn(&Param) -> Complex64 + Send + Sync>;
type InverseFn = Arc<dyn Fn(Complex64, ParamSpace) -> Result<Param> + Send + Sync>;

/// A user-supplied coefficient function.
#[derive(Clone)]
pub struct CustomCoeff {
    pub tag: String,
    pub f: ScalarFn,
    /// Returns some `δ` with `f(δ) = value`, when one exists.
    pub inverse: Option<InverseFn>,
}

/// Nowhere-vanishing coefficient `f(δ)` of a monomial.
#[derive(Clone)]
pub enum CoeffFn {
    /// `c·∏δᵢ`
    Linear(Complex64),
    /// `c·(∏δᵢ)^p`
    Power { c: Complex64, p: i32 },
    /// `c`, independent of `δ`
    Constant(Complex64),
    Custom(CustomCoeff),
}

impl CoeffFn {
    pub fn linear(c: f64) -> Self {
        CoeffFn::Linear(Complex64::new(c, 0.0))
    }

    pub fn custom(
        tag: impl Into<String>,
        f: impl Fn(&Param) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        CoeffFn::Custom(CustomCoeff {
            tag: tag.into(),
            f: Arc::new(f),
            inverse: None,
        })
    }

    pub fn with_inverse(
        self,
        inverse: impl Fn(Complex64, ParamSpace) -> Result<Param> + Send + Sync + 'static,
    ) -> Self {
        match self {
            CoeffFn::Custom(c) => CoeffFn::Custom(CustomCoeff {
                inverse: Some(Arc::new(inverse)),
                ..c
            }),
            other => other,
        }
    }

    /// Checks the nonzero-coefficient invariant of the built-in kinds.
    pub fn validate(&self) -> Result<()> {
        let c = match self {
            CoeffFn::Linear(c) | CoeffFn::Power { c, .. } | CoeffFn::Constant(c) => *c,
            CoeffFn::Custom(_) => return Ok(()),
        };
        if c == Complex64::new(0.0, 0.0) || !c.re.is_finite() || !c.im.is_finite() {
            return Err(Error::InvalidArgument(format!("coefficient {self} must be finite and nonzero")));
        }
        Ok(())
    }

    pub fn eval(&self, delta: &Param) -> Result<Complex64> {
        let p = delta.product();
        let v = match self {
            CoeffFn::Linear(c) => c * p,
            CoeffFn::Power { c, p: e } => c * p.powi(*e),
            CoeffFn::Constant(c) => *c,
            CoeffFn::Custom(custom) => (custom.f)(delta),
        };
        if v == Complex64::new(0.0, 0.0) || !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::VanishingCoefficient {
                eps: delta.components().to_vec(),
            });
        }
        Ok(v)
    }

    /// A parameter `δ` in `space` with `f(δ) = value`, in canonical form
    /// `(λ, 1, …, 1)` for the built-in kinds.
    pub fn invert(&self, value: Complex64, space: ParamSpace) -> Result<Param> {
        match self {
            CoeffFn::Linear(c) => Param::canonical(space, value / c),
            CoeffFn::Power { c, p } => {
                if *p == 0 {
                    return Err(Error::NotInvertible(self.to_string()));
                }
                let w = value / c;
                let root = if space.kind.is_real() {
                    if w.im != 0.0 {
                        return Err(Error::ConstraintViolation(format!(
                            "{self} takes value {value} outside the real kind"
                        )));
                    }
                    let magnitude = w.re.abs().powf(1.0 / *p as f64);
                    if w.re > 0.0 {
                        magnitude
                    } else if p % 2 != 0 && space.kind == ParamKind::NonzeroReal {
                        -magnitude
                    } else {
                        return Err(Error::ConstraintViolation(format!(
                            "{self} never takes value {value} on {space}"
                        )));
                    }
                    .into()
                } else {
                    let w = if w.im == 0.0 { Complex64::new(w.re, 0.0) } else { w };
                    w.powf(1.0 / *p as f64)
                };
                Param::canonical(space, root)
            }
            CoeffFn::Constant(_) => Err(Error::NotInvertible(self.to_string())),
            CoeffFn::Custom(custom) => match &custom.inverse {
                Some(inv) => inv(value, space),
                None => Err(Error::NotInvertible(custom.tag.clone())),
            },
        }
    }

    /// `Some(c)` when `f(δ) = c·δ` on degree-1 slots.
    pub fn linear_coefficient(&self) -> Option<Complex64> {
        match self {
            CoeffFn::Linear(c) => Some(*c),
            CoeffFn::Power { c, p: 1 } => Some(*c),
            _ => None,
        }
    }
}

fn fmt_scalar(f: &mut fmt::Formatter<'_>, c: Complex64) -> fmt::Result {
    if c.im == 0.0 {
        write!(f, "{}", c.re)
    } else {
        write!(f, "({c})")
    }
}

impl fmt::Display for CoeffFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffFn::Linear(c) => {
                fmt_scalar(f, *c)?;
                f.write_str("·δ")
            }
            CoeffFn::Power { c, p } => {
                fmt_scalar(f, *c)?;
                write!(f, "·δ^{p}")
            }
            CoeffFn::Constant(c) => fmt_scalar(f, *c),
            CoeffFn::Custom(custom) => f.write_str(&custom.tag),
        }
    }
}

impl fmt::Debug for CoeffFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoeffFn({self})")
    }
}

/// One monomial `f(δ_slot)·Ψ^α` of a polynomial.
#[derive(Debug, Clone)]
pub struct PolyTerm {
    pub exponents: Vec<u32>,
    pub coeff: CoeffFn,
    pub slot: usize,
}

impl PolyTerm {
    pub fn new(exponents: Vec<u32>, coeff: CoeffFn, slot: usize) -> Self {
        Self {
            exponents,
            coeff,
            slot,
        }
    }
}

/// Polynomial in operator variables with parameter-valued coefficients.
/// Each term reads its coefficient from one slot of `slot_degree` components.
#[derive(Debug, Clone)]
pub struct Poly {
    variables: Vec<Operator>,
    terms: Vec<PolyTerm>,
    slot_degree: usize,
    slot_count: usize,
    kind: ParamKind,
    monomials: Vec<Operator>,
}

impl Poly {
    pub fn new(
        variables: Vec<Operator>,
        terms: Vec<PolyTerm>,
        slot_degree: usize,
        kind: ParamKind,
    ) -> Result<Self> {
        let first = variables
            .first()
            .ok_or_else(|| Error::InconsistentPoly("at least one variable is required".into()))?;
        if variables.iter().any(|v| !same_grid(v.grid(), first.grid())) {
            return Err(Error::GridMismatch);
        }
        if terms.is_empty() {
            return Err(Error::InconsistentPoly("no terms".into()));
        }
        let r = variables.len();
        for (i, t) in terms.iter().enumerate() {
            if t.exponents.len() != r {
                return Err(Error::InconsistentPoly(format!(
                    "term {i} has {} exponents for {r} variables",
                    t.exponents.len()
                )));
            }
            t.coeff.validate()?;
        }
        let slot_count = terms.iter().map(|t| t.slot).max().unwrap_or(0) + 1;
        if let Some(unused) = (0..slot_count).find(|s| terms.iter().all(|t| t.slot != *s)) {
            return Err(Error::InconsistentPoly(format!("slot {unused} is not used by any term")));
        }
        let monomials = terms
            .iter()
            .map(|t| monomial_operator(&variables, &t.exponents))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variables,
            terms,
            slot_degree,
            slot_count,
            kind,
            monomials,
        })
    }

    /// One slot per term, in term order.
    pub fn per_term_slots(
        variables: Vec<Operator>,
        terms: Vec<(Vec<u32>, CoeffFn)>,
        slot_degree: usize,
        kind: ParamKind,
    ) -> Result<Self> {
        let terms = terms
            .into_iter()
            .enumerate()
            .map(|(slot, (exponents, coeff))| PolyTerm::new(exponents, coeff, slot))
            .collect();
        Self::new(variables, terms, slot_degree, kind)
    }

    pub fn variables(&self) -> &[Operator] {
        &self.variables
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }

    pub fn slot_degree(&self) -> usize {
        self.slot_degree
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.variables[0].grid()
    }

    /// `Ψ^α` of each term, in term order.
    pub fn monomials(&self) -> &[Operator] {
        &self.monomials
    }

    pub fn space(&self) -> ParamSpace {
        ParamSpace::new(self.kind, self.slot_count * self.slot_degree)
    }

    pub fn slot_space(&self) -> ParamSpace {
        ParamSpace::new(self.kind, self.slot_degree)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exponents.iter().sum()).max().unwrap_or(0)
    }

    /// The `slot`-th block of `delta`.
    pub fn slot_param(&self, delta: &Param, slot: usize) -> Result<Param> {
        let start = slot * self.slot_degree;
        Param::new(
            self.slot_space(),
            delta.components()[start..start + self.slot_degree].to_vec(),
        )
    }

    pub fn eval(&self, delta: &Param) -> Result<Operator> {
        let mut acc = Operator::zero(self.grid().clone());
        for (term, mono) in self.terms.iter().zip(&self.monomials) {
            let c = term.coeff.eval(&self.slot_param(delta, term.slot)?)?;
            acc = combine(Complex64::new(1.0, 0.0), &acc, c, mono)?;
        }
        Ok(acc)
    }

    /// Rank of the distinct monomials `{Ψ^α}` as vectors.
    pub fn independence_report(&self) -> IndependenceReport {
        let mut distinct: Vec<&Vec<u32>> = Vec::new();
        let mut columns: Vec<&Operator> = Vec::new();
        for (t, m) in self.terms.iter().zip(&self.monomials) {
            if !distinct.contains(&&t.exponents) {
                distinct.push(&t.exponents);
                columns.push(m);
            }
        }
        let vectors: Vec<Vec<Complex64>> = columns.iter().map(|op| vectorize(op)).collect();
        let rows = vectors[0].len();
        let matrix = DMatrix::from_fn(rows, vectors.len(), |i, j| vectors[j][i]);
        let singular_values: Vec<f64> = matrix.singular_values().iter().cloned().collect();
        let largest = singular_values.iter().cloned().fold(0.0, f64::max);
        let rank = singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * largest.max(f64::MIN_POSITIVE))
            .count();
        IndependenceReport {
            monomials: vectors.len(),
            rank,
            singular_values,
        }
    }
}

pub(crate) fn vectorize(op: &Operator) -> Vec<Complex64> {
    match op.backend() {
        Backend::Symbol(s) => s.clone(),
        Backend::Dense(m) => m.as_slice().to_vec(),
    }
}

/// `Ψ₁^{α₁}∘…∘Ψ_r^{α_r}`.
pub fn monomial_operator(variables: &[Operator], exponents: &[u32]) -> Result<Operator> {
    let mut acc = Operator::identity(variables[0].grid().clone());
    for (v, &e) in variables.iter().zip(exponents) {
        if e > 0 {
            acc = compose(&acc, &pow(v, e)?)?;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    pub monomials: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl IndependenceReport {
    pub fn full_rank(&self) -> bool {
        self.rank == self.monomials
    }
}

#[derive(Debug, Clone)]
pub enum Structure {
    /// Degree 0: the same operator for the only parameter.
    Constant(Operator),
    /// `ε·Ψ₀`
    Scaling(Operator),
    /// `g(δ)·Ψ^power`
    Monomial {
        g: CoeffFn,
        psi: Operator,
        power: u32,
        psi_pow: Operator,
    },
    Polynomial(Poly),
    /// `c·S`
    Scaled { c: Complex64, inner: Theory },
    /// `Ψ_(δ,κ) = A_δ + B_κ`
    Sum(Theory, Theory),
    /// `Ψ_(δ₁,…,δ_k) = A₁,δ₁ ∘ … ∘ A_k,δ_k`
    Composition(Vec<Theory>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomomorphyWitness {
    pub a: Param,
    pub b: Param,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlagState {
    Unchecked,
    Certified,
    Refuted(HomomorphyWitness),
}

impl FlagState {
    pub fn is_certified(&self) -> bool {
        matches!(self, FlagState::Certified)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomomorphyReport {
    pub additive: FlagState,
    pub multiplicative: FlagState,
}

struct Inner {
    id: String,
    space: ParamSpace,
    grid: Arc<Grid>,
    structure: Structure,
    flags: OnceLock<HomomorphyReport>,
}

/// A parameterized theory. Cheap to clone; clones share flags and identity.
#[derive(Clone)]
pub struct Theory {
    inner: Arc<Inner>,
}

impl fmt::Debug for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Theory")
            .field("id", &self.inner.id)
            .field("space", &self.inner.space)
            .finish_non_exhaustive()
    }
}

impl Theory {
    fn build(id: String, space: ParamSpace, grid: Arc<Grid>, structure: Structure) -> Self {
        Self {
            inner: Arc::new(Inner {
                id,
                space,
                grid,
                structure,
                flags: OnceLock::new(),
            }),
        }
    }

    /// Same theory under a new id. Computed flags carry over.
    pub fn named(&self, id: impl Into<String>) -> Theory {
        let t = Theory::build(
            id.into(),
            self.inner.space,
            self.inner.grid.clone(),
            self.inner.structure.clone(),
        );
        if let Some(flags) = self.inner.flags.get() {
            let _ = t.inner.flags.set(flags.clone());
        }
        t
    }

    pub fn id(&self) -> &str {
        &self.inner.id
    }

    pub fn space(&self) -> ParamSpace {
        self.inner.space
    }

    pub fn degree(&self) -> usize {
        self.inner.space.degree
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.inner.grid
    }

    pub fn structure(&self) -> &Structure {
        &self.inner.structure
    }

    pub fn ptr_eq(&self, other: &Theory) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Homomorphy flags, checked on first access with the default sample
    /// budget and seed 0.
    pub fn flags(&self) -> &HomomorphyReport {
        self.inner
            .flags
            .get_or_init(|| homomorphy_check(self, DEFAULT_HOMOMORPHY_SAMPLES, 0))
    }

    /// Flags without triggering a check.
    pub fn flags_status(&self) -> HomomorphyReport {
        self.inner.flags.get().cloned().unwrap_or(HomomorphyReport {
            additive: FlagState::Unchecked,
            multiplicative: FlagState::Unchecked,
        })
    }

    /// Whether every operator of the theory is a symbol.
    pub fn is_symbolic(&self) -> bool {
        match &self.inner.structure {
            Structure::Constant(op) | Structure::Scaling(op) => !op.is_dense(),
            Structure::Monomial { psi_pow, .. } => !psi_pow.is_dense(),
            Structure::Polynomial(p) => p.monomials().iter().all(|m| !m.is_dense()),
            Structure::Scaled { inner, .. } => inner.is_symbolic(),
            Structure::Sum(a, b) => a.is_symbolic() && b.is_symbolic(),
            Structure::Composition(parts) => parts.iter().all(Theory::is_symbolic),
        }
    }

    pub fn op_map(&self, eps: &Param) -> Result<Operator> {
        if eps.space() != self.inner.space {
            return Err(Error::SpaceMismatch(format!(
                "theory `{}` expects {}, got {}",
                self.inner.id,
                self.inner.space,
                eps.space()
            )));
        }
        match &self.inner.structure {
            Structure::Constant(op) => Ok(op.clone()),
            Structure::Scaling(op) => Ok(op.scale(eps.product())),
            Structure::Monomial { g, psi_pow, .. } => Ok(psi_pow.scale(g.eval(eps)?)),
            Structure::Polynomial(p) => p.eval(eps),
            Structure::Scaled { c, inner } => Ok(inner.op_map(eps)?.scale(*c)),
            Structure::Sum(a, b) => {
                let (x, y) = eps.split(a.degree())?;
                add(&a.op_map(&x)?, &b.op_map(&y)?)
            }
            Structure::Composition(parts) => {
                let mut rest = eps.clone();
                let mut acc: Option<Operator> = None;
                for part in parts {
                    let (head, tail) = rest.split(part.degree())?;
                    let op = part.op_map(&head)?;
                    acc = Some(match acc {
                        None => op,
                        Some(prev) => compose(&prev, &op)?,
                    });
                    rest = tail;
                }
                Ok(acc.unwrap_or_else(|| Operator::identity(self.inner.grid.clone())))
            }
        }
    }
}

/// Degree-0 theory with a fixed operator.
pub fn constant_theory(kind: ParamKind, op: Operator) -> Theory {
    let grid = op.grid().clone();
    Theory::build("constant".into(), ParamSpace::new(kind, 0), grid, Structure::Constant(op))
}

/// `Ψ_ε = ε·Ψ₀`. Homomorphy flags are checked immediately.
pub fn scaling_theory(space: ParamSpace, psi0: Operator) -> Result<Theory> {
    if space.degree == 0 {
        return Err(Error::InvalidArgument("scaling theories need degree ≥ 1".into()));
    }
    let grid = psi0.grid().clone();
    let t = Theory::build("scaling".into(), space, grid, Structure::Scaling(psi0));
    t.flags();
    Ok(t)
}

/// `Ψ_δ = g(δ)·Ψ^power`.
pub fn monomial_theory(g: CoeffFn, psi: Operator, power: u32, space: ParamSpace) -> Result<Theory> {
    g.validate()?;
    let psi_pow = pow(&psi, power)?;
    let grid = psi.grid().clone();
    Ok(Theory::build(
        "monomial".into(),
        space,
        grid,
        Structure::Monomial {
            g,
            psi,
            power,
            psi_pow,
        },
    ))
}

pub fn polynomial_theory(poly: Poly) -> Theory {
    let grid = poly.grid().clone();
    Theory::build("polynomial".into(), poly.space(), grid, Structure::Polynomial(poly))
}

/// `c·S`.
pub fn scaled_theory(c: Complex64, inner: &Theory) -> Result<Theory> {
    if c == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidArgument("scale factor must be nonzero".into()));
    }
    Ok(Theory::build(
        format!("scaled({})", inner.id()),
        inner.space(),
        inner.grid().clone(),
        Structure::Scaled {
            c,
            inner: inner.clone(),
        },
    ))
}

fn check_pair(a: &Theory, b: &Theory) -> Result<()> {
    if !same_grid(a.grid(), b.grid()) {
        return Err(Error::GridMismatch);
    }
    if a.space().kind != b.space().kind {
        return Err(Error::SpaceMismatch(format!("{} vs {}", a.space(), b.space())));
    }
    Ok(())
}

pub fn sum_theories(a: &Theory, b: &Theory) -> Result<Theory> {
    check_pair(a, b)?;
    Ok(Theory::build(
        format!("({} + {})", a.id(), b.id()),
        a.space().with_degree(a.degree() + b.degree()),
        a.grid().clone(),
        Structure::Sum(a.clone(), b.clone()),
    ))
}

pub fn compose_theories(a: &Theory, b: &Theory) -> Result<Theory> {
    composition_of(&[a.clone(), b.clone()])
}

/// `A₁∘…∘A_k` with parameters concatenated in order.
pub fn composition_of(parts: &[Theory]) -> Result<Theory> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty composition".into()))?;
    for p in &parts[1..] {
        check_pair(first, p)?;
    }
    let degree = parts.iter().map(Theory::degree).sum();
    let id = parts.iter().map(|p| p.id()).collect::<Vec<_>>().join(" ∘ ");
    Ok(Theory::build(
        format!("({id})"),
        first.space().with_degree(degree),
        first.grid().clone(),
        Structure::Composition(parts.to_vec()),
    ))
}

/// `S^k` as a k-fold composition; `S¹` is `S` itself.
pub fn power_theory(t: &Theory, k: usize) -> Result<Theory> {
    match k {
        0 => Err(Error::InvalidArgument("powers start at 1".into())),
        1 => Ok(t.clone()),
        _ => {
            let p = composition_of(&vec![t.clone(); k])?;
            Ok(p.named(format!("{}^{k}", t.id())))
        }
    }
}

/// Samples pairs `(ε, ε')`, starting with the unit pair, and compares
/// `Ψ_{ε+ε'}` with `Ψ_ε + Ψ_ε'` and `Ψ_{ε*ε'}` with `Ψ_ε∘Ψ_ε'`. Sums that
/// leave the nowhere-vanishing set are skipped.
pub fn homomorphy_check(t: &Theory, samples: usize, seed: u64) -> HomomorphyReport {
    let space = t.space();
    let one = Complex64::new(1.0, 0.0);
    let mut additive = FlagState::Certified;
    let mut multiplicative = FlagState::Certified;
    for i in 0..samples.max(1) {
        let (a, b) = if i == 0 {
            (space.unit(), space.unit())
        } else {
            let mut rng = stream_rng(seed, i as u64);
            (space.sample(&mut rng), space.sample(&mut rng))
        };
        if additive.is_certified() {
            if let Ok(s) = nv_combine(one, &a, one, &b) {
                let d = distance_or_inf(t.op_map(&s), t.op_map(&a), t.op_map(&b), add);
                if d > TAU_HOMOMORPHY {
                    additive = FlagState::Refuted(HomomorphyWitness {
                        a: a.clone(),
                        b: b.clone(),
                        distance: d,
                    });
                }
            }
        }
        if multiplicative.is_certified() {
            if let Ok(m) = nv_mul(&a, &b) {
                let d = distance_or_inf(t.op_map(&m), t.op_map(&a), t.op_map(&b), compose);
                if d > TAU_HOMOMORPHY {
                    multiplicative = FlagState::Refuted(HomomorphyWitness {
                        a: a.clone(),
                        b: b.clone(),
                        distance: d,
                    });
                }
            }
        }
        if !additive.is_certified() && !multiplicative.is_certified() {
            break;
        }
    }
    HomomorphyReport {
        additive,
        multiplicative,
    }
}

/// Distance between `lhs` and `op(x, y)`; evaluation failures count as
/// infinitely far apart.
fn distance_or_inf(
    lhs: Result<Operator>,
    x: Result<Operator>,
    y: Result<Operator>,
    op: impl Fn(&Operator, &Operator) -> Result<Operator>,
) -> f64 {
    let d = (|| {
        let rhs = op(&x?, &y?)?;
        op_distance(&lhs?, &rhs)
    })();
    d.unwrap_or(f64::INFINITY)
}
