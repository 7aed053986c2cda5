//! Emergence from polynomial theories: the Horner recursion in one
//! operator, the recurrence over sums of compositions, and the induction
//! on the number of operator variables.

use std::collections::BTreeMap;

use super::lemmas::flag_problem;
use super::oracle::{oracle_solve, sample_params, OracleVerdict};
use super::{Engine, EmergenceWitness, Verdict};
use crate::calculus::calculus_operator;
use crate::error::{Error, Result};
use crate::operators::Operator;
use crate::parameters::{Param, ParamSpace};
use crate::theories::{
    compose_theories, monomial_theory, polynomial_theory, scaling_theory, sum_theories, CoeffFn, Poly, PolyTerm,
    Structure, Theory,
};
use crate::tolerance::DEFAULT_CALCULUS_SAMPLES;

const ORACLE_SAMPLES: usize = 20;

fn not_multiplicative(t: &Theory) -> Option<String> {
    flag_problem(&t.flags().multiplicative).map(|d| format!("`{}` is not multiplicative: {d}", t.id()))
}

fn not_additive(t: &Theory) -> Option<String> {
    flag_problem(&t.flags().additive).map(|d| format!("`{}` is not additive: {d}", t.id()))
}

fn require_homomorphic(t: &Theory) -> Result<()> {
    let flags = t.flags();
    if flags.additive.is_certified() || flags.multiplicative.is_certified() {
        return Ok(());
    }
    Err(Error::MissingCertificate {
        theory: t.id().to_string(),
        property: "additive or multiplicative",
        detail: flag_problem(&flags.additive).unwrap_or_default(),
    })
}

fn as_poly(ambient: &Theory) -> Result<&Poly> {
    match ambient.structure() {
        Structure::Polynomial(p) => Ok(p),
        _ => Err(Error::HypothesisMismatch(format!(
            "ambient `{}` is not a polynomial theory",
            ambient.id()
        ))),
    }
}

/// Rejects polynomials whose terms share a slot or a multi-index.
fn check_distinct(poly: &Poly) -> Result<()> {
    let terms = poly.terms();
    for (i, a) in terms.iter().enumerate() {
        for b in &terms[i + 1..] {
            if a.slot == b.slot {
                return Err(Error::InconsistentPoly(format!("terms share slot {}", a.slot)));
            }
            if a.exponents == b.exponents {
                return Err(Error::InconsistentPoly(format!(
                    "exponents {:?} appear twice",
                    a.exponents
                )));
            }
        }
    }
    Ok(())
}

/// `δ' = f⁻¹(κ·f(δ))`, pushing a scalar factor into one coefficient slot.
fn absorb_slot(f: &CoeffFn, kappa: num_complex::Complex64, delta: &Param) -> Result<Param> {
    f.invert(kappa * f.eval(delta)?, delta.space())
}

fn slot_block(p: &Param, slot: usize, width: usize) -> Result<Param> {
    let (_, rest) = p.split(slot * width)?;
    Ok(rest.split(width)?.0)
}

/// One term in the univariate chain, in ascending exponent order.
#[derive(Clone)]
struct ChainTerm {
    exponent: u32,
    coeff: CoeffFn,
    slot: usize,
}

/// `Σ f_j Ψ^{e_j − base}` over `terms`, one slot per term.
fn shifted_theory(
    psi: &Operator,
    terms: &[ChainTerm],
    base: u32,
    slot_degree: usize,
    poly: &Poly,
    id: String,
) -> Result<Theory> {
    let ts = terms
        .iter()
        .enumerate()
        .map(|(i, t)| PolyTerm::new(vec![t.exponent - base], t.coeff.clone(), i))
        .collect();
    Ok(polynomial_theory(Poly::new(vec![psi.clone()], ts, slot_degree, poly.kind())?).named(id))
}

impl Engine {
    fn require_calculus(&self, ambient: &Theory, poly: &Poly) -> Result<()> {
        for term in poly.terms() {
            let entry = calculus_operator(
                &term.coeff,
                poly.slot_space(),
                poly.grid(),
                DEFAULT_CALCULUS_SAMPLES,
                self.config.seed,
            )?;
            if !entry.is_certified() {
                return Err(Error::MissingCertificate {
                    theory: ambient.id().to_string(),
                    property: "functional calculus",
                    detail: format!("coefficient {} has no certified calculus", term.coeff),
                });
            }
        }
        Ok(())
    }

    /// `target` from a polynomial `Σ fᵢ(δᵢ)Ψ^{eᵢ}` in one operator.
    ///
    /// Terms are sorted by exponent and nested as
    /// `Q_k = f_k·I + Q_{k+1}∘Ψ^{e_{k+1}−e_k}`. Each nesting is one
    /// composition step and one sum step; steps whose hypotheses fail are
    /// kept, verified, and listed in the final verdict.
    pub fn emerge_univariate(&self, target: &Theory, ambient: &Theory) -> Result<EmergenceWitness> {
        let poly = as_poly(ambient)?;
        if poly.variables().len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "`{}` has {} variables",
                ambient.id(),
                poly.variables().len()
            )));
        }
        require_homomorphic(target)?;
        self.require_calculus(ambient, poly)?;
        let w = self.univariate_with(target, ambient, poly, 0)?;
        Ok(self.conclude(target, ambient, w, false))
    }

    /// Chain on variable `var`; every other variable must have exponent 0.
    fn univariate_with(&self, target: &Theory, ambient: &Theory, poly: &Poly, var: usize) -> Result<EmergenceWitness> {
        check_distinct(poly)?;
        if poly.terms().len() == 1 {
            return self.emerge_monomial_into(target, ambient);
        }
        let mut terms: Vec<ChainTerm> = poly
            .terms()
            .iter()
            .map(|t| ChainTerm {
                exponent: t.exponents[var],
                coeff: t.coeff.clone(),
                slot: t.slot,
            })
            .collect();
        terms.sort_by_key(|t| t.exponent);
        let psi = &poly.variables()[var];
        let sd = poly.slot_degree();
        let slot_space = poly.slot_space();
        let identity = Operator::identity(poly.grid().clone());
        let f_theory = |k: usize| -> Result<Theory> {
            Ok(monomial_theory(terms[k].coeff.clone(), identity.clone(), 0, slot_space)?
                .named(format!("f_{}·I", k + 1)))
        };

        let t = terms.len();
        let mut q = f_theory(t - 1)?;
        let mut w = self.emerge_monomial_into(target, &q)?;
        for k in (0..t - 1).rev() {
            let d = terms[k + 1].exponent - terms[k].exponent;
            let r = shifted_theory(psi, &terms[k + 1..], terms[k].exponent, sd, poly, format!("Q_{}∘Ψ^{d}", k + 2))?;
            w = self.composition_step(target, &w, &q, psi, d, &r, &terms[k + 1..])?;
            let fk = f_theory(k)?;
            let qk = shifted_theory(psi, &terms[k..], terms[k].exponent, sd, poly, format!("Q_{}", k + 1))?;
            w = self.sum_step(target, &w, &r, &fk, &qk)?;
            q = qk;
        }
        if terms[0].exponent > 0 {
            let full = shifted_theory(psi, &terms, 0, sd, poly, format!("Q_1∘Ψ^{}", terms[0].exponent))?;
            w = self.composition_step(target, &w, &q, psi, terms[0].exponent, &full, &terms)?;
            q = full;
        }
        let order: Vec<usize> = terms.iter().map(|t| t.slot).collect();
        let n_slots = poly.slot_count();
        let reindex = self.reparam(&q, ambient, "reindex", vec![], move |p| {
            let mut blocks = vec![None; n_slots];
            for (i, &slot) in order.iter().enumerate() {
                blocks[slot] = Some(slot_block(p, i, sd)?);
            }
            concat_blocks(p, blocks.into_iter().flatten())
        });
        Ok(self.transitive_with(&w, &reindex))
    }

    /// From `S` from `Q`, builds `S` from `Q∘Ψ^d` written as the polynomial `r`.
    #[allow(clippy::too_many_arguments)]
    fn composition_step(
        &self,
        target: &Theory,
        w: &EmergenceWitness,
        q: &Theory,
        psi: &Operator,
        d: u32,
        r: &Theory,
        terms: &[ChainTerm],
    ) -> Result<EmergenceWitness> {
        let unit = ParamSpace::new(target.space().kind, 1);
        let m = monomial_theory(CoeffFn::linear(1.0), psi.clone(), d, unit)?.named(format!("κ·Ψ^{d}"));
        let combined = compose_theories(q, &m)?;
        let wg = self.emerge_monomial_into(target, &m)?;
        let wh = self.emerge_monomial_into(q, &m)?;
        let out = self.composition_with(w, &wg, Some(&wh), &combined, not_multiplicative(target));
        let coeffs: Vec<CoeffFn> = terms.iter().map(|t| t.coeff.clone()).collect();
        let sd = r.degree() / coeffs.len();
        let absorb = self.reparam(&combined, r, "absorb", vec![], move |p| {
            let (deltas, kappa) = p.split(p.degree() - 1)?;
            let kappa = kappa.components()[0];
            let blocks = coeffs
                .iter()
                .enumerate()
                .map(|(i, f)| absorb_slot(f, kappa, &slot_block(&deltas, i, sd)?))
                .collect::<Result<Vec<_>>>()?;
            concat_blocks(p, blocks.into_iter())
        });
        Ok(self.transitive_with(&out.witness, &absorb))
    }

    /// From `S` from `r`, builds `S` from `qk = fk·I + r` with `fk`'s slot first.
    fn sum_step(
        &self,
        target: &Theory,
        w: &EmergenceWitness,
        r: &Theory,
        fk: &Theory,
        qk: &Theory,
    ) -> Result<EmergenceWitness> {
        let wg = self.emerge_monomial_into(target, fk)?;
        let wh = self.emerge_monomial_into(r, fk)?;
        let combined = sum_theories(r, fk)?;
        let out = self.sum_with(w, &wg, Some(&wh), &combined, not_additive(target));
        let n = r.degree();
        let reindex = self.reparam(&combined, qk, "reindex", vec![], move |p| {
            let (rest, head) = p.split(n)?;
            head.concat(&rest)
        });
        Ok(self.transitive_with(&out.witness, &reindex))
    }

    /// Marks the witness infeasible if any step failed, attaches the
    /// least-squares cross-check when it did, and with `closure` adopts the
    /// oracle's closure-only finding.
    fn conclude(&self, target: &Theory, ambient: &Theory, mut w: EmergenceWitness, closure: bool) -> EmergenceWitness {
        let failing = w.provenance().failing_steps();
        if !failing.is_empty() {
            let residual = match &w.report.verdict {
                Verdict::Infeasible { residual, .. } => *residual,
                _ => Some(w.report.max_action_residual.max(w.report.max_operator_residual)),
            };
            w.report.verdict = Verdict::Infeasible {
                reason: format!("failing steps: {}", failing.join("; ")),
                residual,
            };
            w.map.provenance.status = w.report.verdict.status();
        }
        if !w.is_verified() {
            let eps = sample_params(target.space(), ORACLE_SAMPLES, self.config.seed);
            if let Ok(report) = oracle_solve(target, ambient, &eps) {
                if let (true, OracleVerdict::ClosureOnly { flagged }) = (closure, &report.verdict) {
                    w.report.verdict = Verdict::ClosureOnly {
                        flagged: flagged.clone(),
                    };
                    w.map.provenance.status = w.report.verdict.status();
                }
                w.oracle = Some(report);
            }
        }
        w
    }

    /// `target` from a polynomial in several operators, by regrouping in
    /// powers of the last variable that occurs and applying the recurrence.
    pub fn emerge_multivariate(&self, target: &Theory, ambient: &Theory) -> Result<EmergenceWitness> {
        let poly = as_poly(ambient)?;
        require_homomorphic(target)?;
        self.require_calculus(ambient, poly)?;
        let used = used_variables(poly);
        let w = self.multivariate_with(target, ambient, poly)?;
        Ok(self.conclude(target, ambient, w, used.len() > 1))
    }

    fn multivariate_with(&self, target: &Theory, ambient: &Theory, poly: &Poly) -> Result<EmergenceWitness> {
        let used = used_variables(poly);
        let Some(&v) = used.last() else {
            return self.univariate_with(target, ambient, poly, 0);
        };
        if used.len() == 1 {
            return self.univariate_with(target, ambient, poly, v);
        }
        check_distinct(poly)?;
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, t) in poly.terms().iter().enumerate() {
            groups.entry(t.exponents[v]).or_default().push(i);
        }
        let kind = poly.kind();
        let unit = ParamSpace::new(kind, 1);
        let psi_v = &poly.variables()[v];
        let identity = Operator::identity(poly.grid().clone());
        let mut pairs = Vec::new();
        let mut members = Vec::new();
        for (&e, idx) in &groups {
            let terms = idx
                .iter()
                .enumerate()
                .map(|(slot, &i)| {
                    let t = &poly.terms()[i];
                    let mut exponents = t.exponents.clone();
                    exponents[v] = 0;
                    PolyTerm::new(exponents, t.coeff.clone(), slot)
                })
                .collect();
            let g = Poly::new(poly.variables().to_vec(), terms, poly.slot_degree(), kind)?;
            let s2 = polynomial_theory(g).named(format!("g_{e}"));
            let s3 = monomial_theory(CoeffFn::linear(1.0), psi_v.clone(), e, unit)?
                .named(format!("κ·Ψ_{}^{e}", v + 1));
            let q = scaling_theory(unit, identity.clone())?.named("Q");
            let m = monomial_theory(CoeffFn::linear(1.0), psi_v.clone(), e, unit)?
                .named(format!("m_{e}"));
            pairs.push(RecurrencePair { s2, s3, q, m });
            members.push(idx.clone());
        }
        let rec = Recurrence::new(target.clone(), pairs)?;
        let l = rec.len();
        let mut hyp = RecurrenceHypotheses::empty(l);
        for j in 0..l {
            let pair = &rec.pairs[j];
            let g = as_poly(&pair.s2)?;
            hyp.s1_from_s2[j] = Some(self.multivariate_with(target, &pair.s2, g)?);
            hyp.s1_from_s3[j] = Some(self.emerge_monomial_into(target, &pair.s3)?);
            hyp.s2_from_s3[j] = Some(self.emerge_monomial_into(&pair.s2, &pair.s3)?);
            if j == 0 {
                continue;
            }
            hyp.divisibility[j] = Some(self.reparam(&rec.divisors[j], &pair.s3, "divisibility", vec![], move |p| {
                Param::new(unit, vec![p.product()])
            }));
            let acc = &rec.accumulated[j - 1];
            hyp.accumulated_from_q[j] = Some(self.emerge_monomial_into(acc, &pair.q)?);
            hyp.s2_from_q[j] = Some(self.emerge_monomial_into(&pair.s2, &pair.q)?);
            hyp.accumulated_from_s2[j] = Some(self.multivariate_with(acc, &pair.s2, g)?);
        }
        let w = self.recurrence_with(&rec, &hyp)?;

        let coeffs: Vec<CoeffFn> = poly.terms().iter().map(|t| t.coeff.clone()).collect();
        let slots: Vec<usize> = poly.terms().iter().map(|t| t.slot).collect();
        let (sd, n_slots) = (poly.slot_degree(), poly.slot_count());
        let absorb = self.reparam(&rec.accumulated[l - 1], ambient, "absorb", vec![], move |p| {
            let mut blocks = vec![None; n_slots];
            let mut rest = p.clone();
            for idx in &members {
                let (deltas, tail) = rest.split(idx.len() * sd)?;
                let (kappa, tail) = tail.split(1)?;
                let kappa = kappa.components()[0];
                for (local, &i) in idx.iter().enumerate() {
                    blocks[slots[i]] = Some(absorb_slot(&coeffs[i], kappa, &slot_block(&deltas, local, sd)?)?);
                }
                rest = tail;
            }
            concat_blocks(p, blocks.into_iter().flatten())
        });
        Ok(self.transitive_with(&w, &absorb))
    }
}

fn used_variables(poly: &Poly) -> Vec<usize> {
    (0..poly.variables().len())
        .filter(|&v| poly.terms().iter().any(|t| t.exponents[v] > 0))
        .collect()
}

fn concat_blocks(like: &Param, blocks: impl Iterator<Item = Param>) -> Result<Param> {
    let mut acc = Param::new(like.space().with_degree(0), vec![])?;
    for b in blocks {
        acc = acc.concat(&b)?;
    }
    Ok(acc)
}

/// One summand `S₂ⱼ∘S₃ⱼ` of the recurrence, with `S₃ⱼ` divisible from the
/// right by the monomial `mⱼ` with quotient `Qⱼ`.
#[derive(Debug, Clone)]
pub struct RecurrencePair {
    pub s2: Theory,
    pub s3: Theory,
    pub q: Theory,
    pub m: Theory,
}

/// The theories `Cⱼ = S₂ⱼ∘S₃ⱼ` and partial sums `S^m = C₁ + … + C_m`
/// that hypotheses must refer to.
#[derive(Debug, Clone)]
pub struct Recurrence {
    target: Theory,
    pairs: Vec<RecurrencePair>,
    compositions: Vec<Theory>,
    divisors: Vec<Theory>,
    accumulated: Vec<Theory>,
}

impl Recurrence {
    pub fn new(target: Theory, pairs: Vec<RecurrencePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("the recurrence needs at least one pair".into()));
        }
        let compositions = pairs
            .iter()
            .map(|p| compose_theories(&p.s2, &p.s3))
            .collect::<Result<Vec<_>>>()?;
        let divisors = pairs
            .iter()
            .map(|p| compose_theories(&p.q, &p.m))
            .collect::<Result<Vec<_>>>()?;
        let mut accumulated = vec![compositions[0].clone()];
        for (i, c) in compositions.iter().enumerate().skip(1) {
            let s = sum_theories(&accumulated[i - 1], c)?.named(format!("S^{}", i + 1));
            accumulated.push(s);
        }
        Ok(Self {
            target,
            pairs,
            compositions,
            divisors,
            accumulated,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn target(&self) -> &Theory {
        &self.target
    }

    pub fn pair(&self, j: usize) -> &RecurrencePair {
        &self.pairs[j]
    }

    /// `S₂ⱼ∘S₃ⱼ`.
    pub fn composition(&self, j: usize) -> &Theory {
        &self.compositions[j]
    }

    /// `Qⱼ∘mⱼ`.
    pub fn divisor(&self, j: usize) -> &Theory {
        &self.divisors[j]
    }

    /// `S^{m}` for `m = index + 1`; the first is the first composition.
    pub fn accumulated(&self, index: usize) -> &Theory {
        &self.accumulated[index]
    }

    /// The full sum `S^l`.
    pub fn total(&self) -> &Theory {
        &self.accumulated[self.len() - 1]
    }
}

/// Witnesses for the recurrence hypotheses, indexed by pair. Entries
/// concerning `m + 1 = j` (divisibility and the cross hypotheses) are
/// unused for the first pair.
#[derive(Debug, Clone, Default)]
pub struct RecurrenceHypotheses {
    /// `S₁` from `S₂ⱼ`.
    pub s1_from_s2: Vec<Option<EmergenceWitness>>,
    /// `S₁` from `S₃ⱼ`.
    pub s1_from_s3: Vec<Option<EmergenceWitness>>,
    /// `S₂ⱼ` from `S₃ⱼ`.
    pub s2_from_s3: Vec<Option<EmergenceWitness>>,
    /// `Qⱼ∘mⱼ` from `S₃ⱼ`: the quotient and divisor recover `S₃ⱼ`.
    pub divisibility: Vec<Option<EmergenceWitness>>,
    /// `S^{j}` from `Qⱼ`.
    pub accumulated_from_q: Vec<Option<EmergenceWitness>>,
    /// `S₂ⱼ` from `Qⱼ`.
    pub s2_from_q: Vec<Option<EmergenceWitness>>,
    /// `S^{j}` from `S₂ⱼ`.
    pub accumulated_from_s2: Vec<Option<EmergenceWitness>>,
}

impl RecurrenceHypotheses {
    pub fn empty(l: usize) -> Self {
        Self {
            s1_from_s2: vec![None; l],
            s1_from_s3: vec![None; l],
            s2_from_s3: vec![None; l],
            divisibility: vec![None; l],
            accumulated_from_q: vec![None; l],
            s2_from_q: vec![None; l],
            accumulated_from_s2: vec![None; l],
        }
    }
}

fn need<'a>(
    slot: &'a [Option<EmergenceWitness>],
    j: usize,
    number: usize,
    description: String,
    strict: bool,
) -> Result<&'a EmergenceWitness> {
    match slot.get(j).and_then(Option::as_ref) {
        Some(w) if !strict || w.is_verified() => Ok(w),
        _ => Err(Error::MissingHypothesis { number, description }),
    }
}

fn expect_pair(w: &EmergenceWitness, target: &Theory, ambient: &Theory, what: &str) -> Result<()> {
    if w.target.ptr_eq(target) && w.ambient.ptr_eq(ambient) {
        Ok(())
    } else {
        Err(Error::HypothesisMismatch(format!(
            "{what} relates `{}` to `{}`",
            w.target.id(),
            w.ambient.id()
        )))
    }
}

struct Hyp<'a> {
    h1a: &'a EmergenceWitness,
    h1b: &'a EmergenceWitness,
    h2: &'a EmergenceWitness,
    cross: Option<Cross<'a>>,
}

struct Cross<'a> {
    h3: &'a EmergenceWitness,
    h4a: &'a EmergenceWitness,
    h5: &'a EmergenceWitness,
}

fn collect<'a>(rec: &Recurrence, hyp: &'a RecurrenceHypotheses, strict: bool) -> Result<Vec<Hyp<'a>>> {
    let mut out = Vec::with_capacity(rec.len());
    for j in 0..rec.len() {
        let n = j + 1;
        let h1a = need(&hyp.s1_from_s2, j, 1, format!("S₁ emerges from S_{{2,{n}}}"), strict)?;
        let h1b = need(&hyp.s1_from_s3, j, 1, format!("S₁ emerges from S_{{3,{n}}}"), strict)?;
        let h2 = need(&hyp.s2_from_s3, j, 2, format!("S_{{2,{n}}} emerges from S_{{3,{n}}}"), strict)?;
        let cross = if j == 0 {
            None
        } else {
            let m = j;
            let h3 = need(&hyp.divisibility, j, 3, format!("S_{{3,{n}}} is divisible from the right by m_{n}"), strict)?;
            let h4a = need(&hyp.accumulated_from_q, j, 4, format!("S^{m}_{{δJ,κJ}} emerges from Q_{n}"), strict)?;
            need(&hyp.s2_from_q, j, 4, format!("S_{{2,{n}}} emerges from Q_{n}"), strict)?;
            let h5 = need(&hyp.accumulated_from_s2, j, 5, format!("S^{m}_{{δJ,κJ}} emerges from S_{{2,{n}}}"), strict)?;
            Some(Cross { h3, h4a, h5 })
        };
        out.push(Hyp { h1a, h1b, h2, cross });
    }
    Ok(out)
}

fn check_refs(rec: &Recurrence, hyps: &[Hyp<'_>], s2_from_q: &[Option<EmergenceWitness>]) -> Result<()> {
    let s1 = &rec.target;
    for (j, h) in hyps.iter().enumerate() {
        let p = &rec.pairs[j];
        expect_pair(h.h1a, s1, &p.s2, "hypothesis 1")?;
        expect_pair(h.h1b, s1, &p.s3, "hypothesis 1")?;
        expect_pair(h.h2, &p.s2, &p.s3, "hypothesis 2")?;
        if let Some(c) = &h.cross {
            let acc = &rec.accumulated[j - 1];
            expect_pair(c.h3, &rec.divisors[j], &p.s3, "hypothesis 3")?;
            expect_pair(c.h4a, acc, &p.q, "hypothesis 4")?;
            if let Some(w) = &s2_from_q[j] {
                expect_pair(w, &p.s2, &p.q, "hypothesis 4")?;
            }
            expect_pair(c.h5, acc, &p.s2, "hypothesis 5")?;
        }
    }
    Ok(())
}

impl Engine {
    /// `S₁` from `Σⱼ S₂ⱼ∘S₃ⱼ` by induction on the number of summands.
    pub fn emerge_recurrence(&self, rec: &Recurrence, hyp: &RecurrenceHypotheses) -> Result<EmergenceWitness> {
        require_homomorphic(&rec.target)?;
        let hyps = collect(rec, hyp, true)?;
        check_refs(rec, &hyps, &hyp.s2_from_q)?;
        self.recurrence_with(rec, hyp)
    }

    fn recurrence_with(&self, rec: &Recurrence, hyp: &RecurrenceHypotheses) -> Result<EmergenceWitness> {
        let hyps = collect(rec, hyp, false)?;
        let s1 = &rec.target;
        let s1_blocked = not_multiplicative(s1);
        let direct: Vec<EmergenceWitness> = hyps
            .iter()
            .enumerate()
            .map(|(j, h)| {
                self.composition_with(h.h1a, h.h1b, Some(h.h2), &rec.compositions[j], s1_blocked.clone())
                    .witness
            })
            .collect();
        let mut w = direct[0].clone();
        for (j, h) in hyps.iter().enumerate().skip(1) {
            let c = h.cross.as_ref().expect("cross hypotheses exist past the first pair");
            let p = &rec.pairs[j];
            let acc = &rec.accumulated[j - 1];
            let acc_blocked = not_multiplicative(acc);
            let acc_from_m = self.emerge_monomial_into(acc, &p.m)?;
            let q_from_m = self.emerge_monomial_into(&p.q, &p.m)?;
            let via_divisor = self
                .composition_with(c.h4a, &acc_from_m, Some(&q_from_m), &rec.divisors[j], acc_blocked.clone())
                .witness;
            let acc_from_s3 = self.transitive_with(&via_divisor, c.h3);
            let acc_from_c = self
                .composition_with(c.h5, &acc_from_s3, Some(h.h2), &rec.compositions[j], acc_blocked)
                .witness;
            w = self
                .sum_with(&w, &direct[j], Some(&acc_from_c), &rec.accumulated[j], not_additive(s1))
                .witness;
        }
        Ok(w)
    }
}
