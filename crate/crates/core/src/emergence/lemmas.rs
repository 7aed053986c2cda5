use num_complex::Complex64;

use super::{Engine, EmergenceWitness, ParamMap, Provenance};
use crate::background::stream_rng;
use crate::calculus::identity_multiplier;
use crate::error::{Error, Result};
use crate::operators::{add, compose, op_distance, pow, right_inverse, Operator};
use crate::parameters::{nv_combine, nv_mul, nv_scale, nv_sqrt, Param};
use crate::theories::{
    monomial_theory, power_theory, scaled_theory, sum_theories, compose_theories, CoeffFn, FlagState,
    Structure, Theory,
};
use crate::tolerance::{MIN_VERIFY_SAMPLES, TAU_INV};

/// Result of the sum lemma.
#[derive(Debug, Clone)]
pub struct SumOutcome {
    /// `S₁` from `S₂ + S₃` via `K(ε) = (F(ε/2), G(ε/2))`.
    pub witness: EmergenceWitness,
    /// `S₁` from `S₃` via `L(ε) = H(F(ε/2)) + G(ε/2)`, when `S₃` is additive.
    pub collapsed: Option<EmergenceWitness>,
    /// Largest relative defect of `Ψ₃,H(F(ε/2)) + Ψ₃,G(ε/2) = Ψ₁,ε`.
    pub identity_residual: Option<f64>,
}

/// Result of the composition lemma.
#[derive(Debug, Clone)]
pub struct CompositionOutcome {
    /// `S₁` from `S₂∘S₃` via `K(ε) = (F(√ε), G(√ε))`.
    pub witness: EmergenceWitness,
    /// `S₁` from `S₃` via `L(ε) = H(F(√ε))·G(√ε)`, when `S₃` is multiplicative.
    pub collapsed: Option<EmergenceWitness>,
    /// Largest relative defect of `Ψ₃,H(F(√ε)) ∘ Ψ₃,G(√ε) = Ψ₁,ε`.
    pub identity_residual: Option<f64>,
}

pub(crate) fn summary(target: &Theory, ambient: &Theory) -> String {
    format!("{} emerges from {}", target.id(), ambient.id())
}

pub(crate) fn require_verified(w: &EmergenceWitness, role: &str) -> Result<()> {
    if w.is_verified() {
        Ok(())
    } else {
        Err(Error::HypothesisMismatch(format!(
            "{role} ({}) is {}",
            w.provenance().summary,
            w.report.verdict.name()
        )))
    }
}

pub(crate) fn flag_problem(state: &FlagState) -> Option<String> {
    match state {
        FlagState::Certified => None,
        FlagState::Unchecked => Some("not checked".into()),
        FlagState::Refuted(w) => Some(format!(
            "refuted at ({}, {}) with distance {:e}",
            w.a, w.b, w.distance
        )),
    }
}

pub(crate) fn require_additive(t: &Theory) -> Result<()> {
    match flag_problem(&t.flags().additive) {
        None => Ok(()),
        Some(detail) => Err(Error::MissingCertificate {
            theory: t.id().to_string(),
            property: "additive",
            detail,
        }),
    }
}

pub(crate) fn require_multiplicative(t: &Theory) -> Result<()> {
    match flag_problem(&t.flags().multiplicative) {
        None => Ok(()),
        Some(detail) => Err(Error::MissingCertificate {
            theory: t.id().to_string(),
            property: "multiplicative",
            detail,
        }),
    }
}

/// `(g, Ψ, l)` for ambients of the form `g(δ)·Ψ^l`.
pub(crate) fn monomial_parts(ambient: &Theory) -> Result<(CoeffFn, Operator, u32)> {
    match ambient.structure() {
        Structure::Monomial { g, psi, power, .. } => Ok((g.clone(), psi.clone(), *power)),
        Structure::Scaling(op) => Ok((CoeffFn::linear(1.0), op.clone(), 1)),
        Structure::Polynomial(p) if p.terms().len() == 1 => {
            Ok((p.terms()[0].coeff.clone(), p.monomials()[0].clone(), 1))
        }
        _ => Err(Error::HypothesisMismatch(format!(
            "ambient `{}` is not a monomial theory",
            ambient.id()
        ))),
    }
}

fn halve(eps: &Param) -> Result<Param> {
    nv_scale(Complex64::new(0.5, 0.0), eps)
}

impl Engine {
    /// Largest value of `defect` over the engine's parameter samples, or
    /// `None` if any sample fails to evaluate.
    fn sampled_max(&self, space: crate::parameters::ParamSpace, defect: impl Fn(&Param) -> Result<f64>) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.config.samples.max(MIN_VERIFY_SAMPLES) {
            let mut rng = stream_rng(self.config.seed, i as u64);
            let eps = space.sample(&mut rng);
            worst = worst.max(defect(&eps).ok()?);
        }
        Some(worst)
    }

    /// Every theory emerges from itself.
    pub fn identity(&self, t: &Theory) -> EmergenceWitness {
        let map = ParamMap::new(t.space(), t.space(), "reflexivity", summary(t, t), vec![], |e| {
            Ok(e.clone())
        });
        self.finish(t, t, map, None)
    }

    /// Wraps a given map as a witness that `target` emerges from `ambient`.
    pub(crate) fn reparam(
        &self,
        target: &Theory,
        ambient: &Theory,
        lemma: &str,
        children: Vec<Provenance>,
        f: impl Fn(&Param) -> Result<Param> + Send + Sync + 'static,
    ) -> EmergenceWitness {
        let map = ParamMap::new(target.space(), ambient.space(), lemma, summary(target, ambient), children, f);
        self.finish(target, ambient, map, None)
    }

    /// `target` from `g(δ)·Ψ^power`, with the ambient built on the target's
    /// parameter space.
    pub fn emerge_monomial(
        &self,
        target: &Theory,
        g: CoeffFn,
        psi: Operator,
        power: u32,
    ) -> Result<EmergenceWitness> {
        let ambient = monomial_theory(g, psi, power, target.space())?;
        self.emerge_monomial_into(target, &ambient)
    }

    /// `F(ε) = g⁻¹(λ)` where `Ψ₁,ε ∘ R = λ·I` and `R` is a right inverse of
    /// `Ψ^l`. The ambient may be a monomial, a scaling theory or a
    /// one-term polynomial.
    pub fn emerge_monomial_into(&self, target: &Theory, ambient: &Theory) -> Result<EmergenceWitness> {
        let (g, psi, power) = monomial_parts(ambient)?;
        if target.space().kind != ambient.space().kind {
            return Err(Error::SpaceMismatch(format!("{} vs {}", target.space(), ambient.space())));
        }
        let r = right_inverse(&pow(&psi, power.max(1))?, TAU_INV)?.inverse;
        let r = (power > 0).then_some(r);
        let space = ambient.space();
        let t = target.clone();
        let map = ParamMap::new(target.space(), space, "monomial", summary(target, ambient), vec![], move |eps| {
            let x = t.op_map(eps)?;
            let x = match &r {
                Some(r) => compose(&x, r)?,
                None => x,
            };
            g.invert(identity_multiplier(&x, space.kind)?, space)
        });
        Ok(self.finish(target, ambient, map, None))
    }

    /// `S₁` from `c·S₂`: the first ambient component is divided by `c`.
    pub fn emerge_scaled(&self, w: &EmergenceWitness, c: Complex64) -> Result<EmergenceWitness> {
        if c == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidArgument("scale factor must be nonzero".into()));
        }
        require_additive(&w.target)?;
        require_verified(w, "scaled witness")?;
        let ambient = scaled_theory(c, &w.ambient)?;
        let inner = w.map.eval_fn();
        let space = ambient.space();
        let map = ParamMap::new(
            w.target.space(),
            space,
            "scaled",
            summary(&w.target, &ambient),
            vec![w.provenance().clone()],
            move |eps| {
                let delta = inner(eps)?;
                let mut comps = delta.components().to_vec();
                let first = comps.first_mut().ok_or_else(|| {
                    Error::InvalidParam("a degree-0 ambient cannot absorb a scale factor".into())
                })?;
                *first /= c;
                Param::new(space, comps)
            },
        );
        Ok(self.finish(&w.target, &ambient, map, None))
    }

    /// Sum lemma. `wf`: `S₁` from `S₂`, `wg`: `S₁` from `S₃`, `wh`: `S₂` from `S₃`.
    pub fn emerge_sum(
        &self,
        wf: &EmergenceWitness,
        wg: &EmergenceWitness,
        wh: Option<&EmergenceWitness>,
    ) -> Result<SumOutcome> {
        check_triangle(wf, wg, wh)?;
        require_additive(&wf.target)?;
        require_verified(wf, "F")?;
        require_verified(wg, "G")?;
        if let Some(h) = wh {
            require_verified(h, "H")?;
        }
        let combined = sum_theories(&wf.ambient, &wg.ambient)?;
        Ok(self.sum_with(wf, wg, wh, &combined, None))
    }

    pub(crate) fn sum_with(
        &self,
        wf: &EmergenceWitness,
        wg: &EmergenceWitness,
        wh: Option<&EmergenceWitness>,
        combined: &Theory,
        blocked: Option<String>,
    ) -> SumOutcome {
        let s1 = &wf.target;
        let (f, g) = (wf.map.eval_fn(), wg.map.eval_fn());
        let children = lemma_children(wf, wg, wh);
        let k = {
            let (f, g) = (f.clone(), g.clone());
            move |eps: &Param| {
                let half = halve(eps)?;
                f(&half)?.concat(&g(&half)?)
            }
        };
        let map = ParamMap::new(s1.space(), combined.space(), "sum", summary(s1, combined), children.clone(), k);
        let witness = self.finish(s1, combined, map, blocked);

        let Some(wh) = wh else {
            return SumOutcome {
                witness,
                collapsed: None,
                identity_residual: None,
            };
        };
        let s3 = wg.ambient.clone();
        let h = wh.map.eval_fn();
        let parts = {
            let (f, g, h) = (f.clone(), g.clone(), h.clone());
            move |eps: &Param| -> Result<(Param, Param)> {
                let half = halve(eps)?;
                Ok((h(&f(&half)?)?, g(&half)?))
            }
        };
        let identity_residual = {
            let (s1, s3) = (s1.clone(), s3.clone());
            self.sampled_max(s1.space(), |eps| {
                let (a, b) = parts(eps)?;
                op_distance(&add(&s3.op_map(&a)?, &s3.op_map(&b)?)?, &s1.op_map(eps)?)
            })
        };
        let collapsed = s3.flags().additive.is_certified().then(|| {
            let one = Complex64::new(1.0, 0.0);
            self.reparam(s1, &s3, "sum-collapsed", children, move |eps| {
                let (a, b) = parts(eps)?;
                nv_combine(one, &a, one, &b)
            })
        });
        SumOutcome {
            witness,
            collapsed,
            identity_residual,
        }
    }

    /// Composition lemma. `wf`: `S₁` from `S₂`, `wg`: `S₁` from `S₃`, `wh`: `S₂` from `S₃`.
    pub fn emerge_composition(
        &self,
        wf: &EmergenceWitness,
        wg: &EmergenceWitness,
        wh: Option<&EmergenceWitness>,
    ) -> Result<CompositionOutcome> {
        check_triangle(wf, wg, wh)?;
        require_multiplicative(&wf.target)?;
        if !wf.target.space().has_square_roots() {
            return Err(Error::NoSquareRoot { index: 0 });
        }
        require_verified(wf, "F")?;
        require_verified(wg, "G")?;
        if let Some(h) = wh {
            require_verified(h, "H")?;
        }
        let combined = compose_theories(&wf.ambient, &wg.ambient)?;
        Ok(self.composition_with(wf, wg, wh, &combined, None))
    }

    pub(crate) fn composition_with(
        &self,
        wf: &EmergenceWitness,
        wg: &EmergenceWitness,
        wh: Option<&EmergenceWitness>,
        combined: &Theory,
        blocked: Option<String>,
    ) -> CompositionOutcome {
        let s1 = &wf.target;
        let (f, g) = (wf.map.eval_fn(), wg.map.eval_fn());
        let children = lemma_children(wf, wg, wh);
        let k = {
            let (f, g) = (f.clone(), g.clone());
            move |eps: &Param| {
                let root = nv_sqrt(eps)?;
                f(&root)?.concat(&g(&root)?)
            }
        };
        let map = ParamMap::new(s1.space(), combined.space(), "composition", summary(s1, combined), children.clone(), k);
        let witness = self.finish(s1, combined, map, blocked);

        let Some(wh) = wh else {
            return CompositionOutcome {
                witness,
                collapsed: None,
                identity_residual: None,
            };
        };
        let s3 = wg.ambient.clone();
        let h = wh.map.eval_fn();
        let parts = move |eps: &Param| -> Result<(Param, Param)> {
            let root = nv_sqrt(eps)?;
            Ok((h(&f(&root)?)?, g(&root)?))
        };
        let identity_residual = {
            let (s1, s3) = (s1.clone(), s3.clone());
            self.sampled_max(s1.space(), |eps| {
                let (a, b) = parts(eps)?;
                op_distance(&compose(&s3.op_map(&a)?, &s3.op_map(&b)?)?, &s1.op_map(eps)?)
            })
        };
        let collapsed = s3.flags().multiplicative.is_certified().then(|| {
            self.reparam(s1, &s3, "composition-collapsed", children, move |eps| {
                let (a, b) = parts(eps)?;
                nv_mul(&a, &b)
            })
        });
        CompositionOutcome {
            witness,
            collapsed,
            identity_residual,
        }
    }

    /// `A` from `C` given `A` from `B` and `B` from `C`.
    pub fn transitive(&self, ab: &EmergenceWitness, bc: &EmergenceWitness) -> Result<EmergenceWitness> {
        if !ab.ambient.ptr_eq(&bc.target) {
            return Err(Error::HypothesisMismatch(format!(
                "`{}` and `{}` do not chain",
                ab.provenance().summary,
                bc.provenance().summary
            )));
        }
        require_verified(ab, "first link")?;
        require_verified(bc, "second link")?;
        Ok(self.transitive_with(ab, bc))
    }

    pub(crate) fn transitive_with(&self, ab: &EmergenceWitness, bc: &EmergenceWitness) -> EmergenceWitness {
        let (f, g) = (ab.map.eval_fn(), bc.map.eval_fn());
        self.reparam(
            &ab.target,
            &bc.ambient,
            "transitivity",
            vec![ab.provenance().clone(), bc.provenance().clone()],
            move |eps| g(&f(eps)?),
        )
    }

    /// `S^m` from `S^l` for a multiplicative `S`: `S` from `S^l` by repeated
    /// composition with square roots, then the product collapse `S^m` from `S`.
    pub fn emerge_powers(&self, t: &Theory, l: usize, m: usize) -> Result<EmergenceWitness> {
        if l == 0 || m == 0 {
            return Err(Error::InvalidArgument("powers start at 1".into()));
        }
        require_multiplicative(t)?;
        if l > 1 && !t.space().has_square_roots() {
            return Err(Error::NoSquareRoot { index: 0 });
        }
        let unit = self.identity(t);
        let mut f = unit.clone();
        for k in 2..=l {
            let sk = power_theory(t, k)?;
            f = self.composition_with(&unit, &f, Some(&f), &sk, None).witness;
        }
        if m == 1 {
            return Ok(f);
        }
        let sm = power_theory(t, m)?;
        let d = t.degree();
        let collapse = self.reparam(&sm, t, "power-collapse", vec![], move |eps| {
            let (mut acc, mut rest) = eps.split(d)?;
            while rest.degree() > 0 {
                let (head, tail) = rest.split(d)?;
                acc = nv_mul(&acc, &head)?;
                rest = tail;
            }
            Ok(acc)
        });
        Ok(self.transitive_with(&collapse, &f))
    }
}

fn lemma_children(
    wf: &EmergenceWitness,
    wg: &EmergenceWitness,
    wh: Option<&EmergenceWitness>,
) -> Vec<Provenance> {
    [Some(wf), Some(wg), wh]
        .into_iter()
        .flatten()
        .map(|w| w.provenance().clone())
        .collect()
}

fn check_triangle(
    wf: &EmergenceWitness,
    wg: &EmergenceWitness,
    wh: Option<&EmergenceWitness>,
) -> Result<()> {
    if !wf.target.ptr_eq(&wg.target) {
        return Err(Error::HypothesisMismatch(
            "F and G must have the same target theory".into(),
        ));
    }
    if let Some(h) = wh {
        if !h.target.ptr_eq(&wf.ambient) || !h.ambient.ptr_eq(&wg.ambient) {
            return Err(Error::HypothesisMismatch(
                "H must map the ambient of G into the ambient of F".into(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::background::{make_grid, Grid};
    use crate::emergence::{Verdict, VerifyConfig};
    use crate::operators::{diff_operator, StencilSpec};
    use crate::parameters::{ParamKind, ParamSpace};
    use crate::theories::scaling_theory;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn grid() -> Arc<Grid> {
        make_grid(1, &[64], &[0.1]).unwrap()
    }

    fn a_op(g: &Arc<Grid>) -> Operator {
        diff_operator(g, &StencilSpec::shifted_laplacian(1)).unwrap()
    }

    fn pos1() -> ParamSpace {
        ParamSpace::new(ParamKind::PositiveReal, 1)
    }

    fn engine() -> Engine {
        Engine::new(VerifyConfig {
            samples: 32,
            ..VerifyConfig::default()
        })
    }

    fn at(w: &EmergenceWitness, eps: f64) -> Vec<Complex64> {
        let p = Param::real(w.map.source(), &[eps]).unwrap();
        w.eval(&p).unwrap().components().to_vec()
    }

    #[test]
    fn monomial_halves_the_parameter() {
        let g = grid();
        let target = scaling_theory(pos1(), a_op(&g)).unwrap();
        let w = engine().emerge_monomial(&target, CoeffFn::linear(2.0), a_op(&g), 1).unwrap();
        assert!(w.is_verified());
        assert!(w.report.max_action_residual <= 1e-12);
        assert!((at(&w, 3.0)[0] - c(1.5)).norm() < 1e-14);
    }

    #[test]
    fn monomial_power_zero() {
        let g = grid();
        let target = scaling_theory(pos1(), Operator::identity(g.clone())).unwrap();
        let w = engine().emerge_monomial(&target, CoeffFn::linear(2.0), a_op(&g), 0).unwrap();
        assert!(w.is_verified());
        assert!((at(&w, 5.0)[0] - c(2.5)).norm() < 1e-14);
    }

    #[test]
    fn monomial_infeasible_for_odd_target() {
        let g = grid();
        let d = diff_operator(&g, &StencilSpec::partial(1, 0, 1)).unwrap();
        let target = scaling_theory(pos1(), d).unwrap();
        let w = engine().emerge_monomial(&target, CoeffFn::linear(2.0), a_op(&g), 1).unwrap();
        match &w.report.verdict {
            Verdict::Infeasible { residual, .. } => assert!(residual.unwrap() > 0.1),
            v => panic!("unexpected verdict {v:?}"),
        }
    }

    #[test]
    fn monomial_requires_right_invertibility() {
        let g = grid();
        let lap = diff_operator(&g, &StencilSpec::laplacian(1)).unwrap();
        let target = scaling_theory(pos1(), lap.clone()).unwrap();
        assert!(matches!(
            engine().emerge_monomial(&target, CoeffFn::linear(1.0), lap, 1),
            Err(Error::NotRightInvertible { .. })
        ));
    }

    #[test]
    fn scaled_examples() {
        let g = grid();
        let e = engine();
        let target = scaling_theory(pos1(), a_op(&g)).unwrap();
        let w = e.emerge_monomial(&target, CoeffFn::linear(2.0), a_op(&g), 1).unwrap();
        let same = e.emerge_scaled(&w, c(1.0)).unwrap();
        assert_eq!(at(&same, 3.0), at(&w, 3.0));
        let twice = e.emerge_scaled(&w, c(2.0)).unwrap();
        assert!(twice.is_verified());
        assert!((at(&twice, 3.0)[0] - c(0.75)).norm() < 1e-14);
        let neg = e.emerge_scaled(&w, c(-1.0)).unwrap();
        assert!(matches!(neg.report.verdict, Verdict::Infeasible { .. }));
        assert!(matches!(e.emerge_scaled(&w, c(0.0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sum_of_identical_scalings() {
        let g = grid();
        let e = engine();
        let s = scaling_theory(pos1(), a_op(&g)).unwrap();
        let id = e.identity(&s);
        let out = e.emerge_sum(&id, &id, Some(&id)).unwrap();
        assert!(out.witness.is_verified());
        assert_eq!(at(&out.witness, 4.0), vec![c(2.0), c(2.0)]);
        let collapsed = out.collapsed.unwrap();
        assert!(collapsed.is_verified());
        assert_eq!(at(&collapsed, 4.0), vec![c(4.0)]);
        assert!(out.identity_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn sum_with_doubled_middle_theory() {
        let g = grid();
        let e = engine();
        let s1 = scaling_theory(pos1(), a_op(&g)).unwrap();
        let s2 = scaling_theory(pos1(), a_op(&g).scale(c(2.0))).unwrap();
        let f = e.emerge_monomial_into(&s1, &s2).unwrap();
        let gw = e.identity(&s1);
        let h = e.reparam(&s2, &s1, "given", vec![], |d| nv_scale(c(2.0), d));
        assert!(h.is_verified());
        let out = e.emerge_sum(&f, &gw, Some(&h)).unwrap();
        assert!(out.witness.is_verified());
        assert!(out.witness.report.max_operator_residual <= 1e-12);
        assert_eq!(at(&out.witness, 4.0), vec![c(1.0), c(2.0)]);
    }

    #[test]
    fn composition_square_roots() {
        let g = grid();
        let e = engine();
        let s = scaling_theory(pos1(), Operator::identity(g)).unwrap();
        let id = e.identity(&s);
        let out = e.emerge_composition(&id, &id, Some(&id)).unwrap();
        assert!(out.witness.is_verified());
        assert_eq!(at(&out.witness, 9.0), vec![c(3.0), c(3.0)]);
        assert!(out.collapsed.unwrap().is_verified());
        assert!(out.identity_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn composition_needs_multiplicativity() {
        let g = grid();
        let e = engine();
        let lap = diff_operator(&g, &StencilSpec::laplacian(1)).unwrap();
        let s = scaling_theory(pos1(), lap).unwrap();
        let id = e.identity(&s);
        assert!(matches!(
            e.emerge_composition(&id, &id, Some(&id)),
            Err(Error::MissingCertificate { property: "multiplicative", .. })
        ));
    }

    #[test]
    fn powers_of_identity_scaling() {
        let g = grid();
        let e = engine();
        let s = scaling_theory(pos1(), Operator::identity(g)).unwrap();
        let w = e.emerge_powers(&s, 1, 1).unwrap();
        assert_eq!(w.provenance().lemma, "reflexivity");
        let w = e.emerge_powers(&s, 2, 1).unwrap();
        assert!(w.is_verified());
        assert_eq!(at(&w, 16.0), vec![c(4.0), c(4.0)]);
        for l in 1..=3 {
            for m in 1..=3 {
                let w = e.emerge_powers(&s, l, m).unwrap();
                assert!(w.is_verified(), "l={l} m={m}");
                assert!(w.report.max_operator_residual <= 1e-10);
            }
        }
    }

    #[test]
    fn transitivity_checks_the_chain() {
        let g = grid();
        let e = engine();
        let a = scaling_theory(pos1(), a_op(&g)).unwrap();
        let b = scaling_theory(pos1(), a_op(&g)).unwrap();
        let ia = e.identity(&a);
        let ib = e.identity(&b);
        assert!(matches!(e.transitive(&ia, &ib), Err(Error::HypothesisMismatch(_))));
        assert!(e.transitive(&ia, &ia).unwrap().is_verified());
    }
}
