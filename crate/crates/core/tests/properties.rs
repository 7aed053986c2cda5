use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use npt_core::emergence::{oracle_solve, verify_witness, Engine, OracleVerdict, Strategy as Synth, VerifyConfig};
use npt_core::operators::{diff_operator, StencilSpec};
use npt_core::theories::{monomial_theory, scaling_theory};
use npt_core::{make_grid, CoeffFn, Grid, Operator, Param, ParamKind, ParamSpace};

fn grid() -> Arc<Grid> {
    make_grid(1, &[16], &[0.5]).unwrap()
}

fn engine(seed: u64) -> Engine {
    Engine::new(VerifyConfig {
        samples: 12,
        seed,
        ..VerifyConfig::default()
    })
}

/// Symbol bounded away from zero, so right inverses exist.
fn invertible_op() -> impl Strategy<Value = Operator> {
    prop::collection::vec((0.5..3.0f64, -3.1..3.1f64), 16).prop_map(|v| {
        let symbol = v.into_iter().map(|(r, t)| Complex64::from_polar(r, t)).collect();
        Operator::from_symbol(grid(), symbol).unwrap()
    })
}

fn space(kind: ParamKind) -> ParamSpace {
    ParamSpace::new(kind, 1)
}

fn gap(a: &Param, b: &Param) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| (x - y).norm() / y.norm().max(1.0))
        .fold(0.0, f64::max)
}

fn eps(x: f64) -> Param {
    Param::real(space(ParamKind::PositiveReal), &[x]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn verified_witnesses_survive_fresh_samples(
        psi in invertible_op(),
        c in 0.2..5.0f64,
        power in 0u32..4,
        seed in any::<u64>(),
    ) {
        let sp = space(ParamKind::PositiveReal);
        let target = scaling_theory(sp, npt_core::operators::pow(&psi, power.max(1)).unwrap()).unwrap();
        let ambient = monomial_theory(CoeffFn::linear(c), psi, power, sp).unwrap();
        let w = engine(seed).emerge_monomial_into(&target, &ambient);
        // power 0 has a constant ambient operator, which a scaling target cannot match
        if power == 0 {
            prop_assert!(w.map(|w| !w.is_verified()).unwrap_or(true));
            return Ok(());
        }
        let w = w.unwrap();
        prop_assert!(w.is_verified(), "{:?}", w.report.verdict);
        let again = verify_witness(&w, 40, seed.wrapping_add(1), None);
        prop_assert!(again.verdict.is_verified(), "{:?}", again.verdict);
    }

    #[test]
    fn scaling_the_ambient_divides_the_first_component(
        psi in invertible_op(),
        c in (0.2..4.0f64, -3.1..3.1f64).prop_map(|(r, t)| Complex64::from_polar(r, t)),
    ) {
        let sp = space(ParamKind::NonzeroComplex);
        let e = engine(7);
        let target = scaling_theory(sp, psi.clone()).unwrap();
        let ambient = monomial_theory(CoeffFn::linear(1.0), psi, 1, sp).unwrap();
        let w = e.emerge_monomial_into(&target, &ambient).unwrap();
        let scaled = e.emerge_scaled(&w, c).unwrap();
        prop_assert!(scaled.is_verified(), "{:?}", scaled.report.verdict);
        let x = Param::new(sp, vec![Complex64::new(1.5, -0.5)]).unwrap();
        let expected = w.eval(&x).unwrap().components()[0] / c;
        prop_assert!((scaled.eval(&x).unwrap().components()[0] - expected).norm() <= 1e-12);
    }

    #[test]
    fn sum_and_composition_collapse_to_identities(
        psi in invertible_op(),
        c2 in 0.2..5.0f64,
        c3 in 0.2..5.0f64,
    ) {
        let sp = space(ParamKind::PositiveReal);
        let e = engine(3);
        let s1 = scaling_theory(sp, psi.clone()).unwrap();
        let s2 = monomial_theory(CoeffFn::linear(c2), psi.clone(), 1, sp).unwrap();
        let s3 = monomial_theory(CoeffFn::linear(c3), psi, 1, sp).unwrap();
        let wf = e.emerge_monomial_into(&s1, &s2).unwrap();
        let wg = e.emerge_monomial_into(&s1, &s3).unwrap();
        let wh = e.emerge_monomial_into(&s2, &s3).unwrap();

        let sum = e.emerge_sum(&wf, &wg, Some(&wh)).unwrap();
        prop_assert!(sum.witness.is_verified());
        prop_assert!(sum.identity_residual.unwrap() <= 1e-10);

        // multiplicativity of `ε·Ψ` needs `Ψ∘Ψ = Ψ`
        let id = Operator::identity(grid());
        let s1 = scaling_theory(sp, id.clone()).unwrap();
        let s2 = monomial_theory(CoeffFn::linear(c2), id.clone(), 1, sp).unwrap();
        let s3 = monomial_theory(CoeffFn::linear(c3), id, 1, sp).unwrap();
        let wf = e.emerge_monomial_into(&s1, &s2).unwrap();
        let wg = e.emerge_monomial_into(&s1, &s3).unwrap();
        let wh = e.emerge_monomial_into(&s2, &s3).unwrap();
        let comp = e.emerge_composition(&wf, &wg, Some(&wh)).unwrap();
        prop_assert!(comp.witness.is_verified());
        prop_assert!(comp.identity_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn combinator_and_oracle_agree_on_monomials(
        psi in invertible_op(),
        c in 0.2..5.0f64,
    ) {
        let sp = space(ParamKind::PositiveReal);
        let target = scaling_theory(sp, psi.clone()).unwrap();
        let ambient = monomial_theory(CoeffFn::linear(c), psi, 1, sp).unwrap();
        let s = engine(11).synthesize(&target, &ambient, Synth::Both).unwrap();
        prop_assert_eq!(s.verdicts_agree(), Some(true));
        let worst = s.agreement.expect("both verified on a rank-one span");
        prop_assert!(worst <= 1e-6, "relative gap {}", worst);
    }
}

#[test]
fn non_emergence_is_reproducible() {
    let g = make_grid(1, &[64], &[0.1]).unwrap();
    let sp = space(ParamKind::PositiveReal);
    let odd = diff_operator(&g, &StencilSpec::partial(1, 0, 1)).unwrap();
    let even = diff_operator(&g, &StencilSpec::shifted_laplacian(1)).unwrap();
    let target = scaling_theory(sp, odd).unwrap();
    let ambient = monomial_theory(CoeffFn::linear(1.0), even, 1, sp).unwrap();
    let samples: Vec<Param> = [0.5, 2.0, 9.0].into_iter().map(eps).collect();

    let first = oracle_solve(&target, &ambient, &samples).unwrap();
    let second = oracle_solve(&target, &ambient, &samples).unwrap();
    assert!(matches!(first.verdict, OracleVerdict::Refuted { .. }));
    assert_eq!(first.max_residual.to_bits(), second.max_residual.to_bits());
    for (a, b) in first.samples.iter().zip(&second.samples) {
        assert_eq!(a.residual.to_bits(), b.residual.to_bits());
        assert_eq!(a.solution, b.solution);
    }

    let a = engine(5).emerge(&target, &ambient).unwrap();
    let b = engine(5).emerge(&target, &ambient).unwrap();
    assert!(!a.is_verified());
    assert_eq!(a.report, b.report);
    assert_eq!(
        a.report.max_action_residual.to_bits(),
        b.report.max_action_residual.to_bits()
    );
}

#[test]
fn oracle_matches_monomial_on_twenty_points() {
    let g = make_grid(1, &[64], &[0.1]).unwrap();
    let sp = space(ParamKind::PositiveReal);
    let a = diff_operator(&g, &StencilSpec::shifted_laplacian(1)).unwrap();
    let target = scaling_theory(sp, a.clone()).unwrap();
    let ambient = monomial_theory(CoeffFn::linear(1.0), a, 1, sp).unwrap();
    let e = engine(0);
    let w = e.emerge_monomial_into(&target, &ambient).unwrap();
    let points: Vec<Param> = (1..=20).map(|k| eps(0.25 * k as f64)).collect();
    let oracle = oracle_solve(&target, &ambient, &points).unwrap();
    assert_eq!(oracle.verdict, OracleVerdict::Verified);
    for s in &oracle.samples {
        let solution = Param::new(sp, s.solution.clone()).unwrap();
        assert!(gap(&w.eval(&s.eps).unwrap(), &solution) <= 1e-6);
    }
}
