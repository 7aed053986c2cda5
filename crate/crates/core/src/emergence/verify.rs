use rand::RngCore;

use super::{Engine, EmergenceWitness, ParamMap, Verdict, VerificationReport};
use crate::background::{inner_product, sample_field, stream_rng, ScalarKind};
use crate::error::{Error, Result};
use crate::operators::{apply, op_distance, self_adjointness_defect, Operator};
use crate::parameters::Param;
use crate::theories::Theory;
use crate::tolerance::{MIN_VERIFY_SAMPLES, NORM_FLOOR, VERIFY_TOL_DENSE, VERIFY_TOL_SYMBOL};

const SELF_ADJOINT_TOL: f64 = 1e-10;

pub(crate) fn default_tolerance(a: &Theory, b: &Theory) -> f64 {
    if a.is_symbolic() && b.is_symbolic() {
        VERIFY_TOL_SYMBOL
    } else {
        VERIFY_TOL_DENSE
    }
}

struct Sample {
    action: f64,
    operator: f64,
    self_adjoint: bool,
}

fn check_sample(
    target: &Theory,
    ambient: &Theory,
    map: &ParamMap,
    eps: &Param,
    field_seed: u64,
    kind: ScalarKind,
) -> Result<Sample> {
    let delta = map.eval(eps)?;
    let psi1 = target.op_map(eps)?;
    let psi2 = ambient.op_map(&delta)?;
    let phi = sample_field(target.grid(), field_seed, kind);
    if phi.is_zero() {
        return Err(Error::InvalidArgument("sampled a zero field".into()));
    }
    let (s1, n1) = action_and_scale(&psi1, &phi)?;
    let (s2, n2) = action_and_scale(&psi2, &phi)?;
    let scale = s1.norm().max(s2.norm()).max(n1).max(n2).max(NORM_FLOOR);
    Ok(Sample {
        action: (s1 - s2).norm() / scale,
        operator: op_distance(&psi1, &psi2)?,
        self_adjoint: self_adjointness_defect(&psi1) <= SELF_ADJOINT_TOL
            && self_adjointness_defect(&psi2) <= SELF_ADJOINT_TOL,
    })
}

/// `⟪φ,Ψφ⟫` together with the Cauchy–Schwarz bound `‖Ψφ‖‖φ‖`.
fn action_and_scale(
    psi: &Operator,
    phi: &crate::background::Field,
) -> Result<(num_complex::Complex64, f64)> {
    let image = apply(psi, phi)?;
    let s = inner_product(phi, &image)?;
    Ok((s, (image.norm_sq() * phi.norm_sq()).sqrt()))
}

/// Samples `(ε, φ)` pairs and compares `S₁[φ;ε]` with `S₂[φ;F(ε)]` and
/// `Ψ₁,ε` with `Ψ₂,F(ε)`. At least eight pairs are always drawn.
pub(crate) fn verify_map(
    target: &Theory,
    ambient: &Theory,
    map: &ParamMap,
    samples: usize,
    seed: u64,
    tol: Option<f64>,
    kind: ScalarKind,
) -> VerificationReport {
    let samples = samples.max(MIN_VERIFY_SAMPLES);
    let points = (0..samples).map(|i| {
        let mut rng = stream_rng(seed, i as u64);
        let eps = map.source().sample(&mut rng);
        (eps, rng.next_u64())
    });
    check_points(target, ambient, map, points, seed, tol, kind)
}

/// Like [`verify_map`], but with `ε` restricted to `points`. Fields are
/// drawn from `seed`; the list is cycled until eight pairs are checked.
pub fn verify_at(
    target: &Theory,
    ambient: &Theory,
    map: &ParamMap,
    points: &[Param],
    seed: u64,
    tol: Option<f64>,
    kind: ScalarKind,
) -> Result<VerificationReport> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no parameter points to verify at".into()));
    }
    let count = points.len().max(MIN_VERIFY_SAMPLES);
    let pairs = (0..count).map(|i| {
        let mut rng = stream_rng(seed, i as u64);
        (points[i % points.len()].clone(), rng.next_u64())
    });
    Ok(check_points(target, ambient, map, pairs, seed, tol, kind))
}

fn check_points(
    target: &Theory,
    ambient: &Theory,
    map: &ParamMap,
    points: impl Iterator<Item = (Param, u64)>,
    seed: u64,
    tol: Option<f64>,
    kind: ScalarKind,
) -> VerificationReport {
    let tolerance = tol.unwrap_or_else(|| default_tolerance(target, ambient));
    let mut samples = 0;
    let mut max_action: f64 = 0.0;
    let mut max_operator: f64 = 0.0;
    let mut worst: Option<(f64, Param)> = None;
    let mut all_self_adjoint = true;
    let mut failure: Option<(String, Option<f64>)> = None;
    for (eps, field_seed) in points {
        samples += 1;
        match check_sample(target, ambient, map, &eps, field_seed, kind) {
            Ok(s) => {
                max_action = max_action.max(s.action);
                max_operator = max_operator.max(s.operator);
                all_self_adjoint &= s.self_adjoint;
                let r = s.action.max(s.operator);
                if worst.as_ref().is_none_or(|(w, _)| r > *w) {
                    worst = Some((r, eps));
                }
            }
            Err(e) => {
                let residual = match e {
                    Error::NotInImage { residual } => Some(residual),
                    _ => None,
                };
                match &mut failure {
                    None => failure = Some((format!("at ε = {eps}: {e}"), residual)),
                    Some((_, r)) => {
                        if let Some(new) = residual {
                            *r = Some(r.map_or(new, |old: f64| old.max(new)));
                        }
                    }
                }
            }
        }
    }
    let action_ok = max_action <= tolerance;
    let operator_ok = max_operator <= tolerance;
    let verdict = if let Some((reason, residual)) = failure {
        Verdict::Infeasible { reason, residual }
    } else if action_ok && operator_ok {
        Verdict::Verified
    } else {
        let (residual, worst_eps) = worst.expect("at least one sample");
        Verdict::Refuted {
            worst_eps,
            residual,
        }
    };
    VerificationReport {
        samples,
        seed,
        tolerance,
        max_action_residual: max_action,
        max_operator_residual: max_operator,
        verdict,
        operator_check_implied: all_self_adjoint,
        level_divergence: action_ok != operator_ok,
    }
}

/// Re-verifies a witness with a new sample budget, seed and tolerance.
pub fn verify_witness(
    w: &EmergenceWitness,
    samples: usize,
    seed: u64,
    tol: Option<f64>,
) -> VerificationReport {
    verify_map(&w.target, &w.ambient, &w.map, samples, seed, tol, ScalarKind::Complex)
}

impl Engine {
    pub fn verify(&self, target: &Theory, ambient: &Theory, map: &ParamMap) -> VerificationReport {
        verify_map(
            target,
            ambient,
            map,
            self.config.samples,
            self.config.seed,
            self.config.tol,
            self.config.field_kind,
        )
    }

    /// Verifies `map` and records the verdict in its provenance. A
    /// `blocked` reason (an unmet lemma hypothesis) overrides a passing check.
    pub(crate) fn finish(
        &self,
        target: &Theory,
        ambient: &Theory,
        mut map: ParamMap,
        blocked: Option<String>,
    ) -> EmergenceWitness {
        let mut report = self.verify(target, ambient, &map);
        if let Some(reason) = blocked {
            let residual = report.max_action_residual.max(report.max_operator_residual);
            report.verdict = Verdict::Infeasible {
                reason,
                residual: Some(residual),
            };
        }
        map.provenance.status = report.verdict.status();
        map.provenance.detail = match &report.verdict {
            Verdict::Verified => None,
            Verdict::Refuted { worst_eps, residual } => {
                Some(format!("residual {residual:e} at ε = {worst_eps}"))
            }
            Verdict::Infeasible { reason, .. } => Some(reason.clone()),
            Verdict::ClosureOnly { flagged } => Some(format!("vanishing components {flagged:?}")),
        };
        EmergenceWitness {
            target: target.clone(),
            ambient: ambient.clone(),
            map,
            report,
            oracle: None,
        }
    }
}
