//! Emergence maps `F` with `S₁[φ;ε] = S₂[φ;F(ε)]`.
//!
//! Each lemma is a combinator on witnesses. A combinator never asserts its
//! conclusion: the resulting map is always re-verified on sampled `(ε, φ)`,
//! and parameter-map failures surface as an infeasible verdict naming the
//! step that broke.

mod lemmas;
mod oracle;
mod polynomial;
mod qform;
mod synthesize;
mod verify;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::background::ScalarKind;
use crate::error::{Error, Result};
use crate::parameters::{Param, ParamSpace};
use crate::theories::Theory;
use crate::tolerance::DEFAULT_VERIFY_SAMPLES;

pub use lemmas::{CompositionOutcome, SumOutcome};
pub use oracle::{oracle_solve, sample_params, AffineForm, OracleReport, OracleSample, OracleVerdict};
pub use polynomial::{Recurrence, RecurrenceHypotheses, RecurrencePair};
pub use qform::{polarization_matrix, qform_zero_test, QformReport};
pub use synthesize::{Strategy, Synthesis};
pub use verify::{verify_at, verify_witness};

type EvalFn = Arc<dyn Fn(&Param) -> Result<Param> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    Verified,
    Refuted,
    Infeasible,
    ClosureOnly,
}

/// How a map was built: one node per combinator application.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub lemma: String,
    pub summary: String,
    pub status: StepStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Provenance>,
}

impl Provenance {
    /// Summaries of every non-verified node, depth first, without repeats.
    pub fn failing_steps(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_failures(&mut out);
        out
    }

    fn collect_failures(&self, out: &mut Vec<String>) {
        for c in &self.children {
            c.collect_failures(out);
        }
        if self.status != StepStatus::Verified && !out.contains(&self.summary) {
            out.push(self.summary.clone());
        }
    }

    /// Depth-first search by summary.
    pub fn find(&self, summary: &str) -> Option<&Provenance> {
        if self.summary == summary {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(summary))
    }
}

/// A parameter map `F : Par₁ → Par₂` with its construction trace.
#[derive(Clone)]
pub struct ParamMap {
    source: ParamSpace,
    target: ParamSpace,
    eval: EvalFn,
    pub provenance: Provenance,
}

impl fmt::Debug for ParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamMap")
            .field("source", &self.source)
            .field("target", &self.target)
            .field("lemma", &self.provenance.lemma)
            .finish_non_exhaustive()
    }
}

impl ParamMap {
    pub fn new(
        source: ParamSpace,
        target: ParamSpace,
        lemma: impl Into<String>,
        summary: impl Into<String>,
        children: Vec<Provenance>,
        eval: impl Fn(&Param) -> Result<Param> + Send + Sync + 'static,
    ) -> Self {
        Self {
            source,
            target,
            eval: Arc::new(eval),
            provenance: Provenance {
                lemma: lemma.into(),
                summary: summary.into(),
                status: StepStatus::Verified,
                detail: None,
                children,
            },
        }
    }

    pub fn source(&self) -> ParamSpace {
        self.source
    }

    pub fn target(&self) -> ParamSpace {
        self.target
    }

    pub fn eval(&self, eps: &Param) -> Result<Param> {
        if eps.space() != self.source {
            return Err(Error::SpaceMismatch(format!(
                "map expects {}, got {}",
                self.source,
                eps.space()
            )));
        }
        let out = (self.eval)(eps)?;
        if out.space() != self.target {
            return Err(Error::SpaceMismatch(format!(
                "map produced {}, declared {}",
                out.space(),
                self.target
            )));
        }
        Ok(out)
    }

    pub(crate) fn eval_fn(&self) -> EvalFn {
        self.eval.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Verified,
    Refuted { worst_eps: Param, residual: f64 },
    Infeasible { reason: String, residual: Option<f64> },
    /// The best fit is exact only with a component outside the parameter set.
    ClosureOnly { flagged: Vec<usize> },
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Refuted { .. } => "refuted",
            Verdict::Infeasible { .. } => "infeasible",
            Verdict::ClosureOnly { .. } => "emergent-only-in-closure",
        }
    }

    pub(crate) fn status(&self) -> StepStatus {
        match self {
            Verdict::Verified => StepStatus::Verified,
            Verdict::Refuted { .. } => StepStatus::Refuted,
            Verdict::Infeasible { .. } => StepStatus::Infeasible,
            Verdict::ClosureOnly { .. } => StepStatus::ClosureOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_action_residual: f64,
    pub max_operator_residual: f64,
    pub verdict: Verdict,
    /// Both operators were self-adjoint at every sample, so equal quadratic
    /// forms already force equal operators.
    pub operator_check_implied: bool,
    /// The action-level and operator-level checks disagree.
    pub level_divergence: bool,
}

#[derive(Debug, Clone)]
pub struct EmergenceWitness {
    pub target: Theory,
    pub ambient: Theory,
    pub map: ParamMap,
    pub report: VerificationReport,
    /// Least-squares cross-check, attached when the ambient is affine and
    /// the combinator could not certify a map.
    pub oracle: Option<OracleReport>,
}

impl EmergenceWitness {
    pub fn is_verified(&self) -> bool {
        self.report.verdict.is_verified()
    }

    pub fn eval(&self, eps: &Param) -> Result<Param> {
        self.map.eval(eps)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.map.provenance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub samples: usize,
    pub seed: u64,
    /// Overrides the backend-dependent default.
    pub tol: Option<f64>,
    pub field_kind: ScalarKind,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_VERIFY_SAMPLES,
            seed: 0,
            tol: None,
            field_kind: ScalarKind::Complex,
        }
    }
}

/// Runs combinators and verifies every witness they produce.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    pub config: VerifyConfig,
}

impl Engine {
    pub fn new(config: VerifyConfig) -> Self {
        Self { config }
    }
}
