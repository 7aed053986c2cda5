//! The JSON report document. Everything under `body` is a pure function of
//! the effective configuration; wall-clock data lives in `timing`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use npt_core::emergence::{
    EmergenceWitness, OracleReport, OracleVerdict, Provenance, Verdict, VerificationReport,
};
use npt_core::Param;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub body: ReportBody,
    pub timing: Timing,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl EngineInfo {
    pub fn current() -> Self {
        Self {
            name: "npt",
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Task {
    pub target: String,
    pub ambient: String,
    pub strategy: String,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub field: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportBody {
    pub engine: EngineInfo,
    pub command: &'static str,
    pub config_digest: String,
    pub task: Task,
    pub verdict: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combinator: Option<Section>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Section>,
    /// Largest relative gap between combinator and oracle maps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdicts_agree: Option<bool>,
    pub map_table: Vec<MapEntry>,
}

/// A complex number as `[re, im]`.
pub type Pair = [f64; 2];

fn pairs(p: &Param) -> Vec<Pair> {
    p.components().iter().map(|z| [z.re, z.im]).collect()
}

pub fn complexes(v: &[Pair]) -> Vec<Complex64> {
    v.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum VerdictDoc {
    Verified,
    Refuted {
        worst_eps: Vec<Pair>,
        residual: f64,
    },
    Infeasible {
        reason: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        residual: Option<f64>,
    },
    #[serde(rename = "emergent-only-in-closure")]
    ClosureOnly { flagged: Vec<usize> },
}

impl VerdictDoc {
    pub fn name(&self) -> &'static str {
        match self {
            VerdictDoc::Verified => "verified",
            VerdictDoc::Refuted { .. } => "refuted",
            VerdictDoc::Infeasible { .. } => "infeasible",
            VerdictDoc::ClosureOnly { .. } => "emergent-only-in-closure",
        }
    }
}

impl From<&Verdict> for VerdictDoc {
    fn from(v: &Verdict) -> Self {
        match v {
            Verdict::Verified => VerdictDoc::Verified,
            Verdict::Refuted { worst_eps, residual } => VerdictDoc::Refuted {
                worst_eps: pairs(worst_eps),
                residual: *residual,
            },
            Verdict::Infeasible { reason, residual } => VerdictDoc::Infeasible {
                reason: reason.clone(),
                residual: *residual,
            },
            Verdict::ClosureOnly { flagged } => VerdictDoc::ClosureOnly { flagged: flagged.clone() },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_action: f64,
    pub max_operator: f64,
    pub operator_check_implied: bool,
    pub level_divergence: bool,
}

impl From<&VerificationReport> for Residuals {
    fn from(r: &VerificationReport) -> Self {
        Self {
            samples: r.samples,
            seed: r.seed,
            tolerance: r.tolerance,
            max_action: r.max_action_residual,
            max_operator: r.max_operator_residual,
            operator_check_implied: r.operator_check_implied,
            level_divergence: r.level_divergence,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSampleDoc {
    pub eps: Vec<Pair>,
    pub solution: Vec<Pair>,
    pub residual: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleDoc {
    pub columns: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
    pub max_residual: f64,
    pub verdict: OracleVerdict,
    pub samples: Vec<OracleSampleDoc>,
}

impl From<&OracleReport> for OracleDoc {
    fn from(r: &OracleReport) -> Self {
        Self {
            columns: r.columns,
            rank: r.rank,
            singular_values: r.singular_values.clone(),
            tolerance: r.tolerance,
            max_residual: r.max_residual,
            verdict: r.verdict.clone(),
            samples: r
                .samples
                .iter()
                .map(|s| OracleSampleDoc {
                    eps: pairs(&s.eps),
                    solution: s.solution.iter().map(|z| [z.re, z.im]).collect(),
                    residual: s.residual,
                    flagged: s.flagged.clone(),
                })
                .collect(),
        }
    }
}

/// One strategy's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub verdict: VerdictDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failing_steps: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_report: Option<OracleDoc>,
}

impl Section {
    pub fn of_witness(w: &EmergenceWitness) -> Self {
        Self {
            verdict: (&w.report.verdict).into(),
            residuals: Some((&w.report).into()),
            failing_steps: w.provenance().failing_steps(),
            provenance: Some(w.provenance().clone()),
            oracle_report: w.oracle.as_ref().map(Into::into),
        }
    }

    pub fn of_report(r: &VerificationReport) -> Self {
        Self {
            verdict: (&r.verdict).into(),
            residuals: Some(r.into()),
            failing_steps: vec![],
            provenance: None,
            oracle_report: None,
        }
    }

    /// A strategy that stopped with an error before producing a map.
    pub fn failed(reason: String) -> Self {
        Self {
            verdict: VerdictDoc::Infeasible { reason, residual: None },
            residuals: None,
            failing_steps: vec![],
            provenance: None,
            oracle_report: None,
        }
    }
}

/// One row `ε → F(ε)`; `value` is absent where `F` is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub eps: Vec<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<Pair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MapEntry {
    pub fn new(eps: &Param, value: npt_core::Result<Param>) -> Self {
        match value {
            Ok(v) => Self {
                eps: pairs(eps),
                value: Some(pairs(&v)),
                error: None,
            },
            Err(e) => Self {
                eps: pairs(eps),
                value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// The part of a prior report that `verify` reads back.
#[derive(Debug, Deserialize)]
pub struct PriorReport {
    pub body: PriorBody,
}

#[derive(Debug, Deserialize)]
pub struct PriorBody {
    pub map_table: Vec<MapEntry>,
}

/// `sha256(document ‖ 0 ‖ effective run parameters)`, hex encoded.
pub fn config_digest(source: &str, effective: &str) -> String {
    let mut h = Sha256::new();
    h.update(source.as_bytes());
    h.update([0u8]);
    h.update(effective.as_bytes());
    hex::encode(h.finalize())
}
