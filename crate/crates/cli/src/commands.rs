use std::collections::HashMap;
use std::time::Instant;

use npt_core::emergence::{sample_params, verify_at, Engine, EmergenceWitness, ParamMap, Strategy, VerifyConfig};
use npt_core::{Param, ScalarKind};

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::report::{
    complexes, config_digest, EngineInfo, MapEntry, PriorReport, ReportBody, RunReport, Section, Task, Timing,
    VerdictDoc,
};

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub strategy: Option<Strategy>,
}

pub fn load_config(path: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    apply_overrides(&mut cfg, overrides)?;
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        cfg.run.seed = seed;
    }
    if let Some(samples) = o.samples {
        cfg.run.samples = samples;
    }
    if let Some(tol) = o.tol {
        if !(tol > 0.0) {
            return Err(CliError::Config("--tol must be positive".into()));
        }
        cfg.run.tol = Some(tol);
    }
    if let Some(s) = o.strategy {
        cfg.strategy = s;
    }
    Ok(())
}

/// A finished command: the report document and the process exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub exit_code: i32,
}

impl Outcome {
    pub fn summary(&self) -> String {
        let b = &self.report.body;
        let mut line = format!(
            "{}: `{}` from `{}` ({}, {} samples, seed {})",
            b.verdict, b.task.target, b.task.ambient, b.task.strategy, b.task.samples, b.task.seed
        );
        if let Some(s) = b.combinator.as_ref().or(b.oracle.as_ref()) {
            let residual = match &s.verdict {
                VerdictDoc::Refuted { residual, .. } => Some(*residual),
                VerdictDoc::Infeasible { residual, .. } => *residual,
                _ => s.residuals.as_ref().map(|r| r.max_action.max(r.max_operator)),
            };
            if let Some(r) = residual {
                line.push_str(&format!(", residual {r:.3e}"));
            }
        }
        if let Some(o) = b.oracle.as_ref().and_then(|s| s.oracle_report.as_ref()) {
            line.push_str(&format!(", oracle residual {:.3e}", o.max_residual));
        }
        if let Some(d) = &b.diagnostic {
            line.push_str(&format!("; {d}"));
        }
        line
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report)?)
    }
}

fn field_name(kind: ScalarKind) -> &'static str {
    match kind {
        ScalarKind::Real => "real",
        ScalarKind::Complex => "complex",
    }
}

fn engine(cfg: &ExperimentConfig) -> Engine {
    Engine::new(VerifyConfig {
        samples: cfg.run.samples,
        seed: cfg.run.seed,
        tol: Some(cfg.tolerance()),
        field_kind: cfg.run.field,
    })
}

fn task(cfg: &ExperimentConfig, strategy: &str) -> Task {
    Task {
        target: cfg.target.id().to_string(),
        ambient: cfg.ambient.id().to_string(),
        strategy: strategy.to_string(),
        samples: cfg.run.samples,
        seed: cfg.run.seed,
        tolerance: cfg.tolerance(),
        field: field_name(cfg.run.field),
    }
}

fn digest(cfg: &ExperimentConfig) -> String {
    let effective = format!(
        "samples={} seed={} tol={:?} table={} field={} strategy={}",
        cfg.run.samples,
        cfg.run.seed,
        cfg.tolerance(),
        cfg.run.table,
        field_name(cfg.run.field),
        cfg.strategy
    );
    config_digest(&cfg.source, &effective)
}

fn exit_for(verdict: &str) -> i32 {
    if verdict == "verified" {
        0
    } else {
        2
    }
}

fn map_table(cfg: &ExperimentConfig, w: &EmergenceWitness) -> Vec<MapEntry> {
    sample_params(cfg.target.space(), cfg.run.table, cfg.run.seed)
        .iter()
        .map(|eps| MapEntry::new(eps, w.eval(eps)))
        .collect()
}

/// Synthesizes `F` with the configured strategies and verifies it.
pub fn cmd_synthesize(cfg: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let e = engine(cfg);
    let (t, a) = (&cfg.target, &cfg.ambient);
    let combinator = matches!(cfg.strategy, Strategy::Combinator | Strategy::Both).then(|| e.emerge(t, a));
    let oracle = matches!(cfg.strategy, Strategy::Oracle | Strategy::Both).then(|| e.emerge_oracle(t, a));

    let section = |r: &npt_core::Result<EmergenceWitness>| match r {
        Ok(w) => Section::of_witness(w),
        Err(err) => Section::failed(err.to_string()),
    };
    let (agreement, verdicts_agree) = match (&combinator, &oracle) {
        (Some(c), Some(o)) => {
            let agreement = match (c, o) {
                (Ok(c), Ok(o)) => e.agreement(c, o).ok().flatten(),
                _ => None,
            };
            (agreement, Some(section(c).verdict.name() == section(o).verdict.name()))
        }
        _ => (None, None),
    };

    let primary = combinator.as_ref().or(oracle.as_ref()).expect("every strategy runs something");
    let (verdict, diagnostic, table) = match primary {
        Ok(w) => (section(primary).verdict.name(), None, map_table(cfg, w)),
        Err(err) => ("infeasible", Some(err.to_string()), vec![]),
    };
    let exit_code = exit_for(verdict);
    let body = ReportBody {
        engine: EngineInfo::current(),
        command: "synthesize",
        config_digest: digest(cfg),
        task: task(cfg, &cfg.strategy.to_string()),
        verdict,
        exit_code,
        diagnostic,
        combinator: combinator.as_ref().map(section),
        oracle: oracle.as_ref().map(section),
        agreement,
        verdicts_agree,
        map_table: table,
    };
    Outcome {
        report: RunReport {
            body,
            timing: Timing {
                wall_seconds: start.elapsed().as_secs_f64(),
            },
        },
        exit_code,
    }
}

fn key(components: &[[f64; 2]]) -> Vec<(u64, u64)> {
    components.iter().map(|[re, im]| (re.to_bits(), im.to_bits())).collect()
}

/// Re-verifies a prior map table against the configured theories with
/// fresh fields, evaluating `F` only at the table's `ε`.
pub fn cmd_verify(cfg: &ExperimentConfig, table: &[MapEntry]) -> Result<Outcome> {
    let start = Instant::now();
    let source = cfg.target.space();
    let target_space = cfg.ambient.space();
    let mut lookup = HashMap::new();
    let mut points = Vec::new();
    for (i, row) in table.iter().enumerate() {
        let Some(value) = &row.value else { continue };
        let eps = Param::new(source, complexes(&row.eps))
            .map_err(|e| CliError::MapTable(format!("row {i}: ε is not in {source}: {e}")))?;
        let v = Param::new(target_space, complexes(value))
            .map_err(|e| CliError::MapTable(format!("row {i}: F(ε) is not in {target_space}: {e}")))?;
        lookup.insert(key(&row.eps), v);
        points.push(eps);
    }
    if points.is_empty() {
        return Err(CliError::MapTable("no rows with a value to verify".into()));
    }
    let map = ParamMap::new(source, target_space, "table", "map table lookup", vec![], move |eps| {
        let k: Vec<[f64; 2]> = eps.components().iter().map(|z| [z.re, z.im]).collect();
        lookup
            .get(&key(&k))
            .cloned()
            .ok_or_else(|| npt_core::Error::InvalidArgument(format!("no table row for ε = {eps}")))
    });
    let report = verify_at(
        &cfg.target,
        &cfg.ambient,
        &map,
        &points,
        cfg.run.seed,
        Some(cfg.tolerance()),
        cfg.run.field,
    )?;
    let section = Section::of_report(&report);
    let verdict = section.verdict.name();
    let exit_code = exit_for(verdict);
    let body = ReportBody {
        engine: EngineInfo::current(),
        command: "verify",
        config_digest: digest(cfg),
        task: Task {
            samples: report.samples,
            ..task(cfg, "table")
        },
        verdict,
        exit_code,
        diagnostic: None,
        combinator: Some(section),
        oracle: None,
        agreement: None,
        verdicts_agree: None,
        map_table: table.to_vec(),
    };
    Ok(Outcome {
        report: RunReport {
            body,
            timing: Timing {
                wall_seconds: start.elapsed().as_secs_f64(),
            },
        },
        exit_code,
    })
}

pub fn read_map_table(path: &str) -> Result<Vec<MapEntry>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })?;
    let prior: PriorReport = serde_json::from_str(&text)?;
    Ok(prior.body.map_table)
}
