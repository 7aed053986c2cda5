//! Experiment files: TOML with the sections `[grid]`, `[operator.NAME]`,
//! `[theory.NAME]`, `[emergence]` and `[run]`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;

use npt_core::emergence::Strategy;
use npt_core::operators::{combine, compose, diff_operator_with, DerivativeScheme};
use npt_core::theories::{
    composition_of, constant_theory, monomial_theory, polynomial_theory, power_theory, scaled_theory,
    scaling_theory, sum_theories,
};
use npt_core::tolerance::{DEFAULT_VERIFY_SAMPLES, VERIFY_TOL_DENSE, VERIFY_TOL_SYMBOL};
use npt_core::{make_grid, CoeffFn, Grid, Operator, ParamKind, ParamSpace, Poly, PolyTerm, ScalarKind, StencilSpec, Theory};

use crate::error::{CliError, Result};

const DEFAULT_TABLE: usize = 8;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Coeff {
    Real(f64),
    Complex([f64; 2]),
}

impl Coeff {
    fn value(self) -> Complex64 {
        match self {
            Coeff::Real(x) => Complex64::new(x, 0.0),
            Coeff::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

fn one() -> Coeff {
    Coeff::Real(1.0)
}

fn unit_usize() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Vec<usize>,
    h: Vec<f64>,
    #[serde(default)]
    derivatives: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStencilTerm {
    alpha: Vec<usize>,
    #[serde(default = "one")]
    coeff: Coeff,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinearTerm {
    op: String,
    #[serde(default = "one")]
    coeff: Coeff,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    stencil: Option<String>,
    axis: Option<usize>,
    order: Option<usize>,
    terms: Option<Vec<RawStencilTerm>>,
    symbol: Option<Vec<Coeff>>,
    sum: Option<Vec<RawLinearTerm>>,
    product: Option<Vec<String>>,
    #[serde(default)]
    dense: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolyTerm {
    exponents: Vec<u32>,
    #[serde(default = "one")]
    coeff: Coeff,
    #[serde(default)]
    function: Option<String>,
    #[serde(default)]
    p: Option<i32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTheory {
    kind: String,
    #[serde(default)]
    params: Option<String>,
    #[serde(default = "unit_usize")]
    degree: usize,
    operator: Option<String>,
    #[serde(default)]
    coeff: Option<Coeff>,
    #[serde(default)]
    function: Option<String>,
    #[serde(default)]
    p: Option<i32>,
    power: Option<u32>,
    variables: Option<Vec<String>>,
    terms: Option<Vec<RawPolyTerm>>,
    of: Option<Vec<String>>,
    factor: Option<Coeff>,
    k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmergence {
    target: String,
    ambient: String,
    #[serde(default)]
    strategy: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    samples: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    table: Option<usize>,
    field: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    #[serde(default)]
    operator: BTreeMap<String, RawOperator>,
    #[serde(default)]
    theory: BTreeMap<String, RawTheory>,
    emergence: RawEmergence,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub samples: usize,
    pub seed: u64,
    /// Explicit tolerance; the backend default applies when absent.
    pub tol: Option<f64>,
    /// Number of `ε` rows in the report's map table.
    pub table: usize,
    pub field: ScalarKind,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: Arc<Grid>,
    pub operators: BTreeMap<String, Operator>,
    pub theories: BTreeMap<String, Theory>,
    pub target: Theory,
    pub ambient: Theory,
    pub strategy: Strategy,
    pub run: RunParams,
    /// The document as read, for the report digest.
    pub source: String,
}

impl ExperimentConfig {
    /// The run's tolerance: explicit, or the default for the backends in use.
    pub fn tolerance(&self) -> f64 {
        self.run.tol.unwrap_or(if self.target.is_symbolic() && self.ambient.is_symbolic() {
            VERIFY_TOL_SYMBOL
        } else {
            VERIFY_TOL_DENSE
        })
    }
}

/// Rejects a table header that appears twice, naming both lines.
fn check_duplicate_sections(text: &str) -> Result<()> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if !line.starts_with('[') || line.starts_with("[[") {
            continue;
        }
        let Some(end) = line.find(']') else { continue };
        let name: String = line[1..end].split('.').map(str::trim).collect::<Vec<_>>().join(".");
        if let Some(&first) = seen.get(&name) {
            return Err(CliError::DuplicateSection {
                name,
                first,
                second: i + 1,
            });
        }
        seen.insert(name, i + 1);
    }
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn param_kind(section: &str, name: Option<&str>) -> Result<ParamKind> {
    match name.unwrap_or("positive-real") {
        "positive-real" => Ok(ParamKind::PositiveReal),
        "nonzero-real" => Ok(ParamKind::NonzeroReal),
        "nonzero-complex" => Ok(ParamKind::NonzeroComplex),
        other => Err(CliError::Config(format!(
            "[{section}]: unknown params `{other}` (expected positive-real, nonzero-real or nonzero-complex)"
        ))),
    }
}

fn coeff_fn(section: &str, function: Option<&str>, c: Complex64, p: Option<i32>) -> Result<CoeffFn> {
    match function.unwrap_or("linear") {
        "linear" => Ok(CoeffFn::Linear(c)),
        "power" => {
            let p = p.ok_or_else(|| CliError::Config(format!("[{section}]: function = \"power\" needs `p`")))?;
            Ok(CoeffFn::Power { c, p })
        }
        "constant" => Ok(CoeffFn::Constant(c)),
        other => Err(CliError::Config(format!(
            "[{section}]: unknown function `{other}` (expected linear, power or constant)"
        ))),
    }
}

struct Builder<'a> {
    grid: Arc<Grid>,
    scheme: DerivativeScheme,
    raw_ops: &'a BTreeMap<String, RawOperator>,
    raw_theories: &'a BTreeMap<String, RawTheory>,
    ops: BTreeMap<String, Operator>,
    theories: BTreeMap<String, Theory>,
    in_progress: Vec<String>,
}

impl Builder<'_> {
    fn operator(&mut self, name: &str, from: &str) -> Result<Operator> {
        if let Some(op) = self.ops.get(name) {
            return Ok(op.clone());
        }
        let section = format!("operator.{name}");
        let raw = self.raw_ops.get(name).ok_or_else(|| CliError::DanglingReference {
            section: from.to_string(),
            what: "operator",
            name: name.to_string(),
        })?;
        if self.in_progress.contains(&section) {
            return Err(CliError::Cycle(section));
        }
        self.in_progress.push(section.clone());
        let op = self.build_operator(raw, &section)?;
        self.in_progress.pop();
        self.ops.insert(name.to_string(), op.clone());
        Ok(op)
    }

    fn build_operator(&mut self, raw: &RawOperator, section: &str) -> Result<Operator> {
        let forms = [
            raw.stencil.is_some(),
            raw.terms.is_some(),
            raw.symbol.is_some(),
            raw.sum.is_some(),
            raw.product.is_some(),
        ];
        if forms.iter().filter(|&&f| f).count() != 1 {
            return Err(CliError::Config(format!(
                "[{section}]: give exactly one of stencil, terms, symbol, sum or product"
            )));
        }
        let dim = self.grid.dim();
        let op = if let Some(name) = &raw.stencil {
            let spec = match name.as_str() {
                "identity" => StencilSpec::identity(dim),
                "laplacian" => StencilSpec::laplacian(dim),
                "shifted-laplacian" => StencilSpec::shifted_laplacian(dim),
                "derivative" => {
                    let axis = raw.axis.unwrap_or(0);
                    if axis >= dim {
                        return Err(CliError::GridMismatch {
                            section: section.to_string(),
                            message: format!("axis {axis} on a {dim}-dimensional grid"),
                        });
                    }
                    StencilSpec::partial(dim, axis, raw.order.unwrap_or(1))
                }
                other => {
                    return Err(CliError::Config(format!(
                        "[{section}]: unknown stencil `{other}` (expected identity, laplacian, shifted-laplacian or derivative)"
                    )))
                }
            };
            diff_operator_with(&self.grid, &spec, self.scheme)?
        } else if let Some(terms) = &raw.terms {
            if let Some(t) = terms.iter().find(|t| t.alpha.len() != dim) {
                return Err(CliError::GridMismatch {
                    section: section.to_string(),
                    message: format!("multi-index of length {} on a {dim}-dimensional grid", t.alpha.len()),
                });
            }
            let spec = StencilSpec::new(terms.iter().map(|t| (t.alpha.clone(), t.coeff.value())).collect());
            diff_operator_with(&self.grid, &spec, self.scheme)?
        } else if let Some(symbol) = &raw.symbol {
            if symbol.len() != self.grid.len() {
                return Err(CliError::GridMismatch {
                    section: section.to_string(),
                    message: format!("symbol has {} entries, the grid has {} points", symbol.len(), self.grid.len()),
                });
            }
            Operator::from_symbol(self.grid.clone(), symbol.iter().map(|c| c.value()).collect())?
        } else if let Some(sum) = &raw.sum {
            let mut acc = Operator::zero(self.grid.clone());
            for t in sum {
                let op = self.operator(&t.op, section)?;
                acc = combine(Complex64::new(1.0, 0.0), &acc, t.coeff.value(), &op)?;
            }
            acc
        } else {
            let names = raw.product.as_ref().expect("one form is present");
            let mut acc = Operator::identity(self.grid.clone());
            for n in names {
                let op = self.operator(n, section)?;
                acc = compose(&acc, &op)?;
            }
            acc
        };
        Ok(if raw.dense { op.to_dense_operator()? } else { op })
    }

    fn theory(&mut self, name: &str, from: &str) -> Result<Theory> {
        if let Some(t) = self.theories.get(name) {
            return Ok(t.clone());
        }
        let section = format!("theory.{name}");
        let raw = self.raw_theories.get(name).ok_or_else(|| CliError::DanglingReference {
            section: from.to_string(),
            what: "theory",
            name: name.to_string(),
        })?;
        if self.in_progress.contains(&section) {
            return Err(CliError::Cycle(section));
        }
        self.in_progress.push(section.clone());
        let t = self.build_theory(raw, &section)?;
        self.in_progress.pop();
        // powers of one are the base theory itself and keep its name
        let t = if t.id() == name || self.theories.values().any(|u| u.ptr_eq(&t)) { t } else { t.named(name) };
        self.theories.insert(name.to_string(), t.clone());
        Ok(t)
    }

    fn required<'r, T>(&self, value: &'r Option<T>, field: &str, section: &str) -> Result<&'r T> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("[{section}]: missing `{field}`")))
    }

    fn build_theory(&mut self, raw: &RawTheory, section: &str) -> Result<Theory> {
        let kind = param_kind(section, raw.params.as_deref())?;
        let space = ParamSpace::new(kind, raw.degree);
        Ok(match raw.kind.as_str() {
            "scaling" => {
                let op = self.operator(self.required(&raw.operator, "operator", section)?, section)?;
                scaling_theory(space, op)?
            }
            "constant" => {
                let op = self.operator(self.required(&raw.operator, "operator", section)?, section)?;
                constant_theory(kind, op)
            }
            "monomial" => {
                let op = self.operator(self.required(&raw.operator, "operator", section)?, section)?;
                let c = raw.coeff.unwrap_or(one()).value();
                let g = coeff_fn(section, raw.function.as_deref(), c, raw.p)?;
                monomial_theory(g, op, raw.power.unwrap_or(1), space)?
            }
            "polynomial" => {
                let names = self.required(&raw.variables, "variables", section)?;
                let vars = names
                    .iter()
                    .map(|n| self.operator(n, section))
                    .collect::<Result<Vec<_>>>()?;
                let terms = self.required(&raw.terms, "terms", section)?;
                let terms = terms
                    .iter()
                    .enumerate()
                    .map(|(slot, t)| {
                        let f = coeff_fn(section, t.function.as_deref(), t.coeff.value(), t.p)?;
                        Ok(PolyTerm::new(t.exponents.clone(), f, slot))
                    })
                    .collect::<Result<Vec<_>>>()?;
                polynomial_theory(Poly::new(vars, terms, raw.degree, kind)?)
            }
            "sum" => {
                let parts = self.parts(raw, section)?;
                let [a, b] = parts.as_slice() else {
                    return Err(CliError::Config(format!("[{section}]: a sum takes exactly two theories")));
                };
                sum_theories(a, b)?
            }
            "scaled" => {
                let parts = self.parts(raw, section)?;
                let [inner] = parts.as_slice() else {
                    return Err(CliError::Config(format!("[{section}]: `of` names one theory")));
                };
                let c = self.required(&raw.factor, "factor", section)?.value();
                scaled_theory(c, inner)?
            }
            "composition" => composition_of(&self.parts(raw, section)?)?,
            "power" => {
                let parts = self.parts(raw, section)?;
                let [base] = parts.as_slice() else {
                    return Err(CliError::Config(format!("[{section}]: `of` names one theory")));
                };
                power_theory(base, *self.required(&raw.k, "k", section)?)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "[{section}]: unknown kind `{other}` (expected scaling, constant, monomial, polynomial, sum, scaled, composition or power)"
                )))
            }
        })
    }

    fn parts(&mut self, raw: &RawTheory, section: &str) -> Result<Vec<Theory>> {
        let names = self.required(&raw.of, "of", section)?.clone();
        names.iter().map(|n| self.theory(n, section)).collect()
    }
}

/// Parses and validates an experiment file, filling defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    check_duplicate_sections(text)?;
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;

    let g = &raw.grid;
    if g.n.len() != g.h.len() {
        return Err(CliError::GridMismatch {
            section: "grid".into(),
            message: format!("{} sizes but {} spacings", g.n.len(), g.h.len()),
        });
    }
    let grid = make_grid(g.n.len(), &g.n, &g.h)?;
    let scheme = match g.derivatives.as_deref().unwrap_or("central") {
        "central" => DerivativeScheme::Central,
        "spectral" => DerivativeScheme::Spectral,
        other => {
            return Err(CliError::Config(format!(
                "[grid]: unknown derivatives `{other}` (expected central or spectral)"
            )))
        }
    };

    let mut b = Builder {
        grid: grid.clone(),
        scheme,
        raw_ops: &raw.operator,
        raw_theories: &raw.theory,
        ops: BTreeMap::new(),
        theories: BTreeMap::new(),
        in_progress: Vec::new(),
    };
    for name in raw.operator.keys() {
        b.operator(name, "operator")?;
    }
    for name in raw.theory.keys() {
        b.theory(name, "theory")?;
    }
    let target = b.theory(&raw.emergence.target, "emergence")?;
    let ambient = b.theory(&raw.emergence.ambient, "emergence")?;
    let strategy = match &raw.emergence.strategy {
        Some(s) => s.parse().map_err(|e: npt_core::Error| CliError::Config(format!("[emergence]: {e}")))?,
        None => Strategy::default(),
    };

    let field = match raw.run.field.as_deref().unwrap_or("complex") {
        "complex" => ScalarKind::Complex,
        "real" => ScalarKind::Real,
        other => return Err(CliError::Config(format!("[run]: unknown field `{other}` (expected real or complex)"))),
    };
    let run = RunParams {
        samples: raw.run.samples.unwrap_or(DEFAULT_VERIFY_SAMPLES),
        seed: raw.run.seed.unwrap_or(0),
        tol: raw.run.tol,
        table: raw.run.table.unwrap_or(DEFAULT_TABLE),
        field,
    };
    if run.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(CliError::Config("[run]: tol must be positive".into()));
    }

    Ok(ExperimentConfig {
        grid,
        operators: b.ops,
        theories: b.theories,
        target,
        ambient,
        strategy,
        run,
        source: text.to_string(),
    })
}
