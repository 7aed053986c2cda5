use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::oracle::sample_params;
use super::{Engine, EmergenceWitness};
use crate::error::{Error, Result};
use crate::parameters::Param;
use crate::theories::{Structure, Theory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Combinator,
    Oracle,
    Both,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Combinator => "combinator",
            Strategy::Oracle => "oracle",
            Strategy::Both => "both",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combinator" => Ok(Strategy::Combinator),
            "oracle" => Ok(Strategy::Oracle),
            "both" => Ok(Strategy::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy `{other}` (expected combinator, oracle or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub combinator: Option<EmergenceWitness>,
    pub oracle: Option<EmergenceWitness>,
    /// Largest relative gap between the two maps over sampled `ε`, when
    /// both verified and the oracle's span has full rank.
    pub agreement: Option<f64>,
}

impl Synthesis {
    /// The witness that decides the run: the combinator's when present.
    pub fn primary(&self) -> &EmergenceWitness {
        self.combinator
            .as_ref()
            .or(self.oracle.as_ref())
            .expect("a synthesis holds at least one witness")
    }

    /// Both strategies ran and reached the same verdict.
    pub fn verdicts_agree(&self) -> Option<bool> {
        match (&self.combinator, &self.oracle) {
            (Some(c), Some(o)) => Some(c.report.verdict.name() == o.report.verdict.name()),
            _ => None,
        }
    }
}

const AGREEMENT_SAMPLES: usize = 20;

fn relative_gap(a: &Param, b: &Param) -> f64 {
    let diff: f64 = a
        .components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.components().iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

/// `k` when `t` is `base` (k = 1) or a k-fold composition of `base` alone.
fn power_of(t: &Theory, base: &Theory) -> Option<usize> {
    if t.ptr_eq(base) {
        return Some(1);
    }
    match t.structure() {
        Structure::Composition(parts) if parts.iter().all(|p| p.ptr_eq(base)) => Some(parts.len()),
        _ => None,
    }
}

impl Engine {
    /// Largest relative gap between a combinator and an oracle witness over
    /// sampled `ε`, when both verified and the oracle's span has full rank.
    pub fn agreement(&self, combinator: &EmergenceWitness, oracle: &EmergenceWitness) -> Result<Option<f64>> {
        let full_rank = oracle.oracle.as_ref().is_some_and(|r| r.full_rank());
        if !(combinator.is_verified() && oracle.is_verified() && full_rank) {
            return Ok(None);
        }
        let mut worst: f64 = 0.0;
        for eps in sample_params(combinator.target.space(), AGREEMENT_SAMPLES, self.config.seed) {
            worst = worst.max(relative_gap(&combinator.eval(&eps)?, &oracle.eval(&eps)?));
        }
        Ok(Some(worst))
    }

    /// Picks the combinator matching the ambient's structure.
    pub fn emerge(&self, target: &Theory, ambient: &Theory) -> Result<EmergenceWitness> {
        match ambient.structure() {
            Structure::Monomial { .. } | Structure::Scaling(_) => self.emerge_monomial_into(target, ambient),
            Structure::Polynomial(p) if p.variables().len() == 1 => self.emerge_univariate(target, ambient),
            Structure::Polynomial(_) => self.emerge_multivariate(target, ambient),
            Structure::Constant(_) => {
                let space = ambient.space();
                Ok(self.reparam(target, ambient, "constant", vec![], move |_| Ok(space.unit())))
            }
            Structure::Scaled { c, inner } => {
                let w = self.emerge(target, inner)?;
                let scaled = self.emerge_scaled(&w, *c)?;
                let same = self.reparam(&scaled.ambient, ambient, "reflexivity", vec![], |e| Ok(e.clone()));
                self.transitive(&scaled, &same)
            }
            Structure::Sum(a, b) => {
                let wf = self.emerge(target, a)?;
                let wg = self.emerge(target, b)?;
                let wh = self.emerge(a, b)?;
                Ok(self.sum_with(&wf, &wg, Some(&wh), ambient, None).witness)
            }
            Structure::Composition(parts) => {
                let base = &parts[0];
                match (power_of(ambient, base), power_of(target, base)) {
                    (Some(l), Some(m)) => {
                        let w = self.emerge_powers(base, l, m)?;
                        let f = w.map.clone();
                        Ok(self.reparam(target, ambient, "powers", vec![w.provenance().clone()], move |e| {
                            f.eval(e)
                        }))
                    }
                    _ => self.emerge_pair(target, ambient, parts),
                }
            }
        }
    }

    fn emerge_pair(&self, target: &Theory, ambient: &Theory, parts: &[Theory]) -> Result<EmergenceWitness> {
        let [a, b] = parts else {
            return Err(Error::HypothesisMismatch(format!(
                "no combinator for the composition `{}` of more than two theories",
                ambient.id()
            )));
        };
        let wf = self.emerge(target, a)?;
        let wg = self.emerge(target, b)?;
        let wh = self.emerge(a, b)?;
        Ok(self.composition_with(&wf, &wg, Some(&wh), ambient, None).witness)
    }

    /// Runs the requested strategies and, when both verify on a full-rank
    /// span, measures how far apart their maps are.
    pub fn synthesize(&self, target: &Theory, ambient: &Theory, strategy: Strategy) -> Result<Synthesis> {
        let combinator = match strategy {
            Strategy::Combinator | Strategy::Both => Some(self.emerge(target, ambient)?),
            Strategy::Oracle => None,
        };
        let oracle = match strategy {
            Strategy::Oracle | Strategy::Both => Some(self.emerge_oracle(target, ambient)?),
            Strategy::Combinator => None,
        };
        let agreement = match (&combinator, &oracle) {
            (Some(c), Some(o)) => self.agreement(c, o)?,
            _ => None,
        };
        Ok(Synthesis {
            combinator,
            oracle,
            agreement,
        })
    }
}
