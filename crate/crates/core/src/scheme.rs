//! Signals and public signaling schemes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bvs_pool::TailPooling;
use crate::error::{Error, Result};
use crate::model::{FeatureVector, KvsInstance, ValidationReport, MASS_TOL};
use crate::public_mc::McConfig;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// Bidder `i` is recommended top and `j` second.
    Pair(usize, usize),
    RevealedState(String),
    PooledPair(FeatureVector, FeatureVector),
    Opaque(usize),
}

impl Signal {
    pub fn pair(i: usize, j: usize) -> Result<Signal> {
        if i == j {
            return Err(Error::Scheme(format!("pair signal needs distinct bidders, got ({i},{j})")));
        }
        Ok(Signal::Pair(i, j))
    }

    pub fn pooled(a: FeatureVector, b: FeatureVector) -> Result<Signal> {
        if a == b || a.tail_bidder().is_none() || b.tail_bidder().is_none() {
            return Err(Error::Scheme(format!("pooled pair needs two distinct tail states, got {a}, {b}")));
        }
        Ok(Signal::PooledPair(a, b))
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Signal::Pair(i, j) => i != j,
            Signal::PooledPair(a, b) => a != b && a.tail_bidder().is_some() && b.tail_bidder().is_some(),
            _ => true,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Pair(i, j) => write!(f, "pair({i},{j})"),
            Signal::RevealedState(s) => write!(f, "state({s})"),
            Signal::PooledPair(a, b) => write!(f, "pool({a},{b})"),
            Signal::Opaque(k) => write!(f, "opaque({k})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeRow {
    pub state: String,
    /// φ(θ, σ) for each signal, in the order of `ExplicitScheme::signals`.
    pub probs: Vec<f64>,
}

/// Table of φ(θ, σ) over a finite signal set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitScheme {
    pub signals: Vec<Signal>,
    pub rows: Vec<SchemeRow>,
}

impl ExplicitScheme {
    pub fn full_information(ids: &[String]) -> Self {
        let k = ids.len();
        ExplicitScheme {
            signals: ids.iter().map(|id| Signal::RevealedState(id.clone())).collect(),
            rows: ids
                .iter()
                .enumerate()
                .map(|(s, id)| {
                    let mut probs = vec![0.0; k];
                    probs[s] = 1.0;
                    SchemeRow { state: id.clone(), probs }
                })
                .collect(),
        }
    }

    pub fn no_information(ids: &[String]) -> Self {
        ExplicitScheme {
            signals: vec![Signal::Opaque(0)],
            rows: ids.iter().map(|id| SchemeRow { state: id.clone(), probs: vec![1.0] }).collect(),
        }
    }

    pub fn validate(&self, ids: &[String]) -> ValidationReport {
        let mut report = ValidationReport::default();
        for s in &self.signals {
            if !s.is_valid() {
                report.push(format!("invalid signal {s}"));
            }
        }
        for id in ids {
            match self.rows.iter().filter(|r| &r.state == id).count() {
                0 => report.push(format!("no row for state {id:?}")),
                1 => {}
                _ => report.push(format!("duplicate rows for state {id:?}")),
            }
        }
        for row in &self.rows {
            if !ids.contains(&row.state) {
                report.push(format!("row for unknown state {:?}", row.state));
            }
            if row.probs.len() != self.signals.len() {
                report.push(format!(
                    "row {:?} has {} entries for {} signals",
                    row.state,
                    row.probs.len(),
                    self.signals.len()
                ));
                continue;
            }
            if row.probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
                report.push(format!("row {:?} has a negative entry", row.state));
            }
            let sum: f64 = row.probs.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                report.push(format!("row {:?} sums to {sum}", row.state));
            }
        }
        report
    }

    /// Rows aligned with `ids`, after validation.
    pub fn aligned(&self, ids: &[String]) -> Result<Vec<&[f64]>> {
        let report = self.validate(ids);
        if !report.is_empty() {
            return Err(Error::Scheme(report.to_string()));
        }
        Ok(ids
            .iter()
            .map(|id| self.rows.iter().find(|r| &r.state == id).unwrap().probs.as_slice())
            .collect())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Randomized map from states to signals.
#[derive(Clone, Debug, PartialEq)]
pub enum PublicScheme {
    Explicit(ExplicitScheme),
    FullInformation,
    NoInformation,
    TailPooling(TailPooling),
    MonteCarloLp(McConfig),
}

impl PublicScheme {
    /// The φ table of this scheme on a known-valuation instance, when it is
    /// a fixed table.
    pub fn explicit_for(&self, instance: &KvsInstance) -> Result<ExplicitScheme> {
        let ids: Vec<String> = instance.states.iter().map(|s| s.id.clone()).collect();
        match self {
            PublicScheme::Explicit(e) => {
                e.aligned(&ids)?;
                Ok(e.clone())
            }
            PublicScheme::FullInformation => Ok(ExplicitScheme::full_information(&ids)),
            PublicScheme::NoInformation => Ok(ExplicitScheme::no_information(&ids)),
            PublicScheme::TailPooling(_) => Err(Error::Unsupported(
                "tail pooling applies to Bayesian-valuation instances".into(),
            )),
            PublicScheme::MonteCarloLp(_) => Err(Error::Unsupported(
                "the sampled LP scheme has no fixed table; use evaluate_mc_scheme".into(),
            )),
        }
    }
}
