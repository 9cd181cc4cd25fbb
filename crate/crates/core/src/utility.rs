//! Utility matrices and the logarithmic decision gain.
//!
//! Rows index the true class `y'`, columns the decision `d`. Class 0 is the
//! most frequent (head) class, class `K-1` the rarest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Tolerance on `sum(exp(log_probs)) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A single off-diagonal entry `U[true_class][decision] = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub true_class: usize,
    pub decision: usize,
    pub value: f64,
}

impl Penalty {
    pub fn new(true_class: usize, decision: usize, value: f64) -> Self {
        Self {
            true_class,
            decision,
            value,
        }
    }
}

/// How a matrix was built; kept so the matrix can be written back faithfully.
#[derive(Debug, Clone, PartialEq)]
pub enum UtilityKind {
    OneHot,
    TailSensitive { u: f64 },
    Penalized { penalties: Vec<Penalty> },
    Raw,
}

impl UtilityKind {
    pub fn name(&self) -> &'static str {
        match self {
            UtilityKind::OneHot => "one_hot",
            UtilityKind::TailSensitive { .. } => "tail_sensitive",
            UtilityKind::Penalized { .. } => "penalized",
            UtilityKind::Raw => "raw",
        }
    }
}

/// K×K utility matrix, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    k: usize,
    values: Vec<f64>,
    kind: UtilityKind,
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidDimension(format!(
            "utility matrix needs at least 2 classes, got {k}"
        )));
    }
    Ok(())
}

fn identity(k: usize) -> Vec<f64> {
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
    }
    values
}

impl UtilityMatrix {
    /// `u(y', d) = 1{y' = d}`.
    pub fn one_hot(k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(Self {
            k,
            values: identity(k),
            kind: UtilityKind::OneHot,
        })
    }

    /// Lower-triangular tail-sensitive matrix: 1 on the diagonal, `u` where the
    /// true class is tailer than the decision (`i > j`), 0 above the diagonal.
    pub fn tail_sensitive(k: usize, u: f64) -> Result<Self> {
        check_k(k)?;
        if !(-1.0..=0.0).contains(&u) {
            return Err(Error::InvalidPenalty(format!(
                "tail-sensitive penalty must lie in [-1, 0], got {u}"
            )));
        }
        let mut values = identity(k);
        for i in 0..k {
            for j in 0..i {
                values[i * k + j] = u;
            }
        }
        Ok(Self {
            k,
            values,
            kind: UtilityKind::TailSensitive { u },
        })
    }

    /// Identity plus the listed off-diagonal penalties.
    pub fn penalized(k: usize, penalties: &[Penalty]) -> Result<Self> {
        check_k(k)?;
        let mut values = identity(k);
        let mut seen = vec![false; k * k];
        for p in penalties {
            if p.true_class >= k || p.decision >= k {
                return Err(Error::InvalidPenalty(format!(
                    "penalty index ({}, {}) out of range for {k} classes",
                    p.true_class, p.decision
                )));
            }
            if p.true_class == p.decision {
                return Err(Error::InvalidPenalty(format!(
                    "penalty on the diagonal at class {}",
                    p.true_class
                )));
            }
            if !(p.value >= -1.0 && p.value < 0.0) {
                return Err(Error::InvalidPenalty(format!(
                    "penalty value must lie in [-1, 0), got {}",
                    p.value
                )));
            }
            let idx = p.true_class * k + p.decision;
            if seen[idx] {
                return Err(Error::Conflict {
                    row: p.true_class,
                    col: p.decision,
                });
            }
            seen[idx] = true;
            values[idx] = p.value;
        }
        Ok(Self {
            k,
            values,
            kind: UtilityKind::Penalized {
                penalties: penalties.to_vec(),
            },
        })
    }

    /// Arbitrary matrix, row-major. Only finiteness and a positive diagonal
    /// are enforced.
    pub fn raw(k: usize, values: Vec<f64>) -> Result<Self> {
        check_k(k)?;
        if values.len() != k * k {
            return Err(Error::InvalidDimension(format!(
                "expected {} values for a {k}x{k} matrix, got {}",
                k * k,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPenalty("non-finite utility entry".into()));
        }
        for i in 0..k {
            if values[i * k + i] <= 0.0 {
                return Err(Error::InvalidPenalty(format!(
                    "diagonal entry {i} must be strictly positive"
                )));
            }
        }
        Ok(Self {
            k,
            values,
            kind: UtilityKind::Raw,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> &UtilityKind {
        &self.kind
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, true_class: usize, decision: usize) -> f64 {
        self.values[true_class * self.k + decision]
    }

    /// Column `d`: the exponents of `g(d | x, θ)`.
    pub fn column(&self, decision: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.k).map(move |i| self.values[i * self.k + decision])
    }

    pub fn transpose(&self) -> Result<Self> {
        let k = self.k;
        let mut values = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                values[j * k + i] = self.values[i * k + j];
            }
        }
        Self::raw(k, values)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::raw(self.k, self.values.iter().map(|v| v * factor).collect())
    }

    pub fn is_symmetric(&self) -> bool {
        let k = self.k;
        (0..k).all(|i| (0..i).all(|j| self.values[i * k + j] == self.values[j * k + i]))
    }

    pub fn to_doc(&self) -> UtilityDoc {
        let (u, penalties) = match &self.kind {
            UtilityKind::TailSensitive { u } => (Some(*u), None),
            UtilityKind::Penalized { penalties } => (None, Some(penalties.clone())),
            _ => (None, None),
        };
        UtilityDoc {
            k: self.k,
            kind: self.kind.name().to_string(),
            u,
            penalties,
            values: Some(self.values.clone()),
        }
    }

    pub fn from_doc(doc: &UtilityDoc) -> Result<Self> {
        let built = match doc.kind.as_str() {
            "one_hot" => Self::one_hot(doc.k)?,
            "tail_sensitive" => {
                let u = doc
                    .u
                    .ok_or_else(|| Error::Config("tail_sensitive utility requires `u`".into()))?;
                Self::tail_sensitive(doc.k, u)?
            }
            "penalized" => Self::penalized(doc.k, doc.penalties.as_deref().unwrap_or(&[]))?,
            "raw" => {
                let values = doc
                    .values
                    .clone()
                    .ok_or_else(|| Error::Config("raw utility requires `values`".into()))?;
                return Self::raw(doc.k, values);
            }
            other => {
                return Err(Error::Config(format!("unknown utility kind `{other}`")));
            }
        };
        if let Some(values) = &doc.values {
            if values != &built.values {
                return Err(Error::Config(format!(
                    "`values` disagree with the {} builder",
                    doc.kind
                )));
            }
        }
        Ok(built)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(&self.to_doc())?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let doc: UtilityDoc = toml::from_str(s)?;
        Self::from_doc(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&io::read_to_string(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        io::write_with_header(path.as_ref(), header, &self.to_toml_string()?)
    }
}

/// On-disk form of a utility matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityDoc {
    pub k: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Vec<Penalty>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

/// Every `(t, d)` pair of two class sets with the same penalty, e.g. all
/// (mammal, vehicle) pairs.
pub fn cross_penalties(true_set: &[usize], decision_set: &[usize], value: f64) -> Vec<Penalty> {
    true_set
        .iter()
        .flat_map(|&t| decision_set.iter().map(move |&d| Penalty::new(t, d, value)))
        .collect()
}

pub(crate) fn check_normalized(log_probs: &[f64]) -> Result<()> {
    let sum: f64 = log_probs.iter().map(|lp| lp.exp()).sum();
    if !sum.is_finite() || (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Normalization { sum });
    }
    Ok(())
}

/// `log g(d | x, θ) = Σ_{y'} U[y'][d] · log p(y' | x, θ)`.
pub fn log_decision_gain(log_probs: &[f64], decision: usize, utility: &UtilityMatrix) -> Result<f64> {
    let k = utility.num_classes();
    if log_probs.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} log-probabilities for a {k}-class utility",
            log_probs.len()
        )));
    }
    if decision >= k {
        return Err(Error::Index {
            index: decision,
            len: k,
        });
    }
    check_normalized(log_probs)?;
    Ok(gain_unchecked(log_probs, decision, utility))
}

/// Gain without validation; callers guarantee shape and normalization.
#[inline]
pub(crate) fn gain_unchecked(log_probs: &[f64], decision: usize, utility: &UtilityMatrix) -> f64 {
    let k = utility.k;
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        let u = utility.values[i * k + decision];
        if u != 0.0 {
            acc += u * lp;
        }
    }
    acc
}
