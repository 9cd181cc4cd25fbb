//! Test-time decisions: `argmax_d Σ_j Σ_y' U[y'][d] · log p_j(y' | x)`.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{argmax_tail, ParticleEnsemble};
use crate::utility::{check_normalized, gain_unchecked, UtilityMatrix};

/// Per-decision scores summed over particles, in log space.
pub fn decision_scores(log_probs: &[Vec<f64>], utility: &UtilityMatrix) -> Result<Vec<f64>> {
    let k = utility.num_classes();
    if log_probs.is_empty() {
        return Err(Error::DimensionMismatch("no particles to decide from".into()));
    }
    for row in log_probs {
        if row.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} log-probabilities for a {k}-class utility",
                row.len()
            )));
        }
        check_normalized(row)?;
    }
    Ok((0..k)
        .map(|d| log_probs.iter().map(|row| gain_unchecked(row, d, utility)).sum())
        .collect())
}

/// Optimal decision for one input; ties go to the larger class index.
pub fn decide(log_probs: &[Vec<f64>], utility: &UtilityMatrix) -> Result<usize> {
    Ok(argmax_tail(&decision_scores(log_probs, utility)?))
}

/// Scores and decision for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub scores: Vec<f64>,
    pub class: usize,
}

pub fn decide_with_scores(ensemble: &ParticleEnsemble, x: &[f64], utility: &UtilityMatrix) -> Result<Decision> {
    check_classes(ensemble, utility)?;
    let scores = decision_scores(&ensemble.ensemble_log_probs(x)?, utility)?;
    let class = argmax_tail(&scores);
    Ok(Decision { scores, class })
}

fn check_classes(ensemble: &ParticleEnsemble, utility: &UtilityMatrix) -> Result<()> {
    if ensemble.num_classes() != utility.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} classes, utility {}",
            ensemble.num_classes(),
            utility.num_classes()
        )));
    }
    Ok(())
}

/// Decisions for every row of `inputs` (row-major, `dim` columns).
pub fn decide_batch(ensemble: &ParticleEnsemble, inputs: &[f64], dim: usize, utility: &UtilityMatrix) -> Result<Vec<usize>> {
    check_classes(ensemble, utility)?;
    if dim == 0 || !inputs.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch(format!(
            "{} input values do not form rows of length {dim}",
            inputs.len()
        )));
    }
    inputs
        .chunks_exact(dim)
        .map(|x| decide(&ensemble.ensemble_log_probs(x)?, utility))
        .collect()
}

pub fn decide_dataset(ensemble: &ParticleEnsemble, ds: &LabeledDataset, utility: &UtilityMatrix) -> Result<Vec<usize>> {
    decide_batch(ensemble, ds.features(), ds.dim(), utility)
}
