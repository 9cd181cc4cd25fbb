//! Mini-batch SGD over all particles.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassCounts, LabeledDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::model::ParticleEnsemble;
use crate::objective::{anneal_weight, entropy_term, loss_and_gradient, ObjectiveConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Epochs at which the learning rate is multiplied by `lr_decay`.
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub seed: u64,
}

/// Milestones at 60% and 80% of training.
pub fn default_milestones(epochs: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [0.6, 0.8]
        .iter()
        .map(|f| (epochs as f64 * f).round() as usize)
        .filter(|&m| m > 0 && m < epochs)
        .collect();
    out.dedup();
    out
}

impl TrainConfig {
    pub fn new(objective: ObjectiveConfig, epochs: usize, seed: u64) -> Self {
        Self {
            objective,
            learning_rate: 0.1,
            epochs,
            batch_size: 128,
            momentum: 0.9,
            milestones: default_milestones(epochs),
            lr_decay: 0.1,
            seed,
        }
    }

    pub fn validate(&self, num_samples: usize) -> Result<()> {
        self.objective.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train.learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > num_samples {
            return Err(Error::Config(format!(
                "train.batch_size must lie in [1, {num_samples}], got {}",
                self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "train.momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !self.milestones.windows(2).all(|w| w[0] < w[1])
            || self.milestones.last().is_some_and(|&m| m >= self.epochs)
        {
            return Err(Error::Config(format!(
                "train.milestones must be strictly increasing and below {} epochs, got {:?}",
                self.epochs, self.milestones
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::Config(format!("train.lr_decay must be positive, got {}", self.lr_decay)));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the epoch's mini-batches.
    pub loss: f64,
    /// Predictive-argmax accuracy on the training set after the epoch.
    pub acc: f64,
    /// `½ Σ_k ln max(var_k, ε)` after the epoch.
    pub repulsive_value: f64,
    pub anneal_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "loss", "acc", "repulsive_value", "anneal_weight"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                format!("{:?}", r.loss),
                format!("{:?}", r.acc),
                format!("{:?}", r.repulsive_value),
                format!("{:?}", r.anneal_weight),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        io::write_with_header(path.as_ref(), header, &self.to_csv_string()?)
    }
}

pub fn train_accuracy(ensemble: &ParticleEnsemble, data: &LabeledDataset) -> Result<f64> {
    let mut ok = 0usize;
    for (x, &y) in data.rows().zip(data.labels()) {
        ok += (ensemble.predictive_distribution(x)?.argmax() == y) as usize;
    }
    Ok(ok as f64 / data.len() as f64)
}

fn check_consistency(ensemble: &ParticleEnsemble, data: &LabeledDataset, counts: &ClassCounts, config: &TrainConfig) -> Result<()> {
    let k = ensemble.num_classes();
    if data.num_classes() != k || config.objective.utility.num_classes() != k || counts.num_classes() != k {
        return Err(Error::DimensionMismatch(format!(
            "class counts disagree: model {k}, data {}, utility {}, counts {}",
            data.num_classes(),
            config.objective.utility.num_classes(),
            counts.num_classes()
        )));
    }
    if data.dim() != ensemble.arch().input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "data dimension {} vs model input {}",
            data.dim(),
            ensemble.arch().input_dim()
        )));
    }
    Ok(())
}

/// Trains `ensemble` in place. Each epoch shuffles with seed `seed ^ epoch`,
/// walks the mini-batches in order and applies SGD with momentum
/// (`v ← μv + g`, `θ ← θ − ηv`) to every particle.
pub fn train(
    config: &TrainConfig,
    ensemble: &mut ParticleEnsemble,
    data: &LabeledDataset,
    counts: &ClassCounts,
) -> Result<TrainHistory> {
    config.validate(data.len())?;
    check_consistency(ensemble, data, counts, config)?;

    let mut vel_trunk = vec![0.0; ensemble.trunk().len()];
    let mut vel_own = vec![vec![0.0; ensemble.arch().own_len()]; ensemble.num_particles()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let mu = config.momentum;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (parts, grad) = loss_and_gradient(ensemble, data, batch, counts, &config.objective, epoch)?;
            if !parts.total.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            loss_sum += parts.total;
            batches += 1;

            for ((v, g), p) in vel_trunk.iter_mut().zip(&grad.trunk).zip(ensemble.trunk_mut()) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
            for (j, (vj, gj)) in vel_own.iter_mut().zip(&grad.own).enumerate() {
                for ((v, g), p) in vj.iter_mut().zip(gj).zip(ensemble.own_mut(j)) {
                    *v = mu * *v + g;
                    *p -= lr * *v;
                }
            }
        }

        history.records.push(EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            acc: train_accuracy(ensemble, data)?,
            repulsive_value: entropy_term(ensemble, config.objective.epsilon_var),
            anneal_weight: anneal_weight(epoch, config.objective.tau),
        });
    }
    Ok(history)
}
