//! The integrated-gain training objective.
//!
//! Minimized loss for a mini-batch `Ξ` at epoch `t`:
//!
//! ```text
//! −(1/|Ξ|) Σ_i (1/M) Σ_j w(y_i) [log p_j(y_i|x_i) + (1/α) Σ_y' U[y'][y_i] log p_j(y'|x_i)]
//!   + (λ/M) Σ_j ‖θ_j‖²
//!   − s · exp(−t/τ) · ½ Σ_k ln max(var_k, ε)
//! ```
//!
//! where `w(y) = 1/f(n_y)` and `var_k` is the across-particle variance of
//! non-shared coordinate `k`. `s` (`repulsion_scale`) is 1 unless configured.

use crate::data::{class_weights, ClassCounts, LabeledDataset, WeightForm};
use crate::error::{Error, Result};
use crate::model::{backward_accumulate, forward_cached, ParticleEnsemble};
use crate::utility::{check_normalized, gain_unchecked, UtilityMatrix};

pub const DEFAULT_EPSILON_VAR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub utility: UtilityMatrix,
    pub weight_form: WeightForm,
    /// Divisor on the utility term.
    pub alpha: f64,
    /// L2 weight.
    pub lambda: f64,
    /// Annealing stride of the repulsive term, in epochs.
    pub tau: f64,
    /// Variance floor inside the log of the entropy term.
    pub epsilon_var: f64,
    /// Multiplier on the entropy (repulsive) term.
    pub repulsion_scale: f64,
    /// Rescale class weights to unit mean over the training samples.
    pub normalize_weights: bool,
}

impl ObjectiveConfig {
    pub fn new(utility: UtilityMatrix, weight_form: WeightForm) -> Self {
        Self {
            utility,
            weight_form,
            alpha: 1.0,
            lambda: 0.0,
            tau: 40.0,
            epsilon_var: DEFAULT_EPSILON_VAR,
            repulsion_scale: 1.0,
            normalize_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("objective.{name} must be positive and finite, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("objective.{name} must be non-negative, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("tau", self.tau)?;
        positive("epsilon_var", self.epsilon_var)?;
        non_negative("lambda", self.lambda)?;
        non_negative("repulsion_scale", self.repulsion_scale)?;
        Ok(())
    }
}

/// `log p(y) + (1/α) Σ_y' U[y'][y] log p(y')`.
pub fn per_sample_term(log_probs: &[f64], label: usize, utility: &UtilityMatrix, alpha: f64) -> Result<f64> {
    let k = utility.num_classes();
    if log_probs.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} log-probabilities for a {k}-class utility",
            log_probs.len()
        )));
    }
    if label >= k {
        return Err(Error::Index { index: label, len: k });
    }
    check_normalized(log_probs)?;
    Ok(term_unchecked(log_probs, label, utility, alpha))
}

#[inline]
fn term_unchecked(log_probs: &[f64], label: usize, utility: &UtilityMatrix, alpha: f64) -> f64 {
    log_probs[label] + gain_unchecked(log_probs, label, utility) / alpha
}

/// `exp(−t/τ)`.
pub fn anneal_weight(epoch: usize, tau: f64) -> f64 {
    (-(epoch as f64) / tau).exp()
}

/// `(λ/M) Σ_j ‖θ_j‖²`; shared trunk parameters count once per particle.
pub fn l2_term(ensemble: &ParticleEnsemble, lambda: f64) -> f64 {
    let m = ensemble.num_particles() as f64;
    let trunk_sq: f64 = ensemble.trunk().iter().map(|v| v * v).sum();
    let own_sq: f64 = ensemble
        .particles()
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>())
        .sum();
    lambda * (trunk_sq + own_sq / m)
}

/// Across-particle variance of every non-shared coordinate.
pub fn particle_variances(ensemble: &ParticleEnsemble) -> Vec<f64> {
    let m = ensemble.num_particles() as f64;
    let len = ensemble.arch().own_len();
    let mut mean = vec![0.0; len];
    for p in ensemble.particles() {
        for (acc, v) in mean.iter_mut().zip(p) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; len];
    for p in ensemble.particles() {
        for ((acc, v), mu) in var.iter_mut().zip(p).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    var
}

/// `½ Σ_k ln max(var_k, ε)`, the SWAG-diagonal entropy estimate. Zero for a
/// single particle.
pub fn entropy_term(ensemble: &ParticleEnsemble, epsilon_var: f64) -> f64 {
    if ensemble.num_particles() < 2 {
        return 0.0;
    }
    0.5 * particle_variances(ensemble)
        .iter()
        .map(|v| v.max(epsilon_var).ln())
        .sum::<f64>()
}

/// `(λ/M) Σ_j ‖θ_j‖² − ½ Σ_k ln max(var_k, ε)`.
pub fn kl_regularizer(ensemble: &ParticleEnsemble, lambda: f64, epsilon_var: f64) -> f64 {
    l2_term(ensemble, lambda) - entropy_term(ensemble, epsilon_var)
}

/// Components of a batch loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Negated, weighted, batch-averaged data term.
    pub data: f64,
    pub l2: f64,
    /// `½ Σ_k ln max(var_k, ε)` before annealing and scaling.
    pub entropy: f64,
    pub anneal: f64,
    pub total: f64,
}

/// Gradient split the same way as the ensemble's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub trunk: Vec<f64>,
    pub own: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(ensemble: &ParticleEnsemble) -> Self {
        Self {
            trunk: vec![0.0; ensemble.trunk().len()],
            own: vec![vec![0.0; ensemble.arch().own_len()]; ensemble.num_particles()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.trunk
            .iter()
            .chain(self.own.iter().flatten())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_batch(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    counts: &ClassCounts,
    config: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let k = ensemble.num_classes();
    if batch.is_empty() {
        return Err(Error::Data("empty mini-batch".into()));
    }
    if data.num_classes() != k || config.utility.num_classes() != k || counts.num_classes() != k {
        return Err(Error::DimensionMismatch(format!(
            "class counts disagree: model {k}, data {}, utility {}, counts {}",
            data.num_classes(),
            config.utility.num_classes(),
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
    for &i in batch {
        if i >= data.len() {
            return Err(Error::Index { index: i, len: data.len() });
        }
        let y = data.labels()[i];
        if counts.get(y) == 0 {
            return Err(Error::InconsistentCounts(format!("label {y} has zero count")));
        }
    }
    class_weights(config.weight_form, counts, config.normalize_weights)
}

fn regularizer_parts(ensemble: &ParticleEnsemble, config: &ObjectiveConfig, epoch: usize) -> (f64, f64, f64) {
    let l2 = l2_term(ensemble, config.lambda);
    let entropy = entropy_term(ensemble, config.epsilon_var);
    let anneal = anneal_weight(epoch, config.tau);
    (l2, entropy, anneal)
}

/// Loss of the mini-batch given by `batch` (row indices into `data`).
pub fn batch_loss_parts(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    counts: &ClassCounts,
    config: &ObjectiveConfig,
    epoch: usize,
) -> Result<LossParts> {
    let weights = check_batch(ensemble, data, batch, counts, config)?;
    let m = ensemble.num_particles();
    let mut acc = 0.0;
    for &i in batch {
        let y = data.labels()[i];
        let w = weights[y];
        let x = data.row(i);
        for j in 0..m {
            let lp = ensemble.forward_log_probs(j, x)?;
            acc += w * term_unchecked(&lp, y, &config.utility, config.alpha);
        }
    }
    let data_term = -acc / (batch.len() * m) as f64;
    let (l2, entropy, anneal) = regularizer_parts(ensemble, config, epoch);
    let total = data_term + l2 - config.repulsion_scale * anneal * entropy;
    Ok(LossParts {
        data: data_term,
        l2,
        entropy,
        anneal,
        total,
    })
}

pub fn batch_loss(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    counts: &ClassCounts,
    config: &ObjectiveConfig,
    epoch: usize,
) -> Result<f64> {
    Ok(batch_loss_parts(ensemble, data, batch, counts, config, epoch)?.total)
}

/// Loss and its exact gradient by reverse-mode accumulation.
pub fn loss_and_gradient(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    counts: &ClassCounts,
    config: &ObjectiveConfig,
    epoch: usize,
) -> Result<(LossParts, Gradient)> {
    let weights = check_batch(ensemble, data, batch, counts, config)?;
    let arch = ensemble.arch();
    let m = ensemble.num_particles();
    let k = ensemble.num_classes();
    let norm = (batch.len() * m) as f64;
    let mut grad = Gradient::zeros_like(ensemble);

    // c = e_y + (1/α) U[:, y];  ∂/∂z Σ c_y' log p_y' = c − (Σ c) p
    let coeffs: Vec<Vec<f64>> = (0..k)
        .map(|y| {
            let mut c: Vec<f64> = config.utility.column(y).map(|u| u / config.alpha).collect();
            c[y] += 1.0;
            c
        })
        .collect();
    let coeff_sums: Vec<f64> = coeffs.iter().map(|c| c.iter().sum()).collect();

    let mut acc = 0.0;
    let mut dlogits = vec![0.0; k];
    for &i in batch {
        let y = data.labels()[i];
        let w = weights[y];
        if w == 0.0 {
            continue;
        }
        let x = data.row(i);
        let scale = -w / norm;
        for j in 0..m {
            let params = ensemble.params(j);
            let cache = forward_cached(arch, params, x)?;
            acc += w * term_unchecked(&cache.log_probs, y, &config.utility, config.alpha);
            for ((d, c), lp) in dlogits.iter_mut().zip(&coeffs[y]).zip(&cache.log_probs) {
                *d = scale * (c - coeff_sums[y] * lp.exp());
            }
            backward_accumulate(arch, params, &cache, &dlogits, &mut grad.trunk, &mut grad.own[j]);
        }
    }
    let data_term = -acc / norm;

    let (l2, entropy, anneal) = regularizer_parts(ensemble, config, epoch);
    let mf = m as f64;
    if config.lambda != 0.0 {
        for (g, v) in grad.trunk.iter_mut().zip(ensemble.trunk()) {
            *g += 2.0 * config.lambda * v;
        }
        for (gj, pj) in grad.own.iter_mut().zip(ensemble.particles()) {
            for (g, v) in gj.iter_mut().zip(pj) {
                *g += 2.0 * config.lambda * v / mf;
            }
        }
    }
    let repulsion = config.repulsion_scale * anneal;
    if m >= 2 && repulsion != 0.0 {
        let var = particle_variances(ensemble);
        let len = var.len();
        let mut mean = vec![0.0; len];
        for p in ensemble.particles() {
            for (acc, v) in mean.iter_mut().zip(p) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        // ∂(−½ ln var_k)/∂θ_jk = −(θ_jk − mean_k)/(M var_k); zero once floored.
        for (gj, pj) in grad.own.iter_mut().zip(ensemble.particles()) {
            for k in 0..len {
                if var[k] > config.epsilon_var {
                    gj[k] -= repulsion * (pj[k] - mean[k]) / (mf * var[k]);
                }
            }
        }
    }
    let total = data_term + l2 - repulsion * entropy;
    Ok((
        LossParts {
            data: data_term,
            l2,
            entropy,
            anneal,
            total,
        },
        grad,
    ))
}

pub fn batch_gradient(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    counts: &ClassCounts,
    config: &ObjectiveConfig,
    epoch: usize,
) -> Result<Gradient> {
    Ok(loss_and_gradient(ensemble, data, batch, counts, config, epoch)?.1)
}

/// With a one-hot utility every per-sample term must equal
/// `(1 + 1/α) · log p(y)` (so `2 log p(y)` at `α = 1`), for every sample and
/// particle, within 1e-12.
pub fn one_hot_reduction_check(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    alpha: f64,
) -> Result<bool> {
    let utility = UtilityMatrix::one_hot(ensemble.num_classes())?;
    reduction_holds(ensemble, data, batch, &utility, alpha)
}

/// The same identity under an arbitrary utility; false whenever the utility
/// column of some sample's label carries off-diagonal weight that matters.
pub fn reduction_holds(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    utility: &UtilityMatrix,
    alpha: f64,
) -> Result<bool> {
    let factor = 1.0 + 1.0 / alpha;
    for &i in batch {
        let y = data.labels()[i];
        for j in 0..ensemble.num_particles() {
            let lp = ensemble.forward_log_probs(j, data.row(i))?;
            let term = per_sample_term(&lp, y, utility, alpha)?;
            if (term - factor * lp[y]).abs() > 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Location of a parameter inside an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    Trunk(usize),
    Own { particle: usize, index: usize },
}

impl ParamSlot {
    pub fn get_mut(self, ensemble: &mut ParticleEnsemble) -> &mut f64 {
        match self {
            ParamSlot::Trunk(i) => &mut ensemble.trunk_mut()[i],
            ParamSlot::Own { particle, index } => &mut ensemble.own_mut(particle)[index],
        }
    }
}

impl std::fmt::Display for ParamSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamSlot::Trunk(i) => write!(f, "trunk[{i}]"),
            ParamSlot::Own { particle, index } => write!(f, "particle {particle}, param {index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: ParamSlot,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// `|a − b| / max(|a|, |b|, floor)`. The floor keeps coordinates whose true
/// derivative is ~0 from being judged on roundoff alone.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares `gradient` against central finite differences of `batch_loss`
/// over every parameter.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_check(
    ensemble: &ParticleEnsemble,
    data: &LabeledDataset,
    batch: &[usize],
    counts: &ClassCounts,
    config: &ObjectiveConfig,
    epoch: usize,
    gradient: &Gradient,
    step: f64,
) -> Result<GradCheckReport> {
    let mut probe = ensemble.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: ParamSlot::Trunk(0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut visit = |probe: &mut ParticleEnsemble, slot: ParamSlot, analytic: f64| -> Result<()> {
        let original = *slot.get_mut(probe);
        *slot.get_mut(probe) = original + step;
        let plus = batch_loss(probe, data, batch, counts, config, epoch)?;
        *slot.get_mut(probe) = original - step;
        let minus = batch_loss(probe, data, batch, counts, config, epoch)?;
        *slot.get_mut(probe) = original;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic, numeric, GRADCHECK_FLOOR);
        report.checked += 1;
        if err > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = err;
            report.worst = slot;
            report.analytic = analytic;
            report.numeric = numeric;
        }
        Ok(())
    };
    for i in 0..ensemble.trunk().len() {
        visit(&mut probe, ParamSlot::Trunk(i), gradient.trunk[i])?;
    }
    for j in 0..ensemble.num_particles() {
        for i in 0..ensemble.arch().own_len() {
            visit(&mut probe, ParamSlot::Own { particle: j, index: i }, gradient.own[j][i])?;
        }
    }
    Ok(report)
}
