//! Particle ensembles of small tanh MLPs.
//!
//! Each particle is a flat parameter vector. Layer `l` stores its weights
//! (`out × in`, row-major) followed by its biases. The first
//! `shared_trunk_layers` layers live in a single trunk vector shared by every
//! particle; the remaining layers are owned per particle.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::io;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    shared_trunk_layers: usize,
}

impl MlpArchitecture {
    /// `layer_sizes = [D, h_1, …, h_L, K]`.
    pub fn new(layer_sizes: Vec<usize>, shared_trunk_layers: usize) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidDimension(
                "architecture needs at least an input and an output size".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidDimension("layer sizes must be positive".into()));
        }
        if *layer_sizes.last().unwrap() < 2 {
            return Err(Error::InvalidDimension("output layer needs at least 2 classes".into()));
        }
        if shared_trunk_layers >= layer_sizes.len() - 1 {
            return Err(Error::InvalidDimension(format!(
                "shared_trunk_layers = {shared_trunk_layers} leaves no per-particle layer"
            )));
        }
        Ok(Self {
            layer_sizes,
            shared_trunk_layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn shared_trunk_layers(&self) -> usize {
        self.shared_trunk_layers
    }

    fn layer_len(&self, l: usize) -> usize {
        let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        fan_out * fan_in + fan_out
    }

    pub fn trunk_len(&self) -> usize {
        (0..self.shared_trunk_layers).map(|l| self.layer_len(l)).sum()
    }

    pub fn own_len(&self) -> usize {
        (self.shared_trunk_layers..self.num_layers())
            .map(|l| self.layer_len(l))
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.trunk_len() + self.own_len()
    }

    /// Where layer `l` lives: `(in_trunk, offset)`.
    fn layer_offset(&self, l: usize) -> (bool, usize) {
        if l < self.shared_trunk_layers {
            (true, (0..l).map(|i| self.layer_len(i)).sum())
        } else {
            (false, (self.shared_trunk_layers..l).map(|i| self.layer_len(i)).sum())
        }
    }
}

/// Borrowed parameters of one particle.
#[derive(Debug, Clone, Copy)]
pub struct ParticleParams<'a> {
    pub trunk: &'a [f64],
    pub own: &'a [f64],
}

impl<'a> ParticleParams<'a> {
    fn layer(&self, arch: &MlpArchitecture, l: usize) -> &'a [f64] {
        let (in_trunk, offset) = arch.layer_offset(l);
        let len = arch.layer_len(l);
        if in_trunk {
            &self.trunk[offset..offset + len]
        } else {
            &self.own[offset..offset + len]
        }
    }
}

/// Max-shifted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    /// `acts[0]` is the input, `acts[l]` the tanh output of hidden layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

pub(crate) fn forward_cached(
    arch: &MlpArchitecture,
    params: ParticleParams<'_>,
    x: &[f64],
) -> Result<ForwardCache> {
    if x.len() != arch.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {} for an MLP expecting {}",
            x.len(),
            arch.input_dim()
        )));
    }
    let layers = arch.num_layers();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers);
    acts.push(x.to_vec());
    let mut logits = Vec::new();
    for l in 0..layers {
        let (fan_in, fan_out) = (arch.layer_sizes[l], arch.layer_sizes[l + 1]);
        let p = params.layer(arch, l);
        let (w, b) = p.split_at(fan_out * fan_in);
        let input = &acts[l];
        let mut out = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            out.push(z);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow);
        }
        if l + 1 == layers {
            logits = out;
        } else {
            out.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(out);
        }
    }
    let log_probs = log_softmax(&logits);
    if log_probs.iter().any(|v| v.is_nan()) {
        return Err(Error::NumericOverflow);
    }
    Ok(ForwardCache { acts, log_probs })
}

/// Accumulates `∂loss/∂params` given `∂loss/∂logits`.
pub(crate) fn backward_accumulate(
    arch: &MlpArchitecture,
    params: ParticleParams<'_>,
    cache: &ForwardCache,
    dlogits: &[f64],
    grad_trunk: &mut [f64],
    grad_own: &mut [f64],
) {
    let mut delta = dlogits.to_vec();
    for l in (0..arch.num_layers()).rev() {
        let (fan_in, fan_out) = (arch.layer_sizes[l], arch.layer_sizes[l + 1]);
        let (in_trunk, offset) = arch.layer_offset(l);
        let len = arch.layer_len(l);
        let g = if in_trunk {
            &mut grad_trunk[offset..offset + len]
        } else {
            &mut grad_own[offset..offset + len]
        };
        let input = &cache.acts[l];
        let (gw, gb) = g.split_at_mut(fan_out * fan_in);
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = &mut gw[o * fan_in..(o + 1) * fan_in];
            for (gi, a) in row.iter_mut().zip(input) {
                *gi += d * a;
            }
        }
        if l == 0 {
            break;
        }
        let w = &params.layer(arch, l)[..fan_out * fan_in];
        let mut prev = vec![0.0; fan_in];
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            for (pi, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                *pi += d * wi;
            }
        }
        // tanh' = 1 - tanh²
        for (pi, a) in prev.iter_mut().zip(input) {
            *pi *= 1.0 - a * a;
        }
        delta = prev;
    }
}

/// Predictive distribution `(1/M) Σ_j p(·|x, θ_j)` and its entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    pub probs: Vec<f64>,
    pub entropy: f64,
}

impl Predictive {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let entropy = entropy(&probs);
        Self { probs, entropy }
    }

    pub fn confidence(&self) -> f64 {
        self.probs.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest-probability class; ties go to the larger index.
    pub fn argmax(&self) -> usize {
        argmax_tail(&self.probs)
    }
}

/// `−Σ p ln p`, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

pub(crate) fn argmax_tail(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v >= values[best] {
            best = i;
        }
    }
    best
}

/// `M` equally weighted particles realizing `q(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    arch: MlpArchitecture,
    seed: u64,
    trunk: Vec<f64>,
    particles: Vec<Vec<f64>>,
}

fn fill_uniform_fan_in(arch: &MlpArchitecture, layers: std::ops::Range<usize>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        let fan_in = arch.layer_sizes[l];
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..arch.layer_len(l) {
            out.push(rng.random_range(-bound..bound));
        }
    }
    out
}

impl ParticleEnsemble {
    /// Uniform `±1/√fan_in` initialization. The trunk draws from stream 0 of
    /// the seeded generator, particle `j` from stream `j + 1`.
    pub fn init(arch: MlpArchitecture, num_particles: usize, seed: u64) -> Result<Self> {
        if num_particles == 0 {
            return Err(Error::Config("ensemble needs at least one particle".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let trunk = fill_uniform_fan_in(&arch, 0..arch.shared_trunk_layers, &mut rng);
        let particles = (0..num_particles)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64 + 1);
                fill_uniform_fan_in(&arch, arch.shared_trunk_layers..arch.num_layers(), &mut rng)
            })
            .collect();
        Ok(Self {
            arch,
            seed,
            trunk,
            particles,
        })
    }

    pub fn from_parts(
        arch: MlpArchitecture,
        seed: u64,
        trunk: Vec<f64>,
        particles: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Config("ensemble needs at least one particle".into()));
        }
        if trunk.len() != arch.trunk_len() {
            return Err(Error::DimensionMismatch(format!(
                "trunk has {} parameters, architecture expects {}",
                trunk.len(),
                arch.trunk_len()
            )));
        }
        if let Some(p) = particles.iter().find(|p| p.len() != arch.own_len()) {
            return Err(Error::DimensionMismatch(format!(
                "particle has {} parameters, architecture expects {}",
                p.len(),
                arch.own_len()
            )));
        }
        Ok(Self {
            arch,
            seed,
            trunk,
            particles,
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes()
    }

    /// Always `1/M`.
    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.num_particles() as f64; self.num_particles()]
    }

    pub fn trunk(&self) -> &[f64] {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut [f64] {
        &mut self.trunk
    }

    /// Non-shared parameters of particle `j`.
    pub fn own(&self, j: usize) -> &[f64] {
        &self.particles[j]
    }

    pub fn own_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.particles[j]
    }

    pub fn particles(&self) -> &[Vec<f64>] {
        &self.particles
    }

    pub fn params(&self, j: usize) -> ParticleParams<'_> {
        ParticleParams {
            trunk: &self.trunk,
            own: &self.particles[j],
        }
    }

    /// Full `θ_j`: trunk followed by the particle's own parameters.
    pub fn full_params(&self, j: usize) -> Vec<f64> {
        let mut out = self.trunk.clone();
        out.extend_from_slice(&self.particles[j]);
        out
    }

    pub fn forward_log_probs(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(forward_cached(&self.arch, self.params(j), x)?.log_probs)
    }

    /// `M × K` log-probabilities.
    pub fn ensemble_log_probs(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.num_particles())
            .map(|j| self.forward_log_probs(j, x))
            .collect()
    }

    pub fn predictive_distribution(&self, x: &[f64]) -> Result<Predictive> {
        let lps = self.ensemble_log_probs(x)?;
        Ok(predictive_from_log_probs(&lps))
    }

    pub fn predictive_batch(&self, ds: &LabeledDataset) -> Result<Vec<Predictive>> {
        ds.rows().map(|x| self.predictive_distribution(x)).collect()
    }

    /// Smallest Euclidean distance between two particles' own parameters;
    /// `None` for a single particle.
    pub fn min_pairwise_distance(&self) -> Option<f64> {
        let m = self.num_particles();
        let mut best: Option<f64> = None;
        for a in 0..m {
            for b in 0..a {
                let d = self.particles[a]
                    .iter()
                    .zip(&self.particles[b])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = Some(best.map_or(d, |cur| cur.min(d)));
            }
        }
        best
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            arch: self.arch.layer_sizes.clone(),
            m: self.num_particles(),
            seed: self.seed,
            shared_trunk_layers: self.arch.shared_trunk_layers,
            trunk: self.trunk.clone(),
            particles: self.particles.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        if ck.m != ck.particles.len() {
            return Err(Error::Config(format!(
                "checkpoint declares m = {} but holds {} particles",
                ck.m,
                ck.particles.len()
            )));
        }
        let arch = MlpArchitecture::new(ck.arch, ck.shared_trunk_layers)?;
        Self::from_parts(arch, ck.seed, ck.trunk, ck.particles)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(&self.to_checkpoint())?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_checkpoint(toml::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        io::write_with_header(path.as_ref(), header, &self.to_toml_string()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&io::read_to_string(path.as_ref())?)
    }
}

pub fn predictive_from_log_probs(log_probs: &[Vec<f64>]) -> Predictive {
    let m = log_probs.len() as f64;
    let k = log_probs[0].len();
    let mut probs = vec![0.0; k];
    for row in log_probs {
        for (p, lp) in probs.iter_mut().zip(row) {
            *p += lp.exp();
        }
    }
    probs.iter_mut().for_each(|p| *p /= m);
    Predictive::from_probs(probs)
}

/// On-disk checkpoint. Floats are written in shortest round-trip form, so a
/// save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: Vec<usize>,
    pub m: usize,
    pub seed: u64,
    pub shared_trunk_layers: usize,
    pub trunk: Vec<f64>,
    pub particles: Vec<Vec<f64>>,
}
