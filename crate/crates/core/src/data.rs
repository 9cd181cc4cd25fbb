//! Labeled datasets, long-tail construction, class statistics and
//! importance weights.

use std::ops::Range;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Default β for the effective-number form.
pub const DEFAULT_BETA: f64 = 0.9995;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    name: String,
}

impl LabeledDataset {
    /// `features` is row-major N×D.
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("feature dimension must be at least 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Data(format!(
                "{} feature values for {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, self.dim, labels, self.num_classes, self.name.clone())
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = vec![0usize; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        ClassCounts { counts }
    }

    /// Relabels classes so that index order equals descending frequency
    /// (stable on ties). Returns the relabelled dataset and `old -> new`.
    pub fn sort_by_frequency(&self) -> (Self, Vec<usize>) {
        let counts = self.class_counts();
        let mut order: Vec<usize> = (0..self.num_classes).collect();
        order.sort_by(|&a, &b| counts.counts[b].cmp(&counts.counts[a]));
        let mut mapping = vec![0; self.num_classes];
        for (new, &old) in order.iter().enumerate() {
            mapping[old] = new;
        }
        let labels = self.labels.iter().map(|&y| mapping[y]).collect();
        let ds = Self {
            features: self.features.clone(),
            dim: self.dim,
            labels,
            num_classes: self.num_classes,
            name: self.name.clone(),
        };
        (ds, mapping)
    }

    pub fn relabel(&self, mapping: &[usize]) -> Result<Self> {
        if mapping.len() != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "label mapping has {} entries for {} classes",
                mapping.len(),
                self.num_classes
            )));
        }
        let labels = self.labels.iter().map(|&y| mapping[y]).collect();
        Self::new(
            self.features.clone(),
            self.dim,
            labels,
            self.num_classes,
            self.name.clone(),
        )
    }

    /// Reads the CSV layout: header row, feature columns, then an integer
    /// label column. Lines starting with `#` are comments. When
    /// `num_classes` is `None` it is inferred as `max(label) + 1`.
    pub fn read_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv_reader(file, num_classes, name)
    }

    pub fn from_csv_reader(
        reader: impl std::io::Read,
        num_classes: Option<usize>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::Data(
                "CSV needs at least one feature column and a label column".into(),
            ));
        }
        let dim = width - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            for field in record.iter().take(dim) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("row {}: bad feature value `{field}`", line + 1))
                })?;
                features.push(v);
            }
            let raw = &record[dim];
            let y: usize = raw
                .parse()
                .map_err(|_| Error::Data(format!("row {}: bad label `{raw}`", line + 1)))?;
            labels.push(y);
        }
        let k = match num_classes {
            Some(k) => k,
            None => labels.iter().max().map_or(0, |m| m + 1),
        };
        Self::new(features, dim, labels, k, name)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim + 1);
        for (row, y) in self.rows().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| format!("{v:?}")));
            record.push(y.to_string());
            wtr.write_record(&record)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        io::write_with_header(path.as_ref(), header, &self.to_csv_string()?)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            k: self.num_classes,
            n: self.len(),
            d: self.dim,
            counts: self.class_counts().counts,
        }
    }
}

/// Metadata sidecar written next to generated CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub counts: Vec<usize>,
}

impl DatasetMeta {
    pub fn save(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        io::write_with_header(path.as_ref(), header, &toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(toml::from_str(&io::read_to_string(path.as_ref())?)?)
    }
}

/// Per-class sample counts `n_y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub counts: Vec<usize>,
}

impl ClassCounts {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    #[inline]
    pub fn get(&self, class: usize) -> usize {
        self.counts[class]
    }

    pub fn is_non_increasing(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Form of `f(n_y)` in the importance weight `1 / f(n_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightForm {
    Linear,
    EffectiveNumber { beta: f64 },
    Sqrt,
    Log,
    Constant,
}

impl WeightForm {
    pub const NAMES: [&'static str; 5] = ["linear", "effective_number", "sqrt", "log", "constant"];

    pub fn name(&self) -> &'static str {
        match self {
            WeightForm::Linear => "linear",
            WeightForm::EffectiveNumber { .. } => "effective_number",
            WeightForm::Sqrt => "sqrt",
            WeightForm::Log => "log",
            WeightForm::Constant => "constant",
        }
    }

    /// Parses a form name; `beta` is required for (and only allowed with)
    /// `effective_number`.
    pub fn from_name(name: &str, beta: Option<f64>) -> Result<Self> {
        let form = match name {
            "linear" => WeightForm::Linear,
            "sqrt" => WeightForm::Sqrt,
            "log" => WeightForm::Log,
            "constant" => WeightForm::Constant,
            "effective_number" => {
                let beta = beta.ok_or_else(|| {
                    Error::Config("effective_number weight form requires beta".into())
                })?;
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")));
                }
                return Ok(WeightForm::EffectiveNumber { beta });
            }
            other => return Err(Error::Config(format!("unknown weight form `{other}`"))),
        };
        if beta.is_some() {
            return Err(Error::Config(format!("beta is only valid for effective_number, not {name}")));
        }
        Ok(form)
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            WeightForm::EffectiveNumber { beta } => Some(*beta),
            _ => None,
        }
    }

    /// `f(n_y)`.
    pub fn f(&self, count: usize) -> f64 {
        let n = count as f64;
        match *self {
            WeightForm::Linear => n,
            WeightForm::EffectiveNumber { beta } => (1.0 - beta.powf(n)) / (1.0 - beta),
            WeightForm::Sqrt => n.sqrt(),
            WeightForm::Log => n.ln(),
            WeightForm::Constant => 1.0,
        }
    }
}

/// `1 / f(n_y)`.
pub fn importance_weight(form: WeightForm, count: usize) -> Result<f64> {
    if count == 0 {
        return Err(Error::SingularWeight { count });
    }
    let f = form.f(count);
    if f <= 0.0 || !f.is_finite() {
        return Err(Error::SingularWeight { count });
    }
    Ok(1.0 / f)
}

/// Per-class weights. With `normalize`, weights are rescaled by a common
/// factor so the mean weight over the training samples is one.
pub fn class_weights(form: WeightForm, counts: &ClassCounts, normalize: bool) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(counts.num_classes());
    for &n in &counts.counts {
        // Classes absent from training never contribute a sample.
        weights.push(if n == 0 { 0.0 } else { importance_weight(form, n)? });
    }
    if normalize {
        let mass: f64 = weights.iter().zip(&counts.counts).map(|(w, &n)| w * n as f64).sum();
        let total = counts.total() as f64;
        if mass > 0.0 {
            let scale = total / mass;
            weights.iter_mut().for_each(|w| *w *= scale);
        }
    }
    Ok(weights)
}

/// Head/med/tail partition of the class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regions {
    pub head: Range<usize>,
    pub med: Range<usize>,
    pub tail: Range<usize>,
}

/// Sizes `⌊K/3⌋, ⌊K/3⌋` and the remainder to the tail.
pub fn region_split(k: usize) -> Regions {
    let third = k / 3;
    Regions {
        head: 0..third,
        med: third..2 * third,
        tail: 2 * third..k,
    }
}

/// The last `⌈K·ratio⌉` class indices.
pub fn tail_set(k: usize, ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("tail ratio must lie in (0, 1), got {ratio}")));
    }
    // Guard against 0.1 * 30 = 3.0000000000000004 style artifacts.
    let size = ((k as f64 * ratio) - 1e-9).ceil().max(1.0) as usize;
    let size = size.min(k);
    Ok((k - size..k).collect())
}

/// Class means plus unit-variance isotropic noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    means: Vec<Vec<f64>>,
    dim: usize,
}

impl GaussianMixture {
    /// Means are pairwise at least `separation` apart: scaled basis vectors
    /// when `K <= D` (all pairs exactly `separation`), a centred cubic
    /// lattice with spacing `separation` otherwise.
    pub fn new(num_classes: usize, dim: usize, separation: f64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        if dim == 0 {
            return Err(Error::Config("feature dimension must be at least 1".into()));
        }
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(Error::Config(format!("separation must be positive, got {separation}")));
        }
        let means = if num_classes <= dim {
            let scale = separation / std::f64::consts::SQRT_2;
            (0..num_classes)
                .map(|c| {
                    let mut m = vec![0.0; dim];
                    m[c] = scale;
                    m
                })
                .collect()
        } else {
            let side = (num_classes as f64).powf(1.0 / dim as f64).ceil() as usize;
            let side = side.max(2);
            let offset = (side - 1) as f64 / 2.0;
            (0..num_classes)
                .map(|c| {
                    let mut rem = c;
                    (0..dim)
                        .map(|_| {
                            let coord = rem % side;
                            rem /= side;
                            (coord as f64 - offset) * separation
                        })
                        .collect()
                })
                .collect()
        };
        Ok(Self { means, dim })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    /// Balanced sample with `per_class` rows per class, grouped by class.
    pub fn sample(&self, per_class: usize, seed: u64, name: &str) -> Result<LabeledDataset> {
        self.sample_stream(per_class, seed, 0, name)
    }

    /// As [`sample`](Self::sample), drawing from an independent stream of the
    /// seeded generator (e.g. stream 1 for a held-out split).
    pub fn sample_stream(&self, per_class: usize, seed: u64, stream: u64, name: &str) -> Result<LabeledDataset> {
        let k = self.num_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut features = Vec::with_capacity(k * per_class * self.dim);
        let mut labels = Vec::with_capacity(k * per_class);
        for (c, mean) in self.means.iter().enumerate() {
            for _ in 0..per_class {
                for &m in mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    features.push(m + z);
                }
                labels.push(c);
            }
        }
        LabeledDataset::new(features, self.dim, labels, k, name)
    }
}

/// Balanced Gaussian-mixture dataset.
pub fn synth_gaussian_mixture(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if per_class < 2 {
        return Err(Error::Config(format!("per_class must be at least 2, got {per_class}")));
    }
    GaussianMixture::new(num_classes, dim, separation)?.sample(per_class, seed, "gaussian_mixture")
}

/// Kept count for class `k` under the exponential profile `n·rho^(−k/(K−1))`.
pub fn long_tail_count(per_class: usize, rho: f64, class: usize, num_classes: usize) -> usize {
    let exponent = -(class as f64) / (num_classes - 1) as f64;
    (per_class as f64 * rho.powf(exponent)).round() as usize
}

/// Subsamples a balanced dataset to an exponentially decaying class profile.
/// Classes are re-indexed by descending kept count.
pub fn make_long_tailed(ds: &LabeledDataset, rho: f64, seed: u64) -> Result<LabeledDataset> {
    let counts = ds.class_counts();
    let k = ds.num_classes();
    let n = counts.counts[0];
    if counts.counts.iter().any(|&c| c != n) {
        return Err(Error::Data(format!(
            "long-tail construction needs a balanced input, got counts {:?}",
            counts.counts
        )));
    }
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::Config(format!("imbalance ratio must be >= 1, got {rho}")));
    }
    if rho > n as f64 {
        return Err(Error::InfeasibleImbalance { rho, per_class: n });
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::with_capacity(n); k];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        let target = long_tail_count(n, rho, c, k).clamp(1, n);
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), target)
            .into_iter()
            .map(|j| members[j])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    let sub = ds.subset(&keep)?;
    Ok(sub.sort_by_frequency().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synth_contract() {
        let ds = synth_gaussian_mixture(2, 2, 100, 4.0, 7).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.class_counts().counts, vec![100, 100]);
        assert_eq!(ds, synth_gaussian_mixture(2, 2, 100, 4.0, 7).unwrap());
        assert_ne!(ds, synth_gaussian_mixture(2, 2, 100, 4.0, 8).unwrap());
    }

    #[test]
    fn synth_means_respect_separation() {
        for (k, d) in [(3, 5), (10, 2), (5, 1), (10, 10)] {
            let gm = GaussianMixture::new(k, d, 3.0).unwrap();
            for a in 0..k {
                for b in 0..a {
                    let dist: f64 = gm.means()[a]
                        .iter()
                        .zip(&gm.means()[b])
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(dist >= 3.0 - 1e-12, "k={k} d={d} dist={dist}");
                }
            }
        }
        assert!(matches!(GaussianMixture::new(3, 0, 1.0), Err(Error::Config(_))));
        assert!(matches!(GaussianMixture::new(3, 2, 0.0), Err(Error::Config(_))));
        assert!(matches!(synth_gaussian_mixture(2, 2, 1, 1.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn long_tail_profile() {
        let counts: Vec<usize> = (0..10).map(|c| long_tail_count(500, 100.0, c, 10)).collect();
        assert_eq!(counts[0], 500);
        assert_eq!(counts[9], 5);
        assert!(counts.windows(2).all(|w| w[0] > w[1]));

        let ds = synth_gaussian_mixture(10, 4, 500, 3.0, 1).unwrap();
        let lt = make_long_tailed(&ds, 100.0, 3).unwrap();
        assert_eq!(lt.class_counts().counts, counts);
        assert_eq!(lt, make_long_tailed(&ds, 100.0, 3).unwrap());

        let same = make_long_tailed(&ds, 1.0, 3).unwrap();
        assert_eq!(same.class_counts().counts, vec![500; 10]);

        assert!(matches!(
            make_long_tailed(&ds, 501.0, 3),
            Err(Error::InfeasibleImbalance { .. })
        ));
    }

    #[test]
    fn table_weights() {
        let w = |form, n| importance_weight(form, n).unwrap();
        assert_abs_diff_eq!(w(WeightForm::Linear, 500), 0.0020, epsilon = 5e-5);
        assert_abs_diff_eq!(w(WeightForm::Linear, 6), 0.1667, epsilon = 5e-5);
        assert_abs_diff_eq!(w(WeightForm::Sqrt, 500), 0.0447, epsilon = 5e-5);
        assert_abs_diff_eq!(w(WeightForm::Log, 500), 0.1609, epsilon = 5e-5);
        let en = WeightForm::EffectiveNumber { beta: DEFAULT_BETA };
        assert_abs_diff_eq!(w(en, 500), 0.00226, epsilon = 5e-6);
        assert_abs_diff_eq!(w(en, 6), 0.1669, epsilon = 5e-5);
        assert_eq!(w(WeightForm::Constant, 17), 1.0);
        assert!(matches!(
            importance_weight(WeightForm::Log, 1),
            Err(Error::SingularWeight { count: 1 })
        ));
    }

    #[test]
    fn weights_non_increasing_and_growth_order() {
        let forms = [
            WeightForm::Linear,
            WeightForm::EffectiveNumber { beta: DEFAULT_BETA },
            WeightForm::Sqrt,
            WeightForm::Log,
            WeightForm::Constant,
        ];
        for form in forms {
            let start = if form == WeightForm::Log { 2 } else { 1 };
            let ws: Vec<f64> = (start..2000).map(|n| importance_weight(form, n).unwrap()).collect();
            assert!(ws.windows(2).all(|p| p[0] >= p[1]), "{form:?}");
        }
        let growth: Vec<f64> = forms
            .iter()
            .map(|&f| importance_weight(f, 6).unwrap() / importance_weight(f, 500).unwrap())
            .collect();
        assert!(growth.windows(2).all(|p| p[0] > p[1]), "{growth:?}");
    }

    #[test]
    fn normalized_weights_have_unit_mean() {
        let counts = ClassCounts::new(vec![500, 100, 20, 5]);
        let w = class_weights(WeightForm::Linear, &counts, true).unwrap();
        let mean: f64 =
            w.iter().zip(&counts.counts).map(|(w, &n)| w * n as f64).sum::<f64>() / counts.total() as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[0] * 500.0, w[3] * 5.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_form_parsing() {
        assert_eq!(WeightForm::from_name("linear", None).unwrap(), WeightForm::Linear);
        assert!(WeightForm::from_name("effective_number", None).is_err());
        assert!(WeightForm::from_name("linear", Some(0.9)).is_err());
        assert!(WeightForm::from_name("effective_number", Some(1.0)).is_err());
        assert!(WeightForm::from_name("cubic", None).is_err());
    }

    #[test]
    fn regions_and_tails() {
        assert_eq!(tail_set(100, 0.25).unwrap(), (75..100).collect::<Vec<_>>());
        assert_eq!(tail_set(10, 0.25).unwrap(), vec![7, 8, 9]);
        assert_eq!(tail_set(10, 0.5).unwrap(), vec![5, 6, 7, 8, 9]);
        assert!(tail_set(10, 0.0).is_err());
        let r = region_split(9);
        assert_eq!((r.head.len(), r.med.len(), r.tail.len()), (3, 3, 3));
        let r = region_split(10);
        assert_eq!((r.head.len(), r.med.len(), r.tail.len()), (3, 3, 4));
        let r = region_split(100);
        assert_eq!((r.head.len(), r.med.len(), r.tail.len()), (33, 33, 34));
    }

    #[test]
    fn csv_round_trip_preserves_bits() {
        let ds = synth_gaussian_mixture(3, 2, 4, 2.0, 5).unwrap();
        let text = ds.to_csv_string().unwrap();
        let back = LabeledDataset::from_csv_reader(text.as_bytes(), Some(3), ds.name()).unwrap();
        assert_eq!(back, ds);

        let with_comment = format!("# header\n{text}");
        assert_eq!(
            LabeledDataset::from_csv_reader(with_comment.as_bytes(), None, ds.name()).unwrap(),
            ds
        );
        let bad = "x0,label\n1.0,abc\n";
        assert!(matches!(
            LabeledDataset::from_csv_reader(bad.as_bytes(), None, "bad"),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn sort_by_frequency_reindexes() {
        let ds = LabeledDataset::new(vec![0.0; 6], 1, vec![2, 2, 2, 0, 1, 1], 3, "t").unwrap();
        let (sorted, mapping) = ds.sort_by_frequency();
        assert_eq!(mapping, vec![2, 1, 0]);
        assert_eq!(sorted.class_counts().counts, vec![3, 2, 1]);
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::new(vec![1.0], 1, vec![3], 3, "x").is_err());
        assert!(LabeledDataset::new(vec![f64::NAN], 1, vec![0], 3, "x").is_err());
        assert!(LabeledDataset::new(vec![], 1, vec![], 3, "x").is_err());
    }
}
