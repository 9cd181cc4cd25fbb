//! Evaluation metrics: region accuracy, False Head Rate, class-sensitive
//! misprediction rates, ECE and misclassification AUROC.
//!
//! Rates whose denominator is empty are reported as undefined rather than 0.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{region_split, tail_set, LabeledDataset, Regions};
use crate::decision::decide_dataset;
use crate::error::{Error, Result};
use crate::io;
use crate::model::ParticleEnsemble;
use crate::utility::UtilityMatrix;

pub const DEFAULT_ECE_BINS: usize = 15;
pub const DEFAULT_TAIL_RATIOS: [f64; 3] = [0.25, 0.5, 0.75];

fn check_lengths(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn mask(set: &[usize], len: usize) -> Vec<bool> {
    let len = len.max(set.iter().max().map_or(0, |m| m + 1));
    let mut out = vec![false; len];
    for &c in set {
        out[c] = true;
    }
    out
}

fn contains(mask: &[bool], c: usize) -> bool {
    mask.get(c).copied().unwrap_or(false)
}

/// Fraction of samples labelled in `true_set` that were predicted in
/// `decision_set`.
pub fn misprediction_rate(
    preds: &[usize],
    labels: &[usize],
    true_set: &[usize],
    decision_set: &[usize],
) -> Result<f64> {
    check_lengths(preds, labels)?;
    let t = mask(true_set, 0);
    let d = mask(decision_set, 0);
    let mut denom = 0usize;
    let mut hits = 0usize;
    for (&p, &y) in preds.iter().zip(labels) {
        if contains(&t, y) {
            denom += 1;
            if contains(&d, p) {
                hits += 1;
            }
        }
    }
    if denom == 0 {
        return Err(Error::UndefinedRate("no samples labelled in the true set".into()));
    }
    Ok(hits as f64 / denom as f64)
}

/// Fraction of true-tail samples predicted outside the tail set.
pub fn false_head_rate(preds: &[usize], labels: &[usize], tail: &[usize]) -> Result<f64> {
    check_lengths(preds, labels)?;
    if tail.is_empty() {
        return Err(Error::UndefinedRate("empty tail set".into()));
    }
    let t = mask(tail, 0);
    let mut denom = 0usize;
    let mut false_head = 0usize;
    for (&p, &y) in preds.iter().zip(labels) {
        if contains(&t, y) {
            denom += 1;
            if !contains(&t, p) {
                false_head += 1;
            }
        }
    }
    if denom == 0 {
        return Err(Error::UndefinedRate("no tail-labelled samples".into()));
    }
    Ok(false_head as f64 / denom as f64)
}

/// Equal-width bins on (0, 1]; a confidence `c` lands in bin `⌈c·B⌉ − 1`
/// (0 goes to the first bin).
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<f64> {
    if confidences.len() != correct.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} confidences for {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if num_bins == 0 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Data(format!("confidence {c} outside [0, 1]")));
    }
    let n = confidences.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut count = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    let mut hits = vec![0usize; num_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * num_bins as f64).ceil() as usize).clamp(1, num_bins) - 1;
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += ok as usize;
    }
    Ok((0..num_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n as f64) * (conf_sum[b] / nb - hits[b] as f64 / nb).abs()
        })
        .sum())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (rank-sum form).
pub fn auroc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} flags",
            scores.len(),
            positives.len()
        )));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedRate("AUROC needs both positives and negatives".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
    // it stays an integer.
    let mut pos_rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank_x2 = (i + 1 + j + 1) as u128;
        for &idx in &order[i..=j] {
            if positives[idx] {
                pos_rank_sum_x2 += rank_x2;
            }
        }
        i = j + 1;
    }
    let n_pos_u = n_pos as u128;
    let u_x2 = pos_rank_sum_x2 - n_pos_u * (n_pos_u + 1);
    Ok(u_x2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Accuracy overall and per class region; `None` where a region has no
/// labelled samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionAccuracy {
    pub overall: Option<f64>,
    pub head: Option<f64>,
    pub med: Option<f64>,
    pub tail: Option<f64>,
}

pub fn region_accuracy(preds: &[usize], labels: &[usize], regions: &Regions) -> Result<RegionAccuracy> {
    check_lengths(preds, labels)?;
    let acc = |filter: &dyn Fn(usize) -> bool| {
        let mut n = 0usize;
        let mut ok = 0usize;
        for (&p, &y) in preds.iter().zip(labels) {
            if filter(y) {
                n += 1;
                ok += (p == y) as usize;
            }
        }
        (n > 0).then(|| ok as f64 / n as f64)
    };
    Ok(RegionAccuracy {
        overall: acc(&|_| true),
        head: acc(&|y| regions.head.contains(&y)),
        med: acc(&|y| regions.med.contains(&y)),
        tail: acc(&|y| regions.tail.contains(&y)),
    })
}

/// A metric value that may be undefined. Serialized as a number or the
/// string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate(pub Option<f64>);

impl Rate {
    pub fn value(&self) -> Option<f64> {
        self.0
    }

    fn from_result(r: Result<f64>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Rate(Some(v))),
            Err(Error::UndefinedRate(_)) => Ok(Rate(None)),
            Err(e) => Err(e),
        }
    }

    fn csv_cell(&self) -> String {
        self.0.map_or_else(|| "NA".to_string(), |v| format!("{v:?}"))
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct RateVisitor;
        impl Visitor<'_> for RateVisitor {
            type Value = Rate;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"undefined\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Rate, E> {
                Ok(Rate(Some(v)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rate, E> {
                Ok(Rate(Some(v as f64)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rate, E> {
                if v == "undefined" {
                    Ok(Rate(None))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(RateVisitor)
    }
}

/// Score used to rank samples for misclassification detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyScore {
    /// Entropy of the predictive distribution.
    #[default]
    Entropy,
    /// One minus the largest predictive probability.
    MaxProb,
}

/// A named class-sensitive rate, e.g. bird samples predicted as plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRate {
    pub name: String,
    pub true_set: Vec<usize>,
    pub decision_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub tail_ratios: Vec<f64>,
    pub ece_bins: usize,
    pub score: UncertaintyScore,
    pub custom_rates: Vec<NamedRate>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tail_ratios: DEFAULT_TAIL_RATIOS.to_vec(),
            ece_bins: DEFAULT_ECE_BINS,
            score: UncertaintyScore::Entropy,
            custom_rates: Vec::new(),
        }
    }
}

pub fn ratio_key(ratio: f64) -> String {
    format!("{ratio}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub overall_acc: Rate,
    pub head_acc: Rate,
    pub med_acc: Rate,
    pub tail_acc: Rate,
    /// Region sizes (head, med, tail); the tail takes the remainder of K/3.
    pub region_sizes: [usize; 3],
    pub fhr_at: BTreeMap<String, Rate>,
    pub fhr_avg: Rate,
    pub custom_rates: BTreeMap<String, Rate>,
    pub ece: f64,
    pub ece_bins: usize,
    pub auroc: Rate,
    pub auroc_score: UncertaintyScore,
}

impl EvalReport {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["samples", "overall_acc", "head_acc", "med_acc", "tail_acc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.fhr_at.keys().map(|k| format!("fhr@{k}")));
        h.push("fhr_avg".into());
        h.extend(self.custom_rates.keys().cloned());
        h.extend(["ece".to_string(), "auroc".to_string()]);
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.samples.to_string(),
            self.overall_acc.csv_cell(),
            self.head_acc.csv_cell(),
            self.med_acc.csv_cell(),
            self.tail_acc.csv_cell(),
        ];
        r.extend(self.fhr_at.values().map(Rate::csv_cell));
        r.push(self.fhr_avg.csv_cell());
        r.extend(self.custom_rates.values().map(Rate::csv_cell));
        r.push(format!("{:?}", self.ece));
        r.push(self.auroc.csv_cell());
        r
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header())?;
        w.write_record(self.csv_row())?;
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn save(&self, toml_path: impl AsRef<Path>, csv_path: impl AsRef<Path>, header: &str) -> Result<()> {
        io::write_with_header(toml_path.as_ref(), header, &self.to_toml_string()?)?;
        io::write_with_header(csv_path.as_ref(), header, &self.to_csv_string()?)
    }
}

/// Builds a report from decisions plus predictive confidences/uncertainty.
/// `argmax_preds` are the predictive-distribution argmaxes used for the
/// calibration and misclassification-detection metrics.
pub struct EvalInputs<'a> {
    pub decisions: &'a [usize],
    pub labels: &'a [usize],
    pub num_classes: usize,
    pub confidences: &'a [f64],
    pub argmax_preds: &'a [usize],
    pub uncertainty: &'a [f64],
}

pub fn build_report(inputs: &EvalInputs<'_>, options: &EvalOptions) -> Result<EvalReport> {
    let k = inputs.num_classes;
    let labels = inputs.labels;
    let preds = inputs.decisions;
    check_lengths(preds, labels)?;
    let regions = region_split(k);
    let acc = region_accuracy(preds, labels, &regions)?;

    let mut fhr_at = BTreeMap::new();
    let mut defined = Vec::new();
    for &ratio in &options.tail_ratios {
        let tail = tail_set(k, ratio)?;
        let rate = Rate::from_result(false_head_rate(preds, labels, &tail))?;
        if let Some(v) = rate.0 {
            defined.push(v);
        }
        fhr_at.insert(ratio_key(ratio), rate);
    }
    let fhr_avg = if !defined.is_empty() && defined.len() == options.tail_ratios.len() {
        Rate(Some(defined.iter().sum::<f64>() / defined.len() as f64))
    } else {
        Rate(None)
    };

    let mut custom_rates = BTreeMap::new();
    for r in &options.custom_rates {
        let rate = Rate::from_result(misprediction_rate(preds, labels, &r.true_set, &r.decision_set))?;
        custom_rates.insert(r.name.clone(), rate);
    }

    let correct: Vec<bool> = inputs.argmax_preds.iter().zip(labels).map(|(p, y)| p == y).collect();
    let ece_value = ece(inputs.confidences, &correct, options.ece_bins)?;
    let wrong: Vec<bool> = correct.iter().map(|c| !c).collect();
    let auroc_value = Rate::from_result(auroc(inputs.uncertainty, &wrong))?;

    Ok(EvalReport {
        samples: labels.len(),
        overall_acc: Rate(acc.overall),
        head_acc: Rate(acc.head),
        med_acc: Rate(acc.med),
        tail_acc: Rate(acc.tail),
        region_sizes: [regions.head.len(), regions.med.len(), regions.tail.len()],
        fhr_at,
        fhr_avg,
        custom_rates,
        ece: ece_value,
        ece_bins: options.ece_bins,
        auroc: auroc_value,
        auroc_score: options.score,
    })
}

/// Decides every test input under `utility` and scores the result.
pub fn evaluate(
    ensemble: &ParticleEnsemble,
    ds: &LabeledDataset,
    utility: &UtilityMatrix,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if ds.num_classes() != ensemble.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "test data has {} classes, model {}",
            ds.num_classes(),
            ensemble.num_classes()
        )));
    }
    let decisions = decide_dataset(ensemble, ds, utility)?;
    let predictive = ensemble.predictive_batch(ds)?;
    let confidences: Vec<f64> = predictive.iter().map(|p| p.confidence().min(1.0)).collect();
    let argmax_preds: Vec<usize> = predictive.iter().map(|p| p.argmax()).collect();
    let uncertainty: Vec<f64> = match options.score {
        UncertaintyScore::Entropy => predictive.iter().map(|p| p.entropy).collect(),
        UncertaintyScore::MaxProb => confidences.iter().map(|c| 1.0 - c).collect(),
    };
    build_report(
        &EvalInputs {
            decisions: &decisions,
            labels: ds.labels(),
            num_classes: ds.num_classes(),
            confidences: &confidences,
            argmax_preds: &argmax_preds,
            uncertainty: &uncertainty,
        },
        options,
    )
}
