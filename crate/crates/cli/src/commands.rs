use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rfdlc::data::{DatasetMeta, GaussianMixture};
use rfdlc::decision::decide_with_scores;
use rfdlc::io::header;
use rfdlc::objective::{finite_difference_check, loss_and_gradient, GradCheckReport};
use rfdlc::{
    evaluate, make_long_tailed, synth_gaussian_mixture, train, EvalOptions, EvalReport,
    LabeledDataset, ParticleEnsemble, TrainHistory,
};

use crate::config::{set_path, ArchSection, Config, DataSection, EvalSection, ObjectiveSection, TrainSection, UtilitySpec};
use crate::error::CliError;

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MakeData {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub rho: f64,
    pub separation: f64,
    pub seed: u64,
}

impl Default for MakeData {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 10,
            per_class: 500,
            test_per_class: 100,
            rho: 100.0,
            separation: 3.0,
            seed: 1,
        }
    }
}

/// Long-tailed training split and balanced test split from one mixture.
pub fn make_datasets(p: &MakeData) -> Result<(LabeledDataset, LabeledDataset), CliError> {
    let balanced = synth_gaussian_mixture(p.num_classes, p.dim, p.per_class, p.separation, p.seed)?;
    let train_ds = make_long_tailed(&balanced, p.rho, p.seed)?.with_name("train");
    if p.test_per_class == 0 {
        return Err(CliError::config("test_per_class must be at least 1"));
    }
    let test_ds = GaussianMixture::new(p.num_classes, p.dim, p.separation)?
        .sample_stream(p.test_per_class, p.seed, 1, "test")?;
    Ok((train_ds, test_ds))
}

pub fn cmd_make_data(p: &MakeData, out: &Path) -> Result<(DatasetMeta, DatasetMeta), CliError> {
    let (train_ds, test_ds) = make_datasets(p)?;
    let h = header(p.seed);
    train_ds.write_csv(out.join("train.csv"), &h)?;
    test_ds.write_csv(out.join("test.csv"), &h)?;
    let (mt, ms) = (train_ds.meta(), test_ds.meta());
    mt.save(out.join("train.meta.toml"), &h)?;
    ms.save(out.join("test.meta.toml"), &h)?;
    Ok((mt, ms))
}

pub fn load_dataset(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset, CliError> {
    Ok(LabeledDataset::read_csv(path, num_classes)?)
}

pub struct TrainRun {
    pub ensemble: ParticleEnsemble,
    pub history: TrainHistory,
    pub resolved: Config,
}

/// Trains the configured ensemble on `train_ds`.
pub fn train_on(cfg: &Config, train_ds: &LabeledDataset) -> Result<TrainRun, CliError> {
    let k = train_ds.num_classes();
    let utility = cfg.objective.utility.build(k)?;
    let tc = cfg.train_config(utility);
    let arch = cfg.architecture(train_ds.dim(), k)?;
    let mut ensemble = ParticleEnsemble::init(arch, cfg.arch.num_particles, cfg.train.seed)?;
    let history = train(&tc, &mut ensemble, train_ds, &train_ds.class_counts())?;
    Ok(TrainRun {
        ensemble,
        history,
        resolved: cfg.resolved(k),
    })
}

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub resolved: PathBuf,
    pub run: TrainRun,
}

pub fn cmd_train(cfg: &Config, out: &Path) -> Result<TrainOutputs, CliError> {
    let train_ds = load_dataset(&cfg.data.train, cfg.data.num_classes)?;
    let run = train_on(cfg, &train_ds)?;
    let h = header(cfg.train.seed);
    let outputs = TrainOutputs {
        checkpoint: out.join("checkpoint.toml"),
        history: out.join("history.csv"),
        resolved: out.join("resolved_config.toml"),
        run,
    };
    outputs.run.ensemble.save(&outputs.checkpoint, &h)?;
    outputs.run.history.save(&outputs.history, &h)?;
    let resolved = outputs.run.resolved.to_toml_string()?;
    rfdlc::io::write_with_header(&outputs.resolved, &h, &resolved)?;
    Ok(outputs)
}

pub fn load_checkpoint(path: &Path) -> Result<ParticleEnsemble, CliError> {
    Ok(ParticleEnsemble::load(path)?)
}

pub fn cmd_eval(
    checkpoint: &Path,
    test_csv: &Path,
    utility: &UtilitySpec,
    options: &EvalOptions,
    out: Option<&Path>,
) -> Result<EvalReport, CliError> {
    let ensemble = load_checkpoint(checkpoint)?;
    let k = ensemble.num_classes();
    let test_ds = load_dataset(test_csv, Some(k))?;
    let u = utility.build(k)?;
    let report = evaluate(&ensemble, &test_ds, &u, options)?;
    if let Some(dir) = out {
        report.save(dir.join("report.toml"), dir.join("report.csv"), &header(ensemble.seed()))?;
    }
    Ok(report)
}

/// Feature rows from a CSV; a column named `label` is ignored if present.
pub fn read_features(path: &Path) -> Result<(Vec<f64>, usize), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers().map_err(|e| CliError::data(e.to_string()))?.clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "label").collect();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(e.to_string()))?;
        for &i in &keep {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| CliError::data(format!("row {}: bad feature value `{}`", line + 1, &rec[i])))?;
            if !v.is_finite() {
                return Err(CliError::data(format!("row {}: non-finite feature", line + 1)));
            }
            values.push(v);
        }
    }
    Ok((values, keep.len()))
}

pub fn cmd_decide(
    checkpoint: &Path,
    input_csv: &Path,
    utility: &UtilitySpec,
    out: Option<&Path>,
) -> Result<Vec<usize>, CliError> {
    let ensemble = load_checkpoint(checkpoint)?;
    let k = ensemble.num_classes();
    let u = utility.build(k)?;
    let (features, dim) = read_features(input_csv)?;
    if dim != ensemble.arch().input_dim() {
        return Err(CliError::data(format!(
            "input has {dim} feature columns, model expects {}",
            ensemble.arch().input_dim()
        )));
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["index".to_string(), "decision".to_string()];
    head.extend((0..k).map(|d| format!("score_{d}")));
    wtr.write_record(&head).map_err(|e| CliError::data(e.to_string()))?;
    let mut decisions = Vec::new();
    for (i, x) in features.chunks_exact(dim).enumerate() {
        let d = decide_with_scores(&ensemble, x, &u)?;
        let mut row = vec![i.to_string(), d.class.to_string()];
        row.extend(d.scores.iter().map(|s| format!("{s:?}")));
        wtr.write_record(&row).map_err(|e| CliError::data(e.to_string()))?;
        decisions.push(d.class);
    }
    if let Some(path) = out {
        let bytes = wtr.into_inner().map_err(|e| CliError::data(e.to_string()))?;
        let body = String::from_utf8(bytes).map_err(|e| CliError::data(e.to_string()))?;
        rfdlc::io::write_with_header(path, &header(ensemble.seed()), &body)?;
    }
    Ok(decisions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    UtilityU,
    WeightForm,
    Lambda,
    NumParticles,
}

impl SweepAxis {
    pub const NAMES: [&'static str; 4] = ["utility_u", "weight_form", "lambda", "num_particles"];

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "utility_u" => Ok(SweepAxis::UtilityU),
            "weight_form" => Ok(SweepAxis::WeightForm),
            "lambda" => Ok(SweepAxis::Lambda),
            "num_particles" => Ok(SweepAxis::NumParticles),
            _ => Err(CliError::config(format!(
                "unknown sweep axis `{s}` (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::UtilityU => "utility_u",
            SweepAxis::WeightForm => "weight_form",
            SweepAxis::Lambda => "lambda",
            SweepAxis::NumParticles => "num_particles",
        }
    }

    /// Writes `value` into the config document at this axis.
    pub fn apply(self, doc: &mut toml::Table, value: &str) -> Result<(), CliError> {
        let bad = || CliError::config(format!("bad value `{value}` for sweep axis {}", self.name()));
        match self {
            SweepAxis::UtilityU => {
                let u: f64 = value.trim().parse().map_err(|_| bad())?;
                let mut t = toml::Table::new();
                t.insert("kind".into(), "tail_sensitive".into());
                t.insert("u".into(), u.into());
                set_path(doc, "objective.utility", t.into())
            }
            SweepAxis::WeightForm => set_path(doc, "objective.weight_form", value.trim().into()),
            SweepAxis::Lambda => {
                let l: f64 = value.trim().parse().map_err(|_| bad())?;
                set_path(doc, "objective.lambda", l.into())
            }
            SweepAxis::NumParticles => {
                let m: i64 = value.trim().parse().map_err(|_| bad())?;
                set_path(doc, "arch.num_particles", m.into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub report: EvalReport,
    pub min_distance: Option<f64>,
    pub final_loss: f64,
}

/// Trains and evaluates one run per value. Runs are independent and share
/// the base seed, so they execute in parallel and come back in input order.
pub fn sweep(
    base: &toml::Table,
    axis: SweepAxis,
    values: &[String],
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
) -> Result<Vec<SweepRow>, CliError> {
    let configs: Vec<Config> = values
        .iter()
        .map(|v| {
            let mut doc = base.clone();
            axis.apply(&mut doc, v)?;
            Config::from_table(doc)
        })
        .collect::<Result<_, _>>()?;
    configs
        .par_iter()
        .zip(values)
        .map(|(cfg, v)| {
            let run = train_on(cfg, train_ds)?;
            let u = cfg.decision_utility().build(train_ds.num_classes())?;
            let report = evaluate(&run.ensemble, test_ds, &u, &cfg.eval.options())?;
            Ok(SweepRow {
                value: v.clone(),
                report,
                min_distance: run.ensemble.min_pairwise_distance(),
                final_loss: run.history.records.last().map_or(f64::NAN, |r| r.loss),
            })
        })
        .collect()
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> Result<String, CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::data(e.to_string());
    if let Some(first) = rows.first() {
        let mut head = vec![axis.name().to_string()];
        head.extend(first.report.csv_header());
        head.extend(["min_distance".to_string(), "final_loss".to_string()]);
        wtr.write_record(&head).map_err(err)?;
    }
    for r in rows {
        let mut rec = vec![r.value.clone()];
        rec.extend(r.report.csv_row());
        rec.push(r.min_distance.map_or("NA".into(), |d| format!("{d:?}")));
        rec.push(format!("{:?}", r.final_loss));
        wtr.write_record(&rec).map_err(err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::data(e.to_string()))
}

pub fn cmd_sweep(
    base: &toml::Table,
    axis: SweepAxis,
    values: &[String],
    out: Option<&Path>,
) -> Result<Vec<SweepRow>, CliError> {
    let cfg = Config::from_table(base.clone())?;
    let test_path = cfg
        .data
        .test
        .as_ref()
        .ok_or_else(|| CliError::config("config field `data.test`: required by sweep"))?;
    let train_ds = load_dataset(&cfg.data.train, cfg.data.num_classes)?;
    let test_ds = load_dataset(test_path, Some(train_ds.num_classes()))?;
    let rows = sweep(base, axis, values, &train_ds, &test_ds)?;
    if let Some(path) = out {
        rfdlc::io::write_with_header(path, &header(cfg.train.seed), &sweep_csv(axis, &rows)?)?;
    }
    Ok(rows)
}

/// Small config used by `gradcheck` when none is given.
pub fn gradcheck_default_config() -> Config {
    Config {
        data: DataSection {
            train: PathBuf::new(),
            test: None,
            num_classes: None,
        },
        arch: ArchSection {
            hidden: vec![6],
            num_particles: 3,
            shared_trunk_layers: 0,
        },
        objective: ObjectiveSection {
            utility: UtilitySpec::TailSensitive { u: -1.0 },
            weight_form: "linear".into(),
            beta: None,
            alpha: 1.0,
            lambda: 5e-4,
            tau: 40.0,
            epsilon_var: rfdlc::objective::DEFAULT_EPSILON_VAR,
            repulsion_scale: 1.0,
            normalize_weights: false,
        },
        train: TrainSection {
            epochs: 1,
            learning_rate: 0.1,
            batch_size: 128,
            momentum: 0.9,
            milestones: None,
            lr_decay: 0.1,
            seed: 0,
        },
        eval: EvalSection::default(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Test hook: perturbs one analytic gradient coordinate.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            num_classes: 3,
            dim: 4,
            per_class: 3,
            corrupt: false,
        }
    }
}

/// Analytic gradient against central differences on a random instance built
/// from the config's objective and architecture.
pub fn cmd_gradcheck(cfg: &Config, opts: &GradcheckOptions) -> Result<GradCheckReport, CliError> {
    let k = opts.num_classes;
    let data = synth_gaussian_mixture(k, opts.dim, opts.per_class, 1.0, opts.seed)?;
    let counts = rfdlc::ClassCounts::new((0..k).map(|c| rfdlc::data::long_tail_count(500, 100.0, c, k)).collect());
    let utility = cfg.objective.utility.build(k)?;
    let obj = cfg.objective_config(utility);
    let arch = cfg.architecture(opts.dim, k)?;
    let ensemble = ParticleEnsemble::init(arch, cfg.arch.num_particles, opts.seed)?;
    let batch: Vec<usize> = (0..data.len()).collect();
    let (_, mut grad) = loss_and_gradient(&ensemble, &data, &batch, &counts, &obj, 0)?;
    if opts.corrupt {
        let g = &mut grad.own[0][0];
        *g += 0.01 * (1.0 + g.abs());
    }
    Ok(finite_difference_check(&ensemble, &data, &batch, &counts, &obj, 0, &grad, GRADCHECK_STEP)?)
}
