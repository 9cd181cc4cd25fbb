use rfdlc::trainer::{default_milestones, train_accuracy};
use rfdlc::*;

fn two_blobs(seed: u64) -> LabeledDataset {
    synth_gaussian_mixture(2, 2, 40, 6.0, seed).unwrap()
}

fn config(u: UtilityMatrix, epochs: usize, seed: u64) -> TrainConfig {
    let mut obj = ObjectiveConfig::new(u, WeightForm::Constant);
    obj.repulsion_scale = 0.0;
    let mut cfg = TrainConfig::new(obj, epochs, seed);
    cfg.batch_size = 16;
    cfg
}

fn ensemble(k: usize, m: usize, seed: u64) -> ParticleEnsemble {
    ParticleEnsemble::init(MlpArchitecture::new(vec![2, 8, k], 0).unwrap(), m, seed).unwrap()
}

#[test]
fn separable_two_class_fits() {
    let ds = two_blobs(1);
    let counts = ds.class_counts();
    let mut e = ensemble(2, 2, 3);
    let cfg = config(UtilityMatrix::one_hot(2).unwrap(), 50, 7);
    let h = train(&cfg, &mut e, &ds, &counts).unwrap();
    assert_eq!(h.records.len(), 50);
    assert!(h.records.last().unwrap().acc > 0.95);
    assert!(train_accuracy(&e, &ds).unwrap() > 0.95);
}

#[test]
fn training_is_deterministic() {
    let ds = two_blobs(2);
    let counts = ds.class_counts();
    let mut cfg = config(UtilityMatrix::tail_sensitive(2, -0.5).unwrap(), 8, 11);
    cfg.objective.lambda = 5e-4;
    cfg.objective.repulsion_scale = 5e-4;
    let mut a = ensemble(2, 3, 4);
    let mut b = ensemble(2, 3, 4);
    let ha = train(&cfg, &mut a, &ds, &counts).unwrap();
    let hb = train(&cfg, &mut b, &ds, &counts).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha.to_csv_string().unwrap(), hb.to_csv_string().unwrap());
}

#[test]
fn zero_learning_rate_is_identity() {
    let ds = two_blobs(3);
    let counts = ds.class_counts();
    let mut cfg = config(UtilityMatrix::one_hot(2).unwrap(), 3, 1);
    cfg.learning_rate = 0.0;
    let mut e = ensemble(2, 2, 9);
    let before = e.clone();
    train(&cfg, &mut e, &ds, &counts).unwrap();
    assert_eq!(e, before);
}

#[test]
fn small_steps_reduce_the_loss() {
    let ds = two_blobs(4);
    let counts = ds.class_counts();
    let mut cfg = config(UtilityMatrix::one_hot(2).unwrap(), 5, 2);
    cfg.learning_rate = 1e-2;
    cfg.momentum = 0.0;
    cfg.batch_size = ds.len();
    let mut e = ensemble(2, 1, 5);
    let h = train(&cfg, &mut e, &ds, &counts).unwrap();
    for w in h.records.windows(2) {
        assert!(w[1].loss <= w[0].loss, "{} > {}", w[1].loss, w[0].loss);
    }
}

#[test]
fn history_columns() {
    let ds = two_blobs(5);
    let counts = ds.class_counts();
    let mut cfg = config(UtilityMatrix::one_hot(2).unwrap(), 3, 2);
    cfg.objective.tau = 2.0;
    let mut e = ensemble(2, 2, 5);
    let h = train(&cfg, &mut e, &ds, &counts).unwrap();
    let csv = h.to_csv_string().unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epoch,loss,acc,repulsive_value,anneal_weight");
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(h.records[0].anneal_weight, 1.0);
    assert!((h.records[2].anneal_weight - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn schedule() {
    assert_eq!(default_milestones(100), vec![60, 80]);
    assert_eq!(default_milestones(1), Vec::<usize>::new());
    let cfg = config(UtilityMatrix::one_hot(2).unwrap(), 100, 0);
    assert_eq!(cfg.learning_rate_at(59), 0.1);
    assert!((cfg.learning_rate_at(60) - 0.01).abs() < 1e-15);
    assert!((cfg.learning_rate_at(99) - 0.001).abs() < 1e-15);
}

#[test]
fn invalid_configs() {
    let ds = two_blobs(6);
    let counts = ds.class_counts();
    let mut e = ensemble(2, 1, 0);
    let mut cfg = config(UtilityMatrix::one_hot(2).unwrap(), 2, 0);
    cfg.batch_size = 0;
    assert!(matches!(train(&cfg, &mut e, &ds, &counts), Err(Error::Config(_))));
    let cfg = config(UtilityMatrix::one_hot(3).unwrap(), 2, 0);
    assert!(matches!(train(&cfg, &mut e, &ds, &counts), Err(Error::DimensionMismatch(_))));
    let mut cfg = config(UtilityMatrix::one_hot(2).unwrap(), 2, 0);
    cfg.objective.alpha = 0.0;
    assert!(matches!(train(&cfg, &mut e, &ds, &counts), Err(Error::Config(_))));
}

#[test]
fn divergence_is_reported() {
    let ds = two_blobs(7);
    let counts = ds.class_counts();
    let mut e = ensemble(2, 1, 0);
    let mut cfg = config(UtilityMatrix::one_hot(2).unwrap(), 20, 0);
    cfg.objective.lambda = 1.0;
    cfg.learning_rate = 1e3;
    cfg.momentum = 0.0;
    let r = train(&cfg, &mut e, &ds, &counts);
    assert!(matches!(r, Err(Error::Diverged { .. }) | Err(Error::NumericOverflow)), "{r:?}");
}

#[test]
fn repulsion_spreads_particles() {
    let ds = synth_gaussian_mixture(3, 2, 30, 3.0, 8).unwrap();
    let counts = ds.class_counts();
    let mut on = config(UtilityMatrix::one_hot(3).unwrap(), 30, 3);
    on.objective.lambda = 5e-4;
    on.objective.repulsion_scale = 5e-3;
    let mut off = on.clone();
    off.objective.lambda = 0.0;
    off.objective.repulsion_scale = 0.0;
    let mut a = ensemble(3, 3, 1);
    let mut b = a.clone();
    train(&on, &mut a, &ds, &counts).unwrap();
    train(&off, &mut b, &ds, &counts).unwrap();
    assert!(a.min_pairwise_distance().unwrap() > b.min_pairwise_distance().unwrap());
}
