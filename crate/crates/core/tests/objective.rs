use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfdlc::objective::{
    entropy_term, finite_difference_check, l2_term, loss_and_gradient, reduction_holds,
};
use rfdlc::*;

fn lp(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| v.ln()).collect()
}

fn random_instance(seed: u64, k: usize, n: usize, dim: usize) -> (LabeledDataset, ClassCounts) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = (0..n * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let ds = LabeledDataset::new(features, dim, labels, k, "rand").unwrap();
    let counts = ClassCounts::new((0..k).map(|c| 3 + 2 * (k - c)).collect());
    (ds, counts)
}

fn small_ensemble(m: usize, shared: usize, seed: u64) -> ParticleEnsemble {
    let arch = MlpArchitecture::new(vec![3, 6, 3], shared).unwrap();
    ParticleEnsemble::init(arch, m, seed).unwrap()
}

#[test]
fn per_sample_term_examples() {
    let oh = UtilityMatrix::one_hot(2).unwrap();
    let t = per_sample_term(&lp(&[0.5, 0.5]), 0, &oh, 1.0).unwrap();
    assert_abs_diff_eq!(t, 2.0 * 0.5f64.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(t, -1.38629, epsilon = 1e-5);

    let ts = UtilityMatrix::tail_sensitive(2, -1.0).unwrap();
    let t = per_sample_term(&lp(&[0.7, 0.3]), 0, &ts, 1.0).unwrap();
    let hand = 0.7f64.ln() + (0.7f64.ln() - 0.3f64.ln());
    assert_abs_diff_eq!(t, hand, epsilon = 1e-12);
    assert_abs_diff_eq!(t, 0.49063, epsilon = 1e-5);
}

#[test]
fn per_sample_term_large_alpha_limit() {
    let ts = UtilityMatrix::tail_sensitive(4, -0.75).unwrap();
    let p = lp(&[0.4, 0.3, 0.2, 0.1]);
    let min_lp = p.iter().fold(0.0f64, |a, &v| a.min(v)).abs();
    for alpha in [10.0, 1e3, 1e6] {
        for y in 0..4 {
            let t = per_sample_term(&p, y, &ts, alpha).unwrap();
            assert!((t - p[y]).abs() <= 4.0 * min_lp / alpha);
        }
    }
}

#[test]
fn per_sample_term_errors() {
    let oh = UtilityMatrix::one_hot(2).unwrap();
    assert!(matches!(per_sample_term(&lp(&[0.5, 0.5]), 2, &oh, 1.0), Err(Error::Index { .. })));
    assert!(matches!(per_sample_term(&lp(&[0.5, 0.6]), 0, &oh, 1.0), Err(Error::Normalization { .. })));
    assert!(matches!(per_sample_term(&lp(&[1.0]), 0, &oh, 1.0), Err(Error::DimensionMismatch(_))));
}

#[test]
fn kl_regularizer_examples() {
    let arch = MlpArchitecture::new(vec![1, 2], 0).unwrap();
    let e = ParticleEnsemble::from_parts(arch.clone(), 0, vec![], vec![vec![0.0; 4], vec![2.0; 4]]).unwrap();
    // (1/2)·(0 + 16) with unit variance on every coordinate
    assert_abs_diff_eq!(kl_regularizer(&e, 1.0, 1e-8), 8.0, epsilon = 1e-12);
    assert_abs_diff_eq!(entropy_term(&e, 1e-8), 0.0, epsilon = 1e-12);

    let same = ParticleEnsemble::from_parts(arch.clone(), 0, vec![], vec![vec![0.3; 4], vec![0.3; 4]]).unwrap();
    let eps: f64 = 1e-8;
    assert_abs_diff_eq!(kl_regularizer(&same, 0.0, eps), -(4.0 / 2.0) * eps.ln(), epsilon = 1e-9);

    let single = ParticleEnsemble::from_parts(arch, 0, vec![], vec![vec![0.7; 4]]).unwrap();
    assert_eq!(kl_regularizer(&single, 0.0, 1e-8), 0.0);
}

#[test]
fn anneal_examples() {
    assert_eq!(anneal_weight(0, 40.0), 1.0);
    assert_abs_diff_eq!(anneal_weight(40, 40.0), (-1.0f64).exp(), epsilon = 1e-15);
    assert_abs_diff_eq!(anneal_weight(7, 7.0), 0.36788, epsilon = 1e-5);
}

#[test]
fn batch_loss_hand_example() {
    // Zero weights give uniform outputs: p(y) = 0.5.
    let arch = MlpArchitecture::new(vec![1, 2], 0).unwrap();
    let e = ParticleEnsemble::from_parts(arch, 0, vec![], vec![vec![0.0; 4]]).unwrap();
    let ds = LabeledDataset::new(vec![0.3], 1, vec![1], 2, "one").unwrap();
    let counts = ClassCounts::new(vec![9, 4]);
    let cfg = ObjectiveConfig::new(UtilityMatrix::one_hot(2).unwrap(), WeightForm::Linear);
    let loss = batch_loss(&e, &ds, &[0], &counts, &cfg, 0).unwrap();
    assert_abs_diff_eq!(loss, 0.25 * 2.0 * 2f64.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(loss, 0.34657, epsilon = 1e-5);
}

#[test]
fn constant_one_hot_reduces_to_cross_entropy() {
    let (ds, counts) = random_instance(3, 3, 12, 3);
    let batch: Vec<usize> = (0..ds.len()).collect();
    for m in [1, 3] {
        let e = small_ensemble(m, 0, 11);
        let mut nll = 0.0;
        for &i in &batch {
            for j in 0..m {
                nll -= e.forward_log_probs(j, ds.row(i)).unwrap()[ds.labels()[i]];
            }
        }
        nll /= (batch.len() * m) as f64;
        for alpha in [1.0, 0.3, 1e12] {
            let mut cfg = ObjectiveConfig::new(UtilityMatrix::one_hot(3).unwrap(), WeightForm::Constant);
            cfg.alpha = alpha;
            cfg.repulsion_scale = 0.0;
            let loss = batch_loss(&e, &ds, &batch, &counts, &cfg, 0).unwrap();
            assert_abs_diff_eq!(loss, (1.0 + 1.0 / alpha) * nll, epsilon = 1e-9);
        }
    }
}

#[test]
fn duplicating_the_batch_leaves_loss_unchanged() {
    let (ds, counts) = random_instance(5, 3, 10, 3);
    let e = small_ensemble(3, 1, 2);
    let mut cfg = ObjectiveConfig::new(UtilityMatrix::tail_sensitive(3, -0.5).unwrap(), WeightForm::Sqrt);
    cfg.lambda = 1e-3;
    let batch: Vec<usize> = (0..ds.len()).collect();
    let doubled: Vec<usize> = batch.iter().chain(&batch).copied().collect();
    let a = batch_loss(&e, &ds, &batch, &counts, &cfg, 3).unwrap();
    let b = batch_loss(&e, &ds, &doubled, &counts, &cfg, 3).unwrap();
    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
}

#[test]
fn zero_count_label_is_rejected() {
    let (ds, _) = random_instance(1, 3, 6, 3);
    let e = small_ensemble(1, 0, 0);
    let cfg = ObjectiveConfig::new(UtilityMatrix::one_hot(3).unwrap(), WeightForm::Linear);
    let counts = ClassCounts::new(vec![4, 0, 2]);
    let r = batch_loss(&e, &ds, &[0, 1, 2], &counts, &cfg, 0);
    assert!(matches!(r, Err(Error::InconsistentCounts(_))));
}

fn gradcheck(e: &ParticleEnsemble, cfg: &ObjectiveConfig, epoch: usize, seed: u64) -> f64 {
    let (ds, counts) = random_instance(seed, 3, 9, 3);
    let batch: Vec<usize> = (0..ds.len()).collect();
    let g = batch_gradient(e, &ds, &batch, &counts, cfg, epoch).unwrap();
    finite_difference_check(e, &ds, &batch, &counts, cfg, epoch, &g, 1e-6)
        .unwrap()
        .max_rel_error
}

#[test]
fn gradient_matches_finite_differences() {
    let utilities = [
        UtilityMatrix::one_hot(3).unwrap(),
        UtilityMatrix::tail_sensitive(3, -1.0).unwrap(),
        UtilityMatrix::penalized(3, &[Penalty::new(2, 0, -0.8), Penalty::new(1, 0, -0.3)]).unwrap(),
    ];
    for u in &utilities {
        for form in [WeightForm::Linear, WeightForm::EffectiveNumber { beta: 0.9995 }, WeightForm::Log] {
            for (m, shared) in [(1, 0), (3, 0), (3, 1)] {
                let e = small_ensemble(m, shared, 17 + m as u64);
                let mut cfg = ObjectiveConfig::new(u.clone(), form);
                cfg.lambda = 5e-4;
                cfg.alpha = 0.7;
                let err = gradcheck(&e, &cfg, 2, 4);
                assert!(err < 1e-4, "{:?} {:?} M={m}: {err}", u.kind(), form);
            }
        }
    }
}

#[test]
fn pure_l2_gradient() {
    let arch = MlpArchitecture::new(vec![2, 3], 0).unwrap();
    let theta: Vec<f64> = (0..9).map(|i| 0.1 * i as f64 - 0.4).collect();
    let e = ParticleEnsemble::from_parts(arch, 0, vec![], vec![theta.clone()]).unwrap();
    let ds = LabeledDataset::new(vec![0.5, -0.5], 2, vec![0], 3, "one").unwrap();
    let counts = ClassCounts::new(vec![1, 1, 1]);
    let mut cfg = ObjectiveConfig::new(UtilityMatrix::one_hot(3).unwrap(), WeightForm::Constant);
    cfg.lambda = 0.3;
    // Differencing against λ = 0 isolates the regularizer gradient.
    let (_, g) = loss_and_gradient(&e, &ds, &[0], &counts, &cfg, 0).unwrap();
    let mut data_only = cfg.clone();
    data_only.lambda = 0.0;
    let (_, g0) = loss_and_gradient(&e, &ds, &[0], &counts, &data_only, 0).unwrap();
    for (i, t) in theta.iter().enumerate() {
        assert_abs_diff_eq!(g.own[0][i] - g0.own[0][i], 2.0 * 0.3 * t, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(l2_term(&e, 0.3), 0.3 * theta.iter().map(|t| t * t).sum::<f64>(), epsilon = 1e-12);
}

#[test]
fn floor_saturation_gives_no_repulsion() {
    let arch = MlpArchitecture::new(vec![2, 3], 0).unwrap();
    let theta: Vec<f64> = (0..9).map(|i| 0.05 * i as f64).collect();
    let twins = ParticleEnsemble::from_parts(arch, 0, vec![], vec![theta.clone(), theta]).unwrap();
    let ds = LabeledDataset::new(vec![0.5, -0.5], 2, vec![0], 3, "one").unwrap();
    let counts = ClassCounts::new(vec![1, 1, 1]);
    let cfg = ObjectiveConfig::new(UtilityMatrix::one_hot(3).unwrap(), WeightForm::Constant);
    let g = batch_gradient(&twins, &ds, &[0], &counts, &cfg, 0).unwrap();
    let mut off = cfg.clone();
    off.repulsion_scale = 0.0;
    let g0 = batch_gradient(&twins, &ds, &[0], &counts, &off, 0).unwrap();
    assert_eq!(g, g0);
}

#[test]
fn gradient_step_descends() {
    let (ds, counts) = random_instance(8, 3, 12, 3);
    let batch: Vec<usize> = (0..ds.len()).collect();
    let mut e = small_ensemble(3, 1, 5);
    let mut cfg = ObjectiveConfig::new(UtilityMatrix::tail_sensitive(3, -0.5).unwrap(), WeightForm::Linear);
    cfg.lambda = 5e-4;
    let (before, g) = loss_and_gradient(&e, &ds, &batch, &counts, &cfg, 1).unwrap();
    for (p, d) in e.trunk_mut().iter_mut().zip(&g.trunk) {
        *p -= 1e-4 * d;
    }
    for j in 0..3 {
        for (p, d) in e.own_mut(j).iter_mut().zip(&g.own[j]) {
            *p -= 1e-4 * d;
        }
    }
    let after = batch_loss(&e, &ds, &batch, &counts, &cfg, 1).unwrap();
    assert!(after < before.total, "{after} !< {}", before.total);
}

#[test]
fn reduction_identity() {
    let (ds, _) = random_instance(2, 3, 12, 3);
    let batch: Vec<usize> = (0..ds.len()).collect();
    let e = small_ensemble(3, 0, 1);
    assert!(one_hot_reduction_check(&e, &ds, &batch, 1.0).unwrap());
    let ts = UtilityMatrix::tail_sensitive(3, -1.0).unwrap();
    assert!(!reduction_holds(&e, &ds, &batch, &ts, 1.0).unwrap());
    // Head-labeled rows alone already break it.
    let heads: Vec<usize> = batch.iter().copied().filter(|&i| ds.labels()[i] == 0).collect();
    assert!(!reduction_holds(&e, &ds, &heads, &ts, 1.0).unwrap());
    let oh = UtilityMatrix::one_hot(3).unwrap();
    for &i in &batch {
        let l = e.forward_log_probs(0, ds.row(i)).unwrap();
        let y = ds.labels()[i];
        assert_abs_diff_eq!(per_sample_term(&l, y, &oh, 2.0).unwrap(), 1.5 * l[y], epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn entropy_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..4) {
        let e = small_ensemble(4, 0, seed);
        let mut ps = e.particles().to_vec();
        ps.rotate_left(shift);
        let p = ParticleEnsemble::from_parts(e.arch().clone(), seed, e.trunk().to_vec(), ps).unwrap();
        prop_assert!((entropy_term(&e, 1e-8) - entropy_term(&p, 1e-8)).abs() < 1e-12);
        prop_assert!((kl_regularizer(&e, 0.1, 1e-8) - kl_regularizer(&p, 0.1, 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn one_hot_term_is_scaled_log_likelihood(
        raw in prop::collection::vec(0.01f64..1.0, 2..8),
        pick in 0usize..8,
        alpha in 0.1f64..10.0,
    ) {
        let s: f64 = raw.iter().sum();
        let l: Vec<f64> = raw.iter().map(|v| (v / s).ln()).collect();
        let y = pick % l.len();
        let oh = UtilityMatrix::one_hot(l.len()).unwrap();
        let t = per_sample_term(&l, y, &oh, alpha).unwrap();
        prop_assert!((t - (1.0 + 1.0 / alpha) * l[y]).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_exact_on_random_instances(seed in 0u64..500, u in -1.0f64..0.0) {
        let e = small_ensemble(2, 0, seed);
        let mut cfg = ObjectiveConfig::new(UtilityMatrix::tail_sensitive(3, u).unwrap(), WeightForm::Sqrt);
        cfg.lambda = 1e-3;
        prop_assert!(gradcheck(&e, &cfg, 0, seed) < 1e-4);
    }
}
