use proptest::prelude::*;
use rfdlc::metrics::{build_report, EvalInputs};
use rfdlc::*;

fn pairwise_auroc(scores: &[f64], pos: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if pos[i] && !pos[j] {
                den += 1.0;
                num += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

fn labelled(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(move |n| {
        (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n))
    })
}

proptest! {
    #[test]
    fn auroc_matches_pairwise(
        data in prop::collection::vec((0u8..6, any::<bool>()), 2..80)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
        let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
        match auroc(&scores, &pos) {
            Ok(v) => prop_assert!((v - pairwise_auroc(&scores, &pos)).abs() < 1e-12),
            Err(Error::UndefinedRate(_)) => prop_assert!(pos.iter().all(|&p| p) || pos.iter().all(|&p| !p)),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn fhr_does_not_increase_when_a_prediction_moves_to_the_tail(
        (preds, labels) in labelled(9),
        which in 0usize..60,
        to in 6usize..9,
    ) {
        let tail: Vec<usize> = (6..9).collect();
        let Ok(before) = false_head_rate(&preds, &labels, &tail) else { return Ok(()); };
        let i = which % preds.len();
        let mut moved = preds.clone();
        if !tail.contains(&moved[i]) {
            moved[i] = to;
        }
        let after = false_head_rate(&moved, &labels, &tail).unwrap();
        prop_assert!(after <= before);
        prop_assert!((0.0..=1.0).contains(&after));
    }

    #[test]
    fn rates_stay_in_unit_interval((preds, labels) in labelled(7), conf in prop::collection::vec(0.0f64..=1.0, 60)) {
        let n = preds.len();
        let regions = region_split(7);
        let acc = region_accuracy(&preds, &labels, &regions).unwrap();
        for v in [acc.overall, acc.head, acc.med, acc.tail].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let correct: Vec<bool> = preds.iter().zip(&labels).map(|(p, y)| p == y).collect();
        let e = ece(&conf[..n], &correct, 15).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
    }
}

#[test]
fn perfect_and_constant_head_predictors() {
    let labels: Vec<usize> = (0..30).map(|i| i % 10).collect();
    let conf = vec![1.0; 30];
    let unc: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let opts = EvalOptions::default();

    let perfect = build_report(
        &EvalInputs {
            decisions: &labels,
            labels: &labels,
            num_classes: 10,
            confidences: &conf,
            argmax_preds: &labels,
            uncertainty: &unc,
        },
        &opts,
    )
    .unwrap();
    for r in [perfect.overall_acc, perfect.head_acc, perfect.med_acc, perfect.tail_acc] {
        assert_eq!(r.value(), Some(1.0));
    }
    assert!(perfect.fhr_at.values().all(|r| r.value() == Some(0.0)));
    assert_eq!(perfect.auroc.value(), None);
    assert_eq!(perfect.ece, 0.0);

    let zeros = vec![0; 30];
    let head = build_report(
        &EvalInputs {
            decisions: &zeros,
            labels: &labels,
            num_classes: 10,
            confidences: &conf,
            argmax_preds: &zeros,
            uncertainty: &unc,
        },
        &opts,
    )
    .unwrap();
    let keys: Vec<&String> = head.fhr_at.keys().collect();
    assert_eq!(keys, ["0.25", "0.5", "0.75"]);
    assert!(head.fhr_at.values().all(|r| r.value() == Some(1.0)));
    assert_eq!(head.fhr_avg.value(), Some(1.0));
    assert_eq!(head.region_sizes, [3, 3, 4]);
}

#[test]
fn undefined_rates_are_surfaced() {
    let r = misprediction_rate(&[0, 1], &[0, 1], &[2], &[0]);
    assert!(matches!(r, Err(Error::UndefinedRate(_))));
    let r = false_head_rate(&[0, 0], &[0, 0], &[2]);
    assert!(matches!(r, Err(Error::UndefinedRate(_))));
    let acc = region_accuracy(&[0], &[0], &region_split(9)).unwrap();
    assert_eq!(acc.tail, None);
}
