use rfdlc::{Error, UtilityMatrix, WeightForm};
use rfdlc_cli::config::apply_override;
use rfdlc_cli::{CliError, Config, Failure, SweepAxis, UtilitySpec};

const BASE: &str = r#"
[data]
train = "t.csv"

[objective]
utility = { kind = "penalized", penalties = [{ true_class = 2, decision = 0, value = -0.5 }] }
weight_form = "effective_number"

[train]
epochs = 10
"#;

fn table(s: &str) -> toml::Table {
    s.parse().unwrap()
}

#[test]
fn defaults_are_materialized() {
    let cfg = Config::from_table(table(BASE)).unwrap();
    assert_eq!(cfg.arch.hidden, vec![32]);
    assert_eq!(cfg.arch.num_particles, 3);
    assert_eq!(cfg.weight_form().unwrap(), WeightForm::EffectiveNumber { beta: 0.9995 });
    let r = cfg.resolved(3);
    assert_eq!(r.objective.beta, Some(0.9995));
    assert_eq!(r.train.milestones, Some(vec![6, 8]));
    assert_eq!(r.data.num_classes, Some(3));

    let back = Config::from_table(r.to_table().unwrap()).unwrap();
    assert_eq!(back, r);
    let tc = back.train_config(UtilityMatrix::one_hot(3).unwrap());
    assert_eq!(tc.milestones, vec![6, 8]);
    assert_eq!(tc.objective.tau, 40.0);
}

#[test]
fn overrides_parse_values() {
    let mut t = table(BASE);
    apply_override(&mut t, "objective.alpha=0.3").unwrap();
    apply_override(&mut t, "arch.hidden=[4, 4]").unwrap();
    apply_override(&mut t, "objective.weight_form=sqrt").unwrap();
    apply_override(&mut t, "eval.utility={kind=\"one_hot\"}").unwrap();
    let cfg = Config::from_table(t).unwrap();
    assert_eq!(cfg.objective.alpha, 0.3);
    assert_eq!(cfg.arch.hidden, vec![4, 4]);
    assert_eq!(cfg.weight_form().unwrap(), WeightForm::Sqrt);
    assert_eq!(cfg.decision_utility(), &UtilitySpec::OneHot);

    let mut t = table(BASE);
    assert!(apply_override(&mut t, "no-equals").is_err());
    assert!(apply_override(&mut t, "train.epochs.x=1").is_err());
}

#[test]
fn sweep_axes_write_the_right_keys() {
    let mut t = table(BASE);
    SweepAxis::UtilityU.apply(&mut t, "-0.25").unwrap();
    SweepAxis::NumParticles.apply(&mut t, "5").unwrap();
    SweepAxis::Lambda.apply(&mut t, "5e-4").unwrap();
    let cfg = Config::from_table(t).unwrap();
    assert_eq!(cfg.objective.utility, UtilitySpec::TailSensitive { u: -0.25 });
    assert_eq!(cfg.arch.num_particles, 5);
    assert_eq!(cfg.objective.lambda, 5e-4);
    assert!(SweepAxis::Lambda.apply(&mut table(BASE), "lots").is_err());
    assert!(SweepAxis::parse("depth").is_err());
}

#[test]
fn utility_flags() {
    assert_eq!(UtilitySpec::parse_flag("one_hot").unwrap(), UtilitySpec::OneHot);
    assert_eq!(
        UtilitySpec::parse_flag("tail_sensitive:-0.75").unwrap(),
        UtilitySpec::TailSensitive { u: -0.75 }
    );
    assert!(UtilitySpec::parse_flag("tail_sensitive:x").is_err());
    assert!(UtilitySpec::parse_flag("bogus").is_err());
    let u = UtilitySpec::TailSensitive { u: -1.0 }.build(3).unwrap();
    assert_eq!(u.get(2, 0), -1.0);
    assert!(UtilitySpec::Raw { values: vec![1.0; 3] }.build(2).is_err());
}

#[test]
fn exit_codes() {
    let code = |e: Error| CliError::from(e).exit_code();
    assert_eq!(code(Error::Config("x".into())), 2);
    assert_eq!(code(Error::InvalidPenalty("x".into())), 2);
    assert_eq!(code(Error::Data("x".into())), 3);
    assert_eq!(code(Error::DimensionMismatch("x".into())), 3);
    assert_eq!(code(Error::NumericOverflow), 4);
    assert_eq!(code(Error::Diverged { epoch: 0, batch: 0 }), 4);
    assert_eq!(Failure::Numeric.exit_code(), 4);
}
