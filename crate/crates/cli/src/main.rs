use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfdlc::metrics::UncertaintyScore;
use rfdlc::EvalOptions;
use rfdlc_cli::commands::GRADCHECK_TOL;
use rfdlc_cli::config::apply_override;
use rfdlc_cli::{
    cmd_decide, cmd_eval, cmd_gradcheck, cmd_make_data, cmd_sweep, cmd_train, CliError, Config, GradcheckOptions,
    MakeData, SweepAxis, UtilitySpec,
};

/// Decision-aware long-tailed classification with particle ensembles.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
#[derive(Parser)]
#[command(name = "rfdlc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate long-tailed synthetic train/test CSVs.
    MakeData(MakeDataArgs),
    /// Train a particle ensemble from a config file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled test CSV.
    Eval(EvalArgs),
    /// Write utility-optimal decisions for a feature CSV.
    Decide(DecideArgs),
    /// Train and evaluate once per value of one config axis.
    Sweep(SweepArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct MakeDataArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    /// Imbalance ratio between the largest and smallest class.
    #[arg(long, default_value_t = 100.0)]
    rho: f64,
    /// Minimum distance between class means.
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set objective.alpha=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for `--set train.epochs=N`.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// `one_hot`, `tail_sensitive:<u>`, `file:<path>` or a utility file path.
    #[arg(long, allow_hyphen_values = true)]
    utility: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75])]
    tail_ratios: Vec<f64>,
    #[arg(long, default_value_t = 15)]
    ece_bins: usize,
    /// Uncertainty score for AUROC: `entropy` or `max_prob`.
    #[arg(long, default_value = "entropy")]
    score: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecideArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Feature CSV; a `label` column is ignored.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    utility: String,
    #[arg(long, default_value = "decisions.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// One of utility_u, weight_form, lambda, num_particles.
    #[arg(long)]
    axis: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    values: Vec<String>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Worker threads (defaults to available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn load_config(args: &ConfigArgs, extra: &[String]) -> Result<Config, CliError> {
    let mut all = args.overrides.clone();
    all.extend_from_slice(extra);
    Config::load(&args.config, &all)
}

fn parse_score(s: &str) -> Result<UncertaintyScore, CliError> {
    match s {
        "entropy" => Ok(UncertaintyScore::Entropy),
        "max_prob" => Ok(UncertaintyScore::MaxProb),
        _ => Err(CliError::config(format!("unknown score `{s}` (entropy or max_prob)"))),
    }
}

fn fmt_rate(r: rfdlc::Rate) -> String {
    r.value().map_or("undefined".into(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::MakeData(a) => {
            let p = MakeData {
                num_classes: a.k,
                dim: a.d,
                per_class: a.per_class,
                test_per_class: a.test_per_class,
                rho: a.rho,
                separation: a.separation,
                seed: a.seed,
            };
            let (train, test) = cmd_make_data(&p, &a.out)?;
            println!("train: {} rows, counts {:?}", train.n, train.counts);
            println!("test: {} rows", test.n);
            println!("wrote {}", a.out.display());
        }
        Command::Train(a) => {
            let mut extra = Vec::new();
            if let Some(s) = a.seed {
                extra.push(format!("train.seed={s}"));
            }
            if let Some(e) = a.epochs {
                extra.push(format!("train.epochs={e}"));
            }
            let cfg = load_config(&a.cfg, &extra)?;
            let out = cmd_train(&cfg, &a.out)?;
            if let Some(last) = out.run.history.records.last() {
                println!("epoch {}: loss {:.6} acc {:.4}", last.epoch, last.loss, last.acc);
            }
            println!("checkpoint: {}", out.checkpoint.display());
            println!("history: {}", out.history.display());
            println!("resolved config: {}", out.resolved.display());
        }
        Command::Eval(a) => {
            let options = EvalOptions {
                tail_ratios: a.tail_ratios,
                ece_bins: a.ece_bins,
                score: parse_score(&a.score)?,
                custom_rates: Vec::new(),
            };
            let utility = UtilitySpec::parse_flag(&a.utility)?;
            let r = cmd_eval(&a.checkpoint, &a.test, &utility, &options, a.out.as_deref())?;
            println!(
                "acc {} (head {}, med {}, tail {})",
                fmt_rate(r.overall_acc),
                fmt_rate(r.head_acc),
                fmt_rate(r.med_acc),
                fmt_rate(r.tail_acc)
            );
            for (k, v) in &r.fhr_at {
                println!("fhr@{k} {}", fmt_rate(*v));
            }
            println!("fhr_avg {}", fmt_rate(r.fhr_avg));
            println!("ece {:.4}", r.ece);
            println!("auroc {}", fmt_rate(r.auroc));
        }
        Command::Decide(a) => {
            let utility = UtilitySpec::parse_flag(&a.utility)?;
            let d = cmd_decide(&a.checkpoint, &a.input, &utility, Some(&a.out))?;
            println!("{} decisions written to {}", d.len(), a.out.display());
        }
        Command::Sweep(a) => {
            let axis = SweepAxis::parse(&a.axis)?;
            let mut table = Config::read_table(&a.cfg.config)?;
            for o in &a.cfg.overrides {
                apply_override(&mut table, o)?;
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(a.jobs.unwrap_or(0))
                .build()
                .map_err(|e| CliError::config(e.to_string()))?;
            let rows = pool.install(|| cmd_sweep(&table, axis, &a.values, Some(&a.out)))?;
            for r in &rows {
                println!(
                    "{}={}: acc {} tail {} fhr_avg {} ece {:.4}",
                    axis.name(),
                    r.value,
                    fmt_rate(r.report.overall_acc),
                    fmt_rate(r.report.tail_acc),
                    fmt_rate(r.report.fhr_avg),
                    r.report.ece
                );
            }
            println!("wrote {}", a.out.display());
        }
        Command::Gradcheck(a) => {
            let cfg = match &a.config {
                Some(path) => Config::load(path, &a.overrides)?,
                None => {
                    let mut table = rfdlc_cli::commands::gradcheck_default_config().to_table()?;
                    for o in &a.overrides {
                        apply_override(&mut table, o)?;
                    }
                    Config::from_table(table)?
                }
            };
            let opts = GradcheckOptions {
                seed: a.seed,
                num_classes: a.k,
                dim: a.dim,
                corrupt: a.corrupt_gradient,
                ..GradcheckOptions::default()
            };
            let r = cmd_gradcheck(&cfg, &opts)?;
            println!(
                "max relative error {:.3e} at {} (analytic {:.9e}, numeric {:.9e}) over {} parameters",
                r.max_rel_error, r.worst, r.analytic, r.numeric, r.checked
            );
            if r.passed(GRADCHECK_TOL) {
                println!("PASS (tolerance {GRADCHECK_TOL:e})");
            } else {
                println!("FAIL (tolerance {GRADCHECK_TOL:e})");
                return Err(CliError::numeric("gradient check failed"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
