use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use suwr_cli::commands;
use suwr_cli::config::*;
use suwr_cli::{CliError, RunConfig};
use suwr_core::audit::Check;
use suwr_core::problems::TRAIN_SEED;
use suwr_core::{DatasetKind, TrainConfig};

#[derive(Parser)]
#[command(name = "suwr", version, about = "Sequential unmasking without reversion: training, fronts and leakage audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (CSV plus JSON sidecar).
    Gen(GenArgs),
    /// Train a model; writes model.json, history.csv and history.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes report.json and report.csv.
    Eval(EvalArgs),
    /// Local and global fronts on the toy problem, with measured models.
    Pareto(ParetoArgs),
    /// Leakage audit of a tabulated policy or a trained toy model.
    Audit(AuditArgs),
    /// Step-by-step narratives of individual predictions.
    Infer(InferArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration, or an artifact embedding one.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: Option<DatasetKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path; the sidecar goes next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct DataArgs {
    /// toy, toyN or syn1..syn6.
    #[arg(long)]
    kind: Option<DatasetKind>,
    /// Dataset CSV instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Seed of generated data.
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model initialization and sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long = "T")]
    t_max: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    selector: Option<Selector>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Seed of the inference draws.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Number of instances to explain.
    #[arg(long, default_value_t = 10)]
    limit: usize,
}

#[derive(Args)]
struct ParetoArgs {
    /// toy or toyN.
    #[arg(long)]
    kind: Option<DatasetKind>,
    /// Sweep values; without any, the exact local hull is computed.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Trained toy checkpoints to plot as measured points.
    #[arg(long)]
    model: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct AuditArgs {
    /// table1 or table3.
    #[arg(long, conflicts_with_all = ["input", "model"])]
    fixture: Option<String>,
    /// JSON file with `problem` and `policy`.
    #[arg(long, conflicts_with = "model")]
    input: Option<PathBuf>,
    /// Trained toy checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    /// Checks to run (default: label-leakage, feature-leakage, corollary).
    #[arg(long = "check", value_delimiter = ',', value_parser = parse_check)]
    checks: Vec<Check>,
    /// Directory for audit.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

fn parse_check(s: &str) -> Result<Check, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown check {s:?}"))
}

fn base(config: &ConfigArg, command: &str) -> Result<Option<RunConfig>, CliError> {
    let Some(path) = &config.config else { return Ok(None) };
    let c = RunConfig::read(path)?;
    if c.command() != command {
        return Err(CliError::Config(format!(
            "{} holds a {} configuration, not {command}",
            path.display(),
            c.command()
        )));
    }
    Ok(Some(c))
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("--{what} is required"))
}

fn data_source(args: &DataArgs, prior: Option<DataSource>, default: fn(DatasetKind) -> DataSource) -> Result<DataSource, CliError> {
    let mut src = match (args.kind, prior) {
        (Some(k), Some(p)) if p.kind == k => p,
        (Some(k), _) => default(k),
        (None, Some(p)) => p,
        (None, None) => return Err(missing("kind")),
    };
    if let Some(p) = &args.data {
        src.path = Some(p.clone());
    }
    if let Some(n) = args.n {
        src.n = n;
    }
    if let Some(s) = args.data_seed {
        src.seed = s;
    }
    Ok(src)
}

fn train_config(args: &TrainArgs) -> Result<TrainRun, CliError> {
    let prior = match base(&args.config, "train")? {
        Some(RunConfig::Train(t)) => Some(t),
        _ => None,
    };
    let data = data_source(&args.data, prior.as_ref().map(|p| p.data.clone()), DataSource::train_default)?;
    let mut train = match (&prior, data.kind) {
        (Some(p), k) if p.data.kind == k => p.train.clone(),
        (_, DatasetKind::Toy { d_pairs }) => TrainConfig {
            t_max: 2 * d_pairs,
            ..TrainConfig::toy(0.5)
        },
        (_, DatasetKind::Syn(k)) => TrainConfig::synthetic(k),
    };
    if let Some(s) = args.seed {
        train.seed = s;
    }
    if let Some(l) = args.lambda {
        train.lambda = l;
    }
    if let Some(t) = args.t_max {
        train.t_max = t;
    }
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    if let Some(lr) = args.lr {
        train.lr = lr;
    }
    train.validate()?;
    let selector = args.selector.or(prior.map(|p| p.selector)).unwrap_or(Selector::Suwr);
    Ok(TrainRun { data, selector, train })
}

fn eval_config(args: &EvalArgs, command: &str) -> Result<(EvalRun, Option<usize>), CliError> {
    let prior = base(&args.config, command)?;
    let (prior_eval, limit) = match prior {
        Some(RunConfig::Eval(e)) => (Some(e), None),
        Some(RunConfig::Infer(i)) => (
            Some(EvalRun {
                model: i.model,
                data: i.data,
                seed: i.seed,
            }),
            Some(i.limit),
        ),
        _ => (None, None),
    };
    let model = args
        .model
        .clone()
        .or(prior_eval.as_ref().map(|p| p.model.clone()))
        .ok_or_else(|| missing("model"))?;
    let kind_from_model = || -> Result<DatasetKind, CliError> { Ok(commands::Checkpoint::load(&model)?.run.data.kind) };
    let mut data_args = DataArgs {
        kind: args.data.kind,
        data: args.data.data.clone(),
        n: args.data.n,
        data_seed: args.data.data_seed,
    };
    if data_args.kind.is_none() && prior_eval.is_none() {
        data_args.kind = Some(kind_from_model()?);
    }
    let data = data_source(&data_args, prior_eval.as_ref().map(|p| p.data.clone()), DataSource::test_default)?;
    let seed = args.seed.or(prior_eval.map(|p| p.seed)).unwrap_or(0);
    Ok((EvalRun { model, data, seed }, limit))
}

fn dispatch(cli: Cli) -> Result<commands::Outcome, CliError> {
    match cli.command {
        Command::Gen(a) => {
            let prior = match base(&a.config, "gen")? {
                Some(RunConfig::Gen(g)) => Some(g),
                _ => None,
            };
            let kind = a.kind.or(prior.as_ref().map(|p| p.kind)).ok_or_else(|| missing("kind"))?;
            let n = a.n.or(prior.as_ref().map(|p| p.n)).unwrap_or(10_000);
            let seed = a.seed.or(prior.as_ref().map(|p| p.seed)).unwrap_or(TRAIN_SEED);
            commands::gen(&GenRun { kind, n, seed }, &a.out)
        }
        Command::Train(a) => {
            let run = train_config(&a)?;
            let every = (run.train.epochs / 20).max(1);
            commands::train(&run, &a.out, |r| {
                if r.epoch % every == 0 || r.epoch == 1 {
                    eprintln!(
                        "epoch {:>5}  loss {:.6}  sparsity {:.4}  metric {:.6}",
                        r.epoch, r.loss, r.sparsity, r.metric
                    );
                }
            })
        }
        Command::Eval(a) => {
            let (run, _) = eval_config(&a, "eval")?;
            commands::eval(&run, &a.out)
        }
        Command::Infer(a) => {
            let (run, limit) = eval_config(&a.eval, "infer")?;
            let limit = if a.limit != 10 { a.limit } else { limit.unwrap_or(a.limit) };
            let run = InferRun {
                model: run.model,
                data: run.data,
                seed: run.seed,
                limit,
            };
            commands::infer(&run, &a.eval.out)
        }
        Command::Pareto(a) => {
            let prior = match base(&a.config, "pareto")? {
                Some(RunConfig::Pareto(p)) => Some(p),
                _ => None,
            };
            let d_pairs = match a.kind {
                Some(DatasetKind::Toy { d_pairs }) => d_pairs,
                Some(k) => return Err(CliError::Config(format!("pareto needs a toy kind, not {k}"))),
                None => prior.as_ref().map(|p| p.d_pairs).unwrap_or(5),
            };
            let lambdas = if a.lambda.is_empty() {
                prior.as_ref().map(|p| p.lambdas.clone()).unwrap_or_default()
            } else {
                a.lambda
            };
            let models = if a.model.is_empty() {
                prior.map(|p| p.models).unwrap_or_default()
            } else {
                a.model
            };
            commands::pareto(
                &ParetoRun {
                    d_pairs,
                    lambdas,
                    models,
                },
                &a.out,
            )
        }
        Command::Audit(a) => {
            let prior = match base(&a.config, "audit")? {
                Some(RunConfig::Audit(p)) => Some(p),
                _ => None,
            };
            let source = match (a.fixture, a.input, a.model) {
                (Some(name), _, _) => AuditSource::Fixture { name },
                (_, Some(path), _) => AuditSource::File { path },
                (_, _, Some(path)) => AuditSource::Model { path },
                _ => prior
                    .as_ref()
                    .map(|p| p.source.clone())
                    .ok_or_else(|| missing("fixture, --input or --model"))?,
            };
            let mut run = prior.unwrap_or_else(|| AuditRun::new(source.clone()));
            run.source = source;
            if let Some(t) = a.tol {
                run.tol = t;
            }
            if !a.checks.is_empty() {
                run.checks = a.checks;
            }
            commands::audit(&run, a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
