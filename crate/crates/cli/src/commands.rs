use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use suwr_core::audit::{run_check, LeakageReport};
use suwr_core::engine::{
    exact_performance, infer_batch, predict_with_masks, suwr_exact_distribution, train_fixed_selector,
    train_with, History, Narrative, TrainData,
};
use suwr_core::metrics::{auroc, mse, selection_metrics, EvalReport};
use suwr_core::pareto::{global_front, fronts_to_csv, local_front, local_hull, FrontKind, FrontPoint, ParetoFront};
use suwr_core::problems::fixtures::{self, Fixture};
use suwr_core::problems::{relevant_features, toy_problem, CONTROL_FEATURE};
use suwr_core::{Dataset, DatasetKind, FiniteProblem, Mask, SuwrModel, TabularPolicy, Task};

use crate::config::*;
use crate::error::{CliError, EXIT_VIOLATION};
use crate::svg::fronts_svg;

/// What a command produced, for the caller to print and turn into an exit
/// status.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit: i32,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    fn ok() -> Self {
        Outcome {
            exit: 0,
            lines: Vec::new(),
            files: Vec::new(),
        }
    }
}

pub fn run(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    match config {
        RunConfig::Gen(c) => gen(c, out),
        RunConfig::Train(c) => train(c, out, |_| {}),
        RunConfig::Eval(c) => eval(c, out),
        RunConfig::Pareto(c) => pareto(c, out),
        RunConfig::Audit(c) => audit(c, Some(out)),
        RunConfig::Infer(c) => infer(c, out),
    }
}

fn write(path: &Path, text: &str, outcome: &mut Outcome) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| suwr_core::Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| suwr_core::Error::Io {
        path: path.into(),
        source: e,
    })?;
    outcome.files.push(path.to_path_buf());
    Ok(())
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("artifacts serialize") + "\n"
}

pub fn gen(c: &GenRun, out: &Path) -> Result<Outcome, CliError> {
    let ds = DataSource::generated(c.kind, c.n, c.seed).load()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| suwr_core::Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    ds.write(out)?;
    let mut o = Outcome::ok();
    o.files = vec![out.to_path_buf(), Dataset::sidecar_path(out)];
    o.lines.push(format!("{} rows of {} (seed {})", ds.len(), ds.kind(), ds.seed()));
    Ok(o)
}

/// `model.json`: the producing configuration and the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: Value,
}

pub struct LoadedModel {
    pub run: TrainRun,
    pub model: SuwrModel,
}

impl Checkpoint {
    pub fn new(run: &TrainRun, model: &SuwrModel) -> Self {
        Checkpoint {
            config: RunConfig::Train(run.clone()),
            model: serde_json::from_str(&model.to_json()).expect("checkpoint is JSON"),
        }
    }

    pub fn load(path: &Path) -> Result<LoadedModel, CliError> {
        let text = fs::read_to_string(path).map_err(|e| suwr_core::Error::Io {
            path: path.into(),
            source: e,
        })?;
        let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| suwr_core::Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        let RunConfig::Train(run) = cp.config else {
            return Err(CliError::Config(format!("{} is not a training checkpoint", path.display())));
        };
        let model = SuwrModel::from_json(&cp.model.to_string())?;
        Ok(LoadedModel { run, model })
    }
}

fn training_data(source: &DataSource) -> Result<TrainData, CliError> {
    match (source.kind, &source.path) {
        (DatasetKind::Toy { d_pairs }, None) => Ok(TrainData::from_problem(&toy_problem(d_pairs), Task::Regression)?),
        _ => Ok(TrainData::from_dataset(&source.load()?)?),
    }
}

fn oracle_mask(kind: DatasetKind, x: &[f64]) -> Mask {
    let DatasetKind::Syn(k) = kind else {
        unreachable!("oracle selection is rejected for toy data")
    };
    let idx: Vec<usize> = relevant_features(k, x).expect("synthetic row").into_iter().collect();
    Mask::from_indices(x.len(), &idx).expect("indices in range")
}

fn fixed_masks(selector: Selector, kind: DatasetKind, xs: &[&[f64]]) -> Vec<Mask> {
    xs.iter()
        .map(|x| match selector {
            Selector::Oracle => oracle_mask(kind, x),
            _ => Mask::full(x.len()),
        })
        .collect()
}

pub fn train(c: &TrainRun, out: &Path, on_epoch: impl FnMut(&suwr_core::engine::EpochRecord)) -> Result<Outcome, CliError> {
    let data = training_data(&c.data)?;
    if c.train.task != data.task() {
        return Err(CliError::Config(format!(
            "{:?} training on {} data",
            c.train.task, c.data.kind
        )));
    }
    if c.selector == Selector::Oracle && !matches!(c.data.kind, DatasetKind::Syn(_)) {
        return Err(CliError::Config("oracle selection needs a synthetic kind".into()));
    }
    let (model, history): (SuwrModel, History) = match c.selector {
        Selector::Suwr => train_with(&data, &c.train, on_epoch)?,
        s => {
            let kind = c.data.kind;
            let select = move |x: &[f64]| fixed_masks(s, kind, &[x]).remove(0);
            train_fixed_selector(&data, &select, &c.train)?
        }
    };
    let mut o = Outcome::ok();
    write(&out.join("model.json"), &pretty(&Checkpoint::new(c, &model)), &mut o)?;
    write(&out.join("history.csv"), &history.to_csv(), &mut o)?;
    let meta = json!({
        "config": RunConfig::Train(c.clone()),
        "best_epoch": history.best_epoch,
        "best_validation": history.best_validation,
        "epochs_run": history.records.len(),
    });
    write(&out.join("history.json"), &pretty(&meta), &mut o)?;
    o.lines.push(format!(
        "trained {} epochs, best epoch {} (validation objective {:.6})",
        history.records.len(),
        history.best_epoch,
        history.best_validation
    ));
    Ok(o)
}

/// Evaluates a checkpoint. Toy models are scored exactly over the full
/// support; synthetic ones by sampled inference on the data source.
pub fn evaluate(c: &EvalRun) -> Result<EvalReport, CliError> {
    let loaded = Checkpoint::load(&c.model)?;
    let t_max = loaded.run.train.t_max;
    let label = format!("{}/{}", c.data.kind, serde_json::to_value(loaded.run.selector).unwrap().as_str().unwrap());
    let provenance = serde_json::to_value(RunConfig::Eval(c.clone())).expect("config serializes");
    if loaded.model.dim() != c.data.kind.dim() {
        return Err(suwr_core::Error::Dimension {
            expected: loaded.model.dim(),
            actual: c.data.kind.dim(),
        }
        .into());
    }
    if let (DatasetKind::Toy { d_pairs }, None, Selector::Suwr) = (c.data.kind, &c.data.path, loaded.run.selector) {
        let problem = toy_problem(d_pairs);
        let (loss, count) = exact_performance(&loaded.model, &problem, t_max)?;
        let d = problem.dim() as f64;
        return Ok(EvalReport {
            kind: label,
            n: problem.len(),
            mse: Some(loss),
            auroc: None,
            tpr: None,
            fdr: None,
            cfsr: None,
            sparsity_ratio: count / d,
            sparsity_count: count,
            averaging: "exact".into(),
            config: provenance,
        });
    }
    let ds = c.data.load()?;
    let xs: Vec<&[f64]> = ds.rows().iter().map(|(x, _)| x.values()).collect();
    let ys: Vec<f64> = ds.rows().iter().map(|r| r.1).collect();
    let (masks, preds) = match loaded.run.selector {
        Selector::Suwr => {
            let runs = infer_batch(&loaded.model, &xs, t_max, c.seed)?;
            let preds = runs.iter().map(|n| n.prediction().to_vec()).collect();
            (runs.into_iter().map(|n| n.mask).collect::<Vec<_>>(), preds)
        }
        s => {
            let masks = fixed_masks(s, ds.kind(), &xs);
            let preds = predict_with_masks(&loaded.model, &xs, &masks)?;
            (masks, preds)
        }
    };
    let mut report = EvalReport::new(label, &masks)?;
    report.config = provenance;
    match ds.kind() {
        DatasetKind::Toy { .. } => {
            let p: Vec<f64> = preds.iter().map(|p| p[0]).collect();
            report.mse = Some(mse(&p, &ys)?);
        }
        DatasetKind::Syn(k) => {
            let scores: Vec<f64> = preds.iter().map(|p| p[1]).collect();
            report.auroc = Some(auroc(&scores, &ys)?);
            let truth = xs.iter().map(|x| relevant_features(k, x)).collect::<Result<Vec<_>, _>>()?;
            let control = k.has_control_flow().then_some(CONTROL_FEATURE);
            report = report.with_selection(selection_metrics(&masks, &truth, control)?);
        }
    }
    Ok(report)
}

pub fn eval(c: &EvalRun, out: &Path) -> Result<Outcome, CliError> {
    let report = evaluate(c)?;
    let mut o = Outcome::ok();
    write(&out.join("report.json"), &pretty(&report), &mut o)?;
    write(&out.join("report.csv"), &report.to_csv(), &mut o)?;
    let mut line = format!("{} n={}", report.kind, report.n);
    for (name, v) in [
        ("auroc", report.auroc),
        ("tpr", report.tpr),
        ("fdr", report.fdr),
        ("cfsr", report.cfsr),
        ("mse", report.mse),
    ] {
        if let Some(v) = v {
            line += &format!(" {name}={v:.4}");
        }
    }
    line += &format!(" sparsity={:.4} ({:.3} features)", report.sparsity_ratio, report.sparsity_count);
    o.lines.push(line);
    Ok(o)
}

#[derive(Debug, Clone, Serialize)]
struct Explained {
    index: usize,
    x: Vec<f64>,
    #[serde(flatten)]
    narrative: Narrative,
}

pub fn infer(c: &InferRun, out: &Path) -> Result<Outcome, CliError> {
    let loaded = Checkpoint::load(&c.model)?;
    let ds = c.data.load()?;
    let xs: Vec<&[f64]> = ds.rows().iter().take(c.limit).map(|(x, _)| x.values()).collect();
    let narratives = match loaded.run.selector {
        Selector::Suwr => infer_batch(&loaded.model, &xs, loaded.run.train.t_max, c.seed)?,
        s => {
            let masks = fixed_masks(s, ds.kind(), &xs);
            let preds = predict_with_masks(&loaded.model, &xs, &masks)?;
            masks
                .into_iter()
                .zip(preds)
                .map(|(m, p)| Narrative {
                    step_order: m.selected().collect(),
                    mask: m,
                    per_step_predictions: vec![p],
                    per_step_stop_probs: vec![1.0],
                })
                .collect()
        }
    };
    let instances: Vec<Explained> = narratives
        .into_iter()
        .enumerate()
        .map(|(i, n)| Explained {
            index: i,
            x: xs[i].to_vec(),
            narrative: n,
        })
        .collect();
    let mut o = Outcome::ok();
    let doc = json!({ "config": RunConfig::Infer(c.clone()), "instances": instances });
    write(&out.join("narratives.json"), &pretty(&doc), &mut o)?;
    o.lines.push(format!("explained {} instances", instances.len()));
    Ok(o)
}

/// Exact (sparsity, loss) of a trained toy model.
pub fn measured_point(path: &Path, problem: &FiniteProblem) -> Result<FrontPoint, CliError> {
    let loaded = Checkpoint::load(path)?;
    if loaded.model.dim() != problem.dim() || loaded.run.selector != Selector::Suwr {
        return Err(CliError::Config(format!(
            "{} is not a sequential model for this toy problem",
            path.display()
        )));
    }
    let (loss, count) = exact_performance(&loaded.model, problem, loaded.run.train.t_max)?;
    Ok(FrontPoint {
        lambda: Some(loaded.run.train.lambda),
        sparsity: count / problem.dim() as f64,
        loss,
    })
}

pub fn pareto(c: &ParetoRun, out: &Path) -> Result<Outcome, CliError> {
    if c.d_pairs == 0 {
        return Err(CliError::Config("toy size must be positive".into()));
    }
    let problem = toy_problem(c.d_pairs);
    let local = if c.lambdas.is_empty() {
        local_hull(&problem)?
    } else {
        local_front(&problem, &c.lambdas)?
    };
    let global = global_front(&problem)?.pruned();
    let measured = ParetoFront::new(
        FrontKind::Measured,
        c.models.iter().map(|m| measured_point(m, &problem)).collect::<Result<_, _>>()?,
    );
    let mut o = Outcome::ok();
    write(&out.join("local.csv"), &fronts_to_csv(&[&local]), &mut o)?;
    write(&out.join("global.csv"), &fronts_to_csv(&[&global]), &mut o)?;
    let mut plotted = vec![&local, &global];
    if !measured.points.is_empty() {
        write(&out.join("measured.csv"), &fronts_to_csv(&[&measured]), &mut o)?;
        plotted.push(&measured);
        for p in &measured.points {
            let gap = local.loss_at(p.sparsity).map(|f| p.loss - f);
            o.lines.push(format!(
                "measured λ={} sparsity {:.4} loss {:.4} (above local front by {})",
                p.lambda.unwrap_or(f64::NAN),
                p.sparsity,
                p.loss,
                gap.map(|g| format!("{g:.4}")).unwrap_or_else(|| "n/a".into())
            ));
        }
    }
    let doc = json!({ "config": RunConfig::Pareto(c.clone()), "fronts": plotted });
    write(&out.join("pareto.json"), &pretty(&doc), &mut o)?;
    write(&out.join("fronts.svg"), &fronts_svg(&plotted), &mut o)?;
    o.lines.push(format!(
        "local front: {} points, global front: {} points",
        local.points.len(),
        global.points.len()
    ));
    Ok(o)
}

fn audit_inputs(source: &AuditSource) -> Result<(FiniteProblem, TabularPolicy), CliError> {
    match source {
        AuditSource::Fixture { name } => match name.as_str() {
            "table1" => Ok(fixtures::table1()),
            "table3" => Ok(fixtures::table3()),
            other => Err(CliError::Config(format!("unknown fixture {other:?} (table1, table3)"))),
        },
        AuditSource::File { path } => {
            let text = fs::read_to_string(path).map_err(|e| suwr_core::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let f = Fixture::from_json(&text).map_err(|e| suwr_core::Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Ok((f.problem, f.policy))
        }
        AuditSource::Model { path } => {
            let loaded = Checkpoint::load(path)?;
            let DatasetKind::Toy { d_pairs } = loaded.run.data.kind else {
                return Err(CliError::Config("model audits need an enumerable (toy) problem".into()));
            };
            let problem = toy_problem(d_pairs);
            let policy = suwr_exact_distribution(&loaded.model, &problem, loaded.run.train.t_max)?;
            Ok((problem, policy))
        }
    }
}

/// Runs the requested checks; exit status 5 unless all are clean.
pub fn audit(c: &AuditRun, out: Option<&Path>) -> Result<Outcome, CliError> {
    if !(c.tol >= 0.0) || !c.tol.is_finite() {
        return Err(CliError::Config("tolerance must be finite and non-negative".into()));
    }
    if c.checks.is_empty() {
        return Err(CliError::Config("no checks requested".into()));
    }
    let (problem, policy) = audit_inputs(&c.source)?;
    let reports: Vec<LeakageReport> = c
        .checks
        .iter()
        .map(|&k| run_check(k, &problem, &policy, c.tol))
        .collect::<Result<_, _>>()?;
    let mut o = Outcome::ok();
    for r in &reports {
        o.lines.push(format!(
            "{}: {} ({} violations, max discrepancy {:.3e})",
            r.check,
            if r.is_clean() { "clean" } else { "violated" },
            r.violations,
            r.max_discrepancy
        ));
    }
    if reports.iter().any(|r| !r.is_clean()) {
        o.exit = EXIT_VIOLATION;
    }
    if let Some(dir) = out {
        let doc = json!({ "config": RunConfig::Audit(c.clone()), "reports": reports });
        write(&dir.join("audit.json"), &pretty(&doc), &mut o)?;
    }
    Ok(o)
}
