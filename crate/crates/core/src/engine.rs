//! Sequential unmasking: inference, trajectory sampling, the stop-weighted
//! loss estimator with its REINFORCE gradient, exact mask distributions for
//! enumerable problems, and training.
//!
//! A trajectory starts from the empty mask and adds one feature per step.
//! At step `t` the model sees only `x ⊙ h^t`; it stops with probability
//! `ζ_stop`, otherwise draws the next feature from `ζ_select`. Step
//! `min(T, d)` always stops.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::TabularPolicy;
use crate::error::{check_dim, Error, Result};
use crate::mask::Mask;
use crate::metrics::auroc;
use crate::neural::{adam_step, encode_parts, Activation, AdamState, BatchOutput, BatchTrace, Params, SuwrModel, Task, Upstream};
use crate::problems::{Dataset, FiniteProblem};

/// Largest dimension for which masks are enumerated exactly.
pub const MAX_EXACT_DIM: usize = 20;

/// One training instance: features, label distribution and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub labels: Vec<(f64, f64)>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct TrainData {
    d: usize,
    task: Task,
    examples: Vec<Example>,
}

impl TrainData {
    pub fn new(task: Task, examples: Vec<Example>) -> Result<Self> {
        let first = examples.first().ok_or_else(|| Error::validation("no training examples"))?;
        let d = first.x.len();
        for (i, e) in examples.iter().enumerate() {
            check_dim(d, e.x.len())?;
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::validation(format!("example {i} has weight {}", e.weight)));
            }
            if e.labels.is_empty() {
                return Err(Error::validation(format!("example {i} has no label")));
            }
            if task == Task::Classification && e.labels.iter().any(|&(y, _)| y != 0.0 && y != 1.0) {
                return Err(Error::validation(format!("example {i}: classification labels must be 0 or 1")));
            }
        }
        Ok(TrainData { d, task, examples })
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let task = if ds.kind().is_classification() {
            Task::Classification
        } else {
            Task::Regression
        };
        let examples = ds
            .rows()
            .iter()
            .map(|(x, y)| Example {
                x: x.values().to_vec(),
                labels: vec![(*y, 1.0)],
                weight: 1.0,
            })
            .collect();
        TrainData::new(task, examples)
    }

    /// Every support point, weighted by its probability.
    pub fn from_problem(problem: &FiniteProblem, task: Task) -> Result<Self> {
        let examples = problem
            .points()
            .iter()
            .map(|p| Example {
                x: p.x.values().to_vec(),
                labels: p.labels.clone(),
                weight: p.prob,
            })
            .collect();
        TrainData::new(task, examples)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The last `fraction` of the examples (at least one) split off.
    pub fn split_tail(&self, fraction: f64) -> Result<(TrainData, TrainData)> {
        let n = self.len();
        let k = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1));
        if n < 2 {
            return Err(Error::validation("need at least two examples to split"));
        }
        let head = TrainData::new(self.task, self.examples[..n - k].to_vec())?;
        let tail = TrainData::new(self.task, self.examples[n - k..].to_vec())?;
        Ok((head, tail))
    }
}

/// Control variate subtracted from the downstream cost in the select-head
/// gradient. Both variants average other, independent trajectories, so the
/// estimator stays unbiased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    None,
    /// Mean over the other trajectories in the batch.
    Batch,
    /// Mean over the other trajectories of the same instance.
    Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Maximum number of selection steps `T`.
    #[serde(rename = "T")]
    pub t_max: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Trajectories sampled per instance.
    pub trajectories: usize,
    pub seed: u64,
    pub task: Task,
    pub hidden: usize,
    pub activation: Activation,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fraction of the data held out for validation; 0 validates on the
    /// training data.
    pub validation_fraction: f64,
    pub baseline: Baseline,
    /// Initial bias of the stop head; negative values favour longer
    /// trajectories early in training.
    #[serde(default)]
    pub stop_bias: f64,
    /// Epochs during which the stop head is held at its initial values.
    #[serde(default)]
    pub stop_warmup: usize,
}

impl TrainConfig {
    /// Toy regression: width 64, `T = 10`, up to 2000 epochs with
    /// patience 1000.
    pub fn toy(lambda: f64) -> Self {
        TrainConfig {
            t_max: 10,
            lambda,
            lr: 3e-3,
            epochs: 2000,
            batch_size: 64,
            trajectories: 4,
            seed: 0,
            task: Task::Regression,
            hidden: 64,
            activation: Activation::Silu,
            patience: 1000,
            validation_fraction: 0.0,
            baseline: Baseline::Batch,
            stop_bias: -1.0,
            stop_warmup: 20,
        }
    }

    /// Synthetic classification: width 100, per-kind `T` and `λ`. Kinds
    /// involving `g_3` get a longer warm-up and a larger step size.
    pub fn synthetic(kind: crate::problems::SynKind) -> Self {
        use crate::problems::SynKind::*;
        let (t_max, lambda) = match kind {
            Syn1 => (4, 0.01),
            Syn2 | Syn3 => (4, 0.0),
            Syn4 | Syn5 => (5, 0.005),
            Syn6 => (5, 0.0),
        };
        let (lr, epochs, stop_bias, stop_warmup) = match kind {
            Syn1 | Syn2 => (1e-3, 40, -1.0, 10),
            Syn4 | Syn5 => (2e-3, 50, -1.0, 10),
            Syn3 | Syn6 => (3e-3, 80, -2.0, 40),
        };
        TrainConfig {
            t_max,
            lambda,
            lr,
            epochs,
            batch_size: 64,
            trajectories: 1,
            seed: 0,
            task: Task::Classification,
            hidden: 100,
            activation: Activation::Silu,
            patience: 15,
            validation_fraction: 0.1,
            baseline: Baseline::Batch,
            stop_bias,
            stop_warmup,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(m.to_string()));
        if self.t_max == 0 {
            return bad("T must be at least 1");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.trajectories == 0 || self.hidden == 0 {
            return bad("epochs, batch size, trajectories and hidden width must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        if self.baseline == Baseline::Instance && self.trajectories < 2 {
            return bad("the leave-one-out baseline needs at least two trajectories");
        }
        Ok(())
    }
}

/// Per-step record of one sampled selection sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `h^0 … h^T'` with `T' = min(T, d)`.
    pub masks: Vec<Mask>,
    /// Feature added at each step.
    pub increments: Vec<usize>,
    /// Probability of each increment under `ζ_select`.
    pub increment_probs: Vec<f64>,
    /// `ζ_stop` at every step, as output by the model.
    pub stop_probs: Vec<f64>,
    pub predictions: Vec<Vec<f64>>,
}

/// `p(t) = ζ_stop^t Π_{j<t} (1 − ζ_stop^j)`, with the last step taking the
/// remaining mass.
pub fn stop_distribution(traj: &Trajectory) -> Vec<f64> {
    let n = traj.stop_probs.len();
    let mut out = Vec::with_capacity(n);
    let mut alive = 1.0;
    for &s in &traj.stop_probs[..n.saturating_sub(1)] {
        out.push(alive * s);
        alive *= 1.0 - s;
    }
    let used: f64 = out.iter().sum();
    out.push((1.0 - used).max(0.0));
    out
}

/// Narrative record of one inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Narrative {
    pub mask: Mask,
    pub step_order: Vec<usize>,
    pub per_step_predictions: Vec<Vec<f64>>,
    pub per_step_stop_probs: Vec<f64>,
}

impl Narrative {
    pub fn prediction(&self) -> &[f64] {
        self.per_step_predictions.last().expect("at least one step")
    }
}

/// Index drawn from `dist` by inverse CDF at `u ∈ [0, 1)`; zero entries are
/// never returned.
fn draw(dist: &[f64], u: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (j, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(j);
            if u < acc {
                return Some(j);
            }
        }
    }
    last
}

pub fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

fn encode_rows(xs: &[&[f64]], masks: &[Mask], d: usize) -> Array2<f64> {
    let mut input = Array2::zeros((xs.len(), 2 * d));
    for (r, (x, h)) in xs.iter().zip(masks).enumerate() {
        encode_parts(x, h, input.row_mut(r).as_slice_mut().expect("standard layout"));
    }
    input
}

/// Runs `infer` for every row; row `i` draws from `row_rng(seed, i)`.
pub fn infer_batch(model: &SuwrModel, xs: &[&[f64]], t_max: usize, seed: u64) -> Result<Vec<Narrative>> {
    let d = model.dim();
    for x in xs {
        check_dim(d, x.len())?;
    }
    let last = t_max.min(d);
    let mut rngs: Vec<ChaCha8Rng> = (0..xs.len()).map(|i| row_rng(seed, i as u64)).collect();
    let mut out: Vec<Narrative> = xs
        .iter()
        .map(|_| Narrative {
            mask: Mask::empty(d),
            step_order: Vec::new(),
            per_step_predictions: Vec::new(),
            per_step_stop_probs: Vec::new(),
        })
        .collect();
    let mut active: Vec<usize> = (0..xs.len()).collect();
    for t in 0..=last {
        if active.is_empty() {
            break;
        }
        let rows: Vec<&[f64]> = active.iter().map(|&i| xs[i]).collect();
        let masks: Vec<Mask> = active.iter().map(|&i| out[i].mask.clone()).collect();
        let (o, _) = model.forward_batch(&encode_rows(&rows, &masks, d));
        let mut still = Vec::new();
        for (r, &i) in active.iter().enumerate() {
            let n = &mut out[i];
            n.per_step_predictions.push(o.prediction.row(r).to_vec());
            n.per_step_stop_probs.push(o.stop_prob[r]);
            if t == last {
                continue;
            }
            let rng = &mut rngs[i];
            if rng.gen::<f64>() < o.stop_prob[r] {
                continue;
            }
            let dist = o.select.row(r);
            let j = draw(dist.as_slice().expect("standard layout"), rng.gen()).expect("an unselected feature remains");
            n.mask.set(j, true);
            n.step_order.push(j);
            still.push(i);
        }
        active = still;
    }
    Ok(out)
}

/// One inference run; each step conditions only on `x ⊙ h^t`.
pub fn infer_narrative(model: &SuwrModel, x: &[f64], t_max: usize, rng: &mut ChaCha8Rng) -> Result<Narrative> {
    let d = model.dim();
    check_dim(d, x.len())?;
    let last = t_max.min(d);
    let mut n = Narrative {
        mask: Mask::empty(d),
        step_order: Vec::new(),
        per_step_predictions: Vec::new(),
        per_step_stop_probs: Vec::new(),
    };
    for t in 0..=last {
        let (o, _) = model.forward_batch(&encode_rows(&[x], std::slice::from_ref(&n.mask), d));
        n.per_step_predictions.push(o.prediction.row(0).to_vec());
        n.per_step_stop_probs.push(o.stop_prob[0]);
        if t == last || rng.gen::<f64>() < o.stop_prob[0] {
            break;
        }
        let j = draw(o.select.row(0).as_slice().expect("standard layout"), rng.gen()).expect("an unselected feature remains");
        n.mask.set(j, true);
        n.step_order.push(j);
    }
    Ok(n)
}

/// `(prediction, mask)` of one inference run.
pub fn infer(model: &SuwrModel, x: &[f64], t_max: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Mask)> {
    let n = infer_narrative(model, x, t_max, rng)?;
    Ok((n.prediction().to_vec(), n.mask))
}

/// Exact `(mask, probability, prediction at that mask)` for every mask the
/// process can stop at.
pub fn exact_outcomes(model: &SuwrModel, x: &[f64], t_max: usize) -> Result<Vec<(Mask, f64, Vec<f64>)>> {
    let d = model.dim();
    check_dim(d, x.len())?;
    if d > MAX_EXACT_DIM {
        return Err(Error::Capacity(format!("exact mask distribution limited to d ≤ {MAX_EXACT_DIM}")));
    }
    let last = t_max.min(d);
    let mut out = Vec::new();
    // reach probability of each mask at the current level, keyed by code
    let mut level: BTreeMap<u64, f64> = BTreeMap::from([(0, 1.0)]);
    for t in 0..=last {
        let codes: Vec<(u64, f64)> = level.iter().map(|(&c, &q)| (c, q)).filter(|&(_, q)| q > 0.0).collect();
        if codes.is_empty() {
            break;
        }
        let masks: Vec<Mask> = codes.iter().map(|&(c, _)| Mask::from_code(d, c)).collect();
        let xs = vec![x; masks.len()];
        let (o, _) = model.forward_batch(&encode_rows(&xs, &masks, d));
        let mut next: BTreeMap<u64, f64> = BTreeMap::new();
        for (r, (&(code, q), h)) in codes.iter().zip(&masks).enumerate() {
            let s = if t == last { 1.0 } else { o.stop_prob[r] };
            if q * s > 0.0 {
                out.push((h.clone(), q * s, o.prediction.row(r).to_vec()));
            }
            if t < last {
                let go = q * (1.0 - s);
                for j in 0..d {
                    let p = o.select[(r, j)];
                    if p > 0.0 && go > 0.0 {
                        *next.entry(code | 1 << j).or_insert(0.0) += go * p;
                    }
                }
            }
        }
        level = next;
    }
    Ok(out)
}

/// The exact policy `ζ(h | x)` of the model on every support point.
pub fn suwr_exact_distribution(model: &SuwrModel, problem: &FiniteProblem, t_max: usize) -> Result<TabularPolicy> {
    let rows = problem
        .points()
        .iter()
        .map(|p| {
            Ok(exact_outcomes(model, p.x.values(), t_max)?
                .into_iter()
                .map(|(h, q, _)| (h, q))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    TabularPolicy::new(rows)
}

/// Expected prediction loss and expected `‖h‖` at the stopping mask,
/// averaged over a finite problem with exact mask distributions.
pub fn exact_performance(model: &SuwrModel, problem: &FiniteProblem, t_max: usize) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut count = 0.0;
    for p in problem.points() {
        for (h, q, pred) in exact_outcomes(model, p.x.values(), t_max)? {
            let (l, _) = label_loss(model.task(), &pred, &pred, &p.labels);
            loss += p.prob * q * l;
            count += p.prob * q * h.count() as f64;
        }
    }
    Ok((loss, count))
}

/// Loss against a label distribution and its gradient with respect to the
/// raw prediction head output.
fn label_loss(task: Task, raw: &[f64], prediction: &[f64], labels: &[(f64, f64)]) -> (f64, Vec<f64>) {
    match task {
        Task::Regression => {
            let yhat = raw[0];
            let l = labels.iter().map(|(y, q)| q * (yhat - y).powi(2)).sum();
            let g = labels.iter().map(|(y, q)| 2.0 * q * (yhat - y)).sum();
            (l, vec![g])
        }
        Task::Classification => {
            let max = raw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + raw.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mut g = prediction.to_vec();
            let mut l = 0.0;
            for &(y, q) in labels {
                let k = y as usize;
                l -= q * (raw[k] - lse);
                g[k] -= q;
            }
            (l, g)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Grad {
    None,
    /// Everything except the stop logit.
    NoStop,
    All,
}

struct Step {
    out: BatchOutput,
    trace: BatchTrace,
    masks: Vec<Mask>,
    chosen: Vec<Option<usize>>,
}

/// Runs every row for `min(T, d) + 1` steps, ignoring stop decisions.
/// `choose(row, t, dist)` picks the feature added at step `t`.
fn rollout(model: &SuwrModel, xs: &[&[f64]], t_max: usize, mut choose: impl FnMut(usize, usize, &[f64]) -> usize) -> Vec<Step> {
    let d = model.dim();
    let last = t_max.min(d);
    let mut masks = vec![Mask::empty(d); xs.len()];
    let mut steps = Vec::with_capacity(last + 1);
    for t in 0..=last {
        let (out, trace) = model.forward_batch(&encode_rows(xs, &masks, d));
        let mut chosen = vec![None; xs.len()];
        if t < last {
            for (r, c) in chosen.iter_mut().enumerate() {
                let j = choose(r, t, out.select.row(r).as_slice().expect("standard layout"));
                *c = Some(j);
            }
        }
        let current = masks.clone();
        for (h, c) in masks.iter_mut().zip(&chosen) {
            if let Some(j) = c {
                h.set(*j, true);
            }
        }
        steps.push(Step {
            out,
            trace,
            masks: current,
            chosen,
        });
    }
    steps
}

/// Weighted totals of a rollout.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RolloutSummary {
    /// `Σ w · (expected loss + λ · expected ‖h‖)`
    pub objective: f64,
    pub loss: f64,
    /// Expected `‖h‖` at the stopping step.
    pub count: f64,
}

/// Stop-weighted objective of every row and the upstream gradients of
/// `Σ_rows w_row · objective_row` (select head via the score function of
/// each step's downstream cost). `groups` enables the leave-one-out
/// baseline over consecutive rows of that size.
fn evaluate(
    model: &SuwrModel,
    steps: &[Step],
    examples: &[&Example],
    weights: &[f64],
    lambda: f64,
    groups: Option<usize>,
    grad: Grad,
) -> (RolloutSummary, Vec<Upstream>) {
    let rows = examples.len();
    let d = model.dim();
    let k = model.task().outputs();
    let last = steps.len() - 1;
    let mut summary = RolloutSummary::default();
    // per row: stop prob, cost, A (alive), G (value)
    let mut s = vec![vec![0.0; rows]; last + 1];
    let mut c = vec![vec![0.0; rows]; last + 1];
    let mut dl = vec![vec![Vec::new(); rows]; last + 1];
    for (t, st) in steps.iter().enumerate() {
        for r in 0..rows {
            s[t][r] = if t == last { 1.0 } else { st.out.stop_prob[r] };
            let raw = st.out.pred_raw.row(r);
            let pred = st.out.prediction.row(r);
            let (l, g) = label_loss(model.task(), raw.as_slice().unwrap(), pred.as_slice().unwrap(), &examples[r].labels);
            c[t][r] = l + lambda * st.masks[r].count() as f64;
            dl[t][r] = g;
        }
    }
    let mut alive = vec![vec![1.0; rows]; last + 2];
    let mut value = vec![vec![0.0; rows]; last + 2];
    for r in 0..rows {
        for t in 0..=last {
            alive[t + 1][r] = alive[t][r] * (1.0 - s[t][r]);
        }
        value[last][r] = c[last][r];
        for t in (0..last).rev() {
            value[t][r] = s[t][r] * c[t][r] + (1.0 - s[t][r]) * value[t + 1][r];
        }
        let w = weights[r];
        summary.objective += w * value[0][r];
        for t in 0..=last {
            let p = alive[t][r] * s[t][r];
            summary.loss += w * p * (c[t][r] - lambda * steps[t].masks[r].count() as f64);
            summary.count += w * p * steps[t].masks[r].count() as f64;
        }
    }
    if grad == Grad::None {
        return (summary, Vec::new());
    }
    let mut ups = Vec::with_capacity(last + 1);
    for (t, st) in steps.iter().enumerate() {
        let mut up = Upstream::zeros(rows, d, k);
        let downstream: Vec<f64> = (0..rows).map(|r| alive[t + 1][r] * value[t + 1][r]).collect();
        for r in 0..rows {
            let w = weights[r];
            let p = alive[t][r] * s[t][r];
            for (o, g) in dl[t][r].iter().enumerate() {
                up.pred_raw[(r, o)] = w * p * g;
            }
            if t < last {
                let sv = s[t][r];
                if grad == Grad::All {
                    up.stop_logit[r] = w * alive[t][r] * (c[t][r] - value[t + 1][r]) * sv * (1.0 - sv);
                }
                let mut coef = downstream[r];
                if let Some(g) = groups.filter(|&g| g > 1) {
                    let start = r / g * g;
                    let others: f64 = (start..start + g).filter(|&q| q != r).map(|q| downstream[q]).sum();
                    coef -= others / (g - 1) as f64;
                }
                let u = st.chosen[r].expect("non-final steps choose a feature");
                for j in 0..d {
                    let pj = st.out.select[(r, j)];
                    if !st.masks[r].get(j) {
                        let onehot = if j == u { 1.0 } else { 0.0 };
                        up.select_logits[(r, j)] = w * coef * (onehot - pj);
                    }
                }
            }
        }
        ups.push(up);
    }
    (summary, ups)
}

fn backprop(model: &SuwrModel, steps: &[Step], ups: &[Upstream]) -> Result<Params> {
    let mut grads = model.params.zeros_like();
    for (st, up) in steps.iter().zip(ups) {
        model.backward_batch(&st.trace, up, &mut grads)?;
    }
    Ok(grads)
}

/// Sampled rollout of `K` trajectories per example; row weights are the
/// example weights normalized over the batch and divided by `K`.
fn sampled(model: &SuwrModel, batch: &[&Example], config: &TrainConfig, rng: &mut ChaCha8Rng, grad: Grad) -> Result<(RolloutSummary, Option<Params>)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    for e in batch {
        check_dim(model.dim(), e.x.len())?;
    }
    let kk = config.trajectories;
    let total: f64 = batch.iter().map(|e| e.weight).sum();
    let mut xs = Vec::with_capacity(batch.len() * kk);
    let mut ex = Vec::with_capacity(batch.len() * kk);
    let mut w = Vec::with_capacity(batch.len() * kk);
    for e in batch {
        for _ in 0..kk {
            xs.push(e.x.as_slice());
            ex.push(*e);
            w.push(e.weight / (total * kk as f64));
        }
    }
    let steps = rollout(model, &xs, config.t_max, |_, _, dist| draw(dist, rng.gen()).expect("an unselected feature remains"));
    let groups = match config.baseline {
        Baseline::None => None,
        Baseline::Batch => Some(xs.len()),
        Baseline::Instance => Some(kk),
    };
    let (summary, ups) = evaluate(model, &steps, &ex, &w, config.lambda, groups, grad);
    if !summary.objective.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite loss".into(),
        });
    }
    let grads = if grad == Grad::None { None } else { Some(backprop(model, &steps, &ups)?) };
    Ok((summary, grads))
}

/// Monte-Carlo estimate of the stop-weighted objective, weighted over the
/// batch.
pub fn loss_estimate(model: &SuwrModel, batch: &[Example], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let refs: Vec<&Example> = batch.iter().collect();
    Ok(sampled(model, &refs, config, rng, Grad::None)?.0.objective)
}

/// The objective estimate and its REINFORCE gradient.
pub fn reinforce_gradients(model: &SuwrModel, batch: &[Example], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<(f64, Params)> {
    let refs: Vec<&Example> = batch.iter().collect();
    let (s, g) = sampled(model, &refs, config, rng, Grad::All)?;
    Ok((s.objective, g.expect("requested")))
}

/// Every ordered selection sequence of length `min(T, d)`.
fn all_paths(d: usize, len: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for p in &paths {
            for j in (0..d).filter(|j| !p.contains(j)) {
                let mut q = p.clone();
                q.push(j);
                next.push(q);
            }
        }
        paths = next;
    }
    paths
}

fn enumerated(model: &SuwrModel, batch: &[Example], config: &TrainConfig, want_grad: bool) -> Result<(RolloutSummary, Option<Params>)> {
    let d = model.dim();
    let len = config.t_max.min(d);
    if d > 8 {
        return Err(Error::Capacity("path enumeration limited to d ≤ 8".into()));
    }
    let paths = all_paths(d, len);
    let total: f64 = batch.iter().map(|e| e.weight).sum();
    let mut xs = Vec::new();
    let mut ex = Vec::new();
    let mut row_paths = Vec::new();
    for e in batch {
        check_dim(d, e.x.len())?;
        for p in &paths {
            xs.push(e.x.as_slice());
            ex.push(e);
            row_paths.push(p);
        }
    }
    let steps = rollout(model, &xs, config.t_max, |r, t, _| row_paths[r][t]);
    let w: Vec<f64> = (0..xs.len())
        .map(|r| {
            let pi: f64 = (0..len).map(|t| steps[t].out.select[(r, row_paths[r][t])]).product();
            ex[r].weight / total * pi
        })
        .collect();
    let grad = if want_grad { Grad::All } else { Grad::None };
    let (summary, ups) = evaluate(model, &steps, &ex, &w, config.lambda, None, grad);
    let grads = if want_grad { Some(backprop(model, &steps, &ups)?) } else { None };
    Ok((summary, grads))
}

/// Expected objective by enumerating every selection sequence.
pub fn exact_expected_loss(model: &SuwrModel, batch: &[Example], config: &TrainConfig) -> Result<f64> {
    Ok(enumerated(model, batch, config, false)?.0.objective)
}

/// Gradient of [`exact_expected_loss`].
pub fn exact_gradients(model: &SuwrModel, batch: &[Example], config: &TrainConfig) -> Result<(f64, Params)> {
    let (s, g) = enumerated(model, batch, config, true)?;
    Ok((s.objective, g.expect("requested")))
}

/// One sampled trajectory that ignores the stop decisions.
pub fn sample_trajectory(model: &SuwrModel, x: &[f64], t_max: usize, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    check_dim(model.dim(), x.len())?;
    let mut probs = Vec::new();
    let steps = rollout(model, &[x], t_max, |_, _, dist| {
        let j = draw(dist, rng.gen()).expect("an unselected feature remains");
        probs.push(dist[j]);
        j
    });
    Ok(Trajectory {
        masks: steps.iter().map(|s| s.masks[0].clone()).collect(),
        increments: steps.iter().filter_map(|s| s.chosen[0]).collect(),
        increment_probs: probs,
        stop_probs: steps.iter().map(|s| s.out.stop_prob[0]).collect(),
        predictions: steps.iter().map(|s| s.out.prediction.row(0).to_vec()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective.
    pub loss: f64,
    /// Mean expected `‖h‖ / d` on the training batches.
    pub sparsity: f64,
    /// Validation MSE (regression) or AUROC (classification).
    pub metric: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch of the returned model.
    pub best_epoch: usize,
    pub best_validation: f64,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,sparsity,metric\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.loss, r.sparsity, r.metric);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

struct Validation {
    objective: f64,
    metric: f64,
}

fn validate(model: &SuwrModel, data: &TrainData, config: &TrainConfig) -> Result<Validation> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let refs: Vec<&Example> = data.examples.iter().collect();
    let mut objective = 0.0;
    let mut loss = 0.0;
    let total: f64 = refs.iter().map(|e| e.weight).sum();
    for chunk in refs.chunks(512) {
        let part: f64 = chunk.iter().map(|e| e.weight).sum();
        let (s, _) = sampled(model, chunk, config, &mut rng, Grad::None)?;
        objective += s.objective * part / total;
        loss += s.loss * part / total;
    }
    let metric = match model.task() {
        Task::Regression => loss,
        Task::Classification => {
            let xs: Vec<&[f64]> = refs.iter().map(|e| e.x.as_slice()).collect();
            let runs = infer_batch(model, &xs, config.t_max, config.seed.wrapping_add(0x5eed))?;
            let scores: Vec<f64> = runs.iter().map(|n| n.prediction()[1]).collect();
            let labels: Vec<f64> = refs.iter().map(|e| e.labels[0].0).collect();
            auroc(&scores, &labels).unwrap_or(f64::NAN)
        }
    };
    Ok(Validation { objective, metric })
}

/// Adam on the REINFORCE estimate; returns the model with the best
/// validation objective.
pub fn train(data: &TrainData, config: &TrainConfig) -> Result<(SuwrModel, History)> {
    train_with(data, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(data: &TrainData, config: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<(SuwrModel, History)> {
    config.validate()?;
    if config.task != data.task() {
        return Err(Error::validation("config task does not match the data"));
    }
    let (train_set, val_set) = if config.validation_fraction > 0.0 {
        data.split_tail(config.validation_fraction)?
    } else {
        (data.clone(), data.clone())
    };
    let mut model = SuwrModel::new(data.dim(), config.hidden, config.task, config.activation, config.seed)?;
    let head = model.params.stop.layers.last_mut().expect("stop head has a layer");
    head.b[0] = config.stop_bias;
    if config.stop_warmup > 0 {
        // constant stop probability until the warm-up ends
        head.w.fill(0.0);
    }
    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut history = History::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut count, mut batches) = (0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set.examples[i]).collect();
            let frozen_stop = epoch <= config.stop_warmup;
            let mode = if frozen_stop { Grad::NoStop } else { Grad::All };
            let (s, g) = sampled(&model, &batch, config, &mut rng, mode).map_err(|e| at_epoch(e, epoch))?;
            let mut g = g.expect("requested");
            if frozen_stop {
                for l in &mut g.stop.layers {
                    l.w.fill(0.0);
                    l.b.fill(0.0);
                }
            }
            adam_step(&mut model.params, &g, &mut adam, config.lr).map_err(|e| at_epoch(e, epoch))?;
            loss += s.objective;
            count += s.count;
            batches += 1;
        }
        let v = validate(&model, &val_set, config).map_err(|e| at_epoch(e, epoch))?;
        let rec = EpochRecord {
            epoch,
            loss: loss / batches as f64,
            sparsity: count / batches as f64 / data.dim() as f64,
            metric: v.metric,
        };
        history.records.push(rec);
        on_epoch(&rec);
        if v.objective < best.0 {
            best = (v.objective, model.clone());
            history.best_epoch = epoch;
            history.best_validation = v.objective;
            since_best = 0;
        } else if epoch > config.stop_warmup {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Training { reason, .. } => Error::Training { epoch, reason },
        other => other,
    }
}

/// Trains only the encoder and prediction head on `x ⊙ selector(x)`: the
/// no-selection and oracle-selection baselines.
pub fn train_fixed_selector(
    data: &TrainData,
    selector: &dyn Fn(&[f64]) -> Mask,
    config: &TrainConfig,
) -> Result<(SuwrModel, History)> {
    config.validate()?;
    let (train_set, val_set) = if config.validation_fraction > 0.0 {
        data.split_tail(config.validation_fraction)?
    } else {
        (data.clone(), data.clone())
    };
    let d = data.dim();
    let mut model = SuwrModel::new(d, config.hidden, config.task, config.activation, config.seed)?;
    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let masks = |set: &TrainData| -> Vec<Mask> { set.examples.iter().map(|e| selector(&e.x)).collect() };
    let (train_masks, val_masks) = (masks(&train_set), masks(&val_set));
    let mut history = History::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut batches) = (0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let ex: Vec<&Example> = chunk.iter().map(|&i| &train_set.examples[i]).collect();
            let hs: Vec<Mask> = chunk.iter().map(|&i| train_masks[i].clone()).collect();
            let (l, g) = fixed_pass(&model, &ex, &hs, true)?;
            adam_step(&mut model.params, &g.expect("requested"), &mut adam, config.lr).map_err(|e| at_epoch(e, epoch))?;
            loss += l;
            batches += 1;
        }
        let ex: Vec<&Example> = val_set.examples.iter().collect();
        let (vl, _) = fixed_pass(&model, &ex, &val_masks, false)?;
        let metric = match config.task {
            Task::Regression => vl,
            Task::Classification => {
                let xs: Vec<&[f64]> = ex.iter().map(|e| e.x.as_slice()).collect();
                let p = predict_with_masks(&model, &xs, &val_masks)?;
                let labels: Vec<f64> = ex.iter().map(|e| e.labels[0].0).collect();
                auroc(&p.iter().map(|r| r[1]).collect::<Vec<_>>(), &labels).unwrap_or(f64::NAN)
            }
        };
        let rec = EpochRecord {
            epoch,
            loss: loss / batches as f64,
            sparsity: train_masks.iter().map(Mask::sparsity_ratio).sum::<f64>() / train_masks.len() as f64,
            metric,
        };
        history.records.push(rec);
        if vl < best.0 {
            best = (vl, model.clone());
            history.best_epoch = epoch;
            history.best_validation = vl;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}

fn fixed_pass(model: &SuwrModel, ex: &[&Example], masks: &[Mask], want_grad: bool) -> Result<(f64, Option<Params>)> {
    let d = model.dim();
    let xs: Vec<&[f64]> = ex.iter().map(|e| e.x.as_slice()).collect();
    let (out, trace) = model.forward_batch(&encode_rows(&xs, masks, d));
    let total: f64 = ex.iter().map(|e| e.weight).sum();
    let mut up = Upstream::zeros(ex.len(), d, model.task().outputs());
    let mut loss = 0.0;
    for (r, e) in ex.iter().enumerate() {
        let raw = out.pred_raw.row(r);
        let pred = out.prediction.row(r);
        let (l, g) = label_loss(model.task(), raw.as_slice().unwrap(), pred.as_slice().unwrap(), &e.labels);
        let w = e.weight / total;
        loss += w * l;
        for (o, gv) in g.iter().enumerate() {
            up.pred_raw[(r, o)] = w * gv;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite loss".into(),
        });
    }
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grads = model.params.zeros_like();
    model.backward_batch(&trace, &up, &mut grads)?;
    Ok((loss, Some(grads)))
}

/// Prediction head outputs at the given masks.
pub fn predict_with_masks(model: &SuwrModel, xs: &[&[f64]], masks: &[Mask]) -> Result<Vec<Vec<f64>>> {
    check_dim(xs.len(), masks.len())?;
    let mut out = Vec::with_capacity(xs.len());
    for (xc, hc) in xs.chunks(1024).zip(masks.chunks(1024)) {
        for x in xc {
            check_dim(model.dim(), x.len())?;
        }
        let (o, _) = model.forward_batch(&encode_rows(xc, hc, model.dim()));
        out.extend(o.prediction.rows().into_iter().map(|r| r.to_vec()));
    }
    Ok(out)
}
