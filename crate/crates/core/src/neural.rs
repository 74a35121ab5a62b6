//! Small feed-forward networks with hand-written backpropagation.
//!
//! [`SuwrModel`] is one shared encoder over `[x ⊙ h ; h]` feeding three
//! single-layer heads: stop (logistic), select (softmax over unselected
//! coordinates) and predict.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mask::{Mask, MaskedInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `z · σ(z)`
    Silu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Affine layer `z = x W + b` with `W` stored as `n_in × n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }

    /// Weights `N(0, 1/n_in)`, zero bias.
    fn init(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / n_in as f64).sqrt()).expect("positive std");
        Dense {
            w: Array2::from_shape_simple_fn((n_in, n_out), || normal.sample(rng)),
            b: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    /// Whether the activation is also applied to the last layer.
    pub activate_output: bool,
}

/// Values retained by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl MlpParams {
    /// `widths = [n_in, h_1, …, n_out]`.
    pub fn new(widths: &[usize], activation: Activation, activate_output: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        MlpParams {
            layers: widths.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect(),
            activation,
            activate_output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self.layers.iter().map(|l| Dense::zeros(l.n_in(), l.n_out())).collect(),
            ..*self
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].n_in()];
        w.extend(self.layers.iter().map(Dense::n_out));
        w
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.activate_output
    }

    pub fn forward(&self, x: Array2<f64>) -> (Array2<f64>, MlpTrace) {
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            trace.inputs.push(h);
            h = if self.activated(l) {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            } else {
                z.clone()
            };
            trace.pre.push(z);
        }
        (h, trace)
    }

    /// Adds parameter gradients into `grads` and returns the gradient with
    /// respect to the input.
    pub fn backward(&self, trace: &MlpTrace, grad_out: Array2<f64>, grads: &mut MlpParams) -> Array2<f64> {
        let mut g = grad_out;
        for l in (0..self.layers.len()).rev() {
            if self.activated(l) {
                let act = self.activation;
                g.zip_mut_with(&trace.pre[l], |gv, &z| *gv *= act.derivative(z));
            }
            let gl = &mut grads.layers[l];
            gl.w += &trace.inputs[l].t().dot(&g);
            gl.b += &g.sum_axis(Axis(0));
            g = g.dot(&self.layers[l].w.t());
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Scalar output, squared error.
    Regression,
    /// Two-class softmax output, cross-entropy.
    Classification,
}

impl Task {
    pub fn outputs(self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification => 2,
        }
    }
}

/// All trainable parameters; also used for gradients of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub enc: MlpParams,
    pub stop: MlpParams,
    pub select: MlpParams,
    pub pred: MlpParams,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Params {
            enc: self.enc.zeros_like(),
            stop: self.stop.zeros_like(),
            select: self.select.zeros_like(),
            pred: self.pred.zeros_like(),
        }
    }

    fn mlps(&self) -> [&MlpParams; 4] {
        [&self.enc, &self.stop, &self.select, &self.pred]
    }

    /// Every weight and bias array as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for m in self.mlps() {
            for l in &m.layers {
                out.push(l.w.as_slice().expect("standard layout"));
                out.push(l.b.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for m in [&mut self.enc, &mut self.stop, &mut self.select, &mut self.pred] {
            for l in &mut m.layers {
                out.push(l.w.as_slice_mut().expect("standard layout"));
                out.push(l.b.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        check_dim(self.len(), values.len())?;
        let mut k = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&values[k..k + s.len()]);
            k += s.len();
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Outputs of every head for a batch of encoded inputs.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub stop_logit: Array1<f64>,
    pub stop_prob: Array1<f64>,
    pub select_logits: Array2<f64>,
    /// Rows sum to 1 over unselected coordinates; all zero when every
    /// coordinate is selected.
    pub select: Array2<f64>,
    pub pred_raw: Array2<f64>,
    /// Regression: the raw value. Classification: class probabilities.
    pub prediction: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchTrace {
    enc: MlpTrace,
    stop: MlpTrace,
    select: MlpTrace,
    pred: MlpTrace,
}

/// Gradients of a scalar objective with respect to the raw head outputs.
#[derive(Debug, Clone)]
pub struct Upstream {
    pub stop_logit: Array1<f64>,
    pub select_logits: Array2<f64>,
    pub pred_raw: Array2<f64>,
}

impl Upstream {
    pub fn zeros(rows: usize, d: usize, outputs: usize) -> Self {
        Upstream {
            stop_logit: Array1::zeros(rows),
            select_logits: Array2::zeros((rows, d)),
            pred_raw: Array2::zeros((rows, outputs)),
        }
    }
}

/// One step's head outputs for a single instance.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub stop_prob: f64,
    pub select_dist: Vec<f64>,
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuwrModel {
    d: usize,
    hidden: usize,
    task: Task,
    seed: u64,
    pub params: Params,
}

/// `[x ⊙ h ; h]` with absent values written as 0.
pub fn encode_masked(m: &MaskedInstance) -> Vec<f64> {
    let mut out = vec![0.0; 2 * m.len()];
    for (j, v) in m.values().iter().enumerate() {
        if let Some(v) = v {
            out[j] = *v;
            out[m.len() + j] = 1.0;
        }
    }
    out
}

/// [`encode_masked`] of `x ⊙ h`, written into `out` (length `2d`).
pub fn encode_parts(x: &[f64], h: &Mask, out: &mut [f64]) {
    let d = x.len();
    for j in 0..d {
        let on = h.get(j);
        out[j] = if on { x[j] } else { 0.0 };
        out[d + j] = if on { 1.0 } else { 0.0 };
    }
}

impl SuwrModel {
    /// A three-layer encoder of width `hidden` and single-layer heads.
    pub fn new(d: usize, hidden: usize, task: Task, activation: Activation, seed: u64) -> Result<Self> {
        if d == 0 || hidden == 0 {
            return Err(Error::validation("dimension and hidden width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params {
            enc: MlpParams::new(&[2 * d, hidden, hidden, hidden], activation, true, &mut rng),
            stop: MlpParams::new(&[hidden, 1], activation, false, &mut rng),
            select: MlpParams::new(&[hidden, d], activation, false, &mut rng),
            pred: MlpParams::new(&[hidden, task.outputs()], activation, false, &mut rng),
        };
        Ok(SuwrModel {
            d,
            hidden,
            task,
            seed,
            params,
        })
    }

    /// Custom layer widths for the encoder (`[2d, …, hidden]`).
    pub fn with_encoder(d: usize, encoder: &[usize], task: Task, activation: Activation, seed: u64) -> Result<Self> {
        if encoder.len() < 2 || encoder[0] != 2 * d || encoder.contains(&0) {
            return Err(Error::validation(format!("encoder widths {encoder:?} do not start at 2d = {}", 2 * d)));
        }
        let hidden = *encoder.last().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params {
            enc: MlpParams::new(encoder, activation, true, &mut rng),
            stop: MlpParams::new(&[hidden, 1], activation, false, &mut rng),
            select: MlpParams::new(&[hidden, d], activation, false, &mut rng),
            pred: MlpParams::new(&[hidden, task.outputs()], activation, false, &mut rng),
        };
        Ok(SuwrModel {
            d,
            hidden,
            task,
            seed,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.params.enc.activation
    }

    /// Rows of `input` are encodings from [`encode_masked`]; the mask is
    /// read back from the indicator half.
    pub fn forward_batch(&self, input: &Array2<f64>) -> (BatchOutput, BatchTrace) {
        let d = self.d;
        let rows = input.nrows();
        let (enc, enc_t) = self.params.enc.forward(input.clone());
        let (stop, stop_t) = self.params.stop.forward(enc.clone());
        let (select_logits, select_t) = self.params.select.forward(enc.clone());
        let mut select = select_logits.clone();
        let (pred_raw, pred_t) = self.params.pred.forward(enc);

        let stop_logit = stop.column(0).to_owned();
        let stop_prob = stop_logit.mapv(sigmoid);
        for r in 0..rows {
            let mut row = select.row_mut(r);
            let mut max = f64::NEG_INFINITY;
            for j in 0..d {
                if input[(r, d + j)] == 0.0 {
                    max = max.max(row[j]);
                }
            }
            let mut total = 0.0;
            for j in 0..d {
                if input[(r, d + j)] == 0.0 {
                    row[j] = (row[j] - max).exp();
                    total += row[j];
                } else {
                    row[j] = 0.0;
                }
            }
            if total > 0.0 {
                row.mapv_inplace(|v| v / total);
            }
        }
        let prediction = match self.task {
            Task::Regression => pred_raw.clone(),
            Task::Classification => {
                let mut p = pred_raw.clone();
                for mut row in p.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - max).exp());
                    let total = row.sum();
                    row.mapv_inplace(|v| v / total);
                }
                p
            }
        };
        (
            BatchOutput {
                stop_logit,
                stop_prob,
                select_logits,
                select,
                pred_raw,
                prediction,
            },
            BatchTrace {
                enc: enc_t,
                stop: stop_t,
                select: select_t,
                pred: pred_t,
            },
        )
    }

    /// Adds the parameter gradients of `Σ upstream · raw outputs` into
    /// `grads`.
    pub fn backward_batch(&self, trace: &BatchTrace, up: &Upstream, grads: &mut Params) -> Result<()> {
        let rows = trace.enc.inputs[0].nrows();
        check_dim(rows, up.stop_logit.len())?;
        check_dim(rows * self.d, up.select_logits.len())?;
        check_dim(rows * self.task.outputs(), up.pred_raw.len())?;
        let stop_up = up.stop_logit.clone().insert_axis(Axis(1));
        let mut g = self.params.stop.backward(&trace.stop, stop_up, &mut grads.stop);
        g += &self
            .params
            .select
            .backward(&trace.select, up.select_logits.clone(), &mut grads.select);
        g += &self.params.pred.backward(&trace.pred, up.pred_raw.clone(), &mut grads.pred);
        self.params.enc.backward(&trace.enc, g, &mut grads.enc);
        Ok(())
    }

    /// Head outputs for one masked instance. The step index is not an input
    /// of the network; the mask carries the step.
    pub fn forward(&self, m: &MaskedInstance, _t: usize) -> Result<StepOutput> {
        check_dim(self.d, m.len())?;
        let input = Array2::from_shape_vec((1, 2 * self.d), encode_masked(m)).expect("shape");
        let (out, _) = self.forward_batch(&input);
        Ok(StepOutput {
            stop_prob: out.stop_prob[0],
            select_dist: out.select.row(0).to_vec(),
            prediction: out.prediction.row(0).to_vec(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CheckpointRepr::from(self)).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: CheckpointRepr =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("checkpoint: {e}")))?;
        repr.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    activate_output: bool,
    layers: Vec<LayerRepr>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRepr {
    d: usize,
    hidden: usize,
    task: Task,
    activation: Activation,
    seed: u64,
    enc: MlpRepr,
    stop: MlpRepr,
    select: MlpRepr,
    pred: MlpRepr,
}

impl From<&MlpParams> for MlpRepr {
    fn from(m: &MlpParams) -> Self {
        MlpRepr {
            activate_output: m.activate_output,
            layers: m
                .layers
                .iter()
                .map(|l| LayerRepr {
                    shape: [l.n_in(), l.n_out()],
                    weights: l.w.iter().copied().collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        }
    }
}

impl MlpRepr {
    fn into_params(self, activation: Activation) -> Result<MlpParams> {
        let mut layers = Vec::new();
        for l in self.layers {
            let [n_in, n_out] = l.shape;
            check_dim(n_in * n_out, l.weights.len())?;
            check_dim(n_out, l.bias.len())?;
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Numeric("checkpoint holds non-finite parameters".into()));
            }
            layers.push(Dense {
                w: Array2::from_shape_vec((n_in, n_out), l.weights).expect("checked shape"),
                b: Array1::from(l.bias),
            });
        }
        if layers.is_empty() {
            return Err(Error::validation("checkpoint network has no layers"));
        }
        for w in layers.windows(2) {
            check_dim(w[0].n_out(), w[1].n_in())?;
        }
        Ok(MlpParams {
            layers,
            activation,
            activate_output: self.activate_output,
        })
    }
}

impl From<&SuwrModel> for CheckpointRepr {
    fn from(m: &SuwrModel) -> Self {
        CheckpointRepr {
            d: m.d,
            hidden: m.hidden,
            task: m.task,
            activation: m.activation(),
            seed: m.seed,
            enc: (&m.params.enc).into(),
            stop: (&m.params.stop).into(),
            select: (&m.params.select).into(),
            pred: (&m.params.pred).into(),
        }
    }
}

impl CheckpointRepr {
    fn into_model(self) -> Result<SuwrModel> {
        let a = self.activation;
        let params = Params {
            enc: self.enc.into_params(a)?,
            stop: self.stop.into_params(a)?,
            select: self.select.into_params(a)?,
            pred: self.pred.into_params(a)?,
        };
        let h = self.hidden;
        let shapes = [
            (params.enc.widths(), 2 * self.d, h),
            (params.stop.widths(), h, 1),
            (params.select.widths(), h, self.d),
            (params.pred.widths(), h, self.task.outputs()),
        ];
        for (w, first, last) in shapes {
            if w[0] != first || *w.last().unwrap() != last {
                return Err(Error::validation(format!("checkpoint layer widths {w:?} do not fit d = {}, hidden = {h}", self.d)));
            }
        }
        Ok(SuwrModel {
            d: self.d,
            hidden: h,
            task: self.task,
            seed: self.seed,
            params,
        })
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let n = params.len();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState, lr: f64) -> Result<()> {
    check_dim(params.len(), grads.len())?;
    check_dim(params.len(), state.m.len())?;
    if !grads.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite gradient".into(),
        });
    }
    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    let mut k = 0;
    for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
        for (pv, &gv) in p.iter_mut().zip(g) {
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = state.beta1 * *m + (1.0 - state.beta1) * gv;
            *v = state.beta2 * *v + (1.0 - state.beta2) * gv * gv;
            *pv -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
            k += 1;
        }
    }
    Ok(())
}
