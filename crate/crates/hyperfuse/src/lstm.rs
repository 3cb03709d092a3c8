//! From-scratch LSTM cell with backpropagation through time.
//!
//! One cell with forget/input/candidate/output gates and a linear
//! readout. The forward pass follows the standard gate equations
//!
//! ```text
//! f = sigmoid(b_f + U_f x + W_f h_prev)
//! i = sigmoid(b_i + U_i x + W_i h_prev)
//! chat = tanh(b_c + U_c x + W_c h_prev)
//! c = f * c_prev + i * chat
//! o = sigmoid(b_o + U_o x + W_o h_prev)
//! h = tanh(c) * o
//! y = V h + b_v
//! ```
//!
//! All math is 64-bit so the finite-difference gradient check can be
//! held to a tight tolerance.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("cache does not match parameters: {0}")]
    CacheMismatch(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All trainable parameters. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub u_f: Vec<f64>,
    pub w_f: Vec<f64>,
    pub b_f: Vec<f64>,
    pub u_i: Vec<f64>,
    pub w_i: Vec<f64>,
    pub b_i: Vec<f64>,
    pub u_c: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: Vec<f64>,
    pub u_o: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_o: Vec<f64>,
    pub v: Vec<f64>,
    pub b_v: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            u_f: vec![0.0; hidden * input],
            w_f: vec![0.0; hidden * hidden],
            b_f: vec![0.0; hidden],
            u_i: vec![0.0; hidden * input],
            w_i: vec![0.0; hidden * hidden],
            b_i: vec![0.0; hidden],
            u_c: vec![0.0; hidden * input],
            w_c: vec![0.0; hidden * hidden],
            b_c: vec![0.0; hidden],
            u_o: vec![0.0; hidden * input],
            w_o: vec![0.0; hidden * hidden],
            b_o: vec![0.0; hidden],
            v: vec![0.0; output * hidden],
            b_v: vec![0.0; output],
        }
    }

    /// Seeded initialization: weights uniform in (-s, s) with
    /// s = 1/sqrt(fan-in) per matrix, biases zero except the forget
    /// bias, which starts at 1.0.
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        let fill = |rng: &mut dyn rand::RngCore, m: &mut [f64], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in m.iter_mut() {
                *v = rng.gen_range(-s..s);
            }
        };
        fill(rng, &mut p.u_f, input);
        fill(rng, &mut p.w_f, hidden);
        fill(rng, &mut p.u_i, input);
        fill(rng, &mut p.w_i, hidden);
        fill(rng, &mut p.u_c, input);
        fill(rng, &mut p.w_c, hidden);
        fill(rng, &mut p.u_o, input);
        fill(rng, &mut p.w_o, hidden);
        fill(rng, &mut p.v, hidden);
        for b in p.b_f.iter_mut() {
            *b = 1.0;
        }
        p
    }

    fn tensors(&self) -> [&Vec<f64>; 14] {
        [
            &self.u_f, &self.w_f, &self.b_f, &self.u_i, &self.w_i, &self.b_i, &self.u_c,
            &self.w_c, &self.b_c, &self.u_o, &self.w_o, &self.b_o, &self.v, &self.b_v,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 14] {
        [
            &mut self.u_f, &mut self.w_f, &mut self.b_f, &mut self.u_i, &mut self.w_i,
            &mut self.b_i, &mut self.u_c, &mut self.w_c, &mut self.b_c, &mut self.u_o,
            &mut self.w_o, &mut self.b_o, &mut self.v, &mut self.b_v,
        ]
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.input == other.input && self.hidden == other.hidden && self.output == other.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    chat: Vec<f64>,
    c: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Activations recorded by `forward` for use in `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: usize,
    hidden: usize,
    output: usize,
    steps: Vec<StepCache>,
    final_output: Vec<f64>,
}

impl ForwardCache {
    pub fn final_output(&self) -> &[f64] {
        &self.final_output
    }

    pub fn steps_len(&self) -> usize {
        self.steps.len()
    }

    /// Recomputes the cell-state recursion from cached gate values;
    /// exposed so tests can assert it holds exactly.
    pub fn cell_recursion_holds(&self) -> bool {
        self.steps.iter().all(|s| {
            s.c.iter()
                .enumerate()
                .all(|(j, &cj)| cj == s.f[j] * s.c_prev[j] + s.i[j] * s.chat[j])
        })
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// out = b + U x + W h, with U (hidden x input) and W (hidden x hidden)
/// in row-major order.
fn gate_preact(
    b: &[f64],
    u: &[f64],
    w: &[f64],
    x: &[f64],
    h: &[f64],
    out: &mut [f64],
) {
    let input = x.len();
    let hidden = h.len();
    for j in 0..out.len() {
        let mut acc = b[j];
        let urow = &u[j * input..(j + 1) * input];
        for k in 0..input {
            acc += urow[k] * x[k];
        }
        let wrow = &w[j * hidden..(j + 1) * hidden];
        for k in 0..hidden {
            acc += wrow[k] * h[k];
        }
        out[j] = acc;
    }
}

fn step_full(params: &LstmParams, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> StepCache {
    let hidden = params.hidden;
    let mut f = vec![0.0; hidden];
    let mut i = vec![0.0; hidden];
    let mut chat = vec![0.0; hidden];
    let mut o = vec![0.0; hidden];
    gate_preact(&params.b_f, &params.u_f, &params.w_f, x, h_prev, &mut f);
    gate_preact(&params.b_i, &params.u_i, &params.w_i, x, h_prev, &mut i);
    gate_preact(&params.b_c, &params.u_c, &params.w_c, x, h_prev, &mut chat);
    gate_preact(&params.b_o, &params.u_o, &params.w_o, x, h_prev, &mut o);
    for j in 0..hidden {
        f[j] = sigmoid(f[j]);
        i[j] = sigmoid(i[j]);
        chat[j] = chat[j].tanh();
        o[j] = sigmoid(o[j]);
    }
    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        c[j] = f[j] * c_prev[j] + i[j] * chat[j];
        tanh_c[j] = c[j].tanh();
        h[j] = tanh_c[j] * o[j];
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        f,
        i,
        chat,
        c,
        o,
        tanh_c,
        h,
    }
}

fn readout(params: &LstmParams, h: &[f64]) -> Vec<f64> {
    let mut y = params.b_v.clone();
    for j in 0..params.output {
        let row = &params.v[j * params.hidden..(j + 1) * params.hidden];
        for k in 0..params.hidden {
            y[j] += row[k] * h[k];
        }
    }
    y
}

/// One gated update from `state` on input `x`; returns the next state
/// and the readout of the new hidden vector.
pub fn step(
    params: &LstmParams,
    state: &LstmState,
    x: &[f64],
) -> Result<(LstmState, Vec<f64>), LstmError> {
    if x.len() != params.input {
        return Err(LstmError::ShapeMismatch(format!(
            "input length {} != {}",
            x.len(),
            params.input
        )));
    }
    if state.h.len() != params.hidden || state.c.len() != params.hidden {
        return Err(LstmError::ShapeMismatch(format!(
            "state length {}/{} != hidden {}",
            state.h.len(),
            state.c.len(),
            params.hidden
        )));
    }
    let cache = step_full(params, &state.h, &state.c, x);
    let y = readout(params, &cache.h);
    Ok((
        LstmState {
            h: cache.h,
            c: cache.c,
        },
        y,
    ))
}

/// Runs the cell over a sequence from the zero state, caching every
/// activation for `backward`. Returns the readout at the final step.
pub fn forward(params: &LstmParams, sequence: &[Vec<f64>]) -> Result<ForwardCache, LstmError> {
    if sequence.is_empty() {
        return Err(LstmError::EmptySequence);
    }
    for (t, x) in sequence.iter().enumerate() {
        if x.len() != params.input {
            return Err(LstmError::ShapeMismatch(format!(
                "sequence step {t} has length {} != {}",
                x.len(),
                params.input
            )));
        }
    }
    let mut h = vec![0.0; params.hidden];
    let mut c = vec![0.0; params.hidden];
    let mut steps = Vec::with_capacity(sequence.len());
    for x in sequence {
        let cache = step_full(params, &h, &c, x);
        h.clone_from(&cache.h);
        c.clone_from(&cache.c);
        steps.push(cache);
    }
    let final_output = readout(params, &h);
    Ok(ForwardCache {
        input: params.input,
        hidden: params.hidden,
        output: params.output,
        steps,
        final_output,
    })
}

/// Backpropagation through time for a scalar loss whose gradient with
/// respect to the final readout is `loss_grad`. Returns gradients in
/// the same layout as the parameters.
pub fn backward(
    params: &LstmParams,
    cache: &ForwardCache,
    loss_grad: &[f64],
) -> Result<LstmParams, LstmError> {
    if cache.input != params.input || cache.hidden != params.hidden || cache.output != params.output
    {
        return Err(LstmError::CacheMismatch(format!(
            "cache dims {}x{}x{} vs params {}x{}x{}",
            cache.input, cache.hidden, cache.output, params.input, params.hidden, params.output
        )));
    }
    if loss_grad.len() != params.output {
        return Err(LstmError::ShapeMismatch(format!(
            "loss gradient length {} != output {}",
            loss_grad.len(),
            params.output
        )));
    }
    let hidden = params.hidden;
    let input = params.input;
    let mut g = LstmParams::zeros(input, hidden, params.output);

    let last_h = &cache.steps.last().expect("non-empty cache").h;
    let mut dh = vec![0.0; hidden];
    for j in 0..params.output {
        g.b_v[j] = loss_grad[j];
        let vrow = &params.v[j * hidden..(j + 1) * hidden];
        let grow = &mut g.v[j * hidden..(j + 1) * hidden];
        for k in 0..hidden {
            grow[k] = loss_grad[j] * last_h[k];
            dh[k] += vrow[k] * loss_grad[j];
        }
    }

    let mut dc = vec![0.0; hidden];
    for s in cache.steps.iter().rev() {
        let mut da_f = vec![0.0; hidden];
        let mut da_i = vec![0.0; hidden];
        let mut da_c = vec![0.0; hidden];
        let mut da_o = vec![0.0; hidden];
        for j in 0..hidden {
            let do_j = dh[j] * s.tanh_c[j];
            let dc_j = dc[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            let df_j = dc_j * s.c_prev[j];
            let di_j = dc_j * s.chat[j];
            let dchat_j = dc_j * s.i[j];
            da_f[j] = df_j * s.f[j] * (1.0 - s.f[j]);
            da_i[j] = di_j * s.i[j] * (1.0 - s.i[j]);
            da_c[j] = dchat_j * (1.0 - s.chat[j] * s.chat[j]);
            da_o[j] = do_j * s.o[j] * (1.0 - s.o[j]);
            dc[j] = dc_j * s.f[j];
        }
        let mut dh_prev = vec![0.0; hidden];
        let mut accumulate = |da: &[f64], u: &mut [f64], w: &mut [f64], b: &mut [f64], pw: &[f64]| {
            for j in 0..hidden {
                b[j] += da[j];
                let urow = &mut u[j * input..(j + 1) * input];
                for k in 0..input {
                    urow[k] += da[j] * s.x[k];
                }
                let wrow = &mut w[j * hidden..(j + 1) * hidden];
                let pwrow = &pw[j * hidden..(j + 1) * hidden];
                for k in 0..hidden {
                    wrow[k] += da[j] * s.h_prev[k];
                    dh_prev[k] += pwrow[k] * da[j];
                }
            }
        };
        accumulate(&da_f, &mut g.u_f, &mut g.w_f, &mut g.b_f, &params.w_f);
        accumulate(&da_i, &mut g.u_i, &mut g.w_i, &mut g.b_i, &params.w_i);
        accumulate(&da_c, &mut g.u_c, &mut g.w_c, &mut g.b_c, &params.w_c);
        accumulate(&da_o, &mut g.u_o, &mut g.w_o, &mut g.b_o, &params.w_o);
        dh = dh_prev;
    }
    Ok(g)
}

/// In-place gradient-descent update: params -= lr * grads.
pub fn sgd_update(params: &mut LstmParams, grads: &LstmParams, lr: f64) -> Result<(), LstmError> {
    if !params.same_shape(grads) {
        return Err(LstmError::ShapeMismatch(
            "gradient shapes do not match parameters".into(),
        ));
    }
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (pv, gv) in p.iter_mut().zip(g.iter()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Scales all gradients so their global L2 norm does not exceed
/// `max_norm`. No-op when already within the threshold.
pub fn clip_gradients(grads: &mut LstmParams, max_norm: f64) {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Writes a checkpoint: one text header line, then every tensor as raw
/// little-endian 64-bit floats in the fixed field order.
pub fn save_checkpoint(params: &LstmParams, path: impl AsRef<Path>) -> Result<(), LstmError> {
    let mut file = fs::File::create(path.as_ref())?;
    writeln!(
        file,
        "lstm-ckpt v1 hidden={} input={} output={}",
        params.hidden, params.input, params.output
    )?;
    let mut buf = Vec::new();
    for t in params.tensors() {
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LstmParams, LstmError> {
    let bytes = fs::read(path.as_ref())?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LstmError::Checkpoint("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| LstmError::Checkpoint("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "lstm-ckpt" || fields[1] != "v1" {
        return Err(LstmError::Checkpoint(format!("bad header `{header}`")));
    }
    let parse_dim = |field: &str, key: &str| -> Result<usize, LstmError> {
        field
            .strip_prefix(&format!("{key}="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| LstmError::Checkpoint(format!("bad field `{field}`")))
    };
    let hidden = parse_dim(fields[2], "hidden")?;
    let input = parse_dim(fields[3], "input")?;
    let output = parse_dim(fields[4], "output")?;
    let mut params = LstmParams::zeros(input, hidden, output);
    let payload = &bytes[newline + 1..];
    let expected: usize = params.tensors().iter().map(|t| t.len()).sum::<usize>() * 8;
    if payload.len() != expected {
        return Err(LstmError::Checkpoint(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut offset = 0;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(payload[offset..offset + 8].try_into().unwrap());
            offset += 8;
        }
    }
    Ok(params)
}
