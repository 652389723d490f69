//! Floating-point reference network: two soft-sign GRU layers, a soft-sign
//! fully connected layer, and a 2-class softmax head, with exact analytic
//! gradients via backpropagation through time.
//!
//! The recurrence per step, with `ss` the soft-sign and `sss` its shifted
//! form, is
//!
//! ```text
//! r = sss(W_r [x; h])          z = sss(W_z [x; h])
//! h~ = ss(W_h [x; r.h])        h' = h~ + z.(h - h~)
//! ```
//!
//! `h' = h~ + z.(h - h~)` is algebraically `z.h + (1-z).h~` with one fewer
//! multiply; the integer engine uses the same form so the two paths stay
//! structurally parallel. No tensor has a bias term. Dimensions are free in
//! [`GruNet`] (gradient checks use tiny nets); [`FloatModel`] pins the
//! deployable 65/16/16/8/2 architecture.

use crate::dsp::FeatureWindow;

/// Input dimension: one STFT frame, 65 bins.
pub const INPUT_DIM: usize = 65;
/// Hidden units in each GRU layer.
pub const HIDDEN_DIM: usize = 16;
/// Fully connected layer width.
pub const FC_DIM: usize = 8;
/// Output classes: 0 = non-eating, 1 = eating.
pub const OUT_DIM: usize = 2;
/// Steps per window: the 15 STFT frames.
pub const SEQ_LEN: usize = 15;
/// Total weight count of the fixed architecture.
pub const PARAM_COUNT: usize =
    3 * HIDDEN_DIM * (INPUT_DIM + HIDDEN_DIM)    // gru1: 3 * 16 * 81
    + 3 * HIDDEN_DIM * (HIDDEN_DIM + HIDDEN_DIM) // gru2: 3 * 16 * 32
    + FC_DIM * HIDDEN_DIM
    + OUT_DIM * FC_DIM;

/// Probability floor inside the cross-entropy log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum GruError {
    #[error("matrix data length {got} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, got: usize },
    #[error("non-finite entry in tensor {0}")]
    NonFinite(&'static str),
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("architecture {what}: expected {expected}, got {got}")]
    WrongArchitecture {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("label must be 0 or 1, got {0}")]
    BadLabel(usize),
    #[error("class weights must be positive and finite")]
    BadClassWeights,
    #[error("normalization constants invalid: floor {floor}, ceil {ceil}")]
    BadNormConstants { floor: f64, ceil: f64 },
    #[error("empty input sequence")]
    EmptySequence,
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GruError> {
        if data.len() != rows * cols {
            return Err(GruError::BadShape {
                rows,
                cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(GruError::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Elementwise map, shape preserved.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
        }
        out
    }

    /// `self^T * y`, accumulated row-wise.
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
        out
    }

    /// `self += y * x^T` (gradient outer-product accumulation).
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += yr * xi;
            }
        }
    }
}

/// Soft-sign `x / (1 + |x|)`, bounded in (-1, 1).
pub fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

/// Shifted soft-sign `(ss(x) + 1) / 2`, the gate nonlinearity in (0, 1).
pub fn shifted_softsign(x: f64) -> f64 {
    (softsign(x) + 1.0) / 2.0
}

/// Soft-sign derivative `1 / (1 + |x|)^2`.
pub fn softsign_deriv(x: f64) -> f64 {
    let d = 1.0 + x.abs();
    1.0 / (d * d)
}

/// The three gate matrices of one GRU layer, each `hidden x (input + hidden)`
/// acting on the concatenation `[x; h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_r: Mat,
    pub w_z: Mat,
    pub w_h: Mat,
}

impl GruLayerParams {
    pub fn new(w_r: Mat, w_z: Mat, w_h: Mat) -> Result<Self, GruError> {
        let (rows, cols) = (w_r.rows(), w_r.cols());
        if cols <= rows {
            return Err(GruError::DimensionMismatch {
                what: "gate matrix columns (input + hidden)",
                expected: rows + 1,
                got: cols,
            });
        }
        for (m, what) in [(&w_z, "W_z shape"), (&w_h, "W_h shape")] {
            if m.rows() != rows || m.cols() != cols {
                return Err(GruError::DimensionMismatch {
                    what,
                    expected: rows * cols,
                    got: m.rows() * m.cols(),
                });
            }
        }
        Ok(Self { w_r, w_z, w_h })
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.cols() - self.w_r.rows()
    }
}

/// A full network of arbitrary dimensions: two GRU layers, a soft-sign FC
/// layer, and a 2-row output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruNet {
    pub gru1: GruLayerParams,
    pub gru2: GruLayerParams,
    pub fc: Mat,
    pub out: Mat,
}

/// Canonical tensor order used by quantization, serialization, and export.
pub const TENSOR_NAMES: [&str; 8] = [
    "gru1.w_r", "gru1.w_z", "gru1.w_h", "gru2.w_r", "gru2.w_z", "gru2.w_h", "fc", "out",
];

impl GruNet {
    pub fn new(
        gru1: GruLayerParams,
        gru2: GruLayerParams,
        fc: Mat,
        out: Mat,
    ) -> Result<Self, GruError> {
        if gru2.input_dim() != gru1.hidden_dim() {
            return Err(GruError::DimensionMismatch {
                what: "gru2 input dimension",
                expected: gru1.hidden_dim(),
                got: gru2.input_dim(),
            });
        }
        if fc.cols() != gru2.hidden_dim() {
            return Err(GruError::DimensionMismatch {
                what: "fc columns",
                expected: gru2.hidden_dim(),
                got: fc.cols(),
            });
        }
        if out.cols() != fc.rows() {
            return Err(GruError::DimensionMismatch {
                what: "output columns",
                expected: fc.rows(),
                got: out.cols(),
            });
        }
        if out.rows() != OUT_DIM {
            return Err(GruError::DimensionMismatch {
                what: "output rows",
                expected: OUT_DIM,
                got: out.rows(),
            });
        }
        Ok(Self {
            gru1,
            gru2,
            fc,
            out,
        })
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> [&Mat; 8] {
        [
            &self.gru1.w_r,
            &self.gru1.w_z,
            &self.gru1.w_h,
            &self.gru2.w_r,
            &self.gru2.w_z,
            &self.gru2.w_h,
            &self.fc,
            &self.out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 8] {
        [
            &mut self.gru1.w_r,
            &mut self.gru1.w_z,
            &mut self.gru1.w_h,
            &mut self.gru2.w_r,
            &mut self.gru2.w_z,
            &mut self.gru2.w_h,
            &mut self.fc,
            &mut self.out,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// Same architecture with every tensor transformed (dimension preserving).
    pub fn map_tensors(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        Self {
            gru1: GruLayerParams {
                w_r: f(&self.gru1.w_r),
                w_z: f(&self.gru1.w_z),
                w_h: f(&self.gru1.w_h),
            },
            gru2: GruLayerParams {
                w_r: f(&self.gru2.w_r),
                w_z: f(&self.gru2.w_z),
                w_h: f(&self.gru2.w_h),
            },
            fc: f(&self.fc),
            out: f(&self.out),
        }
    }
}

/// The deployable network: fixed 65/16/16/8/2 dimensions plus the feature
/// normalization constants, which travel with the weights so inference needs
/// no dataset statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    pub net: GruNet,
    pub norm_floor: f64,
    pub norm_ceil: f64,
}

impl FloatModel {
    pub fn new(net: GruNet, norm_floor: f64, norm_ceil: f64) -> Result<Self, GruError> {
        let checks = [
            ("gru1 input", net.gru1.input_dim(), INPUT_DIM),
            ("gru1 hidden", net.gru1.hidden_dim(), HIDDEN_DIM),
            ("gru2 hidden", net.gru2.hidden_dim(), HIDDEN_DIM),
            ("fc rows", net.fc.rows(), FC_DIM),
            ("out rows", net.out.rows(), OUT_DIM),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(GruError::WrongArchitecture {
                    what,
                    expected,
                    got,
                });
            }
        }
        if !norm_floor.is_finite() || !norm_ceil.is_finite() || norm_floor >= norm_ceil {
            return Err(GruError::BadNormConstants {
                floor: norm_floor,
                ceil: norm_ceil,
            });
        }
        Ok(Self {
            net,
            norm_floor,
            norm_ceil,
        })
    }

    /// All-zero weights with the standard normalization constants.
    pub fn zeros() -> Self {
        let layer = |input: usize, hidden: usize| GruLayerParams {
            w_r: Mat::zeros(hidden, input + hidden),
            w_z: Mat::zeros(hidden, input + hidden),
            w_h: Mat::zeros(hidden, input + hidden),
        };
        Self {
            net: GruNet {
                gru1: layer(INPUT_DIM, HIDDEN_DIM),
                gru2: layer(HIDDEN_DIM, HIDDEN_DIM),
                fc: Mat::zeros(FC_DIM, HIDDEN_DIM),
                out: Mat::zeros(OUT_DIM, FC_DIM),
            },
            norm_floor: crate::dsp::NORM_FLOOR,
            norm_ceil: crate::dsp::NORM_CEIL,
        }
    }

    pub fn forward(&self, w: &FeatureWindow) -> ([f64; 2], [f64; 2]) {
        let frames: Vec<&[f64]> = (0..SEQ_LEN).map(|i| w.frame(i)).collect();
        let (logits, probs) =
            forward_frames(&self.net, &frames).expect("dimensions validated at construction");
        ([logits[0], logits[1]], [probs[0], probs[1]])
    }

    /// Argmax label; an exact tie goes to class 0 (non-eating).
    pub fn predict(&self, w: &FeatureWindow) -> usize {
        let (logits, _) = self.forward(w);
        if logits[1] > logits[0] {
            1
        } else {
            0
        }
    }
}

/// State blend `h~ + z.(h_prev - h~)`, shared by the forward step and tested
/// directly: forcing z = 1 must return h_prev unchanged.
pub fn state_update(h_tilde: &[f64], z: &[f64], h_prev: &[f64]) -> Vec<f64> {
    h_tilde
        .iter()
        .zip(z)
        .zip(h_prev)
        .map(|((&ht, &zi), &hp)| ht + zi * (hp - ht))
        .collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Everything the backward pass needs from one forward step.
struct StepCache {
    u: Vec<f64>, // [x; h_prev]
    c: Vec<f64>, // [x; r.h_prev]
    a_r: Vec<f64>,
    a_z: Vec<f64>,
    a_h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    h_tilde: Vec<f64>,
    h_prev: Vec<f64>,
    h: Vec<f64>,
}

fn step_with_cache(x: &[f64], h_prev: &[f64], p: &GruLayerParams) -> StepCache {
    let u = concat(x, h_prev);
    let a_r = p.w_r.matvec(&u);
    let a_z = p.w_z.matvec(&u);
    let r: Vec<f64> = a_r.iter().map(|&a| shifted_softsign(a)).collect();
    let z: Vec<f64> = a_z.iter().map(|&a| shifted_softsign(a)).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(&ri, &hi)| ri * hi).collect();
    let c = concat(x, &rh);
    let a_h = p.w_h.matvec(&c);
    let h_tilde: Vec<f64> = a_h.iter().map(|&a| softsign(a)).collect();
    let h = state_update(&h_tilde, &z, h_prev);
    StepCache {
        u,
        c,
        a_r,
        a_z,
        a_h,
        r,
        z,
        h_tilde,
        h_prev: h_prev.to_vec(),
        h,
    }
}

/// One GRU step: gates from `[x; h_prev]`, candidate from `[x; r.h_prev]`,
/// state blend. Returns the next hidden state.
pub fn gru_step(x: &[f64], h_prev: &[f64], p: &GruLayerParams) -> Result<Vec<f64>, GruError> {
    if x.len() != p.input_dim() {
        return Err(GruError::DimensionMismatch {
            what: "gru_step input",
            expected: p.input_dim(),
            got: x.len(),
        });
    }
    if h_prev.len() != p.hidden_dim() {
        return Err(GruError::DimensionMismatch {
            what: "gru_step state",
            expected: p.hidden_dim(),
            got: h_prev.len(),
        });
    }
    Ok(step_with_cache(x, h_prev, p).h)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

struct ForwardTrace {
    l1: Vec<StepCache>,
    l2: Vec<StepCache>,
    a_fc: Vec<f64>,
    fc_act: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_trace(net: &GruNet, frames: &[&[f64]]) -> Result<ForwardTrace, GruError> {
    if frames.is_empty() {
        return Err(GruError::EmptySequence);
    }
    for f in frames {
        if f.len() != net.gru1.input_dim() {
            return Err(GruError::DimensionMismatch {
                what: "frame length",
                expected: net.gru1.input_dim(),
                got: f.len(),
            });
        }
    }
    let mut h1 = vec![0.0; net.gru1.hidden_dim()];
    let mut h2 = vec![0.0; net.gru2.hidden_dim()];
    let mut l1 = Vec::with_capacity(frames.len());
    let mut l2 = Vec::with_capacity(frames.len());
    for &x in frames {
        let s1 = step_with_cache(x, &h1, &net.gru1);
        h1 = s1.h.clone();
        let s2 = step_with_cache(&s1.h, &h2, &net.gru2);
        h2 = s2.h.clone();
        l1.push(s1);
        l2.push(s2);
    }
    let a_fc = net.fc.matvec(&h2);
    let fc_act: Vec<f64> = a_fc.iter().map(|&a| softsign(a)).collect();
    let logits = net.out.matvec(&fc_act);
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        l1,
        l2,
        a_fc,
        fc_act,
        logits,
        probs,
    })
}

/// Full forward pass over an arbitrary-length frame sequence from zero
/// initial state. Returns (logits, probs).
pub fn forward_frames(net: &GruNet, frames: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>), GruError> {
    let t = forward_trace(net, frames)?;
    Ok((t.logits, t.probs))
}

/// Class-weighted cross-entropy `-class_weights[label] * ln(probs[label])`
/// with the probability clamped to at least [`PROB_FLOOR`].
pub fn loss_weighted_ce(
    probs: &[f64],
    label: usize,
    class_weights: (f64, f64),
) -> Result<f64, GruError> {
    if label >= OUT_DIM {
        return Err(GruError::BadLabel(label));
    }
    let (w0, w1) = class_weights;
    if !(w0 > 0.0 && w1 > 0.0 && w0.is_finite() && w1.is_finite()) {
        return Err(GruError::BadClassWeights);
    }
    let w = if label == 0 { w0 } else { w1 };
    Ok(-w * probs[label].max(PROB_FLOOR).ln())
}

/// Gradient of the weighted softmax cross-entropy with respect to the
/// logits: `w_label * (probs - onehot(label))`.
pub fn softmax_ce_grad(probs: &[f64], label: usize, weight: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| weight * (p - if j == label { 1.0 } else { 0.0 }))
        .collect()
}

/// Per-layer gradient tensors, shapes matching [`GruLayerParams`].
#[derive(Debug, Clone)]
pub struct GruLayerGrads {
    pub w_r: Mat,
    pub w_z: Mat,
    pub w_h: Mat,
}

/// Gradients for every tensor of a [`GruNet`], in the same shapes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub gru1: GruLayerGrads,
    pub gru2: GruLayerGrads,
    pub fc: Mat,
    pub out: Mat,
}

impl Gradients {
    pub fn zeros_like(net: &GruNet) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        Self {
            gru1: GruLayerGrads {
                w_r: z(&net.gru1.w_r),
                w_z: z(&net.gru1.w_z),
                w_h: z(&net.gru1.w_h),
            },
            gru2: GruLayerGrads {
                w_r: z(&net.gru2.w_r),
                w_z: z(&net.gru2.w_z),
                w_h: z(&net.gru2.w_h),
            },
            fc: z(&net.fc),
            out: z(&net.out),
        }
    }

    /// Tensors in the canonical order of [`GruNet::tensors`].
    pub fn tensors(&self) -> [&Mat; 8] {
        [
            &self.gru1.w_r,
            &self.gru1.w_z,
            &self.gru1.w_h,
            &self.gru2.w_r,
            &self.gru2.w_z,
            &self.gru2.w_h,
            &self.fc,
            &self.out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 8] {
        [
            &mut self.gru1.w_r,
            &mut self.gru1.w_z,
            &mut self.gru1.w_h,
            &mut self.gru2.w_r,
            &mut self.gru2.w_z,
            &mut self.gru2.w_h,
            &mut self.fc,
            &mut self.out,
        ]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for x in t.data_mut() {
                *x *= s;
            }
        }
    }
}

/// Backward through one GRU step. `g` is dL/dh at this step; returns
/// (dL/dx, dL/dh_prev) and accumulates weight gradients.
fn step_backward(
    p: &GruLayerParams,
    cache: &StepCache,
    g: &[f64],
    grads: &mut GruLayerGrads,
) -> (Vec<f64>, Vec<f64>) {
    let input = p.input_dim();
    let hidden = p.hidden_dim();

    // state blend: h = h~ + z.(h_prev - h~)
    let mut dz = vec![0.0; hidden];
    let mut dht = vec![0.0; hidden];
    let mut dhp = vec![0.0; hidden];
    for i in 0..hidden {
        dz[i] = g[i] * (cache.h_prev[i] - cache.h_tilde[i]);
        dht[i] = g[i] * (1.0 - cache.z[i]);
        dhp[i] = g[i] * cache.z[i];
    }

    // candidate branch: h~ = ss(W_h [x; r.h_prev])
    let da_h: Vec<f64> = dht
        .iter()
        .zip(&cache.a_h)
        .map(|(&d, &a)| d * softsign_deriv(a))
        .collect();
    grads.w_h.add_outer(&da_h, &cache.c);
    let dc = p.w_h.matvec_t(&da_h);
    let mut dr = vec![0.0; hidden];
    for i in 0..hidden {
        dr[i] = dc[input + i] * cache.h_prev[i];
        dhp[i] += dc[input + i] * cache.r[i];
    }

    // gates: r,z = (ss(a) + 1)/2, so d a = d gate * ss'(a) / 2
    let da_z: Vec<f64> = dz
        .iter()
        .zip(&cache.a_z)
        .map(|(&d, &a)| d * softsign_deriv(a) / 2.0)
        .collect();
    let da_r: Vec<f64> = dr
        .iter()
        .zip(&cache.a_r)
        .map(|(&d, &a)| d * softsign_deriv(a) / 2.0)
        .collect();
    grads.w_z.add_outer(&da_z, &cache.u);
    grads.w_r.add_outer(&da_r, &cache.u);
    let du_z = p.w_z.matvec_t(&da_z);
    let du_r = p.w_r.matvec_t(&da_r);

    let mut dx = vec![0.0; input];
    for j in 0..input {
        dx[j] = dc[j] + du_z[j] + du_r[j];
    }
    for i in 0..hidden {
        dhp[i] += du_z[input + i] + du_r[input + i];
    }
    (dx, dhp)
}

/// Loss and exact gradients of `loss_weighted_ce(forward(frames), label)`
/// with respect to every tensor, via backpropagation through time.
pub fn backward_frames(
    net: &GruNet,
    frames: &[&[f64]],
    label: usize,
    class_weights: (f64, f64),
) -> Result<(f64, Gradients), GruError> {
    let trace = forward_trace(net, frames)?;
    let loss = loss_weighted_ce(&trace.probs, label, class_weights)?;
    let weight = if label == 0 {
        class_weights.0
    } else {
        class_weights.1
    };

    let mut grads = Gradients::zeros_like(net);

    // head: logits -> softmax-CE, fc -> soft-sign
    let dlogits = softmax_ce_grad(&trace.probs, label, weight);
    grads.out.add_outer(&dlogits, &trace.fc_act);
    let df = net.out.matvec_t(&dlogits);
    let da_fc: Vec<f64> = df
        .iter()
        .zip(&trace.a_fc)
        .map(|(&d, &a)| d * softsign_deriv(a))
        .collect();
    let h2_final = &trace.l2.last().expect("non-empty sequence").h;
    grads.fc.add_outer(&da_fc, h2_final);
    let mut dh2 = net.fc.matvec_t(&da_fc);

    // BPTT: layer-2 input gradient at step t feeds layer-1 output at step t
    let mut dh1 = vec![0.0; net.gru1.hidden_dim()];
    for t in (0..frames.len()).rev() {
        let (dx2, dh2_prev) = step_backward(&net.gru2, &trace.l2[t], &dh2, &mut grads.gru2);
        let g1: Vec<f64> = dh1.iter().zip(&dx2).map(|(&a, &b)| a + b).collect();
        let (_dx1, dh1_prev) = step_backward(&net.gru1, &trace.l1[t], &g1, &mut grads.gru1);
        dh2 = dh2_prev;
        dh1 = dh1_prev;
    }
    Ok((loss, grads))
}

/// [`backward_frames`] over a feature window against a deployable model.
pub fn backward(
    w: &FeatureWindow,
    label: usize,
    m: &FloatModel,
    class_weights: (f64, f64),
) -> Result<(f64, Gradients), GruError> {
    let frames: Vec<&[f64]> = (0..SEQ_LEN).map(|i| w.frame(i)).collect();
    backward_frames(&m.net, &frames, label, class_weights)
}
