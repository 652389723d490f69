//! Per-tensor symmetric 8-bit weight quantization and the fake-quantization
//! view used for quantization-aware training.
//!
//! Scheme: `scale = max|w| / 127` (1.0 for an all-zero tensor), values
//! rounded half away from zero into [-127, 127]; -128 is never produced.
//! The scale's significand is rounded to 46 bits so that `127 * scale` and
//! every product `value * scale` are exact in f64. That makes
//! quantize -> dequantize -> quantize reproduce identical values AND an
//! identical scale, which in turn makes model files stable across
//! requantization.
//!
//! Each tensor also carries a `(mult, shift)` pair with
//! `mult * 2^-shift ~= scale` (relative error < 2^-31, mult in [2^30, 2^31)),
//! consumed by the integer inference engine's rescale step.

use crate::gru::{FloatModel, GruError, GruLayerParams, GruNet, Mat};

#[derive(Debug, thiserror::Error)]
pub enum QuantError {
    #[error("non-finite entry in tensor")]
    NonFinite,
    #[error("scale {scale} not representable as mult/shift with shift in [0, 62]")]
    ScaleOutOfRange { scale: f64 },
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("tensor data length {got} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, got: usize },
    #[error("value -128 at index {0} outside the symmetric range [-127, 127]")]
    AsymmetricValue(usize),
    #[error("tensor {what}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    WrongDimensions {
        what: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("normalization constants invalid: floor {floor}, ceil {ceil}")]
    BadNormConstants { floor: f64, ceil: f64 },
}

/// Rounds the significand to 46 bits (clears the low 7 of the 52 fraction
/// bits, to nearest). 127 < 2^7, so multiplying the result by any integer of
/// magnitude <= 127 is exact in f64.
fn round_scale_significand(s: f64) -> f64 {
    let bits = s.to_bits();
    let rounded = (bits + (1 << 6)) & !((1u64 << 7) - 1);
    f64::from_bits(rounded)
}

/// Splits positive finite `x` into `(m, e)` with `x = m * 2^e`, m in [0.5, 1).
fn frexp(x: f64) -> (f64, i32) {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut m = x;
    let mut e = 0i32;
    while m >= 1.0 {
        m /= 2.0;
        e += 1;
    }
    while m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    (m, e)
}

/// Derives the integer requantization pair for a positive scale:
/// `mult in [2^30, 2^31)`, `shift in [0, 62]`, `mult * 2^-shift ~= scale`
/// within 2^-31 relative.
pub fn derive_mult_shift(scale: f64) -> Result<(i32, u32), QuantError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(QuantError::BadScale(scale));
    }
    let (m, e) = frexp(scale);
    let mut mult = (m * (1u64 << 31) as f64).round() as i64;
    let mut shift = 31i64 - e as i64;
    if mult == 1i64 << 31 {
        // m rounded up to 1.0; renormalize one binade down
        mult = 1i64 << 30;
        shift -= 1;
    }
    if !(0..=62).contains(&shift) {
        return Err(QuantError::ScaleOutOfRange { scale });
    }
    debug_assert!((1i64 << 30..1i64 << 31).contains(&mult));
    Ok((mult as i32, shift as u32))
}

/// An int8 tensor with its dequantization scale and the integer rescale pair
/// derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    // crate-visible so the inference tests can poison the float field and
    // prove the integer path never reads it
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) values: Vec<i8>,
    pub(crate) scale: f64,
    pub(crate) mult: i32,
    pub(crate) shift: u32,
}

impl QuantTensor {
    /// Validated construction from raw parts (the deserialization path).
    /// The scale must already be on the 46-bit grid; mult/shift are
    /// rederived, not trusted.
    pub fn new(rows: usize, cols: usize, values: Vec<i8>, scale: f64) -> Result<Self, QuantError> {
        if values.len() != rows * cols {
            return Err(QuantError::BadShape {
                rows,
                cols,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|&v| v == i8::MIN) {
            return Err(QuantError::AsymmetricValue(i));
        }
        if !(scale > 0.0 && scale.is_finite()) || round_scale_significand(scale) != scale {
            return Err(QuantError::BadScale(scale));
        }
        let (mult, shift) = derive_mult_shift(scale)?;
        Ok(Self {
            rows,
            cols,
            values,
            scale,
            mult,
            shift,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mult(&self) -> i32 {
        self.mult
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.values[r * self.cols + c]
    }
}

/// Integer values and 46-bit-rounded scale for a tensor; the infallible core
/// shared by [`quantize_tensor`] and [`fake_quant`].
fn quantize_values(w: &Mat) -> Result<(Vec<i8>, f64), QuantError> {
    if !w.data().iter().all(|v| v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    let max = w.data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let scale = if max == 0.0 {
        1.0
    } else {
        round_scale_significand(max / 127.0)
    };
    let values = w
        .data()
        .iter()
        .map(|&v| (v / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    Ok((values, scale))
}

/// Symmetric int8 quantization of one weight matrix.
pub fn quantize_tensor(w: &Mat) -> Result<QuantTensor, QuantError> {
    let (values, scale) = quantize_values(w)?;
    let (mult, shift) = derive_mult_shift(scale)?;
    Ok(QuantTensor {
        rows: w.rows(),
        cols: w.cols(),
        values,
        scale,
        mult,
        shift,
    })
}

/// `values * scale`; every product is exact by the 46-bit scale contract.
pub fn dequantize_tensor(q: &QuantTensor) -> Mat {
    Mat::from_vec(
        q.rows,
        q.cols,
        q.values.iter().map(|&v| v as f64 * q.scale).collect(),
    )
    .expect("finite by construction")
}

/// Quantize-dequantize round trip with straight-through gradients: the
/// training loop reads this as the forward view of a weight tensor and
/// applies the resulting gradients to the latent real tensor unchanged.
pub fn fake_quant(w: &Mat) -> Result<Mat, QuantError> {
    let (values, scale) = quantize_values(w)?;
    Ok(Mat::from_vec(
        w.rows(),
        w.cols(),
        values.iter().map(|&v| v as f64 * scale).collect(),
    )
    .expect("finite by construction"))
}

/// Quantized GRU layer: the three gate tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayerParams {
    pub w_r: QuantTensor,
    pub w_z: QuantTensor,
    pub w_h: QuantTensor,
}

impl QuantLayerParams {
    pub fn hidden_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.cols() - self.w_r.rows()
    }
}

/// Fully quantized deployable model, structurally parallel to
/// [`FloatModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantModel {
    pub gru1: QuantLayerParams,
    pub gru2: QuantLayerParams,
    pub fc: QuantTensor,
    pub out: QuantTensor,
    pub norm_floor: f64,
    pub norm_ceil: f64,
}

impl QuantModel {
    /// Validates the fixed 65/16/16/8/2 architecture and norm constants.
    pub fn new(
        gru1: QuantLayerParams,
        gru2: QuantLayerParams,
        fc: QuantTensor,
        out: QuantTensor,
        norm_floor: f64,
        norm_ceil: f64,
    ) -> Result<Self, QuantError> {
        use crate::gru::{FC_DIM, HIDDEN_DIM, INPUT_DIM, OUT_DIM};
        let expect = |t: &QuantTensor, what: &'static str, rows: usize, cols: usize| {
            if t.rows != rows || t.cols != cols {
                Err(QuantError::WrongDimensions {
                    what,
                    expected_rows: rows,
                    expected_cols: cols,
                    rows: t.rows,
                    cols: t.cols,
                })
            } else {
                Ok(())
            }
        };
        let g1 = INPUT_DIM + HIDDEN_DIM;
        let g2 = HIDDEN_DIM + HIDDEN_DIM;
        expect(&gru1.w_r, "gru1.w_r", HIDDEN_DIM, g1)?;
        expect(&gru1.w_z, "gru1.w_z", HIDDEN_DIM, g1)?;
        expect(&gru1.w_h, "gru1.w_h", HIDDEN_DIM, g1)?;
        expect(&gru2.w_r, "gru2.w_r", HIDDEN_DIM, g2)?;
        expect(&gru2.w_z, "gru2.w_z", HIDDEN_DIM, g2)?;
        expect(&gru2.w_h, "gru2.w_h", HIDDEN_DIM, g2)?;
        expect(&fc, "fc", FC_DIM, HIDDEN_DIM)?;
        expect(&out, "out", OUT_DIM, FC_DIM)?;
        if !norm_floor.is_finite() || !norm_ceil.is_finite() || norm_floor >= norm_ceil {
            return Err(QuantError::BadNormConstants {
                floor: norm_floor,
                ceil: norm_ceil,
            });
        }
        let model = Self {
            gru1,
            gru2,
            fc,
            out,
            norm_floor,
            norm_ceil,
        };
        // deployment budget: the serialized form must fit the container cap
        let len = crate::store::quant_container_len(&model);
        assert!(
            len <= crate::store::MAX_QUANT_CONTAINER_BYTES,
            "quantized container {len} bytes exceeds budget"
        );
        Ok(model)
    }

    /// Tensors in the canonical serialization order.
    pub fn tensors(&self) -> [&QuantTensor; 8] {
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

    /// Total int8 weight count (5568 for the fixed architecture).
    pub fn weight_count(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }
}

/// Quantizes every tensor of a float model independently; norm constants are
/// copied through.
pub fn quantize_model(m: &FloatModel) -> Result<QuantModel, QuantError> {
    let layer = |p: &GruLayerParams| -> Result<QuantLayerParams, QuantError> {
        Ok(QuantLayerParams {
            w_r: quantize_tensor(&p.w_r)?,
            w_z: quantize_tensor(&p.w_z)?,
            w_h: quantize_tensor(&p.w_h)?,
        })
    };
    QuantModel::new(
        layer(&m.net.gru1)?,
        layer(&m.net.gru2)?,
        quantize_tensor(&m.net.fc)?,
        quantize_tensor(&m.net.out)?,
        m.norm_floor,
        m.norm_ceil,
    )
}

/// Reconstructs the real-valued model `values * scale`; the reference
/// oracle for integer inference.
pub fn dequantize_model(qm: &QuantModel) -> FloatModel {
    let layer = |p: &QuantLayerParams| GruLayerParams {
        w_r: dequantize_tensor(&p.w_r),
        w_z: dequantize_tensor(&p.w_z),
        w_h: dequantize_tensor(&p.w_h),
    };
    let net = GruNet {
        gru1: layer(&qm.gru1),
        gru2: layer(&qm.gru2),
        fc: dequantize_tensor(&qm.fc),
        out: dequantize_tensor(&qm.out),
    };
    FloatModel::new(net, qm.norm_floor, qm.norm_ceil)
        .map_err(|e: GruError| e)
        .expect("QuantModel dimensions validated at construction")
}
