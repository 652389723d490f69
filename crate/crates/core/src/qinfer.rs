//! Integer-only inference engine: the deployable counterpart of the float
//! network, executing int8 weights against Q15 activations with no floating
//! point anywhere on the hot path.
//!
//! Per pre-activation vector: a 32-bit accumulator sums int8 x Q15 products,
//! one `rescale` by the owning tensor's mult/shift brings the sum back to
//! the Q15 scale, then the integer soft-sign kernels apply. Output scores
//! are the two raw output-layer accumulators; both share the out tensor's
//! scale, so argmax over them equals argmax over the real logits up to
//! quantization error, and no final rescale is spent on them.

use crate::dsp::{FeatureWindow, BINS_PER_FRAME, FRAMES_PER_WINDOW};
use crate::gru::FloatModel;
use crate::qmath::{
    q15_blend, q15_from_real, q15_mul, rescale, shifted_softsign_q, softsign_q, Q15,
};
use crate::quant::{QuantLayerParams, QuantModel, QuantTensor};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum QInferError {
    #[error("empty evaluation split")]
    EmptySplit,
}

/// One 15x65 feature window on the Q15 grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QFeatureWindow {
    values: Vec<Q15>,
}

impl QFeatureWindow {
    pub fn values(&self) -> &[Q15] {
        &self.values
    }

    pub fn frame(&self, frame: usize) -> &[Q15] {
        &self.values[frame * BINS_PER_FRAME..(frame + 1) * BINS_PER_FRAME]
    }
}

/// Elementwise Q15 rounding of a real feature window.
pub fn quantize_features(w: &FeatureWindow) -> QFeatureWindow {
    QFeatureWindow {
        values: w.values().iter().map(|&v| q15_from_real(v)).collect(),
    }
}

/// int8 row dot Q15 activations. The accumulator-width contract holds with
/// margin: 81 products of |w| <= 127 and |x| <= 32768 stay under 2^29, so
/// the sum fits i32; the assert guards the structural claim.
fn dot_row(t: &QuantTensor, row: usize, acts: &[Q15]) -> i32 {
    let cols = t.cols();
    debug_assert_eq!(acts.len(), cols);
    let weights = &t.values()[row * cols..(row + 1) * cols];
    let mut acc: i64 = 0;
    for (&w, &x) in weights.iter().zip(acts) {
        acc += w as i64 * x.raw() as i64;
    }
    i32::try_from(acc).expect("accumulator overflow")
}

fn gate_vector(t: &QuantTensor, acts: &[Q15], f: impl Fn(crate::qmath::AccQ15) -> Q15) -> Vec<Q15> {
    (0..t.rows())
        .map(|i| f(rescale(dot_row(t, i, acts), t.mult(), t.shift())))
        .collect()
}

/// One integer GRU step: gates from `[x; h]`, candidate from `[x; r.h]`,
/// then the shared state blend. Panics on dimension misuse; numeric range
/// is guaranteed by the Q15 kernels.
pub fn qgru_step(xq: &[Q15], hq: &[Q15], qp: &QuantLayerParams) -> Vec<Q15> {
    assert_eq!(xq.len(), qp.input_dim(), "qgru_step input dimension");
    assert_eq!(hq.len(), qp.hidden_dim(), "qgru_step state dimension");
    let mut u = Vec::with_capacity(xq.len() + hq.len());
    u.extend_from_slice(xq);
    u.extend_from_slice(hq);
    let r = gate_vector(&qp.w_r, &u, shifted_softsign_q);
    let z = gate_vector(&qp.w_z, &u, shifted_softsign_q);
    let mut c = Vec::with_capacity(u.len());
    c.extend_from_slice(xq);
    c.extend(r.iter().zip(hq).map(|(&ri, &hi)| q15_mul(ri, hi)));
    let h_tilde = gate_vector(&qp.w_h, &c, softsign_q);
    h_tilde
        .iter()
        .zip(&z)
        .zip(hq)
        .map(|((&ht, &zi), &hp)| q15_blend(ht, zi, hp))
        .collect()
}

/// Full integer forward pass: both GRU layers from zero state over the 15
/// frames, soft-sign FC, and the two raw output accumulators as scores.
/// Label is the score argmax; an exact tie goes to class 0.
pub fn qforward(qw: &QFeatureWindow, qm: &QuantModel) -> (usize, [i32; 2]) {
    let mut h1 = vec![Q15::ZERO; qm.gru1.hidden_dim()];
    let mut h2 = vec![Q15::ZERO; qm.gru2.hidden_dim()];
    for t in 0..FRAMES_PER_WINDOW {
        h1 = qgru_step(qw.frame(t), &h1, &qm.gru1);
        h2 = qgru_step(&h1, &h2, &qm.gru2);
    }
    let f = gate_vector(&qm.fc, &h2, softsign_q);
    let scores = [dot_row(&qm.out, 0, &f), dot_row(&qm.out, 1, &f)];
    let label = if scores[1] > scores[0] { 1 } else { 0 };
    (label, scores)
}

fn count_label_matches(fm: &FloatModel, qm: &QuantModel, windows: &[FeatureWindow]) -> usize {
    let matches = |w: &FeatureWindow| fm.predict(w) == qforward(&quantize_features(w), qm).0;
    #[cfg(feature = "parallel")]
    {
        windows.par_iter().filter(|w| matches(w)).count()
    }
    #[cfg(not(feature = "parallel"))]
    {
        windows.iter().filter(|w| matches(w)).count()
    }
}

/// Fraction of windows on which the float and integer paths emit the same
/// label.
pub fn agreement(
    fm: &FloatModel,
    qm: &QuantModel,
    windows: &[FeatureWindow],
) -> Result<f64, QInferError> {
    if windows.is_empty() {
        return Err(QInferError::EmptySplit);
    }
    Ok(count_label_matches(fm, qm, windows) as f64 / windows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gru::{gru_step, Mat};
    use crate::quant::{dequantize_model, quantize_model, quantize_tensor};
    use crate::rng::XorShift64Star;
    use crate::trainer::init_model;

    fn random_window(rng: &mut XorShift64Star) -> FeatureWindow {
        let n = FRAMES_PER_WINDOW * BINS_PER_FRAME;
        FeatureWindow::new((0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn zero_layer(input: usize, hidden: usize) -> QuantLayerParams {
        QuantLayerParams {
            w_r: quantize_tensor(&Mat::zeros(hidden, input + hidden)).unwrap(),
            w_z: quantize_tensor(&Mat::zeros(hidden, input + hidden)).unwrap(),
            w_h: quantize_tensor(&Mat::zeros(hidden, input + hidden)).unwrap(),
        }
    }

    #[test]
    fn feature_quantization_examples() {
        let n = FRAMES_PER_WINDOW * BINS_PER_FRAME;
        let mut values = vec![0.0; n];
        values[0] = 0.5;
        values[1] = 1.0;
        values[2] = -1.0;
        let qw = quantize_features(&FeatureWindow::new(values).unwrap());
        assert_eq!(qw.values()[0].raw(), 16384);
        assert_eq!(qw.values()[1].raw(), 32767); // clamped below +1.0
        assert_eq!(qw.values()[2].raw(), -32768);
    }

    #[test]
    fn feature_round_trip_error_bounded() {
        let mut rng = XorShift64Star::new(2);
        let w = random_window(&mut rng);
        let qw = quantize_features(&w);
        for (&v, q) in w.values().iter().zip(qw.values()) {
            assert!((v - q.to_real()).abs() <= 2f64.powi(-16));
        }
    }

    #[test]
    fn zero_weight_step_halves_state() {
        let qp = zero_layer(2, 3);
        let x = [Q15::ZERO; 2];
        let h = [Q15(16384); 3];
        let out = qgru_step(&x, &h, &qp);
        assert!(out.iter().all(|q| q.raw() == 8192));
        let out0 = qgru_step(&x, &[Q15::ZERO; 3], &qp);
        assert!(out0.iter().all(|q| q.raw() == 0));
    }

    #[test]
    #[should_panic(expected = "input dimension")]
    fn step_rejects_wrong_input_len() {
        let qp = zero_layer(2, 3);
        qgru_step(&[Q15::ZERO; 3], &[Q15::ZERO; 3], &qp);
    }

    #[test]
    fn worst_case_accumulator_fits() {
        // densest row the architecture allows: 81 columns of |w| = 127
        // against |x| = 32768
        let w = Mat::from_vec(1, 81, vec![1.27; 81]).unwrap();
        let q = quantize_tensor(&w).unwrap();
        assert!(q.values().iter().all(|&v| v == 127));
        let acts = vec![Q15(-32768i16 as i16); 81];
        let acc = dot_row(&q, 0, &acts);
        assert_eq!(acc, 81 * 127 * -32768);
    }

    #[test]
    fn zero_model_forward_ties_to_class_zero() {
        let qm = quantize_model(&FloatModel::zeros()).unwrap();
        let mut rng = XorShift64Star::new(7);
        let qw = quantize_features(&random_window(&mut rng));
        let (label, scores) = qforward(&qw, &qm);
        assert_eq!(scores, [0, 0]);
        assert_eq!(label, 0);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = XorShift64Star::new(40);
        let fm = init_model(rng.next_u64());
        let qm = quantize_model(&fm).unwrap();
        let qw = quantize_features(&random_window(&mut rng));
        assert_eq!(qforward(&qw, &qm), qforward(&qw, &qm));
    }

    #[test]
    fn state_tracks_float_reference_within_tolerance() {
        // elementwise error vs the real-arithmetic oracle on dequantized
        // weights: bounded by 2^-8 after 15 steps, growing at most linearly
        for seed in [1u64, 2, 3, 4, 5] {
            let mut rng = XorShift64Star::new(seed);
            let fm = init_model(rng.next_u64());
            let qm = quantize_model(&fm).unwrap();
            let dq = dequantize_model(&qm);
            let w = random_window(&mut rng);
            let qw = quantize_features(&w);

            let mut h1q = vec![Q15::ZERO; 16];
            let mut h2q = vec![Q15::ZERO; 16];
            let mut h1f = vec![0.0; 16];
            let mut h2f = vec![0.0; 16];
            for t in 0..FRAMES_PER_WINDOW {
                h1q = qgru_step(qw.frame(t), &h1q, &qm.gru1);
                h2q = qgru_step(&h1q, &h2q, &qm.gru2);
                h1f = gru_step(w.frame(t), &h1f, &dq.net.gru1).unwrap();
                h2f = gru_step(&h1f, &h2f, &dq.net.gru2).unwrap();
                let step_err = h1q
                    .iter()
                    .zip(&h1f)
                    .chain(h2q.iter().zip(&h2f))
                    .map(|(q, f)| (q.to_real() - f).abs())
                    .fold(0.0f64, f64::max);
                assert!(
                    step_err <= (t + 1) as f64 * 2f64.powi(-11),
                    "seed {seed} step {t}: error {step_err}"
                );
                if t == FRAMES_PER_WINDOW - 1 {
                    assert!(step_err <= 2f64.powi(-8), "final error {step_err}");
                }
            }
        }
    }

    #[test]
    fn inference_never_reads_the_float_scales() {
        let mut rng = XorShift64Star::new(90);
        let fm = init_model(rng.next_u64());
        let qm = quantize_model(&fm).unwrap();
        let mut poisoned = qm.clone();
        poisoned.gru1.w_r.scale = f64::NAN;
        poisoned.gru1.w_z.scale = f64::NAN;
        poisoned.gru1.w_h.scale = f64::NAN;
        poisoned.gru2.w_r.scale = f64::NAN;
        poisoned.gru2.w_z.scale = f64::NAN;
        poisoned.gru2.w_h.scale = f64::NAN;
        poisoned.fc.scale = f64::NAN;
        poisoned.out.scale = f64::NAN;
        poisoned.norm_floor = f64::NAN;
        poisoned.norm_ceil = f64::NAN;
        for _ in 0..10 {
            let qw = quantize_features(&random_window(&mut rng));
            assert_eq!(qforward(&qw, &qm), qforward(&qw, &poisoned));
        }
    }

    #[test]
    fn state_never_saturates_from_zero_init() {
        let mut rng = XorShift64Star::new(33);
        let fm = init_model(rng.next_u64());
        let qm = quantize_model(&fm).unwrap();
        for _ in 0..20 {
            let qw = quantize_features(&random_window(&mut rng));
            let mut h1 = vec![Q15::ZERO; 16];
            let mut h2 = vec![Q15::ZERO; 16];
            for t in 0..FRAMES_PER_WINDOW {
                h1 = qgru_step(qw.frame(t), &h1, &qm.gru1);
                h2 = qgru_step(&h1, &h2, &qm.gru2);
                for q in h1.iter().chain(&h2) {
                    assert!(q.raw() > -32767 && q.raw() < 32767);
                }
            }
        }
    }

    #[test]
    fn agreement_mechanics() {
        let zero = FloatModel::zeros();
        let qzero = quantize_model(&zero).unwrap();
        let mut rng = XorShift64Star::new(8);
        let windows: Vec<FeatureWindow> = (0..6).map(|_| random_window(&mut rng)).collect();
        // both paths tie-break to class 0 everywhere
        assert_eq!(agreement(&zero, &qzero, &windows).unwrap(), 1.0);
        let one = agreement(&zero, &qzero, &windows[..1]).unwrap();
        assert!(one == 0.0 || one == 1.0);
        assert!(matches!(
            agreement(&zero, &qzero, &[]),
            Err(QInferError::EmptySplit)
        ));
    }
}
