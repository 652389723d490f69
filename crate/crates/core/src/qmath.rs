//! Q15 fixed-point arithmetic and the integer activation kernels used by the
//! quantized inference path.
//!
//! A [`Q15`] holds a 16-bit signed raw value interpreted as `raw / 32768`,
//! covering `[-1, 1 - 2^-15]`. [`AccQ15`] is a 32-bit accumulator on the same
//! scale, used for matrix-accumulate results before an activation. All
//! kernels are total, deterministic, and touch only integer registers, so
//! results are bit-identical on any platform.

/// One Q15 unit: 2^15 raw steps per 1.0.
pub const Q15_ONE: i32 = 1 << 15;

/// 16-bit signed fixed point, value = `raw / 32768`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Q15(pub i16);

impl Q15 {
    pub const ZERO: Q15 = Q15(0);

    pub fn raw(self) -> i16 {
        self.0
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / Q15_ONE as f64
    }
}

/// 32-bit accumulator interpreted on the Q15 scale (value = `raw / 32768`).
///
/// Kernels that consume an accumulator require `|raw| < 2^30`; the inference
/// engine asserts this bound structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccQ15(pub i32);

impl AccQ15 {
    pub fn raw(self) -> i32 {
        self.0
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / Q15_ONE as f64
    }
}

/// Largest accumulator magnitude the activation kernels accept.
pub const ACC_LIMIT: i32 = 1 << 30;

/// Converts a real value to Q15: round half away from zero of `x * 32768`,
/// clamped to the representable range (so `1.0` saturates to `32767`).
///
/// Panics if `x` is NaN or infinite.
pub fn q15_from_real(x: f64) -> Q15 {
    assert!(x.is_finite(), "q15_from_real: non-finite input {x}");
    let scaled = x * Q15_ONE as f64;
    // f64::round rounds half away from zero.
    let r = scaled.round();
    let clamped = r.clamp(i16::MIN as f64, i16::MAX as f64);
    Q15(clamped as i16)
}

/// Saturating Q15 multiply: `(a*b + 16384) >> 15`, clamped to the i16 range.
pub fn q15_mul(a: Q15, b: Q15) -> Q15 {
    let prod = a.0 as i32 * b.0 as i32;
    let shifted = (prod + (1 << 14)) >> 15;
    Q15(shifted.clamp(i16::MIN as i32, i16::MAX as i32) as i16)
}

/// Soft-sign on the accumulator scale: `x / (1 + |x|)` in real terms, i.e.
/// `x * 32768 / (32768 + |x|)` on raw values, division truncated toward zero.
/// The result is always strictly inside (-32768, 32768).
///
/// Panics if `|x.raw| >= 2^30` (accumulator overflow precondition).
pub fn softsign_q(x: AccQ15) -> Q15 {
    assert!(
        x.0.abs() < ACC_LIMIT,
        "softsign_q: accumulator {} out of range",
        x.0
    );
    let n = x.0 as i64 * Q15_ONE as i64;
    let d = Q15_ONE as i64 + (x.0 as i64).abs();
    Q15((n / d) as i16)
}

/// Gate form of the soft-sign: `(softsign_q(x) + 32768) >> 1`, mapping onto
/// `[0, 32767]` (semantic value in (0, 1)).
pub fn shifted_softsign_q(x: AccQ15) -> Q15 {
    let s = softsign_q(x).0 as i32;
    Q15(((s + Q15_ONE) >> 1) as i16)
}

/// Integer requantization: round-half-away-from-zero of `acc * mult / 2^shift`
/// through a 64-bit intermediate. `mult`/`shift` encode a positive real scale
/// (see the quantizer); the pair must satisfy `mult ∈ [2^29, 2^31)` and
/// `shift ∈ [0, 62]`.
pub fn rescale(acc: i32, mult: i32, shift: u32) -> AccQ15 {
    assert!(shift <= 62, "rescale: shift {shift} out of range");
    assert!(
        (1 << 29..1i64 << 31).contains(&(mult as i64)),
        "rescale: mult {mult} out of range"
    );
    let prod = acc as i64 * mult as i64;
    let rounded = if shift == 0 {
        prod
    } else {
        let half = 1i64 << (shift - 1);
        if prod >= 0 {
            (prod + half) >> shift
        } else {
            -((-prod + half) >> shift)
        }
    };
    AccQ15(rounded.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

/// State blend `h̃ + z*(h_prev - h̃)` with the difference held in 32 bits:
/// the Q15 difference of two states can reach ±2.0, which must not be
/// saturated before the gate multiply or the blend would no longer track the
/// real-arithmetic update. The product rounds like [`q15_mul`] and the final
/// add saturates to Q15.
pub fn q15_blend(h_tilde: Q15, z: Q15, h_prev: Q15) -> Q15 {
    let diff = h_prev.0 as i32 - h_tilde.0 as i32;
    let scaled = ((z.0 as i64 * diff as i64 + (1 << 14)) >> 15) as i32;
    let sum = h_tilde.0 as i32 + scaled;
    Q15(sum.clamp(i16::MIN as i32, i16::MAX as i32) as i16)
}

/// Real-valued soft-sign, the reference the integer kernel approximates.
pub fn softsign_real(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn from_real_endpoints() {
        assert_eq!(q15_from_real(0.5).raw(), 16384);
        assert_eq!(q15_from_real(1.0).raw(), 32767);
        assert_eq!(q15_from_real(-1.0).raw(), -32768);
        assert_eq!(q15_from_real(0.0).raw(), 0);
        assert_eq!(q15_from_real(2.0).raw(), 32767);
        assert_eq!(q15_from_real(-2.0).raw(), -32768);
    }

    #[test]
    fn from_real_rounds_half_away_from_zero() {
        // 0.5/32768 exactly between 0 and 1 raw units
        assert_eq!(q15_from_real(0.5 / 32768.0).raw(), 1);
        assert_eq!(q15_from_real(-0.5 / 32768.0).raw(), -1);
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn from_real_rejects_nan() {
        q15_from_real(f64::NAN);
    }

    #[test]
    fn mul_examples() {
        assert_eq!(q15_mul(Q15(16384), Q15(16384)).raw(), 8192);
        assert_eq!(q15_mul(Q15(12345), Q15(0)).raw(), 0);
        assert_eq!(q15_mul(Q15(-32768), Q15(-32768)).raw(), 32767);
    }

    #[test]
    fn softsign_examples() {
        assert_eq!(softsign_q(AccQ15(0)).raw(), 0);
        assert_eq!(softsign_q(AccQ15(32768)).raw(), 16384);
        assert_eq!(softsign_q(AccQ15(98304)).raw(), 24576);
        assert_eq!(softsign_q(AccQ15(-98304)).raw(), -24576);
    }

    #[test]
    fn shifted_softsign_examples() {
        assert_eq!(shifted_softsign_q(AccQ15(0)).raw(), 16384);
        assert_eq!(shifted_softsign_q(AccQ15(98304)).raw(), 28672);
        assert_eq!(shifted_softsign_q(AccQ15(-98304)).raw(), 4096);
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale(1000, 1 << 30, 30).raw(), 1000);
        // 3 * 2^30 / 2^31 = 1.5 rounds away from zero to 2
        assert_eq!(rescale(3, 1 << 30, 31).raw(), 2);
        assert_eq!(rescale(-3, 1 << 30, 31).raw(), -2);
        assert_eq!(rescale(0, 1 << 30, 40).raw(), 0);
    }

    #[test]
    #[should_panic(expected = "shift")]
    fn rescale_rejects_large_shift() {
        rescale(1, 1 << 30, 63);
    }

    #[test]
    #[should_panic(expected = "accumulator")]
    fn softsign_rejects_overflow() {
        softsign_q(AccQ15(ACC_LIMIT));
    }

    #[test]
    fn softsign_accuracy_sweep() {
        // module-level sweep; the acceptance suite runs a denser one
        let mut x = -(1 << 20);
        while x <= (1 << 20) {
            let q = softsign_q(AccQ15(x)).to_real();
            let r = softsign_real(x as f64 / Q15_ONE as f64);
            assert!(
                (q - r).abs() <= 2f64.powi(-14),
                "softsign_q off at {x}: {q} vs {r}"
            );
            x += 97;
        }
    }

    #[test]
    fn softsign_is_odd() {
        for x in (-(1 << 22)..=(1 << 22)).step_by(1013) {
            let p = softsign_q(AccQ15(x)).raw() as i32;
            let n = softsign_q(AccQ15(-x)).raw() as i32;
            assert_eq!(p, -n, "odd symmetry broken at {x}");
        }
    }

    #[test]
    fn shifted_softsign_near_complement() {
        for x in (-(1 << 22)..=(1 << 22)).step_by(997) {
            let a = shifted_softsign_q(AccQ15(x)).raw() as i32;
            let b = shifted_softsign_q(AccQ15(-x)).raw() as i32;
            assert!(
                a + b == 32767 || a + b == 32768,
                "complement {a}+{b} at {x}"
            );
        }
    }

    #[test]
    fn blend_mirrors_real_update() {
        // zero-gate and mid-gate sanity points
        assert_eq!(q15_blend(Q15(0), Q15(16384), Q15(16384)).raw(), 8192);
        assert_eq!(q15_blend(Q15(100), Q15(0), Q15(30000)).raw(), 100);
        // diff beyond ±1.0 must still blend correctly
        let h = q15_blend(Q15(-29000), Q15(16384), Q15(29000));
        let real = -29000.0 / 32768.0 + 0.5 * (29000.0 / 32768.0 + 29000.0 / 32768.0);
        assert!((h.to_real() - real).abs() < 2e-4);
    }

    proptest! {
        #[test]
        fn mul_commutes(a in i16::MIN..=i16::MAX, b in i16::MIN..=i16::MAX) {
            prop_assert_eq!(q15_mul(Q15(a), Q15(b)), q15_mul(Q15(b), Q15(a)));
        }

        #[test]
        fn mul_monotone_in_first_arg(
            a in -20000i16..20000,
            b in 0i16..20000,
            c in 0i16..2000,
        ) {
            // non-saturating region, non-negative second argument
            let lo = q15_mul(Q15(a), Q15(b)).raw();
            let hi = q15_mul(Q15(a.saturating_add(c)), Q15(b)).raw();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn rescale_tracks_float_oracle(
            acc in -(1i32 << 30)..(1i32 << 30),
            scale_log2 in -20f64..0f64,
        ) {
            let scale = scale_log2.exp2();
            let (mult, shift) = crate::quant::derive_mult_shift(scale).unwrap();
            let got = rescale(acc, mult, shift).raw() as f64;
            let want = acc as f64 * scale;
            prop_assert!((got - want).abs() <= 1.0, "{got} vs {want}");
        }
    }
}
