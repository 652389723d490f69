//! Iterative radix-2 FFT, sized for the 128-point analysis frames.

use std::f64::consts::PI;

/// In-place radix-2 decimation-in-time FFT over split re/im buffers.
/// Length must be a power of two. Forward transform, no normalization.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len(), "fft: re/im length mismatch");
    assert!(n.is_power_of_two(), "fft: length {n} not a power of two");
    if n < 2 {
        return;
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i as u32).reverse_bits() >> (32 - bits);
        let j = j as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let angle = step * k as f64;
                let (wr, wi) = (angle.cos(), angle.sin());
                let i = start + k;
                let j = i + half;
                let tr = wr * re[j] - wi * im[j];
                let ti = wr * im[j] + wi * re[j];
                re[j] = re[i] - tr;
                im[j] = im[i] - ti;
                re[i] += tr;
                im[i] += ti;
            }
        }
        len *= 2;
    }
}

/// One-sided magnitude spectrum of a real frame: bins `0..=n/2`.
pub fn magnitudes_one_sided(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let mut re = frame.to_vec();
    let mut im = vec![0.0; n];
    fft_in_place(&mut re, &mut im);
    (0..=n / 2).map(|k| re[k].hypot(im[k])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force DFT magnitude oracle, O(N^2). Kept independent of the FFT.
    pub fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (t, &x) in frame.iter().enumerate() {
                    let angle = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn impulse_is_flat() {
        let mut frame = vec![0.0; 128];
        frame[0] = 1.0;
        for m in magnitudes_one_sided(&frame) {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_cosine_peaks_at_its_bin() {
        let frame: Vec<f64> = (0..128)
            .map(|n| (2.0 * PI * 8.0 * n as f64 / 128.0).cos())
            .collect();
        let mags = magnitudes_one_sided(&frame);
        assert!((mags[8] - 64.0).abs() < 1e-9);
        for (k, &m) in mags.iter().enumerate() {
            if k != 8 {
                assert!(m < 1e-9, "leakage at bin {k}: {m}");
            }
        }
    }

    #[test]
    fn matches_naive_dft_on_random_frames() {
        let mut rng = crate::rng::XorShift64Star::new(404);
        for _ in 0..20 {
            let frame: Vec<f64> = (0..128).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let fast = magnitudes_one_sided(&frame);
            let slow = dft_magnitudes(&frame);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = crate::rng::XorShift64Star::new(17);
        for _ in 0..10 {
            let frame: Vec<f64> = (0..128).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mags = magnitudes_one_sided(&frame);
            let time_energy: f64 = frame.iter().map(|x| x * x).sum();
            // reassemble the two-sided spectrum energy from one-sided bins
            let freq_energy = (mags[0].powi(2)
                + mags[64].powi(2)
                + 2.0 * mags[1..64].iter().map(|m| m * m).sum::<f64>())
                / 128.0;
            assert!(
                (time_energy - freq_energy).abs() <= 1e-6 * time_energy.max(1e-12),
                "{time_energy} vs {freq_energy}"
            );
        }
    }
}
