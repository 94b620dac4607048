//! Spectrally shaped `1/f^gamma` noise and the matching PSD estimators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::DevicePhysics;
use crate::scalar::Scalar;

/// Zero-mean real sequence whose one-sided PSD is `amp / f^gamma` (units^2/Hz).
///
/// White Gaussian spectrum shaped by `f^(-gamma/2)` with Hermitian symmetry;
/// the DC and Nyquist bins are left empty.
pub fn synthesize_power_law(n: usize, sample_rate: f64, amp: f64, gamma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    let df = sample_rate / n as f64;
    // E|X_k|^2 = S(f_k) * N * fs / 2 for each half of a conjugate pair.
    for k in 1..n.div_ceil(2) {
        let f = k as f64 * df;
        let s = (amp * f.powf(-gamma) * n as f64 * sample_rate / 4.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        spec[k] = Complex::new(s * re, s * im);
        spec[n - k] = spec[k].conj();
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spec);
    let inv_n = 1.0 / n as f64;
    spec.iter().map(|c| c.re * inv_n).collect()
}

/// One-sided periodogram. Returns `(frequencies, psd)` for bins `1..n/2`.
pub fn periodogram(x: &[f64], sample_rate: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = 2.0 / (n as f64 * sample_rate);
    (1..n / 2)
        .map(|k| (k as f64 * sample_rate / n as f64, buf[k].norm_sqr() * norm))
        .unzip()
}

/// Least-squares fit of `ln S = c - gamma * ln f` over `[f_lo, f_hi]`.
/// Returns `(gamma, c)`.
pub fn fit_power_law(freqs: &[f64], psd: &[f64], f_lo: f64, f_hi: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(psd)
        .filter(|(f, s)| **f >= f_lo && **f <= f_hi && **s > 0.0)
        .map(|(f, s)| (f.ln(), s.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (-slope, my - slope * mx)
}

/// Variance of the relative current fluctuation seen by a single read that
/// integrates the noise over `[noise_f_lo, noise_f_hi]`.
pub fn relative_noise_variance<T: Scalar>(phys: &DevicePhysics<T>) -> T {
    let g = phys.noise_exponent;
    let (lo, hi) = (phys.noise_f_lo, phys.noise_f_hi);
    let integral = if (g - T::one()).abs() < T::lit(1e-9) {
        (hi / lo).ln()
    } else {
        (hi.powf(T::one() - g) - lo.powf(T::one() - g)) / (T::one() - g)
    };
    phys.noise_amp / (phys.i_ref * phys.i_ref) * integral
}
