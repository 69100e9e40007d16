//! Small shared DSP helpers: FFT convolution, stable sums, seed hashing.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Full linear convolution via FFT (output length a + b - 1).
pub fn fft_convolve(a: &[f64], b: &[f64], out_len: Option<usize>) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![0.0; out_len.unwrap_or(0)];
    }
    let full = a.len() + b.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let mut fa: Vec<Complex64> = a
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut fb: Vec<Complex64> = b
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut fa);
    fft.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y;
    }
    ifft.process(&mut fa);
    let scale = 1.0 / n as f64;
    let take = out_len.unwrap_or(full).min(full);
    let mut out: Vec<f64> = fa[..take].iter().map(|c| c.re * scale).collect();
    out.resize(out_len.unwrap_or(full), 0.0);
    out
}

/// Sum complex values in a canonical order so the result is bit-identical
/// under any permutation of the inputs.
///
/// Sort key is the (re, im) pair of each term; ties are exact duplicates, so
/// their order cannot change the sum.
pub fn sorted_sum_complex(values: &mut Vec<Complex64>) -> Complex64 {
    values.sort_by(|a, b| {
        a.re.total_cmp(&b.re).then_with(|| a.im.total_cmp(&b.im))
    });
    values.iter().fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
}

/// Sum reals in a canonical order (bit-identical under input permutation).
pub fn sorted_sum(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}

/// FNV-1a 64-bit hash, used to derive per-entry RNG seeds from string keys.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from a base seed and a string label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut buf = base.to_le_bytes().to_vec();
    buf.extend_from_slice(label.as_bytes());
    fnv1a64(&buf)
}
