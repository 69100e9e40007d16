//! Auxiliary-function independent vector analysis with iterative-projection
//! updates and projection-back scaling.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::stft::{istft, stft, Spectrogram, StftConfig};

/// Floor applied to source activations before weighting covariances.
const R_FLOOR: f64 = 1e-8;

/// Demixing matrices per frequency plus the quantities the last iteration
/// computed them from.
#[derive(Debug, Clone)]
pub struct DemixingState {
    /// Demixing matrix per frequency; row n is w_n^H.
    pub w: Vec<DMatrix<Complex64>>,
    /// Weighted covariance per (frequency, source).
    pub v: Vec<Vec<DMatrix<Complex64>>>,
    /// Source activations r_(n,t) = sqrt(sum_f |y|^2).
    pub r: Array2<f64>,
}

/// Enhancement settings for [`iva_enhance`].
#[derive(Debug, Clone, Copy)]
pub struct IvaConfig {
    pub stft: StftConfig,
    pub iterations: usize,
    pub ref_channel: usize,
}

impl Default for IvaConfig {
    fn default() -> Self {
        Self { stft: StftConfig::default_16k(), iterations: 30, ref_channel: 0 }
    }
}

fn band_matrix(spec: &Spectrogram, f: usize) -> DMatrix<Complex64> {
    let d = spec.channels();
    let t = spec.frames();
    DMatrix::from_fn(d, t, |c, ti| spec.data[(c, ti, f)])
}

/// Source activations from the demixed bands: r_(n,t) = sqrt(sum_f |y|^2).
fn activations(y: &[DMatrix<Complex64>], sources: usize, frames: usize) -> Array2<f64> {
    let mut r = Array2::zeros((sources, frames));
    for yf in y {
        for n in 0..sources {
            for t in 0..frames {
                r[(n, t)] += yf[(n, t)].norm_sqr();
            }
        }
    }
    r.mapv_inplace(f64::sqrt);
    r
}

/// The maximum-likelihood objective under the time-domain Laplacian prior:
/// (2/T) sum r - 2 sum_f ln |det W_f|.
fn objective(w: &[DMatrix<Complex64>], r: &Array2<f64>, frames: usize) -> f64 {
    let contrast: f64 = r.iter().sum::<f64>() * 2.0 / frames as f64;
    let logdet: f64 = w.iter().map(|wf| wf.determinant().norm().ln()).sum();
    contrast - 2.0 * logdet
}

/// Run AuxIVA and also report the objective value before and after each
/// iteration (`iterations + 1` entries, non-increasing within 1e-9 relative).
pub fn auxiva_traced(
    spec: &Spectrogram,
    iterations: usize,
) -> Result<(Spectrogram, DemixingState, Vec<f64>)> {
    let d = spec.channels();
    let frames = spec.frames();
    let bins = spec.bins();
    if d < 2 {
        return Err(Error::InvalidInput("independent vector analysis needs >= 2 channels".into()));
    }
    if frames < d {
        return Err(Error::TooShort { got: frames, need: d });
    }

    let x: Vec<DMatrix<Complex64>> = (0..bins).map(|f| band_matrix(spec, f)).collect();
    let mut w: Vec<DMatrix<Complex64>> = vec![DMatrix::identity(d, d); bins];
    let mut y = x.clone();
    let mut v: Vec<Vec<DMatrix<Complex64>>> =
        vec![vec![DMatrix::zeros(d, d); d]; bins];

    let mut r = activations(&y, d, frames);
    let mut trace = vec![objective(&w, &r, frames)];

    for _ in 0..iterations {
        for n in 0..d {
            // Per-source weights shared across frequencies.
            let weights: Vec<f64> = (0..frames).map(|t| 1.0 / r[(n, t)].max(R_FLOOR)).collect();
            for f in 0..bins {
                let xf = &x[f];
                let mut vf = DMatrix::<Complex64>::zeros(d, d);
                for t in 0..frames {
                    let wt = Complex64::new(weights[t] / frames as f64, 0.0);
                    for i in 0..d {
                        let xi = xf[(i, t)] * wt;
                        for j in 0..d {
                            vf[(i, j)] += xi * xf[(j, t)].conj();
                        }
                    }
                }
                // Hermitian cleanup keeps the quadratic form real.
                let adj = vf.adjoint();
                vf += adj;
                vf *= Complex64::new(0.5, 0.0);

                let wn = ip_update(&w[f], &vf, n)
                    .map_err(|_| Error::SingularMatrix { freq: f, source_index: Some(n) })?;
                for j in 0..d {
                    w[f][(n, j)] = wn[j].conj();
                }
                v[f][n] = vf;
            }
        }
        for f in 0..bins {
            y[f] = &w[f] * &x[f];
        }
        r = activations(&y, d, frames);
        trace.push(objective(&w, &r, frames));
    }

    let mut data = ndarray::Array3::zeros((d, frames, bins));
    for f in 0..bins {
        for n in 0..d {
            for t in 0..frames {
                data[(n, t, f)] = y[f][(n, t)];
            }
        }
    }
    let demixed = Spectrogram { data, config: spec.config, sample_rate: spec.sample_rate };
    Ok((demixed, DemixingState { w, v, r }, trace))
}

/// Iterative-projection update for source n: solve (W V) w = e_n, then
/// normalize by sqrt(w^H V w). Retries once with diagonal loading.
fn ip_update(
    w: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    n: usize,
) -> std::result::Result<DVector<Complex64>, ()> {
    let d = v.nrows();
    let solve = |vm: &DMatrix<Complex64>| -> Option<DVector<Complex64>> {
        let a = w * vm;
        let mut e = DVector::<Complex64>::zeros(d);
        e[n] = Complex64::new(1.0, 0.0);
        let wn = a.lu().solve(&e)?;
        let denom = (wn.adjoint() * vm * &wn)[(0, 0)].re;
        if !(denom > 0.0) || !denom.is_finite() {
            return None;
        }
        let scaled = wn / Complex64::new(denom.sqrt(), 0.0);
        if scaled.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Some(scaled)
        } else {
            None
        }
    };
    if let Some(wn) = solve(v) {
        return Ok(wn);
    }
    // Diagonal-load relative to the trace and retry once.
    let tr: f64 = (0..d).map(|i| v[(i, i)].re).sum();
    let mut loaded = v.clone();
    let load = (tr / d as f64).abs().max(f64::MIN_POSITIVE) * 1e-8;
    for i in 0..d {
        loaded[(i, i)] += Complex64::new(load, 0.0);
    }
    solve(&loaded).ok_or(())
}

/// Run AuxIVA with identity initialization.
pub fn auxiva(spec: &Spectrogram, iterations: usize) -> Result<(Spectrogram, DemixingState)> {
    let (demixed, state, _) = auxiva_traced(spec, iterations)?;
    Ok((demixed, state))
}

/// Undo the per-frequency scale ambiguity: source n is scaled by
/// (W_f^{-1})[ref_channel, n], so the scaled sources sum back to the
/// reference channel of the input.
pub fn projection_back(
    demixed: &Spectrogram,
    state: &DemixingState,
    ref_channel: usize,
) -> Result<Spectrogram> {
    let d = demixed.channels();
    if d < 2 {
        return Err(Error::InvalidInput("independent vector analysis needs >= 2 channels".into()));
    }
    if ref_channel >= d {
        return Err(Error::InvalidInput(format!(
            "reference channel {ref_channel} out of range for {d} channels"
        )));
    }
    if state.w.len() != demixed.bins() {
        return Err(Error::LengthMismatch { left: state.w.len(), right: demixed.bins() });
    }
    let mut out = demixed.clone();
    for f in 0..demixed.bins() {
        let inv = state.w[f]
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMatrix { freq: f, source_index: None })?;
        for n in 0..d {
            let scale = inv[(ref_channel, n)];
            for t in 0..demixed.frames() {
                out.data[(n, t, f)] *= scale;
            }
        }
    }
    Ok(out)
}

/// Blind separation of a multi-channel recording into one mono stream per
/// channel, ordered by descending energy.
pub fn iva_enhance(audio: &AudioBuffer, config: &IvaConfig) -> Result<Vec<AudioBuffer>> {
    if audio.is_silent() {
        return Err(Error::SilentSignal("iva input".into()));
    }
    let spec = stft(audio, config.stft)?;
    let (demixed, state) = auxiva(&spec, config.iterations)?;
    let scaled = projection_back(&demixed, &state, config.ref_channel)?;

    let mut outs = Vec::with_capacity(scaled.channels());
    for n in 0..scaled.channels() {
        let mut mono = ndarray::Array3::zeros((1, scaled.frames(), scaled.bins()));
        for t in 0..scaled.frames() {
            for f in 0..scaled.bins() {
                mono[(0, t, f)] = scaled.data[(n, t, f)];
            }
        }
        let spec_n =
            Spectrogram { data: mono, config: scaled.config, sample_rate: scaled.sample_rate };
        let wav = istft(&spec_n)?.zero_pad_to(audio.num_samples());
        outs.push(wav.slice_samples(0, audio.num_samples()));
    }
    outs.sort_by(|a, b| b.energy().total_cmp(&a.energy()));
    Ok(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::Window;
    use ndarray::Array2 as NdArray2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    fn cfg() -> StftConfig {
        StftConfig::new(256, 128, 256, Window::SqrtHann).unwrap()
    }

    /// Independent sources with speech-like amplitude modulation: an
    /// envelope-modulated Laplacian process per channel.
    fn modulated_sources(channels: usize, n: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = NdArray2::zeros((channels, n));
        for c in 0..channels {
            let period = 800 + 400 * c;
            for t in 0..n {
                let e1: f64 = Exp1.sample(&mut rng);
                let e2: f64 = Exp1.sample(&mut rng);
                let laplace = e1 - e2;
                let env = 0.1
                    + (std::f64::consts::TAU * (t % period) as f64 / period as f64).sin().powi(2);
                data[(c, t)] = 0.2 * env * laplace;
            }
        }
        AudioBuffer::new(data, 16000).unwrap()
    }

    #[test]
    fn already_separated_input_keeps_identity_structure() {
        let audio = modulated_sources(3, 48000, 4);
        let spec = stft(&audio, cfg()).unwrap();
        let (_, state) = auxiva(&spec, 10).unwrap();
        for f in 2..spec.bins() - 2 {
            for n in 0..3 {
                let row: Vec<f64> = (0..3).map(|j| state.w[f][(n, j)].norm_sqr()).collect();
                let total: f64 = row.iter().sum();
                let off = (total - row[n]) / total;
                assert!(off < 0.05, "bin {f} source {n}: off-diagonal share {off}");
            }
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let audio = AudioBuffer::new(
            NdArray2::from_shape_fn((2, 8000), |_| rng.random_range(-0.5..0.5)),
            16000,
        )
        .unwrap();
        let spec = stft(&audio, cfg()).unwrap();
        let (_, _, trace) = auxiva_traced(&spec, 8).unwrap();
        for i in 1..trace.len() {
            let slack = 1e-9 * trace[i - 1].abs().max(1.0);
            assert!(
                trace[i] <= trace[i - 1] + slack,
                "iteration {i}: {} -> {}",
                trace[i - 1],
                trace[i]
            );
        }
    }

    #[test]
    fn projection_back_reconstructs_reference_channel() {
        let audio = modulated_sources(3, 12000, 5);
        // Mix instantaneously so W converges away from identity.
        let mix = NdArray2::from_shape_vec(
            (3, 3),
            vec![1.0, 0.4, -0.3, -0.5, 1.0, 0.2, 0.3, -0.6, 1.0],
        )
        .unwrap();
        let mixed = AudioBuffer::new(mix.dot(audio.samples()), 16000).unwrap();
        let spec = stft(&mixed, cfg()).unwrap();
        let (demixed, state) = auxiva(&spec, 6).unwrap();
        for ref_channel in [0, 2] {
            let scaled = projection_back(&demixed, &state, ref_channel).unwrap();
            for t in 0..spec.frames() {
                for f in 0..spec.bins() {
                    let sum: Complex64 = (0..3).map(|n| scaled.data[(n, t, f)]).sum();
                    let x = spec.data[(ref_channel, t, f)];
                    assert!(
                        (sum - x).norm() <= 1e-6 * x.norm().max(1e-9),
                        "({t}, {f}): {sum} vs {x}"
                    );
                }
            }
        }
    }

    #[test]
    fn enhance_is_deterministic_and_rejects_silence() {
        let audio = modulated_sources(2, 9000, 6);
        let mix = NdArray2::from_shape_vec((2, 2), vec![1.0, 0.6, -0.4, 1.0]).unwrap();
        let mixed = AudioBuffer::new(mix.dot(audio.samples()), 16000).unwrap();
        let config = IvaConfig { stft: cfg(), iterations: 5, ref_channel: 0 };
        let a = iva_enhance(&mixed, &config).unwrap();
        let b = iva_enhance(&mixed, &config).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].num_samples(), mixed.num_samples());
        for (x, y) in a.iter().zip(b.iter()) {
            for (p, q) in x.channel(0).iter().zip(y.channel(0).iter()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
        assert!(a[0].energy() >= a[1].energy());

        let silent = AudioBuffer::zeros(2, 9000, 16000);
        assert!(matches!(iva_enhance(&silent, &config), Err(Error::SilentSignal(_))));
    }

    #[test]
    fn one_channel_is_rejected() {
        let audio = modulated_sources(1, 4000, 7);
        let spec = stft(&audio, cfg()).unwrap();
        assert!(auxiva(&spec, 2).is_err());
    }
}
