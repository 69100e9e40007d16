//! Complex angular central Gaussian mixture model fit by EM, with class
//! posteriors constrained by a speaker-activity matrix.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dsp::sorted_sum;
use crate::error::{Error, Result};
use crate::gss::activity::ActivityMatrix;
use crate::stft::Spectrogram;

/// Mixture parameters: simplex weights per (class, frequency) and Hermitian
/// positive-definite shape matrices per (frequency, class).
#[derive(Debug, Clone)]
pub struct CacgmmState {
    pub weights: Array2<f64>,
    pub shapes: Vec<Vec<DMatrix<Complex64>>>,
}

impl CacgmmState {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bins(&self) -> usize {
        self.weights.ncols()
    }
}

/// Class posteriors gamma (K x T x F); a simplex over classes at every
/// time-frequency point, exactly zero wherever the class is inactive.
#[derive(Debug, Clone)]
pub struct MaskTensor {
    pub gamma: Array3<f64>,
}

impl MaskTensor {
    pub fn classes(&self) -> usize {
        self.gamma.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.gamma.shape()[1]
    }

    pub fn bins(&self) -> usize {
        self.gamma.shape()[2]
    }
}

/// Unit-norm observation directions for one frequency band: matrix of the
/// z vectors (D x T) plus which frames carried nonzero energy.
struct BandData {
    z: DMatrix<Complex64>,
    frame_index: Vec<usize>,
}

fn band_data(spec: &Spectrogram, f: usize) -> BandData {
    let d = spec.channels();
    let t_all = spec.frames();
    let mut cols = Vec::with_capacity(t_all);
    let mut frame_index = Vec::with_capacity(t_all);
    for t in 0..t_all {
        let mut v = DVector::<Complex64>::zeros(d);
        for c in 0..d {
            v[c] = spec.data[(c, t, f)];
        }
        let norm = v.norm();
        if norm > 0.0 {
            frame_index.push(t);
            cols.push(v / Complex64::new(norm, 0.0));
        }
    }
    let z = if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    BandData { z, frame_index }
}

/// log pdf pieces for one class over all band frames: returns (log numerator
/// per frame, quadratic form q per frame). Inactive frames get NEG_INFINITY.
fn class_scores(
    z: &DMatrix<Complex64>,
    shape: &DMatrix<Complex64>,
    weight: f64,
    active: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = z.nrows();
    let t = z.ncols();
    let chol = nalgebra::Cholesky::new(shape.clone())
        .ok_or(Error::SingularMatrix { freq: 0, source_index: None })?;
    let mut logdet = 0.0;
    for i in 0..d {
        logdet += 2.0 * chol.l_dirty()[(i, i)].re.ln();
    }
    let solved = chol.solve(z);
    let log_weight = if weight > 0.0 { weight.ln() } else { f64::NEG_INFINITY };
    let mut lognum = vec![f64::NEG_INFINITY; t];
    let mut q = vec![1.0; t];
    for ti in 0..t {
        let mut acc = 0.0;
        for di in 0..d {
            acc += (z[(di, ti)].conj() * solved[(di, ti)]).re;
        }
        let qv = acc.max(1e-300);
        q[ti] = qv;
        if active[ti] {
            lognum[ti] = log_weight - logdet - d as f64 * qv.ln();
        }
    }
    Ok((lognum, q))
}

struct BandFit {
    weights: Vec<f64>,
    shapes: Vec<DMatrix<Complex64>>,
    loglik: Vec<f64>,
}

/// EM for one frequency band.
fn em_band(
    band: &BandData,
    activity: &ActivityMatrix,
    iterations: usize,
    epsilon: f64,
) -> Result<BandFit> {
    let d = band.z.nrows();
    let t = band.z.ncols();
    let k_classes = activity.classes();
    // Per-class activity restricted to the frames kept in this band.
    let active: Vec<Vec<bool>> = (0..k_classes)
        .map(|k| band.frame_index.iter().map(|&ti| activity.active[(k, ti)]).collect())
        .collect();

    let mut weights = vec![1.0 / k_classes as f64; k_classes];
    let mut shapes = vec![DMatrix::<Complex64>::identity(d, d); k_classes];
    let mut loglik = Vec::with_capacity(iterations);
    // Normalizer of the angular density on the complex unit sphere.
    let log_norm = ln_gamma(d as f64) - (d as f64) * std::f64::consts::PI.ln()
        - std::f64::consts::LN_2;

    for _ in 0..iterations {
        // E-step under current parameters.
        let mut lognum = Vec::with_capacity(k_classes);
        let mut quad = Vec::with_capacity(k_classes);
        for k in 0..k_classes {
            let (ln_k, q_k) = class_scores(&band.z, &shapes[k], weights[k], &active[k])?;
            lognum.push(ln_k);
            quad.push(q_k);
        }
        let mut gamma = Array2::<f64>::zeros((k_classes, t));
        let mut ll = 0.0;
        for ti in 0..t {
            let m = (0..k_classes)
                .map(|k| lognum[k][ti])
                .fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                continue; // no active class: frame carries no statistics
            }
            // Order-invariant summation keeps results bit-identical under
            // any relabeling of the classes.
            let terms: Vec<f64> =
                (0..k_classes).map(|k| (lognum[k][ti] - m).exp()).collect();
            let denom = sorted_sum(&mut terms.clone());
            for k in 0..k_classes {
                gamma[(k, ti)] = terms[k] / denom;
            }
            ll += m + denom.ln() + log_norm;
        }
        loglik.push(ll);

        // M-step: weights by mean posterior over the frames that carried
        // statistics, shapes by the weighted outer products scaled with the
        // previous quadratic forms.
        let masses: Vec<f64> = (0..k_classes)
            .map(|k| (0..t).map(|ti| gamma[(k, ti)]).sum())
            .collect();
        let contributing = sorted_sum(&mut masses.clone());
        for k in 0..k_classes {
            let mass = masses[k];
            weights[k] = if contributing > 0.0 { mass / contributing } else { 0.0 };
            if mass <= 0.0 {
                continue;
            }
            let mut scaled = band.z.clone();
            for ti in 0..t {
                let c = (gamma[(k, ti)] / quad[k][ti]).sqrt();
                for di in 0..d {
                    scaled[(di, ti)] *= Complex64::new(c, 0.0);
                }
            }
            let mut b = &scaled * scaled.adjoint();
            b *= Complex64::new(d as f64 / mass, 0.0);
            hermitize(&mut b);
            let tr: f64 = (0..d).map(|i| b[(i, i)].re).sum();
            if tr > 0.0 {
                b *= Complex64::new(d as f64 / tr, 0.0);
            }
            // Diagonal loading relative to the (normalized) trace.
            let load = epsilon * d as f64;
            for i in 0..d {
                b[(i, i)] += Complex64::new(load, 0.0);
            }
            shapes[k] = b;
        }
    }
    Ok(BandFit { weights, shapes, loglik })
}

/// Average the matrix with its adjoint so it is Hermitian to the last bit.
fn hermitize(m: &mut DMatrix<Complex64>) {
    let adj = m.adjoint();
    *m += adj;
    *m *= Complex64::new(0.5, 0.0);
}

/// ln Gamma for integer-ish positive arguments via the factorial.
fn ln_gamma(x: f64) -> f64 {
    let n = x.round() as u64;
    (1..n).map(|i| (i as f64).ln()).sum()
}

/// Fit the activity-guided mixture model. Returns the state and the
/// per-band log-likelihood trace (bins x iterations), which is
/// non-decreasing per band up to 1e-6 relative slack.
pub fn em_fit(
    spec: &Spectrogram,
    activity: &ActivityMatrix,
    iterations: usize,
    epsilon: f64,
) -> Result<(CacgmmState, Array2<f64>)> {
    let d = spec.channels();
    let k_classes = activity.classes();
    if d < 2 {
        return Err(Error::InvalidInput("mixture model needs at least 2 channels".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidInput("need at least one EM iteration".into()));
    }
    if activity.frames() != spec.frames() {
        return Err(Error::LengthMismatch { left: activity.frames(), right: spec.frames() });
    }
    if k_classes > d + 6 {
        log::warn!("{k_classes} classes with only {d} channels; masks may be unreliable");
    }

    let bins = spec.bins();
    let fits: Vec<BandFit> = (0..bins)
        .into_par_iter()
        .map(|f| {
            em_band(&band_data(spec, f), activity, iterations, epsilon).map_err(|e| match e {
                Error::SingularMatrix { source_index, .. } => {
                    Error::SingularMatrix { freq: f, source_index }
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut weights = Array2::zeros((k_classes, bins));
    let mut shapes = Vec::with_capacity(bins);
    let mut trace = Array2::zeros((bins, iterations));
    for (f, fit) in fits.into_iter().enumerate() {
        for k in 0..k_classes {
            weights[(k, f)] = fit.weights[k];
        }
        for (i, &ll) in fit.loglik.iter().enumerate() {
            trace[(f, i)] = ll;
        }
        shapes.push(fit.shapes);
    }
    Ok((CacgmmState { weights, shapes }, trace))
}

/// Posterior masks under a fitted state. Frames without energy at a band are
/// attributed entirely to the noise class.
pub fn posterior_masks(
    spec: &Spectrogram,
    activity: &ActivityMatrix,
    state: &CacgmmState,
) -> Result<MaskTensor> {
    let k_classes = activity.classes();
    let frames = spec.frames();
    let bins = spec.bins();
    if activity.frames() != frames {
        return Err(Error::LengthMismatch { left: activity.frames(), right: frames });
    }

    let per_band: Vec<Array2<f64>> = (0..bins)
        .into_par_iter()
        .map(|f| -> Result<Array2<f64>> {
            let band = band_data(spec, f);
            let t = band.z.ncols();
            let active: Vec<Vec<bool>> = (0..k_classes)
                .map(|k| band.frame_index.iter().map(|&ti| activity.active[(k, ti)]).collect())
                .collect();
            let mut scores = Vec::with_capacity(k_classes);
            for k in 0..k_classes {
                let (ln_k, _) =
                    class_scores(&band.z, &state.shapes[f][k], state.weights[(k, f)], &active[k])
                        .map_err(|_| Error::SingularMatrix { freq: f, source_index: Some(k) })?;
                scores.push(ln_k);
            }
            // Default: all mass on the noise class (covers skipped frames).
            let mut gamma = Array2::zeros((k_classes, frames));
            for t_all in 0..frames {
                gamma[(k_classes - 1, t_all)] = 1.0;
            }
            for ti in 0..t {
                let m = (0..k_classes)
                    .map(|k| scores[k][ti])
                    .fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    continue;
                }
                let terms: Vec<f64> =
                    (0..k_classes).map(|k| (scores[k][ti] - m).exp()).collect();
                let denom = sorted_sum(&mut terms.clone());
                let t_all = band.frame_index[ti];
                for k in 0..k_classes {
                    gamma[(k, t_all)] = terms[k] / denom;
                }
            }
            Ok(gamma)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut gamma = Array3::zeros((k_classes, frames, bins));
    for (f, band_gamma) in per_band.into_iter().enumerate() {
        for k in 0..k_classes {
            for t in 0..frames {
                gamma[(k, t, f)] = band_gamma[(k, t)];
            }
        }
    }
    Ok(MaskTensor { gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::stft::{stft, StftConfig, Window};
    use ndarray::Array2 as NdArray2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn noise_spec(channels: usize, samples: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = NdArray2::from_shape_fn((channels, samples), |_| rng.random_range(-0.5..0.5));
        let audio = AudioBuffer::new(data, 16000).unwrap();
        stft(&audio, StftConfig::new(128, 64, 128, Window::SqrtHann).unwrap()).unwrap()
    }

    fn all_on(classes: usize, frames: usize) -> ActivityMatrix {
        ActivityMatrix {
            active: NdArray2::from_elem((classes, frames), true),
            speakers: (0..classes - 1).map(|k| format!("spk{k}")).collect(),
        }
    }

    #[test]
    fn single_class_posterior_is_one_and_fixed_point_is_constant() {
        // Alternating orthonormal directions make mean(zz^H) = I/D, so the
        // very first M-step lands on the stationary point B = I and the
        // likelihood stays constant afterwards.
        let d = 2;
        let t = 40;
        let f = 3;
        let mut data = ndarray::Array3::zeros((d, t, f));
        for ti in 0..t {
            data[(ti % 2, ti, 1)] = Complex64::new(1.0, 0.0);
            data[(ti % 2, ti, 0)] = Complex64::new(0.7, 0.0);
            data[(ti % 2, ti, 2)] = Complex64::new(-0.2, 0.3);
        }
        let spec = Spectrogram {
            data,
            config: StftConfig::new(4, 2, 4, Window::SqrtHann).unwrap(),
            sample_rate: 16000,
        };
        let act = all_on(1, t);
        let (state, trace) = em_fit(&spec, &act, 5, 1e-10).unwrap();
        let masks = posterior_masks(&spec, &act, &state).unwrap();
        assert!(masks.gamma.iter().all(|&g| (g - 1.0).abs() < 1e-12));
        for f_i in 0..3 {
            for i in 2..5 {
                assert!(
                    (trace[(f_i, i)] - trace[(f_i, 1)]).abs() < 1e-9,
                    "band {f_i}: trace {:?}",
                    (0..5).map(|j| trace[(f_i, j)]).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn loglik_monotone_on_random_problems() {
        for seed in 0..10 {
            let spec = noise_spec(3, 2000, seed);
            let act = all_on(2, spec.frames());
            let (_, trace) = em_fit(&spec, &act, 10, 1e-10).unwrap();
            for f in 0..spec.bins() {
                for i in 1..10 {
                    let prev = trace[(f, i - 1)];
                    let cur = trace[(f, i)];
                    let slack = 1e-6 * prev.abs().max(1.0);
                    assert!(cur >= prev - slack, "seed {seed} band {f} iter {i}: {prev} -> {cur}");
                }
            }
        }
    }

    #[test]
    fn masks_form_simplex_and_respect_guides() {
        let spec = noise_spec(3, 1500, 99);
        let t = spec.frames();
        let mut act = all_on(3, t);
        for ti in 0..t / 2 {
            act.active[(0, ti)] = false;
        }
        let (state, _) = em_fit(&spec, &act, 5, 1e-10).unwrap();
        let masks = posterior_masks(&spec, &act, &state).unwrap();
        for ti in 0..t {
            for f in 0..spec.bins() {
                let sum: f64 = (0..3).map(|k| masks.gamma[(k, ti, f)]).sum();
                assert!((sum - 1.0).abs() < 1e-6, "simplex at ({ti}, {f}): {sum}");
            }
        }
        for ti in 0..t / 2 {
            for f in 0..spec.bins() {
                assert_eq!(masks.gamma[(0, ti, f)], 0.0, "guided zero at ({ti}, {f})");
            }
        }
    }

    #[test]
    fn relabeling_classes_permutes_masks_bit_identically() {
        let spec = noise_spec(4, 1500, 7);
        let t = spec.frames();
        let mut act = all_on(3, t);
        for ti in 0..t / 3 {
            act.active[(0, ti)] = false;
        }
        for ti in t / 3..t {
            act.active[(1, ti)] = false;
        }
        // Swap the two speaker rows.
        let mut swapped = act.clone();
        for ti in 0..t {
            let a = act.active[(0, ti)];
            swapped.active[(0, ti)] = act.active[(1, ti)];
            swapped.active[(1, ti)] = a;
        }
        let (s1, _) = em_fit(&spec, &act, 6, 1e-10).unwrap();
        let (s2, _) = em_fit(&spec, &swapped, 6, 1e-10).unwrap();
        let m1 = posterior_masks(&spec, &act, &s1).unwrap();
        let m2 = posterior_masks(&spec, &swapped, &s2).unwrap();
        for ti in 0..t {
            for f in 0..spec.bins() {
                let a = m1.gamma[(0, ti, f)];
                let b = m2.gamma[(1, ti, f)];
                assert_eq!(a.to_bits(), b.to_bits(), "mask bits differ at ({ti}, {f})");
                let a2 = m1.gamma[(2, ti, f)];
                let b2 = m2.gamma[(2, ti, f)];
                assert_eq!(a2.to_bits(), b2.to_bits());
            }
        }
    }

    #[test]
    fn weights_stay_on_simplex() {
        let spec = noise_spec(2, 1200, 3);
        let act = all_on(2, spec.frames());
        let (state, _) = em_fit(&spec, &act, 8, 1e-10).unwrap();
        for f in 0..state.bins() {
            let sum: f64 = (0..state.classes()).map(|k| state.weights[(k, f)]).sum();
            assert!((sum - 1.0).abs() < 1e-9, "band {f}: {sum}");
        }
    }
}
