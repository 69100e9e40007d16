//! Mask-weighted spatial covariances and the Souden-form MVDR beamformer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gss::cacgmm::MaskTensor;
use crate::stft::Spectrogram;

/// Target/noise covariance estimates per frequency bin.
#[derive(Debug, Clone)]
pub struct SpatialCovariances {
    pub target: Vec<DMatrix<Complex64>>,
    pub noise: Vec<DMatrix<Complex64>>,
    /// Bins where a mask summed to zero and the plain (unmasked) covariance
    /// was used instead.
    pub fallback: Vec<bool>,
}

/// MVDR solution: covariances, one weight vector per bin, and the reference
/// channel the distortionless constraint points at.
#[derive(Debug, Clone)]
pub struct BeamformerWeights {
    pub phi_target: Vec<DMatrix<Complex64>>,
    pub phi_noise: Vec<DMatrix<Complex64>>,
    pub w: Vec<DVector<Complex64>>,
    pub ref_channel: usize,
}

/// Mask-weighted covariance: sum_t m_t x x^H / sum_t m_t, Hermitian by
/// construction. Falls back to the unmasked average when the mask has no
/// mass at a bin.
fn masked_covariance(
    spec: &Spectrogram,
    f: usize,
    mask_at: impl Fn(usize) -> f64,
) -> (DMatrix<Complex64>, bool) {
    let d = spec.channels();
    let frames = spec.frames();
    let mut acc = DMatrix::<Complex64>::zeros(d, d);
    let mut mass = 0.0;
    for t in 0..frames {
        let m = mask_at(t);
        if m <= 0.0 {
            continue;
        }
        mass += m;
        for i in 0..d {
            let xi = spec.data[(i, t, f)];
            for j in 0..d {
                acc[(i, j)] += xi * spec.data[(j, t, f)].conj() * Complex64::new(m, 0.0);
            }
        }
    }
    if mass <= 0.0 {
        // Unmasked average over all frames.
        let mut fallback_acc = DMatrix::<Complex64>::zeros(d, d);
        for t in 0..frames {
            for i in 0..d {
                let xi = spec.data[(i, t, f)];
                for j in 0..d {
                    fallback_acc[(i, j)] += xi * spec.data[(j, t, f)].conj();
                }
            }
        }
        if frames > 0 {
            fallback_acc *= Complex64::new(1.0 / frames as f64, 0.0);
        }
        hermitize(&mut fallback_acc);
        return (fallback_acc, true);
    }
    acc *= Complex64::new(1.0 / mass, 0.0);
    hermitize(&mut acc);
    (acc, false)
}

fn hermitize(m: &mut DMatrix<Complex64>) {
    let adj = m.adjoint();
    *m += adj;
    *m *= Complex64::new(0.5, 0.0);
}

/// Target and complement-mask covariances for one mixture class.
pub fn spatial_covariances(
    spec: &Spectrogram,
    mask: &MaskTensor,
    target_k: usize,
) -> Result<SpatialCovariances> {
    if target_k + 1 >= mask.classes() {
        return Err(Error::InvalidInput(format!(
            "target class {target_k} must be a speaker class (of {} classes, last is noise)",
            mask.classes()
        )));
    }
    if mask.frames() != spec.frames() || mask.bins() != spec.bins() {
        return Err(Error::InvalidInput("mask shape does not match spectrogram".into()));
    }
    let bins = spec.bins();
    let mut target = Vec::with_capacity(bins);
    let mut noise = Vec::with_capacity(bins);
    let mut fallback = vec![false; bins];
    for f in 0..bins {
        let (phi_s, fb_s) = masked_covariance(spec, f, |t| mask.gamma[(target_k, t, f)]);
        let (phi_n, fb_n) = masked_covariance(spec, f, |t| 1.0 - mask.gamma[(target_k, t, f)]);
        fallback[f] = fb_s || fb_n;
        target.push(phi_s);
        noise.push(phi_n);
    }
    Ok(SpatialCovariances { target, noise, fallback })
}

/// Souden MVDR: w(f) = (Phi_n^{-1} Phi_s / trace(Phi_n^{-1} Phi_s)) e_ref.
///
/// `loading` scales the diagonal added to Phi_n relative to its mean
/// eigenvalue (trace/D), keeping the regularization scale-invariant. A bin
/// whose loaded Phi_n is still unusable (condition number above 1e12 or a
/// vanishing trace numerator) is an error carrying that bin index.
pub fn mvdr_souden(
    phi_target: &[DMatrix<Complex64>],
    phi_noise: &[DMatrix<Complex64>],
    ref_channel: usize,
    loading: f64,
) -> Result<BeamformerWeights> {
    if phi_target.len() != phi_noise.len() {
        return Err(Error::LengthMismatch { left: phi_target.len(), right: phi_noise.len() });
    }
    let d = phi_target.first().map(|m| m.nrows()).unwrap_or(0);
    if ref_channel >= d {
        return Err(Error::InvalidInput(format!(
            "reference channel {ref_channel} out of range for {d} channels"
        )));
    }

    let mut w = Vec::with_capacity(phi_target.len());
    for (f, (phi_s, phi_n)) in phi_target.iter().zip(phi_noise.iter()).enumerate() {
        let trace_n: f64 = (0..d).map(|i| phi_n[(i, i)].re).sum();
        let load = loading * (trace_n / d as f64).max(f64::MIN_POSITIVE);
        let mut loaded = phi_n.clone();
        for i in 0..d {
            loaded[(i, i)] += Complex64::new(load, 0.0);
        }
        let eig = loaded.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        if !(min > 0.0) || max / min > 1e12 {
            return Err(Error::SingularMatrix { freq: f, source_index: None });
        }
        let chol = nalgebra::Cholesky::new(loaded)
            .ok_or(Error::SingularMatrix { freq: f, source_index: None })?;
        let num = chol.solve(phi_s);
        let tr: Complex64 = (0..d).map(|i| num[(i, i)]).sum();
        if tr.norm() < 1e-300 {
            return Err(Error::SingularMatrix { freq: f, source_index: None });
        }
        let mut wf = DVector::<Complex64>::zeros(d);
        for i in 0..d {
            wf[i] = num[(i, ref_channel)] / tr;
        }
        if wf.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::SingularMatrix { freq: f, source_index: None });
        }
        w.push(wf);
    }
    Ok(BeamformerWeights {
        phi_target: phi_target.to_vec(),
        phi_noise: phi_noise.to_vec(),
        w,
        ref_channel,
    })
}

/// Apply beamformer weights: y(t, f) = w(f)^H x(t, f), a mono spectrogram.
pub fn apply_beamformer(spec: &Spectrogram, weights: &BeamformerWeights) -> Result<Spectrogram> {
    let d = spec.channels();
    let frames = spec.frames();
    let bins = spec.bins();
    if weights.w.len() != bins {
        return Err(Error::LengthMismatch { left: weights.w.len(), right: bins });
    }
    let mut data = ndarray::Array3::zeros((1, frames, bins));
    for f in 0..bins {
        let wf = &weights.w[f];
        for t in 0..frames {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..d {
                acc += wf[c].conj() * spec.data[(c, t, f)];
            }
            data[(0, t, f)] = acc;
        }
    }
    Ok(Spectrogram { data, config: spec.config, sample_rate: spec.sample_rate })
}
