//! Image-source room impulse responses and far-field scene simulation.

use ndarray::Array2;

use crate::audio::AudioBuffer;
use crate::dsp::fft_convolve;
use crate::error::{Error, Result};

/// Shoebox room with uniform wall absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub absorption: f64,
    pub max_order: usize,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
}

impl RoomSpec {
    pub fn new(
        dimensions: [f64; 3],
        absorption: f64,
        max_order: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        if dimensions.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidInput(format!("room dimensions must be positive: {dimensions:?}")));
        }
        if !(absorption > 0.0 && absorption <= 1.0) {
            return Err(Error::InvalidInput(format!("absorption {absorption} outside (0, 1]")));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        Ok(Self { dimensions, absorption, max_order, speed_of_sound: 343.0, sample_rate })
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        p.iter().zip(self.dimensions.iter()).all(|(&x, &l)| x > 0.0 && x < l)
    }
}

/// Source and microphone positions inside a room.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePlacement {
    pub sources: Vec<[f64; 3]>,
    pub microphones: Vec<[f64; 3]>,
}

impl ScenePlacement {
    pub fn new(room: &RoomSpec, sources: Vec<[f64; 3]>, microphones: Vec<[f64; 3]>) -> Result<Self> {
        if sources.is_empty() || microphones.is_empty() {
            return Err(Error::InvalidInput("need at least one source and one microphone".into()));
        }
        for &p in sources.iter().chain(microphones.iter()) {
            if !room.contains(p) {
                return Err(Error::OutsideRoom { point: p, dims: room.dimensions });
            }
        }
        for &s in &sources {
            for &m in &microphones {
                if distance(s, m) == 0.0 {
                    return Err(Error::InvalidInput(format!("source coincides with microphone at {s:?}")));
                }
            }
        }
        Ok(Self { sources, microphones })
    }
}

/// One source-to-microphone impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

impl ImpulseResponse {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Half-width of the fractional-delay sinc kernel (81 taps total).
const SINC_HALF: isize = 40;

/// Mirror images of a coordinate along one axis: pairs of (position, bounce
/// count) for all reflections with at most `max_order` bounces on this axis.
fn axis_images(src: f64, len: f64, max_order: usize) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    let order = max_order as i64;
    // Images sit at (+-src + 2*m*len); bounce count is 2|m| or |2m - 1|.
    let m_range = order / 2 + 1;
    for m in -m_range..=m_range {
        let even = 2 * m.abs();
        if even <= order {
            out.push((src + 2.0 * m as f64 * len, even as usize));
        }
        let odd = (2 * m - 1).abs();
        if odd <= order {
            out.push((-src + 2.0 * m as f64 * len, odd as usize));
        }
    }
    out
}

/// Synthesize the image-source impulse response between one source and one
/// microphone. Each image at distance d and bounce count r contributes
/// amplitude (1-a)^(r/2) / (4*pi*d) at delay d/c, placed with an 81-tap
/// Hann-windowed sinc; taps earlier than one sample before the direct path
/// are cleared.
pub fn image_source_rir(room: &RoomSpec, source: [f64; 3], mic: [f64; 3]) -> Result<ImpulseResponse> {
    for &p in &[source, mic] {
        if !room.contains(p) {
            return Err(Error::OutsideRoom { point: p, dims: room.dimensions });
        }
    }
    let direct = distance(source, mic);
    if direct == 0.0 {
        return Err(Error::InvalidInput("source coincides with microphone".into()));
    }
    let fs = room.sample_rate as f64;
    let c = room.speed_of_sound;
    let reflect = 1.0 - room.absorption;

    let xs = axis_images(source[0], room.dimensions[0], room.max_order);
    let ys = axis_images(source[1], room.dimensions[1], room.max_order);
    let zs = axis_images(source[2], room.dimensions[2], room.max_order);

    // Farthest possible image bounds the tap buffer.
    let mut max_delay = 0.0f64;
    let mut images = Vec::new();
    for &(x, rx) in &xs {
        for &(y, ry) in &ys {
            if rx + ry > room.max_order {
                continue;
            }
            for &(z, rz) in &zs {
                let r = rx + ry + rz;
                if r > room.max_order {
                    continue;
                }
                let d = distance([x, y, z], mic);
                let delay = d / c * fs;
                max_delay = max_delay.max(delay);
                images.push((delay, reflect.powf(r as f64 / 2.0) / (4.0 * std::f64::consts::PI * d)));
            }
        }
    }

    let len = max_delay.ceil() as usize + SINC_HALF as usize + 2;
    let mut taps = vec![0.0; len];
    for (delay, amp) in images {
        if amp == 0.0 {
            continue;
        }
        let center = delay.round() as isize;
        for i in (center - SINC_HALF)..=(center + SINC_HALF) {
            if i < 0 || i as usize >= len {
                continue;
            }
            let t = i as f64 - delay;
            if t.abs() > SINC_HALF as f64 {
                continue;
            }
            let window = 0.5 * (1.0 + (std::f64::consts::PI * t / (SINC_HALF as f64 + 1.0)).cos());
            let sinc = if t == 0.0 {
                1.0
            } else {
                let a = std::f64::consts::PI * t;
                a.sin() / a
            };
            taps[i as usize] += amp * sinc * window;
        }
    }

    // Causality: allow one sample of sinc pre-ring before the direct path.
    let direct_floor = (direct / c * fs).floor() as usize;
    for tap in taps.iter_mut().take(direct_floor.saturating_sub(1)) {
        *tap = 0.0;
    }
    Ok(ImpulseResponse { taps, sample_rate: room.sample_rate })
}

/// Convolve dry source signals with their room responses and sum at each
/// microphone. Output has one channel per microphone and the length of the
/// longest convolution.
pub fn simulate_scene(
    room: &RoomSpec,
    placement: &ScenePlacement,
    dry: &[AudioBuffer],
) -> Result<AudioBuffer> {
    if dry.len() != placement.sources.len() {
        return Err(Error::InvalidInput(format!(
            "{} dry signals for {} sources",
            dry.len(),
            placement.sources.len()
        )));
    }
    for d in dry {
        if d.channels() != 1 {
            return Err(Error::InvalidInput("dry source signals must be mono".into()));
        }
        if d.sample_rate() != room.sample_rate {
            return Err(Error::SampleRateMismatch { left: d.sample_rate(), right: room.sample_rate });
        }
    }

    let rirs: Vec<Vec<ImpulseResponse>> = placement
        .sources
        .iter()
        .map(|&s| {
            placement
                .microphones
                .iter()
                .map(|&m| image_source_rir(room, s, m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let out_len = rirs
        .iter()
        .zip(dry.iter())
        .flat_map(|(per_mic, d)| {
            per_mic
                .iter()
                .map(move |r| (d.num_samples() + r.taps.len()).saturating_sub(1))
        })
        .max()
        .unwrap_or(0);

    let mut out = Array2::zeros((placement.microphones.len(), out_len));
    for (s, d) in dry.iter().enumerate() {
        let x = d.channel(0).to_vec();
        for m in 0..placement.microphones.len() {
            let y = fft_convolve(&x, &rirs[s][m].taps, Some(out_len));
            for (i, v) in y.iter().enumerate() {
                out[(m, i)] += v;
            }
        }
    }
    AudioBuffer::new(out, room.sample_rate)
}

/// Reproducible car-cabin geometry: a 2.8 x 1.5 x 1.2 m box, absorption 0.6,
/// reflection order 17, four ceiling microphones on the centerline and four
/// sources at seat head height.
pub fn cabin_preset() -> (RoomSpec, ScenePlacement) {
    let room = RoomSpec::new([2.8, 1.5, 1.2], 0.6, 17, 16000).expect("preset is valid");
    let microphones = vec![
        [0.8, 0.75, 1.15],
        [1.2, 0.75, 1.15],
        [1.6, 0.75, 1.15],
        [2.0, 0.75, 1.15],
    ];
    let sources = vec![
        [0.9, 0.4, 0.9],
        [0.9, 1.1, 0.9],
        [2.1, 0.4, 0.9],
        [2.1, 1.1, 0.9],
    ];
    let placement = ScenePlacement::new(&room, sources, microphones).expect("preset is valid");
    (room, placement)
}
