//! Ground-truth generators: 1-D signals, analytic flow sequences and a
//! rendered bouncing-square video.
//!
//! Oscillation phase is `φ(t) = 2πf·t`, or `2πf(e^{kt} − 1)/k` when a chirp
//! rate `k` is set; the true count is `φ(T)/2π`. Flow is in px/frame and
//! step `i` is sampled at `t = i/fps`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{CycleAnnotation, FlowField, Grid, Image};
use crate::wavelet::MIN_SAMPLES;

/// Generated flow cases, numbered `1 + 6·type + 2·continuity + view` with
/// type (translation, rotation, expansion), continuity (oscillating,
/// constant, intermittent) and view (side, front).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyCase {
    OscTranslationSide,
    OscTranslationFront,
    ConstTranslationTexture,
    IntermittentTranslation,
    OscRotationFront,
    OscExpansionFront,
    OscExpansionSide,
}

impl TaxonomyCase {
    pub const ALL: [TaxonomyCase; 7] = [
        TaxonomyCase::OscTranslationSide,
        TaxonomyCase::OscTranslationFront,
        TaxonomyCase::ConstTranslationTexture,
        TaxonomyCase::IntermittentTranslation,
        TaxonomyCase::OscRotationFront,
        TaxonomyCase::OscExpansionFront,
        TaxonomyCase::OscExpansionSide,
    ];

    pub fn id(self) -> u8 {
        match self {
            TaxonomyCase::OscTranslationSide => 1,
            TaxonomyCase::OscTranslationFront => 2,
            TaxonomyCase::ConstTranslationTexture => 3,
            TaxonomyCase::IntermittentTranslation => 5,
            TaxonomyCase::OscRotationFront => 8,
            TaxonomyCase::OscExpansionFront => 14,
            TaxonomyCase::OscExpansionSide => 13,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        if !(1..=18).contains(&id) {
            return Err(Error::UnsupportedCase(format!(
                "case id {id} outside 1..=18"
            )));
        }
        Self::ALL.into_iter().find(|c| c.id() == id).ok_or_else(|| {
            Error::UnsupportedCase(format!(
                "case {id} is a composition of the generated cases {:?}",
                Self::ALL.map(|c| c.id())
            ))
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TaxonomyCase::OscTranslationSide => "osc_translation_side",
            TaxonomyCase::OscTranslationFront => "osc_translation_front",
            TaxonomyCase::ConstTranslationTexture => "const_translation_texture",
            TaxonomyCase::IntermittentTranslation => "intermittent_translation",
            TaxonomyCase::OscRotationFront => "osc_rotation_front",
            TaxonomyCase::OscExpansionFront => "osc_expansion_front",
            TaxonomyCase::OscExpansionSide => "osc_expansion_side",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Sinusoid,
    ExpChirp,
    MidpointAccel,
    Taxonomy(TaxonomyCase),
    ViewpointTransition,
    BouncingSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub fps: f64,
    /// Seconds.
    pub duration: f64,
    /// Hz; the starting frequency of a chirp.
    pub base_freq: f64,
    /// Signal amplitude, or peak displacement in px for motion.
    pub amplitude: f64,
    /// Exponential chirp rate `k` (1/s); zero means stationary.
    pub chirp_rate: f64,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind) -> Self {
        let (width, height, amplitude) = match kind {
            SynthKind::BouncingSquare => (96, 96, 10.0),
            SynthKind::Sinusoid | SynthKind::ExpChirp | SynthKind::MidpointAccel => (0, 0, 1.0),
            _ => (64, 64, 3.0),
        };
        Self {
            kind,
            fps: 30.0,
            duration: 20.0,
            base_freq: 0.5,
            amplitude,
            chirp_rate: if kind == SynthKind::ExpChirp {
                0.05
            } else {
                0.0
            },
            width,
            height,
            seed: 0,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    pub fn phase(&self, t: f64) -> f64 {
        chirp_phase(self.base_freq, self.chirp_rate, t)
    }

    /// Highest instantaneous frequency reached over the clip.
    pub fn peak_freq(&self) -> f64 {
        let end = self.base_freq * (self.chirp_rate * self.duration).exp();
        let f = self.base_freq.max(end);
        if self.kind == SynthKind::MidpointAccel {
            2.0 * f
        } else {
            f
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.fps) || !pos(self.duration) || !pos(self.base_freq) {
            return Err(Error::Synth(
                "fps, duration and base_freq must be positive".into(),
            ));
        }
        if !self.amplitude.is_finite() || !self.chirp_rate.is_finite() {
            return Err(Error::Synth(
                "amplitude and chirp_rate must be finite".into(),
            ));
        }
        if self.n_steps() < MIN_SAMPLES {
            return Err(Error::Synth(format!(
                "{} samples; at least {MIN_SAMPLES} required",
                self.n_steps()
            )));
        }
        let nyquist = self.fps / 2.0;
        if self.peak_freq() >= nyquist {
            return Err(Error::Synth(format!(
                "frequency {:.3} Hz violates Nyquist limit {nyquist} Hz",
                self.peak_freq()
            )));
        }
        Ok(())
    }
}

pub fn chirp_phase(f0: f64, k: f64, t: f64) -> f64 {
    if k == 0.0 {
        2.0 * PI * f0 * t
    } else {
        2.0 * PI * f0 * (k * t).exp_m1() / k
    }
}

fn chirp_phase_rate(f0: f64, k: f64, t: f64) -> f64 {
    2.0 * PI * f0 * (k * t).exp()
}

/// Indices where the cumulative phase first reaches each multiple of 2π,
/// starting with index 0.
pub fn phase_bounds(phase: &[f64]) -> Vec<usize> {
    let mut bounds = Vec::new();
    let mut next = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if p >= next {
            bounds.push(i);
            while next <= p {
                next += 2.0 * PI;
            }
        }
    }
    bounds
}

/// Half the number of sign changes; an oracle for the cycle count of a
/// zero-mean oscillation.
pub fn zero_crossing_cycles(samples: &[f64]) -> f64 {
    let mut last = 0.0;
    let mut crossings = 0usize;
    for &s in samples {
        if s == 0.0 {
            continue;
        }
        if last != 0.0 && (s > 0.0) != (last > 0.0) {
            crossings += 1;
        }
        last = s;
    }
    crossings as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSample {
    pub samples: Vec<f64>,
    pub true_count: f64,
    /// Sample indices starting each complete cycle, plus the final boundary.
    pub cycle_bounds: Vec<usize>,
}

impl SignalSample {
    /// Annotation over the complete cycles.
    pub fn annotation(&self, id: &str, fps: f64) -> Result<CycleAnnotation> {
        CycleAnnotation::new(
            id,
            fps,
            self.cycle_bounds.len().saturating_sub(1) as u32,
            Some(self.cycle_bounds.clone()),
        )
    }
}

/// Stationary, chirped or midpoint-accelerated sinusoid.
///
/// The accelerated form keeps the first half of the samples and takes every
/// second source sample afterwards, so the clip has the same length while
/// its second half covers twice the source time.
pub fn gen_signal(spec: &SynthSpec) -> Result<SignalSample> {
    spec.validate()?;
    let n = spec.n_steps();
    let (k, source_index): (f64, Box<dyn Fn(usize) -> usize>) = match spec.kind {
        SynthKind::Sinusoid => (0.0, Box::new(|i| i)),
        SynthKind::ExpChirp => (spec.chirp_rate, Box::new(|i| i)),
        SynthKind::MidpointAccel => {
            let half = n / 2;
            (
                0.0,
                Box::new(move |i| if i < half { i } else { half + 2 * (i - half) }),
            )
        }
        other => return Err(Error::Synth(format!("{other:?} is not a signal kind"))),
    };
    let phase: Vec<f64> = (0..n)
        .map(|i| chirp_phase(spec.base_freq, k, source_index(i) as f64 / spec.fps))
        .collect();
    let samples = phase.iter().map(|p| spec.amplitude * p.sin()).collect();
    // The clip spans n sample periods of its own time base.
    let source_end = match spec.kind {
        SynthKind::MidpointAccel => (n / 2 + 2 * (n - n / 2)) as f64,
        _ => n as f64,
    } / spec.fps;
    Ok(SignalSample {
        samples,
        true_count: chirp_phase(spec.base_freq, k, source_end) / (2.0 * PI),
        cycle_bounds: phase_bounds(&phase),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence<T = f32> {
    pub flows: Vec<FlowField<T>>,
    pub true_count: f64,
    /// Ground-truth frequency per step, Hz.
    pub true_freq: Vec<f64>,
}

fn disk(w: usize, h: usize) -> (f64, f64, f64) {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    (cx, cy, w.min(h) as f64 / 4.0)
}

fn inside_disk(x: usize, y: usize, (cx, cy, r): (f64, f64, f64)) -> bool {
    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
    dx * dx + dy * dy <= r * r
}

fn check_frame(spec: &SynthSpec, min_side: usize) -> Result<()> {
    if spec.width < min_side || spec.height < min_side {
        return Err(Error::Synth(format!(
            "frame {}x{} smaller than {min_side}x{min_side}",
            spec.width, spec.height
        )));
    }
    Ok(())
}

/// Analytic flow for one of the generated cases.
///
/// Regions are a centred disk of radius `min(W, H)/4` (a centred square of
/// the same half-width for translations) on a still background.
/// `amplitude` is the peak displacement in px: of the region for
/// translations, of the region edge for rotation and expansion.
pub fn gen_flow_sequence<T: Real>(spec: &SynthSpec) -> Result<FlowSequence<T>> {
    spec.validate()?;
    check_frame(spec, 16)?;
    let case = match spec.kind {
        SynthKind::Taxonomy(c) => c,
        other => {
            return Err(Error::UnsupportedCase(format!(
                "{other:?} is not a flow case"
            )))
        }
    };
    let (w, h) = (spec.width, spec.height);
    let n = spec.n_steps();
    let geom = disk(w, h);
    let (cx, cy, r) = geom;
    let in_square = |x: usize, y: usize| (x as f64 - cx).abs() <= r && (y as f64 - cy).abs() <= r;
    let (f0, k, a, fps) = (spec.base_freq, spec.chirp_rate, spec.amplitude, spec.fps);
    // Velocity of a sinusoidal displacement a·sin φ, px/frame.
    let vel = |t: f64| a * chirp_phase_rate(f0, k, t) * chirp_phase(f0, k, t).cos() / fps;

    let mut true_freq: Vec<f64> = (0..n).map(|i| f0 * (k * i as f64 / fps).exp()).collect();
    let mut true_count = chirp_phase(f0, k, n as f64 / fps) / (2.0 * PI);

    let flows: Vec<FlowField<T>> = match case {
        TaxonomyCase::OscTranslationSide => (0..n)
            .map(|i| {
                let v = T::lit(vel(i as f64 / fps));
                FlowField::from_fn(w, h, |x, y| {
                    if in_square(x, y) {
                        (T::zero(), v)
                    } else {
                        (T::zero(), T::zero())
                    }
                })
            })
            .collect(),
        TaxonomyCase::OscTranslationFront => (0..n)
            .map(|i| {
                // Approach and retreat: looming about the vanishing point.
                let d = vel(i as f64 / fps) / r;
                FlowField::from_fn(w, h, |x, y| {
                    if in_square(x, y) {
                        (T::lit((x as f64 - cx) * d), T::lit((y as f64 - cy) * d))
                    } else {
                        (T::zero(), T::zero())
                    }
                })
            })
            .collect(),
        TaxonomyCase::ConstTranslationTexture => {
            // Bars of a conveyor moving right at `amplitude` px/frame; the
            // spacing sets the repetition frequency.
            let speed = a;
            let spacing = speed * fps / f0;
            if spacing < 4.0 {
                return Err(Error::Synth(
                    "bar spacing below 4 px; raise amplitude".into(),
                ));
            }
            if k != 0.0 {
                return Err(Error::Synth("constant translation does not chirp".into()));
            }
            true_freq = vec![f0; n];
            true_count = f0 * n as f64 / fps;
            (0..n)
                .map(|i| {
                    let offset = speed * i as f64;
                    FlowField::from_fn(w, h, |x, y| {
                        let p = ((x as f64 - offset) / spacing).rem_euclid(1.0);
                        if in_square(x, y) && p < 0.5 {
                            (T::lit(speed), T::zero())
                        } else {
                            (T::zero(), T::zero())
                        }
                    })
                })
                .collect()
        }
        TaxonomyCase::IntermittentTranslation => {
            // Stop and go: each period advances `a` px during its first 40%
            // with a raised-cosine speed profile, then rests.
            const DUTY: f64 = 0.4;
            (0..n)
                .map(|i| {
                    let t = i as f64 / fps;
                    let cyc = chirp_phase(f0, k, t) / (2.0 * PI);
                    let p = cyc.fract();
                    let v = if p < DUTY {
                        let dp = chirp_phase_rate(f0, k, t) / (2.0 * PI) / fps;
                        a * dp / DUTY * (1.0 - (2.0 * PI * p / DUTY).cos())
                    } else {
                        0.0
                    };
                    let v = T::lit(v);
                    FlowField::from_fn(w, h, |x, y| {
                        if in_square(x, y) {
                            (T::zero(), v)
                        } else {
                            (T::zero(), T::zero())
                        }
                    })
                })
                .collect()
        }
        TaxonomyCase::OscRotationFront => (0..n)
            .map(|i| {
                let om = vel(i as f64 / fps) / r;
                FlowField::from_fn(w, h, |x, y| {
                    if inside_disk(x, y, geom) {
                        (T::lit(-(y as f64 - cy) * om), T::lit((x as f64 - cx) * om))
                    } else {
                        (T::zero(), T::zero())
                    }
                })
            })
            .collect(),
        TaxonomyCase::OscExpansionFront => (0..n)
            .map(|i| {
                let d = vel(i as f64 / fps) / r;
                FlowField::from_fn(w, h, |x, y| {
                    if inside_disk(x, y, geom) {
                        (T::lit((x as f64 - cx) * d), T::lit((y as f64 - cy) * d))
                    } else {
                        (T::zero(), T::zero())
                    }
                })
            })
            .collect(),
        TaxonomyCase::OscExpansionSide => (0..n)
            .map(|i| {
                let d = vel(i as f64 / fps) / r;
                FlowField::from_fn(w, h, |x, y| {
                    if in_square(x, y) {
                        (T::zero(), T::lit((y as f64 - cy) * d))
                    } else {
                        (T::zero(), T::zero())
                    }
                })
            })
            .collect(),
    };
    Ok(FlowSequence {
        flows,
        true_count,
        true_freq,
    })
}

/// Smooth 0→1 ramp over the middle fifth of the clip.
pub fn transition_weight(t: f64, duration: f64) -> f64 {
    let u = ((t / duration - 0.4) / 0.2).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// A disk oscillating vertically (side view) that blends into an
/// oscillating dilation (front view) at constant frequency.
pub fn gen_viewpoint_transition<T: Real>(spec: &SynthSpec) -> Result<FlowSequence<T>> {
    spec.validate()?;
    check_frame(spec, 16)?;
    let (w, h) = (spec.width, spec.height);
    let n = spec.n_steps();
    let geom = disk(w, h);
    let (cx, cy, r) = geom;
    let (f0, k, a, fps) = (spec.base_freq, spec.chirp_rate, spec.amplitude, spec.fps);
    let flows = (0..n)
        .map(|i| {
            let t = i as f64 / fps;
            let wgt = transition_weight(t, spec.duration);
            let v = a * chirp_phase_rate(f0, k, t) * chirp_phase(f0, k, t).cos() / fps;
            let d = v / r;
            FlowField::from_fn(w, h, |x, y| {
                if inside_disk(x, y, geom) {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    (T::lit(wgt * dx * d), T::lit((1.0 - wgt) * v + wgt * dy * d))
                } else {
                    (T::zero(), T::zero())
                }
            })
        })
        .collect();
    Ok(FlowSequence {
        flows,
        true_count: chirp_phase(f0, k, n as f64 / fps) / (2.0 * PI),
        true_freq: (0..n).map(|i| f0 * (k * i as f64 / fps).exp()).collect(),
    })
}

/// Static smooth texture built from a few seeded plane waves, in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn new(seed: u64, waves: usize, max_freq: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..waves)
            .map(|_| {
                let theta = rng.gen_range(0.0..2.0 * PI);
                let f = rng.gen_range(0.3 * max_freq..max_freq);
                (
                    rng.gen_range(0.5..1.0),
                    f * theta.cos(),
                    f * theta.sin(),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        Self { waves }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        let norm: f64 = self.waves.iter().map(|w| w.0).sum();
        let s: f64 = self
            .waves
            .iter()
            .map(|&(a, kx, ky, ph)| a * (2.0 * PI * (kx * x + ky * y) + ph).sin())
            .sum();
        0.5 + 0.5 * s / norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Image>,
    pub true_count: f64,
    /// Frames at which the square touches its top position.
    pub cycle_bounds: Vec<usize>,
}

/// Side length of the rendered square for a frame of the given size.
pub fn square_side(width: usize, height: usize) -> f64 {
    (width.min(height) as f64 / 4.0).round()
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Renders a textured bright square with top-left corner `(sx, sy)` over the
/// dark background texture; edges are area-weighted.
pub fn render_square(
    width: usize,
    height: usize,
    sx: f64,
    sy: f64,
    side: f64,
    background: &Texture,
    foreground: &Texture,
) -> Image {
    Grid::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let cover = overlap(xf, xf + 1.0, sx, sx + side) * overlap(yf, yf + 1.0, sy, sy + side);
        let bg = 0.05 + 0.2 * background.at(xf, yf);
        let fg = 0.6 + 0.35 * foreground.at(xf + 0.5 - sx, yf + 0.5 - sy);
        (bg * (1.0 - cover) + fg * cover) as f32
    })
}

/// A square bouncing off an invisible floor: `y(t) = y₀ + A·|sin(πft)|`.
pub fn gen_bouncing_square_video(spec: &SynthSpec) -> Result<FrameSequence> {
    spec.validate()?;
    check_frame(spec, 16)?;
    let (w, h) = (spec.width, spec.height);
    let side = square_side(w, h);
    let a = spec.amplitude;
    let margin = 2.0;
    let y0 = ((h as f64 - side - a) / 2.0).floor();
    if a < 0.0 || y0 < margin || y0 + a + side > h as f64 - margin || side + 2.0 * margin > w as f64
    {
        return Err(Error::Synth(format!(
            "geometry overflow: square {side} px with amplitude {a} px does not fit {w}x{h}"
        )));
    }
    if spec.chirp_rate != 0.0 {
        return Err(Error::Synth("the bouncing square does not chirp".into()));
    }
    let sx = ((w as f64 - side) / 2.0).floor();
    let background = Texture::new(spec.seed, 6, 0.08);
    let foreground = Texture::new(spec.seed.wrapping_add(1), 4, 0.15);
    let n = spec.n_steps();
    // Half-cycles of sin(π f t), reduced exactly so the rendering repeats.
    let cycles: Vec<f64> = (0..n)
        .map(|i| i as f64 * spec.base_freq / spec.fps)
        .collect();
    let frames = cycles
        .iter()
        .map(|c| {
            let y = y0 + a * (PI * c.fract()).sin().abs();
            render_square(w, h, sx, y, side, &background, &foreground)
        })
        .collect();
    let phase: Vec<f64> = cycles.iter().map(|c| 2.0 * PI * c).collect();
    Ok(FrameSequence {
        frames,
        true_count: spec.base_freq * spec.duration,
        cycle_bounds: phase_bounds(&phase),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::motion_maps;

    #[test]
    fn sinusoid_count() {
        let mut spec = SynthSpec::new(SynthKind::Sinusoid);
        spec.base_freq = 0.8;
        spec.duration = 12.0;
        let s = gen_signal(&spec).unwrap();
        assert!((s.true_count - 9.6).abs() < 1e-12);
        assert_eq!(s.samples.len(), 360);
        assert!((zero_crossing_cycles(&s.samples) - s.true_count).abs() <= 0.5);
    }

    #[test]
    fn chirp_count_matches_closed_form_and_oracle() {
        let mut spec = SynthSpec::new(SynthKind::ExpChirp);
        spec.base_freq = 0.5;
        spec.chirp_rate = 0.1;
        let s = gen_signal(&spec).unwrap();
        let closed = 0.5 / 0.1 * (2f64.exp() - 1.0);
        assert!((s.true_count - closed).abs() < 1e-9);
        assert!((zero_crossing_cycles(&s.samples) - s.true_count).abs() <= 0.5);
        let a = s.annotation("c", 30.0).unwrap();
        assert!(crate::types::CycleAnnotation::validate(&a).is_ok());
    }

    #[test]
    fn midpoint_accel_fifteen_cycles() {
        let mut spec = SynthSpec::new(SynthKind::MidpointAccel);
        spec.base_freq = 1.0;
        spec.duration = 10.0;
        let s = gen_signal(&spec).unwrap();
        assert!((s.true_count - 15.0).abs() < 1e-9);
        assert_eq!(s.samples.len(), 300);
        assert!((zero_crossing_cycles(&s.samples) - 15.0).abs() <= 0.5);
    }

    #[test]
    fn nyquist_and_length_errors() {
        let mut spec = SynthSpec::new(SynthKind::Sinusoid);
        spec.base_freq = 15.0;
        assert!(gen_signal(&spec).is_err());
        spec.base_freq = 8.0;
        spec.kind = SynthKind::MidpointAccel;
        assert!(gen_signal(&spec).is_err());
        let mut spec = SynthSpec::new(SynthKind::Sinusoid);
        spec.duration = 0.1;
        assert!(gen_signal(&spec).is_err());
    }

    #[test]
    fn case_ids() {
        for c in TaxonomyCase::ALL {
            assert_eq!(TaxonomyCase::from_id(c.id()).unwrap(), c);
        }
        assert!(matches!(
            TaxonomyCase::from_id(4),
            Err(Error::UnsupportedCase(_))
        ));
        assert!(matches!(
            TaxonomyCase::from_id(19),
            Err(Error::UnsupportedCase(_))
        ));
    }

    #[test]
    fn translation_velocity_is_derivative_of_position() {
        let mut spec = SynthSpec::new(SynthKind::Taxonomy(TaxonomyCase::OscTranslationSide));
        spec.duration = 4.0;
        let s = gen_flow_sequence::<f64>(&spec).unwrap();
        let (cx, cy) = (32, 32);
        for (i, f) in s.flows.iter().enumerate() {
            let t = i as f64 / 30.0;
            let want = 3.0 * 2.0 * PI * 0.5 * (2.0 * PI * 0.5 * t).cos() / 30.0;
            assert!((f.v().get(cx, cy) - want).abs() < 1e-12);
            assert_eq!(f.u().get(cx, cy), 0.0);
            assert_eq!(f.v().get(cx, cy), f.v().get(cx + 5, cy - 7));
        }
        let v: Vec<f64> = s.flows.iter().map(|f| f.v().get(cx, cy)).collect();
        // The velocity is a quarter cycle ahead, so crossings are off by at most one.
        assert!((zero_crossing_cycles(&v) - s.true_count).abs() <= 0.5);
    }

    #[test]
    fn rotation_curl_tracks_omega() {
        let mut spec = SynthSpec::new(SynthKind::Taxonomy(TaxonomyCase::OscRotationFront));
        spec.duration = 2.0;
        let s = gen_flow_sequence::<f64>(&spec).unwrap();
        let r = 16.0;
        for (i, f) in s.flows.iter().enumerate().step_by(5) {
            let t = i as f64 / 30.0;
            let om = 3.0 * PI * (PI * t).cos() / 30.0 / r;
            if om.abs() < 1e-3 {
                continue;
            }
            let m = motion_maps(f, 4.0).unwrap();
            let curl = m.curl().get(32, 32);
            assert_eq!(curl.signum(), om.signum());
            assert!(
                (curl - 2.0 * om).abs() <= 0.05 * (2.0 * om).abs(),
                "t={t} curl={curl} om={om}"
            );
        }
    }

    #[test]
    fn every_flow_case_is_consistent_with_its_count() {
        for c in TaxonomyCase::ALL {
            let mut spec = SynthSpec::new(SynthKind::Taxonomy(c));
            spec.duration = 10.0;
            let s = gen_flow_sequence::<f32>(&spec).unwrap();
            assert_eq!(s.flows.len(), 300);
            assert!((s.true_count - 5.0).abs() < 1e-9, "{c:?}");
            assert!(
                s.flows
                    .iter()
                    .map(|f| f
                        .u()
                        .as_slice()
                        .iter()
                        .chain(f.v().as_slice())
                        .fold(0f32, |m, x| m.max(x.abs())))
                    .fold(0f32, f32::max)
                    > 0.0
            );
        }
    }

    #[test]
    fn intermittent_rests_outside_gate() {
        let spec = SynthSpec::new(SynthKind::Taxonomy(TaxonomyCase::IntermittentTranslation));
        let s = gen_flow_sequence::<f64>(&spec).unwrap();
        let v: Vec<f64> = s.flows.iter().map(|f| f.v().get(32, 32)).collect();
        let moving = v.iter().filter(|x| x.abs() > 0.0).count() as f64 / v.len() as f64;
        assert!((moving - 0.4).abs() < 0.03, "duty {moving}");
        assert!(v.iter().all(|&x| x >= 0.0));
        // Each gate advances by the amplitude.
        let travelled: f64 = v.iter().sum();
        assert!(
            (travelled - spec.amplitude * s.true_count).abs() < 1e-6,
            "{travelled}"
        );
    }

    #[test]
    fn viewpoint_quarters() {
        let spec = SynthSpec::new(SynthKind::ViewpointTransition);
        let s = gen_viewpoint_transition::<f64>(&spec).unwrap();
        let n = s.flows.len();
        let first = motion_maps(&s.flows[0], 4.0).unwrap();
        assert!(first.fy().get(32, 32).abs() > 0.1);
        assert!(first.div().get(32, 32).abs() < 1e-3);
        let last = motion_maps(&s.flows[n - 1], 4.0).unwrap();
        assert!(last.div().get(32, 32).abs() > 1e-3);
        assert!(last.fy().get(32, 32).abs() < 0.5 * last.div().get(32, 32).abs());
        assert!(s.true_freq.iter().all(|&f| f == 0.5));
        assert_eq!(transition_weight(0.39 * 20.0, 20.0), 0.0);
        assert_eq!(transition_weight(0.61 * 20.0, 20.0), 1.0);
    }

    #[test]
    fn bouncing_square_periodic_and_deterministic() {
        let spec = SynthSpec::new(SynthKind::BouncingSquare);
        let v = gen_bouncing_square_video(&spec).unwrap();
        assert_eq!(v.frames.len(), 600);
        assert_eq!(v.true_count, 10.0);
        assert_eq!(v.frames[0], v.frames[120]);
        assert_ne!(v.frames[0], v.frames[15]);
        assert_eq!(v.cycle_bounds.len(), 10);
        let again = gen_bouncing_square_video(&spec).unwrap();
        assert_eq!(v.frames[37], again.frames[37]);
        let mut other = spec;
        other.seed = 9;
        assert_ne!(
            gen_bouncing_square_video(&other).unwrap().frames[0],
            v.frames[0]
        );
    }

    #[test]
    fn bouncing_square_geometry_overflow() {
        let mut spec = SynthSpec::new(SynthKind::BouncingSquare);
        spec.amplitude = 80.0;
        assert!(gen_bouncing_square_video(&spec).is_err());
    }
}
