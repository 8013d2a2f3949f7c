//! Continuous wavelet transform with the Morlet mother wavelet.
//!
//! The transform is computed in the frequency domain: the mean-subtracted
//! signal is zero-padded to the next power of two, multiplied by the
//! unit-energy daughter spectrum of every scale and transformed back. Scales
//! are in frames (`δt = 1`).
//!
//! [`CwtPlan`] precomputes FFT plans, daughter spectra and the cone of
//! influence for one signal length so the dense per-pixel transform can
//! reuse them without allocation churn.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{Grid, PowerMap, ScaleMap, Scalogram, WaveletConfig};

/// Shortest series the transform accepts.
pub const MIN_SAMPLES: usize = 8;

/// Ratio between Fourier wavelength and scale for a Morlet wavelet.
pub fn fourier_factor(omega0: f64) -> f64 {
    4.0 * PI / (omega0 + (2.0 + omega0 * omega0).sqrt())
}

/// Fourier wavelength (frames) equivalent to scale `s` (frames).
pub fn scale_to_wavelength(s: f64, omega0: f64) -> f64 {
    s * fourier_factor(omega0)
}

pub fn wavelength_to_scale(wavelength: f64, omega0: f64) -> f64 {
    wavelength / fourier_factor(omega0)
}

/// Morlet mother wavelet `π^{-1/4} e^{iω₀η} e^{-η²/2}`.
pub fn morlet(eta: f64, omega0: f64) -> Complex<f64> {
    let envelope = PI.powf(-0.25) * (-0.5 * eta * eta).exp();
    Complex::from_polar(envelope, omega0 * eta)
}

/// Logarithmic scale set `s_j = s₀·2^{j·δj}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    scales: Vec<f64>,
    s0: f64,
    dj: f64,
}

impl ScaleGrid {
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Index `J` of the largest scale.
    pub fn max_index(&self) -> usize {
        self.scales.len() - 1
    }

    pub fn largest(&self) -> f64 {
        *self.scales.last().expect("non-empty grid")
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn dj(&self) -> f64 {
        self.dj
    }

    /// Exact lookup of a scale value.
    pub fn index_of(&self, s: f64) -> Option<usize> {
        self.scales.iter().position(|&x| x == s)
    }
}

/// Builds the scale grid for a series of `n_samples` frames.
///
/// `J = δj⁻¹·log₂(N/s₀)`, then truncated so that the largest Fourier
/// wavelength still fits `min_cycles` times into the clip.
pub fn scale_grid(n_samples: usize, cfg: &WaveletConfig) -> Result<ScaleGrid> {
    let cfg = cfg.validate()?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::ClipTooShort(format!(
            "{n_samples} samples, need at least {MIN_SAMPLES}"
        )));
    }
    let n = n_samples as f64;
    let j_max = ((n / cfg.s0).log2() / cfg.dj + 1e-9).floor();
    if j_max < 0.0 {
        return Err(Error::ClipTooShort(format!(
            "{n_samples} samples below smallest scale {}",
            cfg.s0
        )));
    }
    let cap = match cfg.min_cycles {
        Some(c) => n / (c * fourier_factor(cfg.omega0)),
        None => f64::INFINITY,
    };
    let scales: Vec<f64> = (0..=j_max as usize)
        .map(|j| cfg.s0 * 2f64.powf(j as f64 * cfg.dj))
        .take_while(|&s| s <= cap * (1.0 + 1e-12))
        .collect();
    if scales.is_empty() {
        return Err(Error::ClipTooShort(format!(
            "{n_samples} samples cannot host {} cycles at scale {}",
            cfg.min_cycles.unwrap_or(1.0),
            cfg.s0
        )));
    }
    Ok(ScaleGrid {
        scales,
        s0: cfg.s0,
        dj: cfg.dj,
    })
}

/// Largest non-contaminated scale (frames) at each time: the e-folding
/// distance `√2·s` must not exceed the distance to the nearest clip edge.
pub fn cone_of_influence(n_samples: usize) -> Vec<f64> {
    (0..n_samples)
        .map(|t| ((t + 1).min(n_samples - t)) as f64 / SQRT_2)
        .collect()
}

/// Band of non-negligible daughter spectrum for one scale.
#[derive(Debug, Clone)]
struct Daughter<T> {
    lo: usize,
    taps: Vec<T>,
}

/// Reusable transform state for one series length and configuration.
pub struct CwtPlan<T: Real> {
    n: usize,
    n_pad: usize,
    grid: ScaleGrid,
    scales: Vec<T>,
    coi: Vec<T>,
    /// Number of leading scales outside the cone of influence at each time.
    valid: Vec<usize>,
    daughters: Vec<Daughter<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch_len: usize,
}

impl<T: Real> std::fmt::Debug for CwtPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CwtPlan")
            .field("n", &self.n)
            .field("n_pad", &self.n_pad)
            .field("n_scales", &self.grid.len())
            .finish()
    }
}

/// Per-thread buffers for [`CwtPlan`].
pub struct CwtScratch<T> {
    spectrum: Vec<Complex<T>>,
    work: Vec<Complex<T>>,
    fft: Vec<Complex<T>>,
}

impl<T: Real> CwtPlan<T> {
    pub fn new(n_samples: usize, cfg: &WaveletConfig) -> Result<Self> {
        let grid = scale_grid(n_samples, cfg)?;
        let n_pad = n_samples.next_power_of_two();
        let mut planner = FftPlanner::<T>::new();
        let forward = planner.plan_fft_forward(n_pad);
        let inverse = planner.plan_fft_inverse(n_pad);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());

        // Angular frequency of bin k in radians per frame, positive half only;
        // the Morlet daughter is analytic so negative bins stay zero.
        let omega = |k: usize| 2.0 * PI * k as f64 / n_pad as f64;
        let norm_pad = 1.0 / n_pad as f64;
        let daughters = grid
            .scales()
            .iter()
            .map(|&s| {
                let amp = (2.0 * PI * s).sqrt() * PI.powf(-0.25);
                let vals: Vec<f64> = (0..=n_pad / 2)
                    .map(|k| {
                        if k == 0 {
                            0.0
                        } else {
                            let d = s * omega(k) - cfg.omega0;
                            amp * (-0.5 * d * d).exp() * norm_pad
                        }
                    })
                    .collect();
                let lo = vals.iter().position(|&v| v > 0.0).unwrap_or(0);
                let hi = vals.iter().rposition(|&v| v > 0.0).map_or(lo, |h| h + 1);
                Daughter {
                    lo,
                    taps: vals[lo..hi].iter().map(|&v| T::lit(v)).collect(),
                }
            })
            .collect();

        let scales: Vec<T> = grid.scales().iter().map(|&s| T::lit(s)).collect();
        let coi: Vec<T> = cone_of_influence(n_samples)
            .into_iter()
            .map(T::lit)
            .collect();
        // Compared in the storage type so `masked_ridge` agrees exactly.
        let valid = coi
            .iter()
            .map(|&c| scales.iter().take_while(|&&s| s <= c).count())
            .collect();
        Ok(Self {
            n: n_samples,
            n_pad,
            scales,
            coi,
            valid,
            grid,
            daughters,
            forward,
            inverse,
            scratch_len,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn padded_len(&self) -> usize {
        self.n_pad
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    pub fn coi(&self) -> &[T] {
        &self.coi
    }

    /// Count of grid scales outside the cone of influence at each time.
    pub fn valid_scales(&self) -> &[usize] {
        &self.valid
    }

    pub fn scratch(&self) -> CwtScratch<T> {
        let zero = Complex::new(T::zero(), T::zero());
        CwtScratch {
            spectrum: vec![zero; self.n_pad],
            work: vec![zero; self.n_pad],
            fft: vec![zero; self.scratch_len],
        }
    }

    /// Fills `scratch.spectrum` with the FFT of the mean-removed, padded series.
    fn load(&self, series: &[T], scratch: &mut CwtScratch<T>) {
        assert_eq!(series.len(), self.n, "series length differs from plan");
        let mean = T::lit(crate::scalar::mean_wide(series));
        let zero = Complex::new(T::zero(), T::zero());
        for (dst, &x) in scratch.spectrum.iter_mut().zip(series) {
            *dst = Complex::new(x - mean, T::zero());
        }
        for dst in &mut scratch.spectrum[self.n..] {
            *dst = zero;
        }
        self.forward
            .process_with_scratch(&mut scratch.spectrum, &mut scratch.fft);
    }

    /// Transforms one scale; the first `n` entries of `scratch.work` hold `W_n(s_j)`.
    fn transform_scale(&self, j: usize, scratch: &mut CwtScratch<T>) {
        let zero = Complex::new(T::zero(), T::zero());
        let d = &self.daughters[j];
        scratch.work.fill(zero);
        for (i, &tap) in d.taps.iter().enumerate() {
            let k = d.lo + i;
            scratch.work[k] = scratch.spectrum[k] * tap;
        }
        self.inverse
            .process_with_scratch(&mut scratch.work, &mut scratch.fft);
    }

    #[inline]
    fn power_at(w: Complex<T>) -> T {
        w.re * w.re + w.im * w.im
    }

    /// Full scalogram of one series.
    pub fn transform(&self, series: &[T]) -> Result<Scalogram<T>> {
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("wavelet input"));
        }
        let mut scratch = self.scratch();
        self.load(series, &mut scratch);
        let mut power = Vec::with_capacity(self.grid.len() * self.n);
        for j in 0..self.grid.len() {
            self.transform_scale(j, &mut scratch);
            power.extend(scratch.work[..self.n].iter().map(|&w| Self::power_at(w)));
        }
        Scalogram::new(self.scales.clone(), self.coi.clone(), power)
    }

    /// COI-masked maximum power and its scale index at every time.
    ///
    /// Only a running maximum is kept; scales are visited in increasing order
    /// with a strict comparison, so ties resolve to the smallest scale. Times
    /// where every scale is inside the cone of influence report power zero at
    /// index zero.
    pub fn max_power(
        &self,
        series: &[T],
        scratch: &mut CwtScratch<T>,
        best_power: &mut [T],
        best_index: &mut [u16],
    ) {
        debug_assert_eq!(best_power.len(), self.n);
        best_power.fill(T::zero());
        best_index.fill(0);
        self.load(series, scratch);
        for j in 0..self.grid.len() {
            self.transform_scale(j, scratch);
            for t in 0..self.n {
                if j < self.valid[t] {
                    let p = Self::power_at(scratch.work[t]);
                    if p > best_power[t] {
                        best_power[t] = p;
                        best_index[t] = j as u16;
                    }
                }
            }
        }
    }
}

/// Scalogram of a single series.
pub fn cwt<T: Real>(h: &[T], cfg: &WaveletConfig) -> Result<Scalogram<T>> {
    CwtPlan::new(h.len(), cfg)?.transform(h)
}

/// COI-masked argmax over scales of an existing scalogram: `(power, index)`
/// per time, with the same tie rule as [`CwtPlan::max_power`].
pub fn masked_ridge<T: Real>(s: &Scalogram<T>) -> Vec<(T, usize)> {
    (0..s.n_times())
        .map(|t| {
            let coi = s.coi()[t];
            let mut best = (T::zero(), 0usize);
            for (j, &scale) in s.scales().iter().enumerate() {
                if scale > coi {
                    break;
                }
                let p = s.at(j, t);
                if p > best.0 {
                    best = (p, j);
                }
            }
            best
        })
        .collect()
}

/// Per-frame maximum power and argmax scale for one motion channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePowerResult<T = f32> {
    width: usize,
    height: usize,
    scales: Vec<T>,
    valid: Vec<usize>,
    power: Vec<PowerMap<T>>,
    index: Vec<Vec<u16>>,
}

impl<T: Real> DensePowerResult<T> {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    /// Leading grid scales outside the cone of influence, per frame.
    pub fn valid_scales(&self) -> &[usize] {
        &self.valid
    }

    pub fn power(&self, t: usize) -> &PowerMap<T> {
        &self.power[t]
    }

    pub fn powers(&self) -> &[PowerMap<T>] {
        &self.power
    }

    /// Scale-grid indices of the argmax at frame `t`.
    pub fn scale_index(&self, t: usize) -> &[u16] {
        &self.index[t]
    }

    /// Argmax scales (frames) at frame `t`.
    pub fn scale_map(&self, t: usize) -> ScaleMap<T> {
        let data = self.index[t]
            .iter()
            .map(|&j| self.scales[j as usize])
            .collect();
        Grid::from_raw(self.width, self.height, data)
    }

    /// Assembles a result from parts; used by tests and custom fusions.
    pub fn from_parts(
        scales: Vec<T>,
        valid: Vec<usize>,
        power: Vec<PowerMap<T>>,
        index: Vec<Vec<u16>>,
    ) -> Result<Self> {
        let first = power
            .first()
            .ok_or_else(|| Error::dims("empty power sequence"))?;
        let (width, height) = first.dims();
        if power.iter().any(|p| p.dims() != (width, height))
            || index.len() != power.len()
            || valid.len() != power.len()
            || index.iter().any(|i| i.len() != width * height)
        {
            return Err(Error::dims("inconsistent dense power parts"));
        }
        if index.iter().flatten().any(|&j| j as usize >= scales.len()) {
            return Err(Error::dims("scale index outside grid"));
        }
        Ok(Self {
            width,
            height,
            scales,
            valid,
            power,
            index,
        })
    }
}

const PIXEL_CHUNK: usize = 64;

/// Dense CWT of every pixel's time series in a stack of equally sized frames.
///
/// Pixels are independent; chunks run in parallel but each pixel is
/// processed by exactly the same sequence of operations as [`cwt`], so the
/// result does not depend on the schedule.
pub fn dense_cwt<T: Real>(stack: &[Grid<T>], cfg: &WaveletConfig) -> Result<DensePowerResult<T>> {
    let plan = CwtPlan::new(stack.len(), cfg)?;
    dense_cwt_with_plan(stack, &plan)
}

pub fn dense_cwt_with_plan<T: Real>(
    stack: &[Grid<T>],
    plan: &CwtPlan<T>,
) -> Result<DensePowerResult<T>> {
    let n_t = stack.len();
    if n_t != plan.n_samples() {
        return Err(Error::dims(format!(
            "stack of {n_t} frames for a plan of {}",
            plan.n_samples()
        )));
    }
    let (width, height) = stack[0].dims();
    if stack.iter().any(|g| g.dims() != (width, height)) {
        return Err(Error::dims("frame dimensions drift within stack"));
    }
    let n_px = width * height;

    let chunks: Vec<(Vec<T>, Vec<u16>)> = (0..n_px)
        .into_par_iter()
        .step_by(PIXEL_CHUNK)
        .map(|start| {
            let end = (start + PIXEL_CHUNK).min(n_px);
            let mut scratch = plan.scratch();
            let mut series = vec![T::zero(); n_t];
            let mut power = vec![T::zero(); (end - start) * n_t];
            let mut index = vec![0u16; (end - start) * n_t];
            for (local, px) in (start..end).enumerate() {
                for (dst, frame) in series.iter_mut().zip(stack) {
                    *dst = frame.as_slice()[px];
                }
                let range = local * n_t..(local + 1) * n_t;
                plan.max_power(
                    &series,
                    &mut scratch,
                    &mut power[range.clone()],
                    &mut index[range],
                );
            }
            (power, index)
        })
        .collect();

    let mut power_maps: Vec<Vec<T>> = vec![vec![T::zero(); n_px]; n_t];
    let mut index_maps: Vec<Vec<u16>> = vec![vec![0u16; n_px]; n_t];
    for (ci, (power, index)) in chunks.into_iter().enumerate() {
        let start = ci * PIXEL_CHUNK;
        let count = power.len() / n_t;
        for local in 0..count {
            let px = start + local;
            for t in 0..n_t {
                power_maps[t][px] = power[local * n_t + t];
                index_maps[t][px] = index[local * n_t + t];
            }
        }
    }

    Ok(DensePowerResult {
        width,
        height,
        scales: plan.scales().to_vec(),
        valid: plan.valid_scales().to_vec(),
        power: power_maps
            .into_iter()
            .map(|d| Grid::from_raw(width, height, d))
            .collect(),
        index: index_maps,
    })
}

/// Stationary Fourier baseline: the periodogram's strongest non-DC bin,
/// converted to a count over the clip duration.
pub fn periodogram_count<T: Real>(h: &[T], fps: f64) -> f64 {
    let (freq, duration) = periodogram_peak(h, fps);
    freq * duration
}

/// Peak frequency (Hz) of the mean-removed periodogram and the clip duration (s).
pub fn periodogram_peak<T: Real>(h: &[T], fps: f64) -> (f64, f64) {
    let n = h.len();
    let duration = n as f64 / fps;
    if n < 2 {
        return (0.0, duration);
    }
    let mean = crate::scalar::mean_wide(h);
    let mut buf: Vec<Complex<f64>> = h
        .iter()
        .map(|&x| Complex::new(x.wide() - mean, 0.0))
        .collect();
    let total: f64 = h.iter().map(|&x| x.wide() * x.wide()).sum();
    let ac: f64 = buf.iter().map(|c| c.re * c.re).sum();
    if ac <= 1e-12 * total || ac == 0.0 {
        return (0.0, duration);
    }
    FftPlanner::<f64>::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    let (k, _) = buf[1..=n / 2]
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.norm_sqr()))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    (k as f64 * fps / n as f64, duration)
}
