//! End-to-end counting: motion maps, dense wavelet power per channel,
//! fusion, mean-threshold segmentation, median pooling and integration.

use rayon::prelude::*;

use crate::diffgeo::motion_maps;
use crate::error::{Error, Result};
use crate::flow::{estimate_flow, HSParams};
use crate::scalar::Real;
use crate::types::{
    Channel, CountResult, FlowField, Grid, Image, MotionMaps, PowerMap, ScaleMap, SegMask,
    WaveletConfig, DEFAULT_MASK_FLOOR, DEFAULT_MEDIAN_WINDOW, DEFAULT_SIGMA,
};
use crate::wavelet::{
    dense_cwt_with_plan, masked_ridge, scale_to_wavelength, CwtPlan, DensePowerResult,
};

/// Largest side, in pixels, that the automatic stride aims for.
pub const AUTO_STRIDE_TARGET: usize = 64;

/// Ratio between the largest admissible scale and a pooled scale for the
/// pooled scale to count as resolved near the clip edges.
pub const TRUST_HEADROOM: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Gaussian derivative scale, in processing pixels.
    pub sigma: f64,
    pub wavelet: WaveletConfig,
    /// Spatial downsampling factor; `None` picks one from the frame size.
    pub stride: Option<usize>,
    pub median_window: usize,
    pub mask_floor: f64,
    /// Used only when counting from raw frames.
    pub flow: HSParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_fps(30.0)
    }
}

impl PipelineConfig {
    pub fn for_fps(fps: f64) -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            wavelet: WaveletConfig::for_fps(fps),
            stride: None,
            median_window: DEFAULT_MEDIAN_WINDOW,
            mask_floor: DEFAULT_MASK_FLOOR,
            flow: HSParams::default(),
        }
    }

    pub fn fps(&self) -> f64 {
        self.wavelet.fps()
    }

    pub fn validate(&self) -> Result<()> {
        self.wavelet.validate()?;
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::config("sigma must be positive"));
        }
        if self.stride == Some(0) {
            return Err(Error::config("stride must be at least 1"));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(Error::config("median_window must be odd and at least 1"));
        }
        if !(0.0..1.0).contains(&self.mask_floor) {
            return Err(Error::config("mask_floor must lie in [0, 1)"));
        }
        self.flow.validate()
    }

    /// Stride actually used for frames of the given size.
    pub fn stride_for(&self, width: usize, height: usize) -> usize {
        self.stride
            .unwrap_or_else(|| width.max(height).div_ceil(AUTO_STRIDE_TARGET))
            .max(1)
    }
}

/// Block-averages a flow field by `stride`, expressing displacement in
/// output pixels. Partial blocks at the right and bottom edges average the
/// pixels they contain.
pub fn downsample_flow<T: Real>(f: &FlowField<T>, stride: usize) -> FlowField<T> {
    if stride <= 1 {
        return f.clone();
    }
    let (w, h) = f.dims();
    let (ow, oh) = (w.div_ceil(stride), h.div_ceil(stride));
    let k = 1.0 / stride as f64;
    let pool = |g: &Grid<T>| {
        Grid::from_fn(ow, oh, |bx, by| {
            let mut acc = 0.0;
            let mut n = 0usize;
            for y in by * stride..((by + 1) * stride).min(h) {
                for x in bx * stride..((bx + 1) * stride).min(w) {
                    acc += g.get(x, y).wide();
                    n += 1;
                }
            }
            T::lit(acc / n as f64 * k)
        })
    };
    FlowField::from_grids(pool(f.u()), pool(f.v())).expect("pooled grids agree")
}

/// Fused power and scale maps for a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPower<T = f32> {
    pub power: Vec<PowerMap<T>>,
    pub scale: Vec<ScaleMap<T>>,
    /// Index of the channel that supplied each pixel's scale.
    pub source: Vec<Vec<u8>>,
    /// Scale-grid entries outside the cone of influence, per frame.
    pub valid: Vec<usize>,
    pub grid: Vec<T>,
}

/// Incremental fusion so that only one channel's dense result needs to be
/// held at a time.
#[derive(Debug, Clone)]
pub struct PowerFusion<T> {
    dims: (usize, usize),
    grid: Vec<T>,
    valid: Vec<usize>,
    sum: Vec<Vec<T>>,
    best: Vec<Vec<T>>,
    index: Vec<Vec<u16>>,
    source: Vec<Vec<u8>>,
    seen: [bool; 6],
}

impl<T: Real> PowerFusion<T> {
    pub fn new() -> Self {
        Self {
            dims: (0, 0),
            grid: Vec::new(),
            valid: Vec::new(),
            sum: Vec::new(),
            best: Vec::new(),
            index: Vec::new(),
            source: Vec::new(),
            seen: [false; 6],
        }
    }

    /// Adds one channel. Powers are summed in insertion order; the scale
    /// comes from the channel with the largest power, lower index on ties.
    pub fn add(&mut self, c: Channel, r: &DensePowerResult<T>) -> Result<()> {
        let ci = c.index();
        if self.seen[ci] {
            return Err(Error::dims(format!("channel {} added twice", c.name())));
        }
        if !self.seen.iter().any(|&s| s) {
            self.dims = r.dims();
            self.grid = r.scales().to_vec();
            self.valid = r.valid_scales().to_vec();
            self.sum = r.powers().iter().map(|p| p.as_slice().to_vec()).collect();
            self.best = self.sum.clone();
            self.index = (0..r.len()).map(|t| r.scale_index(t).to_vec()).collect();
            self.source = self.index.iter().map(|i| vec![ci as u8; i.len()]).collect();
            self.seen[ci] = true;
            return Ok(());
        }
        if r.dims() != self.dims || r.len() != self.sum.len() || r.scales() != self.grid.as_slice()
        {
            return Err(Error::dims("channel results disagree in shape"));
        }
        for t in 0..r.len() {
            let p = r.power(t).as_slice();
            let idx = r.scale_index(t);
            let (sum, best) = (&mut self.sum[t], &mut self.best[t]);
            let (index, source) = (&mut self.index[t], &mut self.source[t]);
            for px in 0..p.len() {
                sum[px] += p[px];
                let take = p[px] > best[px] || (p[px] == best[px] && (ci as u8) < source[px]);
                if take {
                    best[px] = p[px];
                    index[px] = idx[px];
                    source[px] = ci as u8;
                }
            }
        }
        self.seen[ci] = true;
        Ok(())
    }

    pub fn finish(self) -> Result<FusedPower<T>> {
        if !self.seen.iter().any(|&s| s) {
            return Err(Error::dims("no channels fused"));
        }
        let (w, h) = self.dims;
        let grid = self.grid;
        let scale = self
            .index
            .iter()
            .map(|idx| Grid::from_raw(w, h, idx.iter().map(|&j| grid[j as usize]).collect()))
            .collect();
        Ok(FusedPower {
            power: self
                .sum
                .into_iter()
                .map(|d| Grid::from_raw(w, h, d))
                .collect(),
            scale,
            source: self.source,
            valid: self.valid,
            grid,
        })
    }
}

impl<T: Real> Default for PowerFusion<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Fuses the six per-channel results, in channel order.
pub fn combine_power<T: Real>(per_channel: &[DensePowerResult<T>; 6]) -> Result<FusedPower<T>> {
    let mut fusion = PowerFusion::new();
    for (c, r) in Channel::ALL.iter().zip(per_channel) {
        fusion.add(*c, r)?;
    }
    fusion.finish()
}

/// Pixels with power strictly above the frame mean. When that leaves less
/// than `floor` of the frame, `previous` is reused (all pixels if none).
pub fn segment<T: Real>(power: &PowerMap<T>, floor: f64, previous: Option<&SegMask>) -> SegMask {
    let (w, h) = power.dims();
    let mean = power.mean_wide();
    let data: Vec<bool> = power.as_slice().iter().map(|p| p.wide() > mean).collect();
    let fg = data.iter().filter(|&&b| b).count();
    let enough = fg > 0 && fg as f64 >= floor * data.len() as f64;
    if enough {
        return SegMask::new(w, h, data).expect("mask matches power dims");
    }
    match previous {
        Some(m) if m.dims() == (w, h) => m.clone(),
        _ => SegMask::full(w, h),
    }
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of `values` under `mask`, `None` for an empty mask.
pub fn masked_median<T: Real>(values: &Grid<T>, mask: &SegMask) -> Option<f64> {
    let mut picked: Vec<f64> = values
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.wide())
        .collect();
    (!picked.is_empty()).then(|| median_in_place(&mut picked))
}

/// Median scale under the mask, as a frequency in Hz.
pub fn pool_frequency<T: Real>(scale: &ScaleMap<T>, mask: &SegMask, cfg: &WaveletConfig) -> f64 {
    masked_median(scale, mask)
        .map(|s| scale_to_frequency(s, cfg))
        .unwrap_or(0.0)
}

pub fn scale_to_frequency(s: f64, cfg: &WaveletConfig) -> f64 {
    cfg.fps() / scale_to_wavelength(s, cfg.omega0)
}

/// Sliding median with edge samples replicated; `window` must be odd.
pub fn smooth_trace(trace: &[f64], window: usize) -> Vec<f64> {
    let k = (window / 2) as isize;
    let n = trace.len() as isize;
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|t| {
            buf.clear();
            buf.extend((t - k..=t + k).map(|i| trace[i.clamp(0, n - 1) as usize]));
            median_in_place(&mut buf)
        })
        .collect()
}

/// One increment of `f / fps` cycles per step; the total is left unrounded.
pub fn integrate_count(freq_trace: &[f64], fps: f64) -> CountResult {
    let increments: Vec<f64> = freq_trace.iter().map(|f| f / fps).collect();
    CountResult {
        freq_trace: freq_trace.to_vec(),
        count: increments.iter().sum(),
        increments,
    }
}

/// Replaces untrusted entries by the nearest trusted one (earlier wins ties).
/// Leaves the trace alone when nothing is trusted.
fn hold_untrusted(trace: &mut [f64], trusted: &[bool]) {
    let n = trace.len();
    let mut prev = vec![None; n];
    let mut last = None;
    for t in 0..n {
        if trusted[t] {
            last = Some(t);
        }
        prev[t] = last;
    }
    let mut next = None;
    for t in (0..n).rev() {
        if trusted[t] {
            next = Some(t);
            continue;
        }
        let src = match (prev[t], next) {
            (Some(a), Some(b)) => Some(if t - a <= b - t { a } else { b }),
            (a, b) => a.or(b),
        };
        if let Some(s) = src {
            trace[t] = trace[s];
        }
    }
}

/// Frequency of one step and whether it can be trusted. A step with no
/// scale outside the cone of influence carries no estimate; one without any
/// power is still. Otherwise the pooled scale is trusted when the grid is
/// complete, or when the cone leaves an octave above it: without that room a
/// harmonic of a non-sinusoidal motion can win while its fundamental is cut.
fn step_frequency(
    scale: f64,
    valid: usize,
    has_power: bool,
    grid: &[f64],
    cfg: &WaveletConfig,
) -> (f64, bool) {
    if valid == 0 {
        return (0.0, false);
    }
    if !has_power {
        return (0.0, true);
    }
    let trusted = valid == grid.len() || TRUST_HEADROOM * scale <= grid[valid - 1];
    (scale_to_frequency(scale, cfg), trusted)
}

/// Counting result for a 1-D signal plus the per-step trust flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesAnalysis {
    pub result: CountResult,
    /// Ridge scale per step, frames.
    pub scales: Vec<f64>,
    pub trusted: Vec<bool>,
}

/// The 1-D path: ridge of the scalogram, frequency, smoothing, integration.
pub fn analyze_series<T: Real>(h: &[T], cfg: &PipelineConfig) -> Result<SeriesAnalysis> {
    cfg.validate()?;
    let plan = CwtPlan::<T>::new(h.len(), &cfg.wavelet)?;
    let s = plan.transform(h)?;
    let grid: Vec<f64> = plan.scales().iter().map(|x| x.wide()).collect();
    let ridge = masked_ridge(&s);
    let scales: Vec<f64> = ridge.iter().map(|&(_, j)| grid[j]).collect();
    let (mut trace, trusted): (Vec<f64>, Vec<bool>) = ridge
        .iter()
        .zip(&scales)
        .zip(plan.valid_scales())
        .map(|((&(p, _), &sc), &v)| step_frequency(sc, v, p > T::zero(), &grid, &cfg.wavelet))
        .unzip();
    hold_untrusted(&mut trace, &trusted);
    let trace = smooth_trace(&trace, cfg.median_window);
    Ok(SeriesAnalysis {
        result: integrate_count(&trace, cfg.fps()),
        scales,
        trusted,
    })
}

pub fn count_series<T: Real>(h: &[T], cfg: &PipelineConfig) -> Result<CountResult> {
    Ok(analyze_series(h, cfg)?.result)
}

/// Counting input: raw frames (N frames give N−1 flow fields) or flows.
#[derive(Debug, Clone, Copy)]
pub enum VideoInput<'a, T: Real> {
    Frames(&'a [Image<T>]),
    Flows(&'a [FlowField<T>]),
}

/// Everything the video pipeline computed on the way to a count.
#[derive(Debug, Clone)]
pub struct VideoAnalysis {
    pub result: CountResult,
    pub masks: Vec<SegMask>,
    /// Pooled scale per step, frames.
    pub scales: Vec<f64>,
    pub trusted: Vec<bool>,
    /// Scale-grid entries outside the cone of influence, per step.
    pub valid: Vec<usize>,
    pub grid: Vec<f64>,
    /// Median of each raw motion map under the step's mask, in channel order.
    pub pooled_maps: Vec<[f64; 6]>,
    /// Mean per-channel wavelet power under the mask, before fusion.
    pub channel_power: Vec<[f64; 6]>,
    pub stride: usize,
}

impl VideoAnalysis {
    /// Channel contributing the most power under the mask at step `t`.
    pub fn dominant_channel(&self, t: usize) -> Channel {
        let p = &self.channel_power[t];
        let mut best = 0;
        for c in 1..6 {
            if p[c] > p[best] {
                best = c;
            }
        }
        Channel::ALL[best]
    }
}

/// Pairwise flow for a frame sequence; pairs run in parallel.
pub fn flows_from_frames<T: Real>(frames: &[Image<T>], p: &HSParams) -> Result<Vec<FlowField<T>>> {
    if frames.len() < 2 {
        return Err(Error::ClipTooShort(format!(
            "{} frames; flow needs at least 2",
            frames.len()
        )));
    }
    let dims = frames[0].dims();
    if let Some(i) = frames.iter().position(|f| f.dims() != dims) {
        return Err(Error::dims(format!(
            "frame {i} is {:?}, expected {dims:?}",
            frames[i].dims()
        )));
    }
    frames
        .par_windows(2)
        .map(|w| estimate_flow(&w[0], &w[1], p))
        .collect()
}

pub fn analyze_video<T: Real>(
    input: VideoInput<'_, T>,
    cfg: &PipelineConfig,
) -> Result<VideoAnalysis> {
    cfg.validate()?;
    let owned;
    let flows: &[FlowField<T>] = match input {
        VideoInput::Flows(f) => f,
        VideoInput::Frames(frames) => {
            // Fail on length before paying for flow.
            CwtPlan::<T>::new(frames.len().saturating_sub(1), &cfg.wavelet)?;
            owned = flows_from_frames(frames, &cfg.flow)?;
            &owned
        }
    };
    analyze_flows(flows, cfg)
}

fn analyze_flows<T: Real>(flows: &[FlowField<T>], cfg: &PipelineConfig) -> Result<VideoAnalysis> {
    let plan = CwtPlan::<T>::new(flows.len(), &cfg.wavelet)?;
    let dims = flows[0].dims();
    if let Some(i) = flows.iter().position(|f| f.dims() != dims) {
        return Err(Error::dims(format!(
            "flow {i} is {:?}, expected {dims:?}",
            flows[i].dims()
        )));
    }
    let stride = cfg.stride_for(dims.0, dims.1);
    let maps: Vec<MotionMaps<T>> = flows
        .par_iter()
        .map(|f| motion_maps(&downsample_flow(f, stride), cfg.sigma))
        .collect::<Result<_>>()?;

    let mut fusion = PowerFusion::new();
    let mut per_channel_power: Vec<Vec<PowerMap<T>>> = Vec::with_capacity(6);
    for c in Channel::ALL {
        let stack: Vec<Grid<T>> = maps.iter().map(|m| m.channel(c).clone()).collect();
        let r = dense_cwt_with_plan(&stack, &plan)?;
        fusion.add(c, &r)?;
        per_channel_power.push(r.powers().to_vec());
    }
    let fused = fusion.finish()?;
    let grid: Vec<f64> = fused.grid.iter().map(|x| x.wide()).collect();

    let n = flows.len();
    let mut masks: Vec<SegMask> = Vec::with_capacity(n);
    for t in 0..n {
        let m = segment(&fused.power[t], cfg.mask_floor, masks.last());
        masks.push(m);
    }

    let mut scales = Vec::with_capacity(n);
    let mut trusted = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    let mut pooled_maps = Vec::with_capacity(n);
    let mut channel_power = Vec::with_capacity(n);
    for t in 0..n {
        let mask = &masks[t];
        let s = masked_median(&fused.scale[t], mask).unwrap_or(0.0);
        let v = fused.valid[t];
        let has_power = fused.power[t]
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .any(|(p, &m)| m && *p > T::zero());
        let (f, ok) = step_frequency(s, v, has_power, &grid, &cfg.wavelet);
        scales.push(s);
        trusted.push(ok);
        trace.push(f);

        let mut pooled = [0.0; 6];
        let mut share = [0.0; 6];
        for c in Channel::ALL {
            let ci = c.index();
            pooled[ci] = masked_median(maps[t].channel(c), mask).unwrap_or(0.0);
            let p = per_channel_power[ci][t].as_slice();
            let (sum, cnt) = p
                .iter()
                .zip(mask.as_slice())
                .filter(|(_, &m)| m)
                .fold((0.0, 0usize), |(s, k), (x, _)| (s + x.wide(), k + 1));
            share[ci] = if cnt > 0 { sum / cnt as f64 } else { 0.0 };
        }
        pooled_maps.push(pooled);
        channel_power.push(share);
    }
    hold_untrusted(&mut trace, &trusted);
    let trace = smooth_trace(&trace, cfg.median_window);

    Ok(VideoAnalysis {
        result: integrate_count(&trace, cfg.fps()),
        masks,
        scales,
        trusted,
        valid: fused.valid,
        grid,
        pooled_maps,
        channel_power,
        stride,
    })
}

pub fn count_video<T: Real>(input: VideoInput<'_, T>, cfg: &PipelineConfig) -> Result<CountResult> {
    Ok(analyze_video(input, cfg)?.result)
}
