//! Shared domain types and configuration.
//!
//! Every constructor validates its invariants (matching lengths, finite
//! values) and the resulting values are immutable from the outside, so they
//! can be shared freely across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Morlet non-dimensional frequency used throughout.
pub const DEFAULT_OMEGA0: f64 = 6.0;
/// Sub-octaves per scale step.
pub const DEFAULT_DJ: f64 = 0.125;
/// Smallest scale, in frames (twice the sampling interval).
pub const DEFAULT_S0: f64 = 2.0;
/// Fewest repetitions the scale grid must still be able to host.
pub const DEFAULT_MIN_CYCLES: f64 = 4.0;
/// Spatial scale of the derivative filters, in pixels.
pub const DEFAULT_SIGMA: f64 = 4.0;
/// Length of the median filter applied to the frequency trace.
pub const DEFAULT_MEDIAN_WINDOW: usize = 9;
/// Minimum foreground fraction before a mask is considered degenerate.
pub const DEFAULT_MASK_FLOOR: f64 = 0.01;

/// Row-major 2-D grid of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T = f32> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Single-channel luminance image with values in `[0, 1]`.
pub type Image<T = f32> = Grid<T>;
/// Per-pixel maximum wavelet power at one timestep.
pub type PowerMap<T = f32> = Grid<T>;
/// Per-pixel scale (frames) of the maximum wavelet power at one timestep.
pub type ScaleMap<T = f32> = Grid<T>;

impl<T: Real> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dims(format!("empty grid {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::dims(format!(
                "grid {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps data that is already known to satisfy the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped into the grid (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two equally sized grids.
    pub fn zip_with(&self, other: &Grid<T>, f: impl Fn(T, T) -> T) -> Result<Grid<T>> {
        if self.dims() != other.dims() {
            return Err(Error::dims(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum_wide(&self) -> f64 {
        crate::scalar::sum_wide(&self.data)
    }

    pub fn mean_wide(&self) -> f64 {
        crate::scalar::mean_wide(&self.data)
    }

    pub fn max_value(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a })
    }
}

/// Per-frame motion field in pixels per frame.
///
/// `u` is the horizontal displacement, `v` the vertical one (image `y` grows
/// downwards).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T = f32> {
    u: Grid<T>,
    v: Grid<T>,
}

impl<T: Real> FlowField<T> {
    pub fn new(width: usize, height: usize, u: Vec<T>, v: Vec<T>) -> Result<Self> {
        Self::from_grids(Grid::new(width, height, u)?, Grid::new(width, height, v)?)
    }

    pub fn from_grids(u: Grid<T>, v: Grid<T>) -> Result<Self> {
        if u.dims() != v.dims() {
            return Err(Error::dims(format!(
                "flow components {:?} vs {:?}",
                u.dims(),
                v.dims()
            )));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Grid::zeros(width, height),
            v: Grid::zeros(width, height),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (T, T)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self {
            u: Grid::from_raw(width, height, u),
            v: Grid::from_raw(width, height, v),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.u.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.u.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    #[inline]
    pub fn u(&self) -> &Grid<T> {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &Grid<T> {
        &self.v
    }

    /// Multiplies both components by `k`.
    pub fn scaled(&self, k: T) -> Self {
        Self {
            u: self.u.map(|a| a * k),
            v: self.v.map(|a| a * k),
        }
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: T, other: &FlowField<T>, b: T) -> Result<Self> {
        Ok(Self {
            u: self.u.zip_with(&other.u, |p, q| a * p + b * q)?,
            v: self.v.zip_with(&other.v, |p, q| a * p + b * q)?,
        })
    }
}

/// The six differential motion channels, in their canonical order.
///
/// The order doubles as the tie-break priority when fusing channel power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Div,
    Curl,
    GxFx,
    GyFy,
    Fx,
    Fy,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Div,
        Channel::Curl,
        Channel::GxFx,
        Channel::GyFy,
        Channel::Fx,
        Channel::Fy,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Div => "div",
            Channel::Curl => "curl",
            Channel::GxFx => "gxfx",
            Channel::GyFy => "gyfy",
            Channel::Fx => "fx",
            Channel::Fy => "fy",
        }
    }
}

/// Differential motion representations of one flow frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMaps<T = f32> {
    channels: [Grid<T>; 6],
    sigma: f64,
}

impl<T: Real> MotionMaps<T> {
    /// Channels in [`Channel::ALL`] order.
    pub fn new(channels: [Grid<T>; 6], sigma: f64) -> Result<Self> {
        let dims = channels[0].dims();
        if channels.iter().any(|c| c.dims() != dims) {
            return Err(Error::dims("motion map channels differ in size"));
        }
        if channels
            .iter()
            .any(|c| c.as_slice().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("motion maps"));
        }
        Ok(Self { channels, sigma })
    }

    #[inline]
    pub fn channel(&self, c: Channel) -> &Grid<T> {
        &self.channels[c.index()]
    }

    pub fn div(&self) -> &Grid<T> {
        self.channel(Channel::Div)
    }

    pub fn curl(&self) -> &Grid<T> {
        self.channel(Channel::Curl)
    }

    pub fn gxfx(&self) -> &Grid<T> {
        self.channel(Channel::GxFx)
    }

    pub fn gyfy(&self) -> &Grid<T> {
        self.channel(Channel::GyFy)
    }

    pub fn fx(&self) -> &Grid<T> {
        self.channel(Channel::Fx)
    }

    pub fn fy(&self) -> &Grid<T> {
        self.channel(Channel::Fy)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }
}

/// Parameters of the wavelet analysis.
///
/// Scales are expressed in frames; `dt` (seconds per frame) is used only
/// when converting to frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub omega0: f64,
    pub dj: f64,
    pub s0: f64,
    /// `None` disables the cap on the largest scale.
    pub min_cycles: Option<f64>,
    pub dt: f64,
}

impl WaveletConfig {
    pub fn for_fps(fps: f64) -> Self {
        Self {
            dt: 1.0 / fps,
            ..Self::default()
        }
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.dt
    }

    /// Returns the configuration unchanged when every invariant holds,
    /// otherwise names the first one violated.
    pub fn validate(self) -> Result<Self> {
        if !self.omega0.is_finite() || self.omega0 < 5.0 {
            return Err(Error::config("omega0 must be at least 5"));
        }
        if !self.dj.is_finite() || self.dj <= 0.0 {
            return Err(Error::config("dj must be positive"));
        }
        if !self.s0.is_finite() || self.s0 < 2.0 {
            return Err(Error::config("s0 must be at least 2 frames"));
        }
        if let Some(c) = self.min_cycles {
            if !c.is_finite() || c < 1.0 {
                return Err(Error::config("min_cycles must be at least 1"));
            }
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::config("dt must be positive (fps > 0)"));
        }
        Ok(self)
    }
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            omega0: DEFAULT_OMEGA0,
            dj: DEFAULT_DJ,
            s0: DEFAULT_S0,
            min_cycles: Some(DEFAULT_MIN_CYCLES),
            dt: 1.0 / 30.0,
        }
    }
}

/// Free-function form of [`WaveletConfig::validate`].
pub fn validate_config(cfg: WaveletConfig) -> Result<WaveletConfig> {
    cfg.validate()
}

/// Wavelet power `|W_n(s)|²` over scales × time for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram<T = f32> {
    scales: Vec<T>,
    coi: Vec<T>,
    /// Row-major by scale: `power[j * n_times + n]`.
    power: Vec<T>,
}

impl<T: Real> Scalogram<T> {
    pub fn new(scales: Vec<T>, coi: Vec<T>, power: Vec<T>) -> Result<Self> {
        if scales.is_empty() || coi.is_empty() {
            return Err(Error::dims("scalogram needs at least one scale and time"));
        }
        if power.len() != scales.len() * coi.len() {
            return Err(Error::dims(format!(
                "power has {} entries, expected {}x{}",
                power.len(),
                scales.len(),
                coi.len()
            )));
        }
        if scales
            .iter()
            .chain(&coi)
            .chain(&power)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("scalogram"));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) || scales[0] <= T::zero() {
            return Err(Error::format(
                "scales must be positive and strictly increasing",
            ));
        }
        if power.iter().any(|&p| p < T::zero()) {
            return Err(Error::format("negative wavelet power"));
        }
        Ok(Self { scales, coi, power })
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    /// Largest scale (frames) outside the cone of influence at each time.
    pub fn coi(&self) -> &[T] {
        &self.coi
    }

    pub fn power(&self) -> &[T] {
        &self.power
    }

    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn n_times(&self) -> usize {
        self.coi.len()
    }

    #[inline]
    pub fn at(&self, scale_idx: usize, t: usize) -> T {
        self.power[scale_idx * self.n_times() + t]
    }

    /// One row of the scalogram.
    pub fn row(&self, scale_idx: usize) -> &[T] {
        let n = self.n_times();
        &self.power[scale_idx * n..(scale_idx + 1) * n]
    }
}

/// Binary foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height || data.is_empty() {
            return Err(Error::dims(format!(
                "mask {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }
}

/// Output of the counting stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    /// Instantaneous frequency per step, Hz.
    pub freq_trace: Vec<f64>,
    /// Cycles contributed by each step.
    pub increments: Vec<f64>,
    /// Unrounded total, the sum of `increments`.
    pub count: f64,
}

/// Ground-truth repetition annotation for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleAnnotation {
    pub video_id: String,
    pub fps: f64,
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_bounds: Option<Vec<usize>>,
}

impl CycleAnnotation {
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        count: u32,
        cycle_bounds: Option<Vec<usize>>,
    ) -> Result<Self> {
        let a = Self {
            video_id: video_id.into(),
            fps,
            count,
            cycle_bounds,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(Error::Manifest(format!(
                "{}: fps must be positive",
                self.video_id
            )));
        }
        if let Some(bounds) = &self.cycle_bounds {
            if bounds.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Manifest(format!(
                    "{}: bounds not increasing",
                    self.video_id
                )));
            }
            let implied = bounds.len().saturating_sub(1) as u32;
            if implied != self.count {
                return Err(Error::Manifest(format!(
                    "{}: count {} disagrees with {} cycle bounds",
                    self.video_id,
                    self.count,
                    bounds.len()
                )));
            }
        }
        Ok(())
    }

    /// Checks that every bound indexes a frame of a clip with `n_frames` frames.
    pub fn check_within(&self, n_frames: usize) -> Result<()> {
        match &self.cycle_bounds {
            Some(b) if b.last().is_some_and(|&last| last >= n_frames) => {
                Err(Error::Manifest(format!(
                    "{}: cycle bound beyond clip length {n_frames}",
                    self.video_id
                )))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        let cfg = WaveletConfig::for_fps(30.0);
        assert_eq!(cfg.omega0, 6.0);
        assert_eq!(cfg.dj, 0.125);
        assert_eq!(cfg.s0, 2.0);
        assert_eq!(cfg.min_cycles, Some(4.0));
        assert_eq!(validate_config(cfg).unwrap(), cfg);
    }

    #[test]
    fn zero_dj_names_the_invariant() {
        let cfg = WaveletConfig {
            dj: 0.0,
            ..WaveletConfig::default()
        };
        let msg = validate_config(cfg).unwrap_err().to_string();
        assert!(msg.contains("dj must be positive"), "{msg}");
    }

    #[test]
    fn loosest_cycle_limit_is_valid() {
        let cfg = WaveletConfig {
            min_cycles: Some(1.0),
            ..WaveletConfig::default()
        };
        assert!(validate_config(cfg).is_ok());
        let bad = WaveletConfig {
            min_cycles: Some(0.5),
            ..WaveletConfig::default()
        };
        assert!(validate_config(bad).is_err());
    }

    #[test]
    fn omega0_and_s0_limits() {
        let low = WaveletConfig {
            omega0: 4.0,
            ..WaveletConfig::default()
        };
        assert!(low.validate().is_err());
        let small = WaveletConfig {
            s0: 1.0,
            ..WaveletConfig::default()
        };
        assert!(small.validate().is_err());
    }

    #[test]
    fn annotation_rules() {
        assert!(CycleAnnotation::new("a", 30.0, 3, Some(vec![0, 10, 20, 30])).is_ok());
        let err = CycleAnnotation::new("a", 30.0, 1, Some(vec![5, 3])).unwrap_err();
        assert!(err.to_string().contains("bounds not increasing"));
        assert!(CycleAnnotation::new("a", 30.0, 5, Some(vec![0, 10])).is_err());
        let a = CycleAnnotation::new("a", 30.0, 1, Some(vec![0, 40])).unwrap();
        assert!(a.check_within(41).is_ok());
        assert!(a.check_within(40).is_err());
    }

    #[test]
    fn scalogram_rejects_unordered_scales() {
        assert!(Scalogram::<f32>::new(vec![2.0, 2.0], vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(Scalogram::<f32>::new(vec![2.0], vec![1.0], vec![-1.0]).is_err());
        assert!(Scalogram::<f32>::new(vec![2.0], vec![1.0], vec![0.5]).is_ok());
    }

    proptest! {
        #[test]
        fn injected_nan_fails_construction(len in 1usize..64, at in 0usize..64) {
            let at = at % len;
            let mut data = vec![0.25f32; len];
            data[at] = f32::NAN;
            prop_assert!(Grid::new(len, 1, data.clone()).is_err());
            prop_assert!(FlowField::new(len, 1, data.clone(), vec![0.0; len]).is_err());
            prop_assert!(FlowField::new(len, 1, vec![0.0; len], data.clone()).is_err());
            let scales: Vec<f32> = (0..len).map(|i| 2.0 + i as f32).collect();
            prop_assert!(Scalogram::new(scales, vec![1.0], data.clone()).is_err());
            let g = Grid::zeros(len, 1);
            let mut chans: [Grid<f32>; 6] = std::array::from_fn(|_| g.clone());
            chans[at % 6] = Grid::from_raw(len, 1, data);
            prop_assert!(MotionMaps::new(chans, 4.0).is_err());
        }
    }
}
