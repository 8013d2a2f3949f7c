//! Dense optical flow by coarse-to-fine Horn–Schunck.
//!
//! Intensities are rescaled to the 0–255 range before solving so that the
//! smoothness weight has its customary magnitude. Each pyramid level warps
//! the second frame by the upsampled coarser estimate and solves for the
//! total flow with Gauss–Seidel sweeps; borders replicate.

use crate::diffgeo::{filter_1d, gaussian_1d, Axis};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{FlowField, Grid, Image};

pub const MIN_FLOW_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HSParams {
    /// Smoothness weight, in 0–255 intensity units.
    pub alpha: f64,
    /// Gauss–Seidel sweeps per pyramid level.
    pub iterations: usize,
    pub pyramid_levels: usize,
    /// Resolution ratio between consecutive levels.
    pub pyramid_scale: f64,
}

impl Default for HSParams {
    fn default() -> Self {
        Self {
            alpha: 15.0,
            iterations: 200,
            pyramid_levels: 3,
            pyramid_scale: 0.5,
        }
    }
}

impl HSParams {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::config("alpha must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::config("pyramid_levels must be positive"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::config("pyramid_scale must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    d: Vec<f64>,
}

impl Plane {
    fn zeros(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            d: vec![0.0; w * h],
        }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.d[y * self.w + x]
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x0 + 1, y0) * fx;
        let bot = self.at(x0, y0 + 1) * (1.0 - fx) + self.at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Samples at pixel-centre-aligned coordinates of a `w`×`h` target.
    fn resample(&self, w: usize, h: usize) -> Self {
        let sx = self.w as f64 / w as f64;
        let sy = self.h as f64 / h as f64;
        let mut out = Plane::zeros(w, h);
        for y in 0..h {
            let yc = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..w {
                let xc = (x as f64 + 0.5) * sx - 0.5;
                out.d[y * w + x] = self.bilinear(xc, yc);
            }
        }
        out
    }

    fn blur(&self, sigma: f64) -> Self {
        let k = gaussian_1d(sigma).expect("positive sigma");
        let g = Grid::from_raw(self.w, self.h, self.d.clone());
        let g = filter_1d(&filter_1d(&g, &k, Axis::X), &k, Axis::Y);
        Self {
            w: self.w,
            h: self.h,
            d: g.into_vec(),
        }
    }
}

fn pyramid(base: Plane, p: &HSParams) -> Vec<Plane> {
    let sigma = 0.5
        * (1.0 / (p.pyramid_scale * p.pyramid_scale) - 1.0)
            .sqrt()
            .max(0.5);
    let mut levels = vec![base];
    while levels.len() < p.pyramid_levels {
        let last = levels.last().unwrap();
        let w = (last.w as f64 * p.pyramid_scale).round() as usize;
        let h = (last.h as f64 * p.pyramid_scale).round() as usize;
        if w < MIN_FLOW_SIDE || h < MIN_FLOW_SIDE {
            break;
        }
        let next = last.blur(sigma).resample(w, h);
        levels.push(next);
    }
    levels
}

/// Solves one level for the total flow, starting from `(u, v)`.
fn solve_level(prev: &Plane, next: &Plane, u: &mut Plane, v: &mut Plane, p: &HSParams) {
    let (w, h) = (prev.w, prev.h);
    let mut warped = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            warped.d[i] = next.bilinear(x as f64 + u.d[i], y as f64 + v.d[i]);
        }
    }
    let grad = |img: &Plane, x: isize, y: isize| {
        (
            0.5 * (img.at(x + 1, y) - img.at(x - 1, y)),
            0.5 * (img.at(x, y + 1) - img.at(x, y - 1)),
        )
    };
    let n = w * h;
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (ax, ay) = grad(prev, x as isize, y as isize);
            let (bx, by) = grad(&warped, x as isize, y as isize);
            ix[i] = 0.5 * (ax + bx);
            iy[i] = 0.5 * (ay + by);
            // Residual linearised about the warp: Ix·U + Iy·V + c = 0 in the total flow.
            it[i] = warped.d[i] - prev.d[i] - ix[i] * u.d[i] - iy[i] * v.d[i];
        }
    }
    let a2 = p.alpha * p.alpha;
    let denom: Vec<f64> = ix
        .iter()
        .zip(&iy)
        .map(|(gx, gy)| a2 + gx * gx + gy * gy)
        .collect();
    let avg = |f: &Plane, x: isize, y: isize| {
        (f.at(x - 1, y) + f.at(x + 1, y) + f.at(x, y - 1) + f.at(x, y + 1)) / 6.0
            + (f.at(x - 1, y - 1) + f.at(x + 1, y - 1) + f.at(x - 1, y + 1) + f.at(x + 1, y + 1))
                / 12.0
    };
    for _ in 0..p.iterations {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let ub = avg(u, x, y);
                let vb = avg(v, x, y);
                let r = (ix[i] * ub + iy[i] * vb + it[i]) / denom[i];
                u.d[i] = ub - ix[i] * r;
                v.d[i] = vb - iy[i] * r;
            }
        }
    }
}

/// Flow mapping `prev` onto `next`: a point at `(x, y)` in `prev` appears at
/// `(x + u, y + v)` in `next`.
pub fn estimate_flow<T: Real>(
    prev: &Image<T>,
    next: &Image<T>,
    p: &HSParams,
) -> Result<FlowField<T>> {
    p.validate()?;
    if prev.dims() != next.dims() {
        return Err(Error::dims(format!(
            "frame pair {:?} vs {:?}",
            prev.dims(),
            next.dims()
        )));
    }
    let (w, h) = prev.dims();
    if w < MIN_FLOW_SIDE || h < MIN_FLOW_SIDE {
        return Err(Error::dims(format!(
            "flow needs frames of at least {MIN_FLOW_SIDE}x{MIN_FLOW_SIDE}, got {w}x{h}"
        )));
    }
    let to_plane = |g: &Image<T>| Plane {
        w,
        h,
        d: g.as_slice().iter().map(|&x| x.wide() * 255.0).collect(),
    };
    let pa = pyramid(to_plane(prev), p);
    let pb = pyramid(to_plane(next), p);

    let coarsest = pa.last().unwrap();
    let mut u = Plane::zeros(coarsest.w, coarsest.h);
    let mut v = Plane::zeros(coarsest.w, coarsest.h);
    for lvl in (0..pa.len()).rev() {
        let (a, b) = (&pa[lvl], &pb[lvl]);
        if u.w != a.w || u.h != a.h {
            let (kx, ky) = (a.w as f64 / u.w as f64, a.h as f64 / u.h as f64);
            u = u.resample(a.w, a.h);
            v = v.resample(a.w, a.h);
            u.d.iter_mut().for_each(|x| *x *= kx);
            v.d.iter_mut().for_each(|x| *x *= ky);
        }
        solve_level(a, b, &mut u, &mut v, p);
    }
    let cast = |pl: Plane| pl.d.into_iter().map(T::lit).collect::<Vec<T>>();
    FlowField::new(w, h, cast(u), cast(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth random-looking blob texture evaluated at continuous coordinates.
    pub(crate) fn blobs(x: f64, y: f64) -> f64 {
        let centres = [
            (12.0, 10.0, 5.0),
            (30.0, 22.0, 6.0),
            (20.0, 40.0, 4.0),
            (45.0, 12.0, 5.0),
            (50.0, 45.0, 7.0),
            (8.0, 52.0, 5.0),
            (38.0, 34.0, 3.5),
        ];
        let mut s = 0.1;
        for (cx, cy, r) in centres {
            let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            s += 0.6 * (-d2 / (2.0 * r * r)).exp();
        }
        s.min(1.0)
    }

    fn render(w: usize, h: usize, dx: f64, dy: f64) -> Image<f64> {
        Grid::from_fn(w, h, |x, y| blobs(x as f64 - dx, y as f64 - dy))
    }

    fn interior_mean(g: &Grid<f64>, m: usize) -> f64 {
        let (w, h) = g.dims();
        let mut s = 0.0;
        let mut n = 0.0;
        for y in m..h - m {
            for x in m..w - m {
                s += g.get(x, y);
                n += 1.0;
            }
        }
        s / n
    }

    #[test]
    fn recovers_horizontal_shift() {
        let a = render(64, 64, 0.0, 0.0);
        let b = render(64, 64, 2.0, 0.0);
        let f = estimate_flow(&a, &b, &HSParams::default()).unwrap();
        let u = interior_mean(f.u(), 8);
        let v = interior_mean(&f.v().map(|x: f64| x.abs()), 8);
        assert!((1.6..=2.4).contains(&u), "u = {u}");
        assert!(v <= 0.3, "|v| = {v}");
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = render(32, 32, 0.0, 0.0);
        let f = estimate_flow(&a, &a, &HSParams::default()).unwrap();
        assert!(f
            .u()
            .as_slice()
            .iter()
            .chain(f.v().as_slice())
            .all(|x| x.abs() < 1e-4));
        let flat = Grid::filled(16, 16, 0.5f64);
        let f = estimate_flow(&flat, &flat, &HSParams::default()).unwrap();
        assert!(f.u().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reverse_flow_negates() {
        let a = render(64, 64, 0.0, 0.0);
        let b = render(64, 64, 1.5, -1.0);
        let p = HSParams::default();
        let fab = estimate_flow(&a, &b, &p).unwrap();
        let fba = estimate_flow(&b, &a, &p).unwrap();
        let mut sums: Vec<f64> = fab
            .u()
            .as_slice()
            .iter()
            .zip(fba.u().as_slice())
            .map(|(x, y)| (x + y).abs())
            .collect();
        sums.sort_by(f64::total_cmp);
        let median = sums[sums.len() / 2];
        assert!(median <= 0.5, "median |u_ab + u_ba| = {median}");
    }

    #[test]
    fn translation_equivariant() {
        let p = HSParams::default();
        let f0 = estimate_flow(&render(64, 64, 0.0, 0.0), &render(64, 64, 1.0, 1.0), &p).unwrap();
        let f1 = estimate_flow(&render(64, 64, 3.0, 2.0), &render(64, 64, 4.0, 3.0), &p).unwrap();
        let mut worst: f64 = 0.0;
        for y in 16..48 {
            for x in 16..48 {
                worst = worst
                    .max((f0.u().get(x, y) - f1.u().get(x + 3, y + 2)).abs())
                    .max((f0.v().get(x, y) - f1.v().get(x + 3, y + 2)).abs());
            }
        }
        assert!(worst < 0.2, "worst interior difference {worst}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Grid::<f32>::zeros(16, 16);
        let b = Grid::<f32>::zeros(16, 12);
        assert!(estimate_flow(&a, &b, &HSParams::default()).is_err());
        let tiny = Grid::<f32>::zeros(4, 4);
        assert!(estimate_flow(&tiny, &tiny, &HSParams::default()).is_err());
        let bad = HSParams {
            pyramid_scale: 1.0,
            ..HSParams::default()
        };
        assert!(estimate_flow(&a, &a, &bad).is_err());
    }

    #[test]
    fn deterministic() {
        let a = render(32, 32, 0.0, 0.0);
        let b = render(32, 32, 1.0, 0.5);
        let p = HSParams::default();
        assert_eq!(
            estimate_flow(&a, &b, &p).unwrap(),
            estimate_flow(&a, &b, &p).unwrap()
        );
    }
}
