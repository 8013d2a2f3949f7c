//! Gaussian-derivative filtering of flow fields into differential motion maps.
//!
//! The 2-D first-order Gaussian derivative `G^x = -x/(2πσ⁴)·exp(-(x²+y²)/2σ²)`
//! factors into a 1-D derivative-of-Gaussian along `x` times a 1-D Gaussian
//! along `y`, so every map is two separable passes with replicate borders.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{FlowField, Grid, MotionMaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOrder {
    Smooth,
    FirstDerivative,
}

/// 1-D sampled Gaussian (or derivative) taps centred on index `radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1d {
    pub radius: usize,
    pub taps: Vec<f64>,
}

/// Separable 2-D kernel: `along` is applied on the derivative axis, `across`
/// on the other one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub sigma: f64,
    pub radius: usize,
    pub axis: Axis,
    pub order: KernelOrder,
    pub along: Kernel1d,
    pub across: Kernel1d,
}

impl GaussianKernel {
    /// Dense `(2r+1)²` taps, row-major with `y` as the row index.
    pub fn taps_2d(&self) -> Vec<f64> {
        let n = 2 * self.radius + 1;
        let mut out = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let (kx, ky) = match self.axis {
                    Axis::X => (self.along.taps[x], self.across.taps[y]),
                    Axis::Y => (self.across.taps[x], self.along.taps[y]),
                };
                out.push(kx * ky);
            }
        }
        out
    }
}

pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Normalised sampled Gaussian; taps sum to one.
pub fn gaussian_1d(sigma: f64) -> Result<Kernel1d> {
    check_sigma(sigma)?;
    let radius = kernel_radius(sigma);
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(Kernel1d { radius, taps })
}

/// Sampled `-x/σ²·g(x)`, rescaled so that a unit ramp has derivative exactly 1
/// (first moment normalisation compensates truncation at 3σ).
pub fn gaussian_derivative_1d(sigma: f64) -> Result<Kernel1d> {
    let g = gaussian_1d(sigma)?;
    let r = g.radius as f64;
    let mut taps: Vec<f64> = g
        .taps
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let x = i as f64 - r;
            -x / (sigma * sigma) * w
        })
        .collect();
    // Convolution with f(x)=x gives -Σ_i k_i·(i-r), which must be 1.
    let moment: f64 = taps
        .iter()
        .enumerate()
        .map(|(i, &k)| k * (i as f64 - r))
        .sum();
    taps.iter_mut().for_each(|t| *t /= -moment);
    // Exact antisymmetry.
    let n = taps.len();
    for i in 0..n / 2 {
        let a = 0.5 * (taps[i] - taps[n - 1 - i]);
        taps[i] = a;
        taps[n - 1 - i] = -a;
    }
    taps[n / 2] = 0.0;
    Ok(Kernel1d {
        radius: g.radius,
        taps,
    })
}

/// First-order Gaussian derivative kernel along `axis`.
pub fn gaussian_derivative_kernel(sigma: f64, axis: Axis) -> Result<GaussianKernel> {
    let along = gaussian_derivative_1d(sigma)?;
    let across = gaussian_1d(sigma)?;
    Ok(GaussianKernel {
        sigma,
        radius: along.radius,
        axis,
        order: KernelOrder::FirstDerivative,
        along,
        across,
    })
}

/// Isotropic Gaussian smoothing kernel.
pub fn gaussian_smoothing_kernel(sigma: f64) -> Result<GaussianKernel> {
    let g = gaussian_1d(sigma)?;
    Ok(GaussianKernel {
        sigma,
        radius: g.radius,
        axis: Axis::X,
        order: KernelOrder::Smooth,
        along: g.clone(),
        across: g,
    })
}

/// Convolves every row (`Axis::X`) or column (`Axis::Y`) with `k`:
/// `out(x) = Σ_i k_i·f(x - (i - r))`; borders replicate.
pub fn filter_1d<T: Real>(src: &Grid<T>, k: &Kernel1d, axis: Axis) -> Grid<T> {
    let (w, h) = src.dims();
    let r = k.radius as isize;
    let taps: Vec<T> = k.taps.iter().map(|&t| T::lit(t)).collect();
    let data = src.as_slice();
    let mut out = vec![T::zero(); w * h];
    match axis {
        Axis::X => {
            for y in 0..h {
                let row = &data[y * w..(y + 1) * w];
                for x in 0..w {
                    let mut acc = T::zero();
                    for (i, &t) in taps.iter().enumerate() {
                        let xi = (x as isize + r - i as isize).clamp(0, w as isize - 1);
                        acc += t * row[xi as usize];
                    }
                    out[y * w + x] = acc;
                }
            }
        }
        Axis::Y => {
            for y in 0..h {
                for (i, &t) in taps.iter().enumerate() {
                    let yi = (y as isize + r - i as isize).clamp(0, h as isize - 1) as usize;
                    let src_row = &data[yi * w..(yi + 1) * w];
                    let dst = &mut out[y * w..(y + 1) * w];
                    for (d, &s) in dst.iter_mut().zip(src_row) {
                        *d += t * s;
                    }
                }
            }
        }
    }
    Grid::from_raw(w, h, out)
}

/// Applies a separable kernel to a grid.
pub fn apply_kernel<T: Real>(src: &Grid<T>, k: &GaussianKernel) -> Grid<T> {
    match k.axis {
        Axis::X => filter_1d(&filter_1d(src, &k.along, Axis::X), &k.across, Axis::Y),
        Axis::Y => filter_1d(&filter_1d(src, &k.across, Axis::X), &k.along, Axis::Y),
    }
}

pub fn smooth<T: Real>(src: &Grid<T>, sigma: f64) -> Result<Grid<T>> {
    Ok(apply_kernel(src, &gaussian_smoothing_kernel(sigma)?))
}

/// The full first-order Jacobian of a smoothed flow field.
#[derive(Debug, Clone)]
pub struct FlowGradients<T: Real> {
    pub dx_u: Grid<T>,
    pub dy_u: Grid<T>,
    pub dx_v: Grid<T>,
    pub dy_v: Grid<T>,
}

pub fn flow_gradients<T: Real>(f: &FlowField<T>, sigma: f64) -> Result<FlowGradients<T>> {
    let kx = gaussian_derivative_kernel(sigma, Axis::X)?;
    let ky = gaussian_derivative_kernel(sigma, Axis::Y)?;
    Ok(FlowGradients {
        dx_u: apply_kernel(f.u(), &kx),
        dy_u: apply_kernel(f.u(), &ky),
        dx_v: apply_kernel(f.v(), &kx),
        dy_v: apply_kernel(f.v(), &ky),
    })
}

/// Six motion maps of one flow frame: divergence, curl, `∂ₓFₓ`, `∂ᵧFᵧ` and
/// the two flow components smoothed at the same `sigma`.
pub fn motion_maps<T: Real>(f: &FlowField<T>, sigma: f64) -> Result<MotionMaps<T>> {
    let g = flow_gradients(f, sigma)?;
    let div = g.dx_u.zip_with(&g.dy_v, |a, b| a + b)?;
    let curl = g.dx_v.zip_with(&g.dy_u, |a, b| a - b)?;
    let fx = smooth(f.u(), sigma)?;
    let fy = smooth(f.v(), sigma)?;
    MotionMaps::new([div, curl, g.dx_u, g.dy_v, fx, fy], sigma)
}

/// Basic motion type of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionType {
    Translation,
    Rotation,
    Expansion,
    Mixed,
    None,
}

/// Normalised component energies over the interior of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEnergies {
    pub div: f64,
    pub curl: f64,
    pub flow: f64,
}

/// Mean `|div|`, mean `|curl|` and mean flow magnitude per `σ` over interior
/// pixels (margin `ceil(3σ)`), each divided by their sum. All zero for a
/// motionless frame.
pub fn motion_energies<T: Real>(m: &MotionMaps<T>) -> MotionEnergies {
    let (w, h) = m.dims();
    let margin = kernel_radius(m.sigma());
    let (x0, x1, y0, y1) = if w > 2 * margin && h > 2 * margin {
        (margin, w - margin, margin, h - margin)
    } else {
        (0, w, 0, h)
    };
    let (mut d, mut c, mut f, mut n) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for y in y0..y1 {
        for x in x0..x1 {
            d += m.div().get(x, y).wide().abs();
            c += m.curl().get(x, y).wide().abs();
            let (u, v) = (m.fx().get(x, y).wide(), m.fy().get(x, y).wide());
            f += (u * u + v * v).sqrt();
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let (d, c, f) = (d / n, c / n, f / n / m.sigma());
    let z = d + c + f;
    if z <= f64::MIN_POSITIVE {
        return MotionEnergies {
            div: 0.0,
            curl: 0.0,
            flow: 0.0,
        };
    }
    MotionEnergies {
        div: d / z,
        curl: c / z,
        flow: f / z,
    }
}

/// Thresholded reading of the div/curl conditions: a component is active when
/// its normalised energy exceeds `tau`.
pub fn classify_motion_type<T: Real>(m: &MotionMaps<T>, tau: f64) -> MotionType {
    let e = motion_energies(m);
    let div = e.div > tau;
    let curl = e.curl > tau;
    let flow = e.flow > tau;
    match (div, curl) {
        (false, false) if flow => MotionType::Translation,
        (false, true) => MotionType::Rotation,
        (true, false) => MotionType::Expansion,
        (false, false) => MotionType::None,
        _ => MotionType::Mixed,
    }
}
