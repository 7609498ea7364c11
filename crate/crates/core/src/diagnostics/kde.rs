//! Gaussian kernel density estimates.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimum sample size accepted by the estimators.
pub const MIN_KDE_SAMPLES: usize = 100;
const GRID_HALF_WIDTH: f64 = 8.0;
const MAX_GRID: usize = 100_000;
const DEFAULT_GRID: usize = 512;

/// `(2π)^{-1/2}`
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 · min(σ̂, IQR / 1.34) · n^{−1/5}`, falling back to
/// `σ̂` when the IQR vanishes and to a tiny width when all values coincide.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (_, sd) = mean_sd(values);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (values.len() as f64).powf(-0.2);
    if h > 0.0 {
        h
    } else {
        let scale = sorted.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        1e-6 * scale
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_KDE_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n,
            need: MIN_KDE_SAMPLES,
        });
    }
    Ok(())
}

fn grid(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let wanted = ((hi - lo) / (0.5 * h)).ceil() as usize + 1;
    let n = wanted.clamp(DEFAULT_GRID, MAX_GRID);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// A one-dimensional density estimate on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    samples: Vec<f64>,
}

impl Kde1d {
    /// Silverman bandwidth, grid covering the data plus eight bandwidths each side.
    pub fn fit(values: &[f64]) -> Result<Self> {
        Self::fit_with_bandwidth(values, None)
    }

    pub fn fit_with_bandwidth(values: &[f64], bandwidth: Option<f64>) -> Result<Self> {
        check_samples(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                atom: i,
                detail: format!("KDE sample {i} is {}", values[i]),
            });
        }
        let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(values));
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth {h} must be positive")));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - GRID_HALF_WIDTH * h;
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_HALF_WIDTH * h;
        let grid = grid(lo, hi, h);
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let density = grid.iter().map(|&x| density_at(&sorted, h, x)).collect();
        Ok(Kde1d {
            bandwidth: h,
            grid,
            density,
            samples: sorted,
        })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        density_at(&self.samples, self.bandwidth, x)
    }

    /// Trapezoid integral of the curve over its grid.
    pub fn grid_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Exact mass of the estimate on `[a, b]` through the normal CDF.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        interval_mass(&self.samples, self.bandwidth, a, b)
    }
}

/// `(1/nh) Σ φ((x − v)/h)` over samples within eight bandwidths of `x`.
fn density_at(sorted: &[f64], h: f64, x: f64) -> f64 {
    let lo = sorted.partition_point(|&v| v < x - 9.0 * h);
    let hi = sorted.partition_point(|&v| v <= x + 9.0 * h);
    let s: f64 = sorted[lo..hi]
        .iter()
        .map(|&v| {
            let u = (x - v) / h;
            (-0.5 * u * u).exp()
        })
        .sum();
    s * INV_SQRT_2PI / (sorted.len() as f64 * h)
}

/// Mass on `[a, b]` of the Gaussian KDE with bandwidth `h`, without building a grid.
pub fn interval_mass(values: &[f64], h: f64, a: f64, b: f64) -> f64 {
    let std = Normal::standard();
    let s: f64 = values.iter().map(|&v| std.cdf((b - v) / h) - std.cdf((a - v) / h)).sum();
    s / values.len() as f64
}

/// A two-dimensional product-kernel estimate on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde2d {
    pub bandwidth: [f64; 2],
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major: `density[i * ys.len() + j]` at `(xs[i], ys[j])`.
    pub density: Vec<f64>,
}

impl Kde2d {
    /// Per-axis bandwidth `σ̂_j n^{−1/6}`.
    pub fn fit(points: &[[f64; 2]], grid_size: usize) -> Result<Self> {
        check_samples(points.len())?;
        let n = points.len() as f64;
        let mut bandwidth = [0.0; 2];
        let mut axes: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for k in 0..2 {
            let col: Vec<f64> = points.iter().map(|p| p[k]).collect();
            let (_, sd) = mean_sd(&col);
            let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let h = if sd > 0.0 { sd * n.powf(-1.0 / 6.0) } else { 1e-6 * scale };
            bandwidth[k] = h;
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min) - GRID_HALF_WIDTH * h;
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_HALF_WIDTH * h;
            let m = grid_size.max(2);
            axes[k] = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
        }
        let [xs, ys] = axes;
        let norm = 1.0 / (n * 2.0 * std::f64::consts::PI * bandwidth[0] * bandwidth[1]);
        // separable kernel: K(x, y) = Σ_s kx_s(x) ky_s(y)
        let kernel = |grid: &[f64], k: usize| -> Vec<f64> {
            let mut out = vec![0.0; grid.len() * points.len()];
            for (i, &g) in grid.iter().enumerate() {
                for (s, p) in points.iter().enumerate() {
                    let u = (g - p[k]) / bandwidth[k];
                    out[i * points.len() + s] = (-0.5 * u * u).exp();
                }
            }
            out
        };
        let kx = kernel(&xs, 0);
        let ky = kernel(&ys, 1);
        let np = points.len();
        let mut density = vec![0.0; xs.len() * ys.len()];
        for i in 0..xs.len() {
            for j in 0..ys.len() {
                let s: f64 = (0..np).map(|s| kx[i * np + s] * ky[j * np + s]).sum();
                density[i * ys.len() + j] = s * norm;
            }
        }
        Ok(Kde2d {
            bandwidth,
            xs,
            ys,
            density,
        })
    }

    pub fn grid_mass(&self) -> f64 {
        let row_masses: Vec<f64> = (0..self.xs.len())
            .map(|i| trapezoid(&self.ys, &self.density[i * self.ys.len()..(i + 1) * self.ys.len()]))
            .collect();
        trapezoid(&self.xs, &row_masses)
    }
}
