//! Jump intensities on the mark space and the bottom carré du champ.
//!
//! A measure lives on `[0, T] × E` with `E ⊆ ℝ^p \ {0}` and product intensity
//! `dt × ν`. Infinite-activity Lévy measures are made simulatable by a hard
//! cutoff: marks with `|x| < ε` are dropped. Nothing replaces the dropped
//! small jumps; their drift is available through [`IntensityMeasure::small_jump_drift`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::point_process::{Mark, MAX_MARK_DIM};
use crate::quadrature::{integrate, integrate_geometric, DEFAULT_ABS_TOL};

/// A one-dimensional jump density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevyDensity {
    /// `x^{-(1+β)}` on `(0, c]`.
    PowerLaw { beta: f64, cutoff: f64 },
    /// `|x|^{-(1+β)}` on `[-c, c] \ {0}`.
    SymmetricPowerLaw { beta: f64, cutoff: f64 },
    /// Total mass `mass` spread uniformly over `[lo, hi]`.
    Uniform { lo: f64, hi: f64, mass: f64 },
}

impl LevyDensity {
    pub fn power_law(beta: f64, cutoff: f64) -> Result<Self> {
        check_power_law(beta, cutoff)?;
        Ok(LevyDensity::PowerLaw { beta, cutoff })
    }

    pub fn symmetric_power_law(beta: f64, cutoff: f64) -> Result<Self> {
        check_power_law(beta, cutoff)?;
        Ok(LevyDensity::SymmetricPowerLaw { beta, cutoff })
    }

    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("uniform support [{lo}, {hi}] is empty")));
        }
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::InvalidInput(format!("uniform mass {mass} must be finite and nonnegative")));
        }
        Ok(LevyDensity::Uniform { lo, hi, mass })
    }

    /// Density with respect to Lebesgue measure. Never called at zero by the library.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            LevyDensity::PowerLaw { beta, cutoff } => {
                if x > 0.0 && x <= cutoff {
                    x.powf(-1.0 - beta)
                } else {
                    0.0
                }
            }
            LevyDensity::SymmetricPowerLaw { beta, cutoff } => {
                let a = x.abs();
                if a > 0.0 && a <= cutoff {
                    a.powf(-1.0 - beta)
                } else {
                    0.0
                }
            }
            LevyDensity::Uniform { lo, hi, mass } => {
                if x >= lo && x <= hi {
                    mass / (hi - lo)
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest `|x|` in the support.
    pub fn support_radius(&self) -> f64 {
        match *self {
            LevyDensity::PowerLaw { cutoff, .. } | LevyDensity::SymmetricPowerLaw { cutoff, .. } => cutoff,
            LevyDensity::Uniform { lo, hi, .. } => lo.abs().max(hi.abs()),
        }
    }

    /// Maximal intervals of the support of `ν` restricted to `|x| ≥ eps`.
    pub fn truncated_intervals(&self, eps: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2);
        match *self {
            LevyDensity::PowerLaw { cutoff, .. } => {
                if eps < cutoff {
                    out.push((eps, cutoff));
                }
            }
            LevyDensity::SymmetricPowerLaw { cutoff, .. } => {
                if eps < cutoff {
                    out.push((-cutoff, -eps));
                    out.push((eps, cutoff));
                }
            }
            LevyDensity::Uniform { lo, hi, .. } => {
                let (a, b) = (lo, hi.min(-eps));
                if a < b {
                    out.push((a, b));
                }
                let (a, b) = (lo.max(eps), hi);
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// `ν({|x| ≥ eps})` in closed form.
    pub fn truncated_mass(&self, eps: f64) -> f64 {
        match *self {
            LevyDensity::PowerLaw { beta, cutoff } => power_tail(beta, eps, cutoff),
            LevyDensity::SymmetricPowerLaw { beta, cutoff } => 2.0 * power_tail(beta, eps, cutoff),
            LevyDensity::Uniform { lo, hi, mass } => {
                let len: f64 = self.truncated_intervals(eps).iter().map(|(a, b)| b - a).sum();
                mass * len / (hi - lo)
            }
        }
    }

    /// `∫_{|x| < eps} x ν(dx)`, the drift removed by the cutoff.
    pub fn small_jump_drift(&self, eps: f64) -> f64 {
        match *self {
            LevyDensity::PowerLaw { beta, cutoff } => eps.min(cutoff).powf(1.0 - beta) / (1.0 - beta),
            LevyDensity::SymmetricPowerLaw { .. } => 0.0,
            LevyDensity::Uniform { lo, hi, mass } => {
                let (a, b) = (lo.max(-eps), hi.min(eps));
                if a < b {
                    mass / (hi - lo) * 0.5 * (b * b - a * a)
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_{|x| ≥ eps} g(x) ν(dx)` by adaptive quadrature.
    pub fn integrate<G: FnMut(f64) -> f64>(&self, eps: f64, mut g: G, abs_tol: f64) -> Result<f64> {
        let intervals = self.truncated_intervals(eps);
        let tol = abs_tol / intervals.len().max(1) as f64;
        let mut total = 0.0;
        for (a, b) in intervals {
            total += match *self {
                LevyDensity::Uniform { .. } => integrate(|x| g(x) * self.density(x), a, b, tol)?,
                _ if a > 0.0 => integrate_geometric(|x| g(x) * self.density(x), a, b, tol)?,
                _ => integrate_geometric(|y| g(-y) * self.density(-y), -b, -a, tol)?,
            };
        }
        Ok(total)
    }

    /// Draw from the normalized truncated law by inverting its distribution function.
    pub fn sample<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> f64 {
        match *self {
            LevyDensity::PowerLaw { beta, cutoff } => power_quantile(beta, eps, cutoff, rng.random()),
            LevyDensity::SymmetricPowerLaw { beta, cutoff } => {
                let magnitude = power_quantile(beta, eps, cutoff, rng.random());
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            LevyDensity::Uniform { .. } => {
                let intervals = self.truncated_intervals(eps);
                let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
                let mut u = rng.random::<f64>() * total;
                for &(a, b) in &intervals {
                    if u < b - a {
                        return a + u;
                    }
                    u -= b - a;
                }
                let (_, b) = *intervals.last().expect("sampling from an empty support");
                b
            }
        }
    }
}

fn check_power_law(beta: f64, cutoff: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("power-law index beta={beta} must lie in (0, 1)")));
    }
    if !(cutoff.is_finite() && cutoff > 0.0) {
        return Err(Error::InvalidInput(format!("power-law cutoff {cutoff} must be positive")));
    }
    Ok(())
}

/// `∫_eps^c x^{-(1+β)} dx`.
fn power_tail(beta: f64, eps: f64, cutoff: f64) -> f64 {
    if eps >= cutoff {
        0.0
    } else {
        (eps.powf(-beta) - cutoff.powf(-beta)) / beta
    }
}

impl fmt::Display for LevyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevyDensity::PowerLaw { beta, cutoff } => write!(f, "power_law({beta:?},{cutoff:?})"),
            LevyDensity::SymmetricPowerLaw { beta, cutoff } => write!(f, "symmetric_power_law({beta:?},{cutoff:?})"),
            LevyDensity::Uniform { lo, hi, mass } => write!(f, "uniform({lo:?},{hi:?},{mass:?})"),
        }
    }
}

impl std::str::FromStr for LevyDensity {
    type Err = Error;

    /// `power_law(β,c)`, `symmetric_power_law(β,c)` or `uniform(lo,hi,mass)`.
    fn from_str(text: &str) -> Result<Self> {
        let (name, args) = crate::registry::split_call(text.trim())?;
        match (name, args.as_slice()) {
            ("power_law", &[b, c]) => LevyDensity::power_law(b, c),
            ("symmetric_power_law", &[b, c]) => LevyDensity::symmetric_power_law(b, c),
            ("uniform", &[lo, hi, m]) => LevyDensity::uniform(lo, hi, m),
            _ => Err(Error::InvalidInput(format!(
                "`{text}` is not one of power_law(beta,cutoff), symmetric_power_law(beta,cutoff), uniform(lo,hi,mass)"
            ))),
        }
    }
}

fn power_quantile(beta: f64, eps: f64, cutoff: f64, u: f64) -> f64 {
    let a = eps.powf(-beta);
    let b = cutoff.powf(-beta);
    (a - u * (a - b)).powf(-1.0 / beta).clamp(eps, cutoff)
}

/// Law of the marks: a one- or two-dimensional intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkLaw {
    Scalar(LevyDensity),
    /// Uniform intensity with total mass `mass` on `{inner ≤ |x| ≤ outer} ⊂ ℝ²`.
    Annulus { inner: f64, outer: f64, mass: f64 },
    /// Two independent drivers: marks `(y, 0)` with law `first` and `(0, y)` with law `second`.
    IndependentPair(LevyDensity, LevyDensity),
    /// Product intensity `first(dy₁) second(dy₂)`, truncated coordinatewise.
    Product(LevyDensity, LevyDensity),
}

impl MarkLaw {
    pub fn annulus(inner: f64, outer: f64, mass: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::InvalidInput(format!("annulus radii [{inner}, {outer}] invalid")));
        }
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::InvalidInput(format!("annulus mass {mass} must be finite and nonnegative")));
        }
        Ok(MarkLaw::Annulus { inner, outer, mass })
    }

    pub fn dim(&self) -> usize {
        match self {
            MarkLaw::Scalar(_) => 1,
            _ => 2,
        }
    }

    fn annulus_inner(inner: f64, eps: f64) -> f64 {
        inner.max(eps)
    }
}

/// The intensity `dt × ν` on `[0, T] × E` with a small-jump cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityMeasure {
    law: MarkLaw,
    horizon: f64,
    truncation: f64,
}

impl IntensityMeasure {
    pub fn new(law: MarkLaw, horizon: f64, truncation: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("time horizon {horizon} must be positive")));
        }
        if !(truncation.is_finite() && truncation > 0.0) {
            return Err(Error::InvalidInput(format!("truncation {truncation} must be positive")));
        }
        Ok(Self {
            law,
            horizon,
            truncation,
        })
    }

    pub fn law(&self) -> &MarkLaw {
        &self.law
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn mark_dim(&self) -> usize {
        self.law.dim()
    }

    /// Same law and horizon with another cutoff.
    pub fn with_truncation(&self, truncation: f64) -> Result<Self> {
        Self::new(self.law, self.horizon, truncation)
    }

    /// `T · ν({|x| ≥ ε})` in closed form.
    pub fn truncated_mass(&self) -> f64 {
        let eps = self.truncation;
        let spatial = match self.law {
            MarkLaw::Scalar(d) => d.truncated_mass(eps),
            MarkLaw::Annulus { inner, outer, mass } => {
                let a = MarkLaw::annulus_inner(inner, eps);
                if a >= outer {
                    0.0
                } else {
                    mass * (outer * outer - a * a) / (outer * outer - inner * inner)
                }
            }
            MarkLaw::IndependentPair(a, b) => a.truncated_mass(eps) + b.truncated_mass(eps),
            MarkLaw::Product(a, b) => a.truncated_mass(eps) * b.truncated_mass(eps),
        };
        self.horizon * spatial
    }

    /// `T · ν({|x| ≥ ε})` by quadrature; an independent check of [`Self::truncated_mass`].
    pub fn truncated_mass_by_quadrature(&self) -> Result<f64> {
        self.compensator_integral(|_| 1.0)
    }

    /// `∫_0^T ∫_{|x| ≥ ε} g(x) ν(dx) dt`.
    pub fn compensator_integral<G: Fn(&Mark) -> f64>(&self, g: G) -> Result<f64> {
        Ok(self.horizon * self.spatial_integral(&g, DEFAULT_ABS_TOL / self.horizon)?)
    }

    /// `∫_0^T ∫_{|x| ≥ ε} f(t, x) ν(dx) dt` by nested quadrature.
    pub fn space_time_integral<F: Fn(f64, &Mark) -> f64>(&self, f: F) -> Result<f64> {
        let inner_tol = DEFAULT_ABS_TOL / (10.0 * self.horizon);
        let mut failure = None;
        let value = integrate(
            |t| match self.spatial_integral(&|x: &Mark| f(t, x), inner_tol) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            self.horizon,
            DEFAULT_ABS_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        value
    }

    fn spatial_integral(&self, g: &dyn Fn(&Mark) -> f64, tol: f64) -> Result<f64> {
        let eps = self.truncation;
        match self.law {
            MarkLaw::Scalar(d) => d.integrate(eps, |x| g(&Mark::scalar(x)), tol),
            MarkLaw::IndependentPair(a, b) => {
                let first = a.integrate(eps, |y| g(&Mark::new(&[y, 0.0])), 0.5 * tol)?;
                let second = b.integrate(eps, |y| g(&Mark::new(&[0.0, y])), 0.5 * tol)?;
                Ok(first + second)
            }
            MarkLaw::Product(a, b) => {
                let inner_mass = b.truncated_mass(eps).max(1.0);
                let outer_mass = a.truncated_mass(eps).max(1.0);
                let mut failure = None;
                let v = a.integrate(
                    eps,
                    |y1| match b.integrate(eps, |y2| g(&Mark::new(&[y1, y2])), tol / (10.0 * outer_mass)) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::NAN
                        }
                    },
                    tol * inner_mass.min(1.0),
                );
                match failure {
                    Some(e) => Err(e),
                    None => v,
                }
            }
            MarkLaw::Annulus { inner, outer, mass } => {
                let a = MarkLaw::annulus_inner(inner, eps);
                if a >= outer {
                    return Ok(0.0);
                }
                let density = mass / (PI * (outer * outer - inner * inner));
                let mut failure = None;
                let v = integrate(
                    |r| {
                        let ring = integrate(
                            |theta| g(&Mark::new(&[r * theta.cos(), r * theta.sin()])),
                            0.0,
                            2.0 * PI,
                            tol / (10.0 * (outer - a) * outer * density.max(1e-300)),
                        );
                        match ring {
                            Ok(v) => v * r * density,
                            Err(e) => {
                                failure.get_or_insert(e);
                                f64::NAN
                            }
                        }
                    },
                    a,
                    outer,
                    tol,
                );
                match failure {
                    Some(e) => Err(e),
                    None => v,
                }
            }
        }
    }

    /// Draw one mark from the normalized truncated intensity.
    ///
    /// Must only be called when the truncated mass is positive.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> Mark {
        let eps = self.truncation;
        match self.law {
            MarkLaw::Scalar(d) => Mark::scalar(d.sample(eps, rng)),
            MarkLaw::IndependentPair(a, b) => {
                let ma = a.truncated_mass(eps);
                let mb = b.truncated_mass(eps);
                if rng.random::<f64>() * (ma + mb) < ma {
                    Mark::new(&[a.sample(eps, rng), 0.0])
                } else {
                    Mark::new(&[0.0, b.sample(eps, rng)])
                }
            }
            MarkLaw::Product(a, b) => Mark::new(&[a.sample(eps, rng), b.sample(eps, rng)]),
            MarkLaw::Annulus { inner, outer, .. } => {
                let a = MarkLaw::annulus_inner(inner, eps);
                let r = (a * a + rng.random::<f64>() * (outer * outer - a * a)).sqrt();
                let theta = 2.0 * PI * rng.random::<f64>();
                Mark::new(&[r * theta.cos(), r * theta.sin()])
            }
        }
    }

    /// Whether a mark lies in the truncated support.
    pub fn contains(&self, mark: &Mark) -> bool {
        if mark.dim() != self.mark_dim() {
            return false;
        }
        let eps = self.truncation;
        let in_1d = |d: &LevyDensity, y: f64| y.abs() >= eps && d.density(y) > 0.0;
        match &self.law {
            MarkLaw::Scalar(d) => in_1d(d, mark[0]),
            MarkLaw::IndependentPair(a, b) => {
                (mark[1] == 0.0 && in_1d(a, mark[0])) || (mark[0] == 0.0 && in_1d(b, mark[1]))
            }
            MarkLaw::Product(a, b) => in_1d(a, mark[0]) && in_1d(b, mark[1]),
            MarkLaw::Annulus { inner, outer, .. } => {
                let r = mark.norm();
                r >= MarkLaw::annulus_inner(*inner, eps) && r <= *outer
            }
        }
    }

    /// `T · ∫_{|x| < ε} x ν(dx)` per coordinate: the drift a compensated process
    /// would carry from the jumps removed by truncation. `None` when infinite.
    pub fn small_jump_drift(&self) -> Option<Mark> {
        let eps = self.truncation;
        let t = self.horizon;
        match self.law {
            MarkLaw::Scalar(d) => Some(Mark::scalar(t * d.small_jump_drift(eps))),
            MarkLaw::IndependentPair(a, b) => {
                Some(Mark::new(&[t * a.small_jump_drift(eps), t * b.small_jump_drift(eps)]))
            }
            // Rotational symmetry.
            MarkLaw::Annulus { .. } => Some(Mark::new(&[0.0, 0.0])),
            MarkLaw::Product(a, b) => {
                let finite = |d: &LevyDensity| matches!(d, LevyDensity::Uniform { .. });
                if finite(&a) && finite(&b) {
                    let (ma, mb) = (a.truncated_mass(0.0), b.truncated_mass(0.0));
                    let (ka, kb) = (a.truncated_mass(eps), b.truncated_mass(eps));
                    let mean = |d: &LevyDensity| d.small_jump_drift(f64::INFINITY);
                    // ∫ y₁ over the removed set {|y₁|<ε or |y₂|<ε}.
                    let first = mean(&a) * mb - (mean(&a) - a.small_jump_drift(eps)) * kb;
                    let second = mean(&b) * ma - (mean(&b) - b.small_jump_drift(eps)) * ka;
                    Some(Mark::new(&[t * first, t * second]))
                } else {
                    None
                }
            }
        }
    }
}

impl fmt::Display for IntensityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} on [0, {}] with cutoff {}",
            self.law, self.horizon, self.truncation
        )
    }
}

/// Coefficient field `ξ` of the bottom carré du champ `γ[u, v] = Σ ξ_ij ∂_i u ∂_j v`.
#[derive(Clone)]
pub enum BottomCarreDuChamp {
    /// `ξ(x) = diag(x₁², …, x_p²)`.
    Levy,
    /// `ξ ≡ I`.
    Euclidean,
    /// Caller-supplied field; must return symmetric PSD matrices.
    Custom(Arc<dyn Fn(&Mark) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for BottomCarreDuChamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BottomCarreDuChamp::Levy => f.write_str("Levy"),
            BottomCarreDuChamp::Euclidean => f.write_str("Euclidean"),
            BottomCarreDuChamp::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl BottomCarreDuChamp {
    pub fn xi(&self, x: &Mark) -> DMatrix<f64> {
        let p = x.dim();
        match self {
            BottomCarreDuChamp::Levy => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                p,
                x.iter().map(|v| v * v),
            )),
            BottomCarreDuChamp::Euclidean => DMatrix::identity(p, p),
            BottomCarreDuChamp::Custom(field) => field(x),
        }
    }

    /// A factor `L` with `L Lᵀ = ξ(x)`.
    pub fn factor(&self, x: &Mark) -> DMatrix<f64> {
        match self {
            BottomCarreDuChamp::Levy => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                x.dim(),
                x.iter().map(|v| v.abs()),
            )),
            BottomCarreDuChamp::Euclidean => DMatrix::identity(x.dim(), x.dim()),
            BottomCarreDuChamp::Custom(field) => {
                let eig = field(x).symmetric_eigen();
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
            }
        }
    }

    /// `γ[f, g](x) = Σ ξ_ij(x) ∂_i f ∂_j g`.
    pub fn gamma_bottom(&self, f_grad: &[f64], g_grad: &[f64], x: &Mark) -> Result<f64> {
        let p = x.dim();
        for (name, grad) in [("f", f_grad), ("g", g_grad)] {
            if grad.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: grad.len(),
                    context: "gradient length",
                });
            }
            if let Some(bad) = grad.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("gradient of {name} has non-finite component {bad}")));
            }
        }
        match self {
            BottomCarreDuChamp::Levy => Ok((0..p).map(|i| x[i] * x[i] * (f_grad[i] * g_grad[i])).sum()),
            _ => {
                let xi = self.xi(x);
                let mut total = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        total += xi[(i, j)] * f_grad[i] * g_grad[j];
                    }
                }
                Ok(total)
            }
        }
    }
}

const _: () = assert!(MAX_MARK_DIM >= 2);
