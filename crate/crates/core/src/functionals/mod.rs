//! Vector-valued Poisson functionals `F: configurations → ℝ^d`.
//!
//! Jump-driven families are evaluated event by event over the sorted atoms,
//! reading the pre-jump state before applying each jump, so evaluation is
//! exact: there is no time grid.

mod composite;
mod linear;
mod stoch_integral;
mod supremum;
mod triangular;
mod vector_integral;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use composite::Composite;
pub use linear::LinearCompensated;
pub use stoch_integral::StochIntegral;
pub use supremum::RunningSupremum;
pub use triangular::TriangularSystem;
pub use vector_integral::VectorStochIntegral;

use crate::error::{Error, Result};
use crate::intensity::{BottomCarreDuChamp, IntensityMeasure};
use crate::point_process::{Mark, PointConfiguration};
use crate::registry::{MarkFn, MatrixFn, ScalarFn, SmoothMap};

/// A functional of a Poisson configuration.
pub trait Functional: Send + Sync {
    fn output_dim(&self) -> usize;

    fn mark_dim(&self) -> usize;

    fn name(&self) -> String;

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>>;

    /// `F(config ∪ {(time, mark)})`. The time must not already carry an atom.
    fn evaluate_with_insertion(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Result<DVector<f64>> {
        self.evaluate(&config.insert(time, *mark)?)
    }

    /// Analytic `∂/∂x F(config ∪ {(time, x)})` at `x = mark`, a `d × p` matrix.
    /// `None` when the family has no hand-coded derivative.
    fn mark_jacobian(&self, _config: &PointConfiguration, _time: f64, _mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        None
    }
}

pub(crate) fn check_mark_dim(expected: usize, config: &PointConfiguration) -> Result<()> {
    if config.mark_dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: config.mark_dim(),
            context: "configuration mark dimension",
        });
    }
    Ok(())
}

pub(crate) fn check_finite(v: f64, atom: usize, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            atom,
            detail: format!("{what} = {v}"),
        })
    }
}

/// A piecewise-constant càdlàg path in `ℝ^dim` on `[0, ∞)`.
///
/// `values[k]` holds on `[times[k], times[k+1])`; `times[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepPath {
    pub fn constant(value: &[f64]) -> Self {
        StepPath {
            dim: value.len(),
            times: vec![0.0],
            values: value.to_vec(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        StepPath::constant(&vec![0.0; dim])
    }

    pub fn new(dim: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::InvalidInput("step path must start at time 0".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("step path times must increase strictly".into()));
        }
        if values.len() != dim * times.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * times.len(),
                got: values.len(),
                context: "step path values",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("step path values must be finite".into()));
        }
        Ok(StepPath { dim, times, values })
    }

    /// Scalar path sampled from `f` at `steps` equally spaced times on `[0, horizon)`.
    pub fn from_fn(steps: usize, horizon: f64, f: impl Fn(f64) -> f64) -> Self {
        let steps = steps.max(1);
        let times: Vec<f64> = (0..steps).map(|k| horizon * k as f64 / steps as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        StepPath { dim: 1, times, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.value(k)
    }

    /// Jumps `(time, Δ)` strictly after 0.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, Vec<f64>)> + '_ {
        (1..self.times.len()).map(move |k| {
            let delta = self.value(k).iter().zip(self.value(k - 1)).map(|(a, b)| a - b).collect();
            (self.times[k], delta)
        })
    }
}

/// How an auxiliary path (`K` for the supremum, `S` for the vector integral) is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuxPath {
    Zero,
    /// `amplitude · sin(2π s / T)` on a grid of `steps` cells.
    Sine { amplitude: f64, steps: usize },
    /// `−rate · s` on a grid of `steps` cells.
    Drift { rate: f64, steps: usize },
    /// Gaussian random walk, increments of standard deviation `sigma · √(T / steps)`,
    /// drawn afresh for every sample independently of the configuration.
    /// In the vector case `first_coordinate = false` keeps the first coordinate at zero.
    RandomWalk { sigma: f64, steps: usize, first_coordinate: bool },
}

impl AuxPath {
    pub fn is_random(&self) -> bool {
        matches!(self, AuxPath::RandomWalk { .. })
    }

    pub fn realize<R: Rng + ?Sized>(&self, dim: usize, horizon: f64, rng: &mut R) -> StepPath {
        match *self {
            AuxPath::Zero => StepPath::zero(dim),
            AuxPath::Sine { amplitude, steps } => {
                let base = StepPath::from_fn(steps, horizon, |s| amplitude * (2.0 * std::f64::consts::PI * s / horizon).sin());
                broadcast(&base, dim)
            }
            AuxPath::Drift { rate, steps } => broadcast(&StepPath::from_fn(steps, horizon, |s| -rate * s), dim),
            AuxPath::RandomWalk {
                sigma,
                steps,
                first_coordinate,
            } => {
                let steps = steps.max(1);
                let sd = sigma * (horizon / steps as f64).sqrt();
                let times: Vec<f64> = (0..steps).map(|k| horizon * k as f64 / steps as f64).collect();
                let mut values = vec![0.0; dim * steps];
                for k in 1..steps {
                    for c in 0..dim {
                        let z: f64 = rng.sample(StandardNormal);
                        let step = if c == 0 && !first_coordinate && dim > 1 { 0.0 } else { sd * z };
                        values[k * dim + c] = values[(k - 1) * dim + c] + step;
                    }
                }
                StepPath { dim, times, values }
            }
        }
    }
}

fn broadcast(scalar: &StepPath, dim: usize) -> StepPath {
    let values = scalar.values.iter().flat_map(|&v| std::iter::repeat_n(v, dim)).collect();
    StepPath {
        dim,
        times: scalar.times.clone(),
        values,
    }
}

/// Buildable description of a functional family.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalSpec {
    LinearCompensated { f: MarkFn },
    StochIntegral { phi: ScalarFn, h: ScalarFn, t_end: Option<f64> },
    RunningSupremum { k_path: AuxPath, t_end: Option<f64> },
    VectorStochIntegral { psi: MatrixFn, s_path: AuxPath, dim: usize, t_end: Option<f64> },
    TriangularSystem { start: [f64; 3], t_end: Option<f64> },
    Composite { map: SmoothMap, parts: Vec<MarkFn> },
}

impl FunctionalSpec {
    pub fn family(&self) -> &'static str {
        match self {
            FunctionalSpec::LinearCompensated { .. } => "linear_compensated",
            FunctionalSpec::StochIntegral { .. } => "stoch_integral",
            FunctionalSpec::RunningSupremum { .. } => "running_supremum",
            FunctionalSpec::VectorStochIntegral { .. } => "vector_stoch_integral",
            FunctionalSpec::TriangularSystem { .. } => "triangular_system",
            FunctionalSpec::Composite { .. } => "composite",
        }
    }

    /// Whether [`Self::build`] consumes randomness (auxiliary paths).
    pub fn is_random(&self) -> bool {
        match self {
            FunctionalSpec::RunningSupremum { k_path, .. } => k_path.is_random(),
            FunctionalSpec::VectorStochIntegral { s_path, .. } => s_path.is_random(),
            _ => false,
        }
    }

    /// Instantiate for one sample. Random auxiliary paths are drawn from `rng`.
    pub fn build<R: Rng + ?Sized>(&self, measure: &IntensityMeasure, rng: &mut R) -> Result<Arc<dyn Functional>> {
        self.build_concrete(measure, rng).map(|b| b.functional())
    }

    /// Like [`Self::build`], keeping the concrete type.
    pub fn build_concrete<R: Rng + ?Sized>(&self, measure: &IntensityMeasure, rng: &mut R) -> Result<Built> {
        let horizon = measure.horizon();
        let p = measure.mark_dim();
        let t_end = |t: &Option<f64>| t.unwrap_or(horizon);
        Ok(match self {
            FunctionalSpec::LinearCompensated { f } => Built::Linear(Arc::new(LinearCompensated::new(*f, measure)?)),
            FunctionalSpec::StochIntegral { phi, h, t_end: t } => {
                Built::Stoch(Arc::new(StochIntegral::new(*phi, *h, p, t_end(t))?))
            }
            FunctionalSpec::RunningSupremum { k_path, t_end: t } => {
                Built::Supremum(Arc::new(RunningSupremum::new(k_path.realize(1, horizon, rng), p, t_end(t))?))
            }
            FunctionalSpec::VectorStochIntegral { psi, s_path, dim, t_end: t } => {
                Built::Vector(Arc::new(VectorStochIntegral::new(
                    *psi,
                    s_path.realize(*dim, horizon, rng),
                    vec![0.0; *dim],
                    p,
                    t_end(t),
                )?))
            }
            FunctionalSpec::TriangularSystem { start, t_end: t } => {
                if p != 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        got: p,
                        context: "triangular system needs two drivers",
                    });
                }
                Built::Triangular(Arc::new(TriangularSystem::new(*start, t_end(t))))
            }
            FunctionalSpec::Composite { map, parts } => {
                let parts = parts
                    .iter()
                    .map(|f| LinearCompensated::new(*f, measure).map(|l| Arc::new(l) as Arc<dyn Functional>))
                    .collect::<Result<Vec<_>>>()?;
                Built::Composite(Arc::new(Composite::new(map.clone(), parts)?))
            }
        })
    }
}

/// A built functional with its concrete type.
#[derive(Debug, Clone)]
pub enum Built {
    Linear(Arc<LinearCompensated>),
    Stoch(Arc<StochIntegral>),
    Supremum(Arc<RunningSupremum>),
    Vector(Arc<VectorStochIntegral>),
    Triangular(Arc<TriangularSystem>),
    Composite(Arc<Composite>),
}

impl Built {
    pub fn functional(&self) -> Arc<dyn Functional> {
        match self {
            Built::Linear(f) => f.clone(),
            Built::Stoch(f) => f.clone(),
            Built::Supremum(f) => f.clone(),
            Built::Vector(f) => f.clone(),
            Built::Triangular(f) => f.clone(),
            Built::Composite(f) => f.clone(),
        }
    }

    /// The hand-derived `Γ` where one exists. Only the linear family has one
    /// for every bottom structure; the others assume `ξ = diag(x²)`.
    pub fn closed_form_gamma(
        &self,
        config: &PointConfiguration,
        structure: &BottomCarreDuChamp,
    ) -> Option<Result<DMatrix<f64>>> {
        let scalar = |v: Result<f64>| v.map(|g| DMatrix::from_element(1, 1, g));
        let levy = matches!(structure, BottomCarreDuChamp::Levy);
        match self {
            Built::Linear(l) => {
                let f = l.function();
                Some((|| {
                    let mut total = 0.0;
                    for a in config.atoms() {
                        let g = f.gradient(a.time, &a.mark);
                        total += structure.gamma_bottom(&g, &g, &a.mark)?;
                    }
                    Ok(DMatrix::from_element(1, 1, total))
                })())
            }
            Built::Stoch(v) if levy => Some(scalar(v.closed_form_gamma(config))),
            Built::Supremum(m) if levy => Some(scalar(m.closed_form_gamma(config))),
            Built::Vector(v) if levy => Some(v.closed_form_gamma(config)),
            Built::Triangular(z) if levy => Some(z.closed_form_gamma(config)),
            _ => None,
        }
    }
}

/// Running sum `Y` of coordinate `coord` (through `h`) at each atom: the
/// pre-jump value `Y_{t_i−}` and the jump `ΔY_i`.
pub(crate) fn jump_increments(
    config: &PointConfiguration,
    coord: usize,
    h: impl Fn(f64) -> f64,
    t_end: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut y = 0.0;
    let mut out = Vec::new();
    for (i, a) in config.atoms().iter().enumerate() {
        if a.time > t_end {
            break;
        }
        let dy = check_finite(h(a.mark[coord]), i, "h(x)")?;
        out.push((y, dy));
        y += dy;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_path_lookup() {
        let p = StepPath::new(1, vec![0.0, 0.5, 0.75], vec![1.0, -1.0, 2.0]).unwrap();
        assert_eq!(p.value_at(0.0), &[1.0]);
        assert_eq!(p.value_at(0.49), &[1.0]);
        assert_eq!(p.value_at(0.5), &[-1.0]);
        assert_eq!(p.value_at(10.0), &[2.0]);
        let jumps: Vec<_> = p.jumps().collect();
        assert_eq!(jumps, vec![(0.5, vec![-2.0]), (0.75, vec![3.0])]);
    }

    #[test]
    fn step_path_validation() {
        assert!(StepPath::new(1, vec![0.1], vec![0.0]).is_err());
        assert!(StepPath::new(1, vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(StepPath::new(2, vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn random_walk_first_coordinate_can_be_frozen() {
        let key = crate::rng::StreamKey::new(1);
        let mut rng = key.stream(crate::rng::Purpose::AuxiliaryPath, 0);
        let path = AuxPath::RandomWalk {
            sigma: 1.0,
            steps: 50,
            first_coordinate: false,
        }
        .realize(2, 1.0, &mut rng);
        assert!((0..path.len()).all(|k| path.value(k)[0] == 0.0));
        assert!((1..path.len()).any(|k| path.value(k)[1] != 0.0));
    }
}
