//! Poisson configurations on `[0, T] × E` and integrals against them.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::exec::parallel_map;
use crate::intensity::IntensityMeasure;
use crate::rng::{Purpose, SampleRng, StreamKey};
use crate::stats::Estimate;

pub const MAX_MARK_DIM: usize = 3;

/// A point of the mark space `E ⊆ ℝ^p`, `p ≤ 3`.
#[derive(Clone, Copy)]
pub struct Mark {
    coords: [f64; MAX_MARK_DIM],
    dim: u8,
}

impl Mark {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_MARK_DIM,
            "mark dimension {} outside 1..={MAX_MARK_DIM}",
            coords.len()
        );
        let mut c = [0.0; MAX_MARK_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Mark {
            coords: c,
            dim: coords.len() as u8,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Mark::new(&[x])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copy with coordinate `k` replaced.
    pub fn with_coord(&self, k: usize, value: f64) -> Self {
        let mut m = *self;
        m.coords[k] = value;
        m
    }
}

impl Deref for Mark {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }
}

impl PartialEq for Mark {
    fn eq(&self, other: &Self) -> bool {
        **self == **other
    }
}

impl fmt::Debug for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub time: f64,
    pub mark: Mark,
}

impl Atom {
    pub fn new(time: f64, mark: Mark) -> Self {
        Atom { time, mark }
    }
}

/// A finite realization of the Poisson measure: atoms sorted strictly by time.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    horizon: f64,
    mark_dim: usize,
    atoms: Vec<Atom>,
    source: Option<u64>,
}

impl PointConfiguration {
    pub fn empty(horizon: f64, mark_dim: usize) -> Self {
        PointConfiguration {
            horizon,
            mark_dim,
            atoms: Vec::new(),
            source: None,
        }
    }

    /// Build from atoms in any order. Times must be distinct and in `(0, T]`.
    pub fn new(horizon: f64, mark_dim: usize, mut atoms: Vec<Atom>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.mark.dim() != mark_dim {
                return Err(Error::DimensionMismatch {
                    expected: mark_dim,
                    got: a.mark.dim(),
                    context: "atom mark",
                });
            }
            if !(a.time > 0.0 && a.time <= horizon) {
                return Err(Error::InvalidInput(format!("atom {i} time {} outside (0, {horizon}]", a.time)));
            }
            if a.mark.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    atom: i,
                    detail: format!("mark {:?}", a.mark),
                });
            }
        }
        atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(w) = atoms.windows(2).find(|w| w[0].time == w[1].time) {
            return Err(Error::Precondition(format!("two atoms share time {}", w[0].time)));
        }
        Ok(PointConfiguration {
            horizon,
            mark_dim,
            atoms,
            source: None,
        })
    }

    pub fn with_source(mut self, source: u64) -> Self {
        self.source = Some(source);
        self
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Index of the sample this configuration was drawn for, if any.
    pub fn source(&self) -> Option<u64> {
        self.source
    }

    /// Position at which an atom at `time` would be inserted; `Err` if the time is taken.
    pub fn insertion_index(&self, time: f64) -> std::result::Result<usize, usize> {
        match self.atoms.binary_search_by(|a| a.time.total_cmp(&time)) {
            Ok(i) => Err(i),
            Err(i) => Ok(i),
        }
    }

    /// `ε⁺`: the configuration with `(time, mark)` added.
    pub fn insert(&self, time: f64, mark: Mark) -> Result<Self> {
        if mark.dim() != self.mark_dim {
            return Err(Error::DimensionMismatch {
                expected: self.mark_dim,
                got: mark.dim(),
                context: "inserted mark",
            });
        }
        if !(time > 0.0 && time <= self.horizon) {
            return Err(Error::Precondition(format!("insertion time {time} outside (0, {}]", self.horizon)));
        }
        let at = self
            .insertion_index(time)
            .map_err(|i| Error::Precondition(format!("atom {i} already sits at time {time}")))?;
        let mut atoms = Vec::with_capacity(self.atoms.len() + 1);
        atoms.extend_from_slice(&self.atoms[..at]);
        atoms.push(Atom::new(time, mark));
        atoms.extend_from_slice(&self.atoms[at..]);
        Ok(PointConfiguration {
            horizon: self.horizon,
            mark_dim: self.mark_dim,
            atoms,
            source: self.source,
        })
    }

    /// `ε⁻`: the configuration without atom `index`.
    pub fn remove(&self, index: usize) -> Result<Self> {
        if index >= self.atoms.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.atoms.len(),
            });
        }
        let mut atoms = self.atoms.clone();
        atoms.remove(index);
        Ok(PointConfiguration {
            horizon: self.horizon,
            mark_dim: self.mark_dim,
            atoms,
            source: self.source,
        })
    }

    /// Union with another configuration on the same window (superposition).
    pub fn merge(&self, other: &PointConfiguration) -> Result<Self> {
        if other.mark_dim != self.mark_dim {
            return Err(Error::DimensionMismatch {
                expected: self.mark_dim,
                got: other.mark_dim,
                context: "merged configuration",
            });
        }
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        PointConfiguration::new(self.horizon, self.mark_dim, atoms)
    }

    /// CSV with header `t,x1,..,xp`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.mark_dim {
            out.push_str(&format!(",x{k}"));
        }
        out.push('\n');
        for a in &self.atoms {
            out.push_str(&format!("{:?}", a.time));
            for v in a.mark.iter() {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, horizon: f64) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty CSV".into()))?;
        let mark_dim = header.split(',').count().saturating_sub(1);
        if mark_dim == 0 || mark_dim > MAX_MARK_DIM {
            return Err(Error::InvalidInput(format!("CSV header `{header}` has no mark columns")));
        }
        let mut atoms = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let values: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| Error::InvalidInput(format!("CSV line {}: {e}", n + 2)))?;
            if values.len() != mark_dim + 1 {
                return Err(Error::InvalidInput(format!("CSV line {} has {} columns", n + 2, values.len())));
            }
            atoms.push(Atom::new(values[0], Mark::new(&values[1..])));
        }
        PointConfiguration::new(horizon, mark_dim, atoms)
    }
}

/// A configuration with an auxiliary uniform mark `r_i ∈ [0, 1)` per atom (`N ⊙ ρ`).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedConfiguration {
    pub config: PointConfiguration,
    pub aux: Vec<f64>,
}

impl MarkedConfiguration {
    /// Draw the auxiliary marks independently of the configuration.
    pub fn attach<R: Rng + ?Sized>(config: PointConfiguration, rng: &mut R) -> Self {
        let aux = (0..config.len()).map(|_| rng.random::<f64>()).collect();
        MarkedConfiguration { config, aux }
    }
}

/// Draw a configuration of the truncated Poisson measure with intensity `dt × ν`.
pub fn sample_configuration<R: Rng + ?Sized>(measure: &IntensityMeasure, rng: &mut R) -> PointConfiguration {
    let horizon = measure.horizon();
    let mass = measure.truncated_mass();
    let count = if mass > 0.0 {
        Poisson::new(mass).expect("finite positive mass").sample(rng) as usize
    } else {
        0
    };
    let mut atoms: Vec<Atom> = (0..count)
        .map(|_| {
            let time = horizon * (1.0 - rng.random::<f64>());
            Atom::new(time, measure.sample_mark(rng))
        })
        .collect();
    loop {
        atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
        let Some(i) = atoms.windows(2).position(|w| w[0].time == w[1].time) else {
            break;
        };
        atoms[i + 1].time = horizon * (1.0 - rng.random::<f64>());
    }
    PointConfiguration {
        horizon,
        mark_dim: measure.mark_dim(),
        atoms,
        source: None,
    }
}

/// Configuration for sample `index` of a run keyed by `key`.
pub fn sample_indexed(measure: &IntensityMeasure, key: &StreamKey, index: u64) -> PointConfiguration {
    let mut rng: SampleRng = key.stream(Purpose::Configuration, index);
    sample_configuration(measure, &mut rng).with_source(index)
}

/// `N(f) = Σ_i f(t_i, x_i)`.
pub fn integrate_n<F: Fn(f64, &Mark) -> f64>(config: &PointConfiguration, f: F) -> Result<f64> {
    let mut total = 0.0;
    for (i, a) in config.atoms().iter().enumerate() {
        let v = f(a.time, &a.mark);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                atom: i,
                detail: format!("f({}, {:?}) = {v}", a.time, a.mark),
            });
        }
        total += v;
    }
    Ok(total)
}

/// `Ñ(f) = N(f) − ∫∫ f d(dt × ν)`.
pub fn integrate_n_compensated<F: Fn(f64, &Mark) -> f64>(
    config: &PointConfiguration,
    f: F,
    measure: &IntensityMeasure,
) -> Result<f64> {
    let compensator = measure.space_time_integral(&f)?;
    Ok(integrate_n(config, &f)? - compensator)
}

/// Monte Carlo check of `E[exp(i Ñ(f))] = exp(−∫(1 − e^{if} + if) d(dt × ν))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceCheck {
    pub n_samples: usize,
    pub estimate_re: Estimate,
    pub estimate_im: Estimate,
    pub target_re: f64,
    pub target_im: f64,
}

impl LaplaceCheck {
    pub fn abs_difference(&self) -> f64 {
        (self.estimate_re.value - self.target_re).hypot(self.estimate_im.value - self.target_im)
    }

    /// Both parts within `k` standard errors (with a floor for zero-variance cases).
    pub fn passes(&self, k: f64) -> bool {
        let ok = |e: &Estimate, t: f64| (e.value - t).abs() <= k * e.std_error + 1e-12;
        ok(&self.estimate_re, self.target_re) && ok(&self.estimate_im, self.target_im)
    }
}

pub fn laplace_characteristic<F>(
    measure: &IntensityMeasure,
    f: F,
    n_samples: usize,
    key: &StreamKey,
    workers: usize,
) -> Result<LaplaceCheck>
where
    F: Fn(f64, &Mark) -> f64 + Sync,
{
    if n_samples == 0 {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let compensator = measure.space_time_integral(&f)?;
    let exponent_re = measure.space_time_integral(|t, x| 1.0 - f(t, x).cos())?;
    let exponent_im = measure.space_time_integral(|t, x| {
        let v = f(t, x);
        v - v.sin()
    })?;
    // exp(−(a + ib)) with a = ∫(1 − cos f), b = ∫(f − sin f)
    let modulus = (-exponent_re).exp();
    let target_re = modulus * exponent_im.cos();
    let target_im = -modulus * exponent_im.sin();

    let values = parallel_map(n_samples, workers, |i| {
        let config = sample_indexed(measure, key, i as u64);
        integrate_n(&config, &f).map(|n| n - compensator)
    });
    let mut cos = Vec::with_capacity(n_samples);
    let mut sin = Vec::with_capacity(n_samples);
    for v in values {
        let v = v?;
        cos.push(v.cos());
        sin.push(v.sin());
    }
    Ok(LaplaceCheck {
        n_samples,
        estimate_re: Estimate::mean_of(&cos),
        estimate_im: Estimate::mean_of(&sin),
        target_re,
        target_im,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::{LevyDensity, MarkLaw};
    use proptest::prelude::*;

    fn uniform3() -> IntensityMeasure {
        IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::uniform(1.0, 2.0, 3.0).unwrap()), 1.0, 0.5).unwrap()
    }

    fn two_atoms() -> PointConfiguration {
        PointConfiguration::new(
            1.0,
            1,
            vec![Atom::new(0.7, Mark::scalar(-2.0)), Atom::new(0.2, Mark::scalar(1.0))],
        )
        .unwrap()
    }

    #[test]
    fn integrate_n_examples() {
        let c = two_atoms();
        assert_eq!(integrate_n(&c, |_, x| x[0] * x[0]).unwrap(), 5.0);
        assert_eq!(integrate_n(&c, |_, _| 1.0).unwrap(), 2.0);
        assert_eq!(integrate_n(&PointConfiguration::empty(1.0, 1), |_, x| x[0]).unwrap(), 0.0);
    }

    #[test]
    fn integrate_n_reports_offending_atom() {
        let c = two_atoms();
        let err = integrate_n(&c, |t, _| if t > 0.5 { f64::NAN } else { 1.0 }).unwrap_err();
        assert!(matches!(err, Error::NonFinite { atom: 1, .. }));
    }

    #[test]
    fn compensated_zero_function() {
        assert_eq!(integrate_n_compensated(&two_atoms(), |_, _| 0.0, &uniform3()).unwrap(), 0.0);
    }

    #[test]
    fn configurations_are_sorted_and_checked() {
        let c = two_atoms();
        assert!(c.atoms()[0].time < c.atoms()[1].time);
        let dup = PointConfiguration::new(
            1.0,
            1,
            vec![Atom::new(0.5, Mark::scalar(1.0)), Atom::new(0.5, Mark::scalar(2.0))],
        );
        assert!(matches!(dup, Err(Error::Precondition(_))));
        assert!(PointConfiguration::new(1.0, 1, vec![Atom::new(1.5, Mark::scalar(1.0))]).is_err());
    }

    #[test]
    fn insert_and_remove() {
        let empty = PointConfiguration::empty(1.0, 1);
        let one = empty.insert(0.5, Mark::scalar(1.0)).unwrap();
        assert_eq!(one.len(), 1);
        let c = two_atoms();
        let bigger = c.insert(0.4, Mark::scalar(3.0)).unwrap();
        assert_eq!(bigger.len(), 3);
        assert_eq!(bigger.atoms()[1].time, 0.4);
        assert_eq!(bigger.remove(1).unwrap(), c);
        assert!(c.insert(0.2, Mark::scalar(1.0)).is_err());
        assert!(matches!(c.remove(2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn zero_mass_gives_empty_configuration() {
        let m = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::power_law(0.5, 1.0).unwrap()), 1.0, 2.0).unwrap();
        let key = StreamKey::new(1);
        for i in 0..50 {
            assert!(sample_indexed(&m, &key, i).is_empty());
        }
    }

    #[test]
    fn sampled_configurations_respect_invariants() {
        let m = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::power_law(0.5, 1.0).unwrap()), 2.0, 0.01).unwrap();
        let key = StreamKey::new(5);
        for i in 0..200 {
            let c = sample_indexed(&m, &key, i);
            assert!(c.atoms().windows(2).all(|w| w[0].time < w[1].time));
            assert!(c.atoms().iter().all(|a| a.time > 0.0 && a.time <= 2.0 && m.contains(&a.mark)));
            assert_eq!(c.source(), Some(i));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = uniform3();
        let key = StreamKey::new(77);
        assert_eq!(sample_indexed(&m, &key, 12), sample_indexed(&m, &key, 12));
    }

    #[test]
    fn csv_round_trip() {
        let c = two_atoms();
        let text = c.to_csv();
        assert!(text.starts_with("t,x1\n"));
        assert_eq!(PointConfiguration::from_csv(&text, 1.0).unwrap(), c);
    }

    #[test]
    fn mean_count_uniform() {
        let m = uniform3();
        let key = StreamKey::new(2024);
        let n = 100_000;
        let counts: Vec<f64> = (0..n).map(|i| sample_indexed(&m, &key, i as u64).len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() <= 3.0 * (3.0f64 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn mean_count_power_law() {
        let m = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::power_law(0.5, 1.0).unwrap()), 1.0, 0.04).unwrap();
        let key = StreamKey::new(8);
        let n = 20_000;
        let mean = (0..n).map(|i| sample_indexed(&m, &key, i).len() as f64).sum::<f64>() / n as f64;
        assert!((mean - 8.0).abs() <= 3.0 * (8.0f64 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn laplace_trivial_function() {
        let key = StreamKey::new(1);
        let check = laplace_characteristic(&uniform3(), |_, _| 0.0, 100, &key, 1).unwrap();
        assert_eq!(check.estimate_re.value, 1.0);
        assert_eq!(check.estimate_im.value, 0.0);
        assert_eq!(check.target_re, 1.0);
        assert_eq!(check.target_im, 0.0);
    }

    #[test]
    fn laplace_constant_function_target() {
        // exp(−λ(1 − e^{ic} + ic)) with λ = 3, c = 0.7
        let (lambda, c) = (3.0f64, 0.7f64);
        let key = StreamKey::new(1);
        let check = laplace_characteristic(&uniform3(), |_, _| c, 20_000, &key, 1).unwrap();
        let a = lambda * (1.0 - c.cos());
        let b = lambda * (c - c.sin());
        assert!((check.target_re - (-a).exp() * b.cos()).abs() < 1e-9);
        assert!((check.target_im + (-a).exp() * b.sin()).abs() < 1e-9);
        assert!(check.passes(3.0), "{check:?}");
    }

    #[test]
    fn superposition_of_disjoint_marks() {
        // N on [1,2] ∪ [2,3] vs independent pieces merged: compare mean and variance of N(x).
        let whole = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::uniform(1.0, 3.0, 4.0).unwrap()), 1.0, 0.5).unwrap();
        let left = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::uniform(1.0, 2.0, 2.0).unwrap()), 1.0, 0.5).unwrap();
        let right = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::uniform(2.0, 3.0, 2.0).unwrap()), 1.0, 0.5).unwrap();
        let n = 10_000;
        let k1 = StreamKey::new(1);
        let k2 = StreamKey::new(2);
        let k3 = StreamKey::new(3);
        let f = |_: f64, x: &Mark| x[0];
        let direct: Vec<f64> = (0..n).map(|i| integrate_n(&sample_indexed(&whole, &k1, i), f).unwrap()).collect();
        let merged: Vec<f64> = (0..n)
            .map(|i| {
                let c = sample_indexed(&left, &k2, i).merge(&sample_indexed(&right, &k3, i)).unwrap();
                integrate_n(&c, f).unwrap()
            })
            .collect();
        let a = Estimate::mean_of(&direct);
        let b = Estimate::mean_of(&merged);
        let gate = 3.0 * a.std_error.hypot(b.std_error);
        assert!((a.value - b.value).abs() <= gate, "{a:?} vs {b:?}");
        let va = Estimate::variance_of(&direct);
        let vb = Estimate::variance_of(&merged);
        assert!((va.value - vb.value).abs() <= 3.0 * va.std_error.hypot(vb.std_error), "{va:?} vs {vb:?}");
    }

    proptest! {
        #[test]
        fn integrate_n_is_linear(
            times in prop::collection::btree_set(1u32..10_000, 0..12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let atoms: Vec<Atom> = times
                .iter()
                .enumerate()
                .map(|(k, &t)| Atom::new(t as f64 / 10_000.0, Mark::scalar(0.1 + k as f64 * 0.37)))
                .collect();
            let c = PointConfiguration::new(1.0, 1, atoms).unwrap();
            let f = |t: f64, x: &Mark| t * x[0];
            let g = |_: f64, x: &Mark| x[0] * x[0];
            let lhs = integrate_n(&c, |t, x| a * f(t, x) + b * g(t, x)).unwrap();
            let rhs = a * integrate_n(&c, f).unwrap() + b * integrate_n(&c, g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
