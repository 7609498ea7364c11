use nalgebra::{DMatrix, DVector};

use super::{check_mark_dim, Functional};
use crate::error::Result;
use crate::intensity::IntensityMeasure;
use crate::point_process::{integrate_n, Mark, PointConfiguration};
use crate::registry::MarkFn;

/// `F = Ñ(f)` for a catalog function `f(t, x)`.
#[derive(Debug, Clone)]
pub struct LinearCompensated {
    f: MarkFn,
    compensator: f64,
    mark_dim: usize,
}

impl LinearCompensated {
    /// Computes the compensator `∫∫ f d(dt × ν)` once.
    pub fn new(f: MarkFn, measure: &IntensityMeasure) -> Result<Self> {
        let compensator = measure.space_time_integral(|t, x| f.value(t, x))?;
        Ok(Self::with_compensator(f, compensator, measure.mark_dim()))
    }

    pub fn with_compensator(f: MarkFn, compensator: f64, mark_dim: usize) -> Self {
        LinearCompensated { f, compensator, mark_dim }
    }

    pub fn function(&self) -> &MarkFn {
        &self.f
    }

    pub fn compensator(&self) -> f64 {
        self.compensator
    }
}

impl Functional for LinearCompensated {
    fn output_dim(&self) -> usize {
        1
    }

    fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    fn name(&self) -> String {
        format!("linear_compensated[{}]", self.f.shape)
    }

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        check_mark_dim(self.mark_dim, config)?;
        let n = integrate_n(config, |t, x| self.f.value(t, x))?;
        Ok(DVector::from_element(1, n - self.compensator))
    }

    fn evaluate_with_insertion(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Result<DVector<f64>> {
        let mut v = self.evaluate(config)?;
        v[0] += self.f.value(time, mark);
        Ok(v)
    }

    fn mark_jacobian(&self, _config: &PointConfiguration, time: f64, mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        let g = self.f.gradient(time, mark);
        Some(Ok(DMatrix::from_row_slice(1, g.dim(), &g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::Atom;
    use crate::registry::ScalarFn;

    #[test]
    fn insertion_adds_the_atom_value() {
        let f = MarkFn::new(ScalarFn::Square);
        let lin = LinearCompensated::with_compensator(f, 1.5, 1);
        let config = PointConfiguration::new(1.0, 1, vec![Atom::new(0.2, Mark::scalar(1.0)), Atom::new(0.7, Mark::scalar(-2.0))]).unwrap();
        assert_eq!(lin.evaluate(&config).unwrap()[0], 5.0 - 1.5);
        let direct = lin.evaluate(&config.insert(0.5, Mark::scalar(3.0)).unwrap()).unwrap()[0];
        let fast = lin.evaluate_with_insertion(&config, 0.5, &Mark::scalar(3.0)).unwrap()[0];
        assert_eq!(direct, fast);
        assert_eq!(fast, 14.0 - 1.5);
    }
}
