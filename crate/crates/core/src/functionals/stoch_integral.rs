use nalgebra::{DMatrix, DVector};

use super::{check_finite, check_mark_dim, jump_increments, Functional};
use crate::error::{Error, Result};
use crate::point_process::{Mark, PointConfiguration};
use crate::registry::ScalarFn;

/// `V = ∫_0^t φ(Y_{s−}) dY_s` with `Y_s = Σ_{t_i ≤ s} h(x_i)`.
///
/// `Y` reads coordinate `coord` of each mark.
#[derive(Debug, Clone, PartialEq)]
pub struct StochIntegral {
    phi: ScalarFn,
    h: ScalarFn,
    coord: usize,
    mark_dim: usize,
    t_end: f64,
}

impl StochIntegral {
    pub fn new(phi: ScalarFn, h: ScalarFn, mark_dim: usize, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidInput(format!("integration end {t_end} must be positive")));
        }
        Ok(StochIntegral {
            phi,
            h,
            coord: 0,
            mark_dim,
            t_end,
        })
    }

    pub fn on_coord(mut self, coord: usize) -> Result<Self> {
        if coord >= self.mark_dim {
            return Err(Error::IndexOutOfRange {
                index: coord,
                len: self.mark_dim,
            });
        }
        self.coord = coord;
        Ok(self)
    }

    /// Per-jump bracket `φ(Y_{α−}) + Σ_{α < s ≤ t} φ′(Y_{s−}) ΔY_s`, one entry per atom up to `t`.
    fn brackets(&self, steps: &[(f64, f64)]) -> Vec<f64> {
        let mut out = vec![0.0; steps.len()];
        let mut tail = 0.0;
        for (k, &(y_before, dy)) in steps.iter().enumerate().rev() {
            out[k] = self.phi.value(y_before) + tail;
            tail += self.phi.derivative(y_before) * dy;
        }
        out
    }

    /// `Γ[V] = Σ_{α ≤ t} (x_α h′(x_α))² (φ(Y_{α−}) + Σ_{s > α} φ′(Y_{s−}) ΔY_s)²`.
    ///
    /// With `h` the identity this is the jump-sum formula in `ΔY_α²`.
    pub fn closed_form_gamma(&self, config: &PointConfiguration) -> Result<f64> {
        check_mark_dim(self.mark_dim, config)?;
        let steps = jump_increments(config, self.coord, |x| self.h.value(x), self.t_end)?;
        let brackets = self.brackets(&steps);
        Ok(config
            .atoms()
            .iter()
            .zip(&brackets)
            .map(|(a, b)| {
                let x = a.mark[self.coord];
                let w = x * self.h.derivative(x) * b;
                w * w
            })
            .sum())
    }
}

impl Functional for StochIntegral {
    fn output_dim(&self) -> usize {
        1
    }

    fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    fn name(&self) -> String {
        format!("stoch_integral[phi={}, h={}]", self.phi, self.h)
    }

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        check_mark_dim(self.mark_dim, config)?;
        let steps = jump_increments(config, self.coord, |x| self.h.value(x), self.t_end)?;
        let mut v = 0.0;
        for (i, &(y_before, dy)) in steps.iter().enumerate() {
            v += check_finite(self.phi.value(y_before) * dy, i, "φ(Y−)ΔY")?;
        }
        Ok(DVector::from_element(1, v))
    }

    fn mark_jacobian(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        Some((|| {
            let mut jac = DMatrix::zeros(1, self.mark_dim);
            if time > self.t_end {
                return Ok(jac);
            }
            let full = config.insert(time, *mark)?;
            let at = full.atoms().partition_point(|a| a.time < time);
            let steps = jump_increments(&full, self.coord, |x| self.h.value(x), self.t_end)?;
            let bracket = self.brackets(&steps)[at];
            jac[(0, self.coord)] = self.h.derivative(mark[self.coord]) * bracket;
            Ok(jac)
        })())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::Atom;

    fn config() -> PointConfiguration {
        PointConfiguration::new(
            1.0,
            1,
            vec![
                Atom::new(0.1, Mark::scalar(0.5)),
                Atom::new(0.4, Mark::scalar(-0.3)),
                Atom::new(0.8, Mark::scalar(1.2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn unit_integrand_telescopes() {
        let v = StochIntegral::new(ScalarFn::Constant(1.0), ScalarFn::Identity, 1, 1.0).unwrap();
        assert!((v.evaluate(&config()).unwrap()[0] - 1.4).abs() < 1e-15);
        let v = StochIntegral::new(ScalarFn::Constant(2.5), ScalarFn::Identity, 1, 1.0).unwrap();
        assert!((v.evaluate(&config()).unwrap()[0] - 2.5 * 1.4).abs() < 1e-14);
    }

    #[test]
    fn end_time_cuts_the_sum() {
        let v = StochIntegral::new(ScalarFn::Constant(1.0), ScalarFn::Identity, 1, 0.5).unwrap();
        assert!((v.evaluate(&config()).unwrap()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn uses_left_limits() {
        // φ = identity: V = Σ Y_{t_i−} ΔY_i = 0·0.5 + 0.5·(−0.3) + 0.2·1.2
        let v = StochIntegral::new(ScalarFn::Identity, ScalarFn::Identity, 1, 1.0).unwrap();
        assert!((v.evaluate(&config()).unwrap()[0] - (-0.15 + 0.24)).abs() < 1e-15);
    }

    #[test]
    fn insertion_increment_matches_hand_formula() {
        // ε⁺V − V = φ(Y_{α−}) x + Σ_{s > α} (φ(Y_{s−} + x) − φ(Y_{s−})) ΔY_s
        let v = StochIntegral::new(ScalarFn::Sin, ScalarFn::Identity, 1, 1.0).unwrap();
        let c = config();
        let (alpha, x) = (0.3, 0.7);
        let inc = v.evaluate_with_insertion(&c, alpha, &Mark::scalar(x)).unwrap()[0] - v.evaluate(&c).unwrap()[0];
        let y_before: f64 = 0.5;
        let expected = y_before.sin() * x
            + ((0.5 + x).sin() - 0.5f64.sin()) * -0.3
            + ((0.2 + x).sin() - 0.2f64.sin()) * 1.2;
        assert!((inc - expected).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_central_difference() {
        let v = StochIntegral::new(ScalarFn::Tanh, ScalarFn::Sin, 1, 1.0).unwrap();
        let c = config();
        let (alpha, x) = (0.3, 0.7);
        let eta = 1e-6;
        let fd = (v.evaluate_with_insertion(&c, alpha, &Mark::scalar(x + eta)).unwrap()[0]
            - v.evaluate_with_insertion(&c, alpha, &Mark::scalar(x - eta)).unwrap()[0])
            / (2.0 * eta);
        let an = v.mark_jacobian(&c, alpha, &Mark::scalar(x)).unwrap().unwrap()[(0, 0)];
        assert!((fd - an).abs() < 1e-8, "{fd} vs {an}");
    }
}
