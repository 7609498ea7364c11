use nalgebra::{DMatrix, DVector};

use super::{check_finite, check_mark_dim, Functional, StepPath};
use crate::error::{Error, Result};
use crate::point_process::{Mark, PointConfiguration};
use crate::registry::MatrixFn;

/// `R = ∫_0^t ψ(Z_{s−}) dZ_s` with `Z¹ = S¹ + Y`, `Zⁱ = Sⁱ` for `i ≥ 2`.
///
/// `Y` sums the first mark coordinate; `S` is a pre-drawn step path in `ℝ^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStochIntegral {
    psi: MatrixFn,
    s_path: StepPath,
    z0: Vec<f64>,
    mark_dim: usize,
    t_end: f64,
}

struct Event {
    z_before: Vec<f64>,
    dz: Vec<f64>,
    atom: bool,
}

impl VectorStochIntegral {
    pub fn new(psi: MatrixFn, s_path: StepPath, z0: Vec<f64>, mark_dim: usize, t_end: f64) -> Result<Self> {
        if z0.len() != s_path.dim() {
            return Err(Error::DimensionMismatch {
                expected: s_path.dim(),
                got: z0.len(),
                context: "vector integral start point",
            });
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidInput(format!("integration end {t_end} must be positive")));
        }
        Ok(VectorStochIntegral {
            psi,
            s_path,
            z0,
            mark_dim,
            t_end,
        })
    }

    pub fn dim(&self) -> usize {
        self.s_path.dim()
    }

    pub fn s_path(&self) -> &StepPath {
        &self.s_path
    }

    fn events(&self, config: &PointConfiguration) -> Result<Vec<Event>> {
        let p = self.dim();
        let atoms: Vec<_> = config.atoms().iter().take_while(|a| a.time <= self.t_end).collect();
        let jumps: Vec<_> = self.s_path.jumps().filter(|(t, _)| *t <= self.t_end).collect();
        let mut z: Vec<f64> = self.z0.iter().zip(self.s_path.value(0)).map(|(a, b)| a + b).collect();
        let mut out = Vec::with_capacity(atoms.len() + jumps.len());
        let (mut i, mut j) = (0, 0);
        while i < atoms.len() || j < jumps.len() {
            let ta = atoms.get(i).map_or(f64::INFINITY, |a| a.time);
            let ts = jumps.get(j).map_or(f64::INFINITY, |s| s.0);
            let t = ta.min(ts);
            let mut dz = vec![0.0; p];
            let atom = ta == t;
            if atom {
                dz[0] += check_finite(atoms[i].mark[0], i, "jump")?;
                i += 1;
            }
            if ts == t {
                for (d, s) in dz.iter_mut().zip(&jumps[j].1) {
                    *d += s;
                }
                j += 1;
            }
            let z_before = z.clone();
            for (zk, d) in z.iter_mut().zip(&dz) {
                *zk += d;
            }
            out.push(Event { z_before, dz, atom });
        }
        Ok(out)
    }

    /// `U_α = ψ_{·1}(Z_{α−}) + Σ_{α < s ≤ t} ∂₁ψ(Z_{s−}) ΔZ_s` for every atom up to `t`.
    ///
    /// The sum runs over all jumps of `Z` after `α`, those of `S` included,
    /// since shifting `Z¹` moves every later integrand.
    fn u_vectors(&self, events: &[Event]) -> Vec<DVector<f64>> {
        let p = self.dim();
        let mut tail = DVector::zeros(p);
        let mut out = Vec::new();
        for e in events.iter().rev() {
            if e.atom {
                out.push(self.psi.value(&e.z_before).column(0) + &tail);
            }
            tail += self.psi.d_first(&e.z_before) * DVector::from_column_slice(&e.dz);
        }
        out.reverse();
        out
    }

    /// `Γ[R] = Σ_{α ≤ t} ΔY_α² U_α U_αᵀ`.
    pub fn closed_form_gamma(&self, config: &PointConfiguration) -> Result<DMatrix<f64>> {
        check_mark_dim(self.mark_dim, config)?;
        let events = self.events(config)?;
        let p = self.dim();
        let mut g = DMatrix::zeros(p, p);
        for (a, u) in config.atoms().iter().zip(self.u_vectors(&events)) {
            g += (a.mark[0] * a.mark[0]) * &u * u.transpose();
        }
        Ok(g)
    }

    /// The same sum with `U_α` built from `∂₁ψ_{·1}` and the jumps of `Y` only.
    /// Agrees with [`Self::closed_form_gamma`] when `S¹` is constant and the
    /// columns `j ≥ 2` of `ψ` do not depend on `z₁`.
    pub fn first_column_gamma(&self, config: &PointConfiguration) -> Result<DMatrix<f64>> {
        check_mark_dim(self.mark_dim, config)?;
        let events = self.events(config)?;
        let p = self.dim();
        let mut tail = DVector::zeros(p);
        let mut us = Vec::new();
        for e in events.iter().rev() {
            if e.atom {
                us.push(self.psi.value(&e.z_before).column(0) + &tail);
                tail += self.psi.d_first(&e.z_before).column(0) * e.dz[0];
            }
        }
        us.reverse();
        let mut g = DMatrix::zeros(p, p);
        for (a, u) in config.atoms().iter().zip(us) {
            g += (a.mark[0] * a.mark[0]) * &u * u.transpose();
        }
        Ok(g)
    }
}

impl Functional for VectorStochIntegral {
    fn output_dim(&self) -> usize {
        self.dim()
    }

    fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    fn name(&self) -> String {
        format!("vector_stoch_integral[psi={}, p={}]", self.psi, self.dim())
    }

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        check_mark_dim(self.mark_dim, config)?;
        let mut r = DVector::zeros(self.dim());
        for e in self.events(config)? {
            r += self.psi.value(&e.z_before) * DVector::from_column_slice(&e.dz);
        }
        if let Some(k) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                atom: 0,
                detail: format!("component {k} of the integral is {}", r[k]),
            });
        }
        Ok(r)
    }

    fn mark_jacobian(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        Some((|| {
            let mut jac = DMatrix::zeros(self.dim(), self.mark_dim);
            if time > self.t_end {
                return Ok(jac);
            }
            let full = config.insert(time, *mark)?;
            let at = full.atoms().partition_point(|a| a.time < time);
            let u = &self.u_vectors(&self.events(&full)?)[at];
            jac.set_column(0, u);
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
                Atom::new(0.15, Mark::scalar(0.5)),
                Atom::new(0.45, Mark::scalar(-0.3)),
                Atom::new(0.85, Mark::scalar(1.2)),
            ],
        )
        .unwrap()
    }

    fn s_path() -> StepPath {
        StepPath::new(2, vec![0.0, 0.3, 0.6], vec![0.0, 0.0, 0.4, 1.0, -0.2, -0.5]).unwrap()
    }

    #[test]
    fn identity_field_integrates_the_increments() {
        let r = VectorStochIntegral::new(MatrixFn::Identity, s_path(), vec![0.0, 0.0], 1, 1.0).unwrap();
        let v = r.evaluate(&config()).unwrap();
        assert!((v[0] - (1.4 - 0.2)).abs() < 1e-14);
        assert!((v[1] - (-0.5)).abs() < 1e-14);
        let g = r.closed_form_gamma(&config()).unwrap();
        let expected = 0.25 + 0.09 + 1.44;
        assert!((g[(0, 0)] - expected).abs() < 1e-14);
        assert_eq!(g[(1, 1)], 0.0);
    }

    #[test]
    fn jacobian_matches_central_difference() {
        let r = VectorStochIntegral::new(MatrixFn::ShearSine, s_path(), vec![0.1, -0.2], 1, 1.0).unwrap();
        let c = config();
        let (alpha, x) = (0.35, 0.6);
        let eta = 1e-6;
        let plus = r.evaluate_with_insertion(&c, alpha, &Mark::scalar(x + eta)).unwrap();
        let minus = r.evaluate_with_insertion(&c, alpha, &Mark::scalar(x - eta)).unwrap();
        let fd = (plus - minus) / (2.0 * eta);
        let an = r.mark_jacobian(&c, alpha, &Mark::scalar(x)).unwrap().unwrap();
        for k in 0..2 {
            assert!((fd[k] - an[(k, 0)]).abs() < 1e-8, "{k}: {} vs {}", fd[k], an[(k, 0)]);
        }
    }

    #[test]
    fn first_column_form_agrees_when_s1_is_flat() {
        let s = StepPath::new(2, vec![0.0, 0.3, 0.6], vec![0.0, 0.0, 0.0, 1.0, 0.0, -0.5]).unwrap();
        let r = VectorStochIntegral::new(MatrixFn::ShearSine, s, vec![0.0, 0.0], 1, 1.0).unwrap();
        let a = r.closed_form_gamma(&config()).unwrap();
        let b = r.first_column_gamma(&config()).unwrap();
        assert!((a - b).abs().max() < 1e-14);
    }

    #[test]
    fn first_column_form_differs_when_s1_moves() {
        let r = VectorStochIntegral::new(MatrixFn::ShearSine, s_path(), vec![0.0, 0.0], 1, 1.0).unwrap();
        let a = r.closed_form_gamma(&config()).unwrap();
        let b = r.first_column_gamma(&config()).unwrap();
        assert!((a - b).abs().max() > 1e-3);
    }
}
