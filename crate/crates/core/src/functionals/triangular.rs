use nalgebra::{DMatrix, DVector, Vector3};

use super::{check_finite, check_mark_dim, Functional};
use crate::error::{Error, Result};
use crate::point_process::{Mark, PointConfiguration};

/// The three-dimensional system driven by `(Y¹, Y²)`, marks `(y₁, y₂)`:
///
/// ```text
/// Z¹ = z₁ + Y¹
/// Z² = z₂ + ∫ 2 Z¹_{s−} dY¹ + Y²
/// Z³ = z₃ + ∫ Z¹_{s−} dY¹ + 2 Y²
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSystem {
    start: [f64; 3],
    t_end: f64,
}

impl TriangularSystem {
    pub fn new(start: [f64; 3], t_end: f64) -> Self {
        TriangularSystem { start, t_end }
    }

    fn driver_total(&self, config: &PointConfiguration) -> Result<f64> {
        let mut y1 = 0.0;
        for (i, a) in config.atoms().iter().enumerate().take_while(|(_, a)| a.time <= self.t_end) {
            y1 += check_finite(a.mark[0], i, "y₁")?;
        }
        Ok(y1)
    }

    /// `Γ[Z_t] = Σ_α (ΔY¹_α)² c_α c_αᵀ + (ΔY²_α)² (0,1,2)ᵀ(0,1,2)`,
    /// `c_α = (1, 2W_α, W_α)`, `W_α = z₁ + Y¹_t − ΔY¹_α`.
    pub fn closed_form_gamma(&self, config: &PointConfiguration) -> Result<DMatrix<f64>> {
        check_mark_dim(2, config)?;
        let total = self.driver_total(config)?;
        let e = Vector3::new(0.0, 1.0, 2.0);
        let mut g = DMatrix::zeros(3, 3);
        for a in config.atoms().iter().take_while(|a| a.time <= self.t_end) {
            let (y1, y2) = (a.mark[0], a.mark[1]);
            let w = self.start[0] + total - y1;
            let c = Vector3::new(1.0, 2.0 * w, w);
            g += (y1 * y1) * c * c.transpose() + (y2 * y2) * e * e.transpose();
        }
        Ok(g)
    }
}

impl Functional for TriangularSystem {
    fn output_dim(&self) -> usize {
        3
    }

    fn mark_dim(&self) -> usize {
        2
    }

    fn name(&self) -> String {
        "triangular_system".into()
    }

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        check_mark_dim(2, config)?;
        let [mut z1, mut z2, mut z3] = self.start;
        for (i, a) in config.atoms().iter().enumerate().take_while(|(_, a)| a.time <= self.t_end) {
            let (y1, y2) = (a.mark[0], a.mark[1]);
            z2 += 2.0 * z1 * y1 + y2;
            z3 += z1 * y1 + 2.0 * y2;
            z1 += y1;
            if !(z1.is_finite() && z2.is_finite() && z3.is_finite()) {
                return Err(Error::NonFinite {
                    atom: i,
                    detail: format!("state ({z1}, {z2}, {z3})"),
                });
            }
        }
        Ok(DVector::from_column_slice(&[z1, z2, z3]))
    }

    fn mark_jacobian(&self, config: &PointConfiguration, time: f64, _mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        Some((|| {
            check_mark_dim(2, config)?;
            if time > self.t_end {
                return Ok(DMatrix::zeros(3, 2));
            }
            // W = Z¹_{α−} plus all later Y¹ jumps, i.e. z₁ + Y¹_t without the inserted jump
            let w = self.start[0] + self.driver_total(config)?;
            Ok(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0 * w, 1.0, w, 2.0]))
        })())
    }
}
