use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Functional;
use crate::error::{Error, Result};
use crate::point_process::{Mark, PointConfiguration};
use crate::registry::SmoothMap;

/// `H = Φ(F₁, …, F_n)` with the outputs of the parts stacked into one vector.
#[derive(Clone)]
pub struct Composite {
    map: SmoothMap,
    parts: Vec<Arc<dyn Functional>>,
    input_dim: usize,
}

impl std::fmt::Debug for Composite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Composite")
            .field("map", &self.map)
            .field("parts", &self.parts.iter().map(|p| p.name()).collect::<Vec<_>>())
            .finish()
    }
}

impl Composite {
    pub fn new(map: SmoothMap, parts: Vec<Arc<dyn Functional>>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("a composite needs at least one part".into()))?;
        let mark_dim = first.mark_dim();
        if let Some(bad) = parts.iter().find(|p| p.mark_dim() != mark_dim) {
            return Err(Error::DimensionMismatch {
                expected: mark_dim,
                got: bad.mark_dim(),
                context: "composite parts must share the mark space",
            });
        }
        let input_dim = parts.iter().map(|p| p.output_dim()).sum();
        map.check_input(input_dim)?;
        Ok(Composite { map, parts, input_dim })
    }

    pub fn parts(&self) -> &[Arc<dyn Functional>] {
        &self.parts
    }

    pub fn map(&self) -> &SmoothMap {
        &self.map
    }

    fn stack(&self, pieces: Vec<DVector<f64>>) -> DVector<f64> {
        let mut u = DVector::zeros(self.input_dim);
        let mut at = 0;
        for p in pieces {
            u.rows_mut(at, p.len()).copy_from(&p);
            at += p.len();
        }
        u
    }

    /// Stacked part values.
    pub fn inner(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        Ok(self.stack(self.parts.iter().map(|p| p.evaluate(config)).collect::<Result<_>>()?))
    }
}

impl Functional for Composite {
    fn output_dim(&self) -> usize {
        self.map.output_dim(self.input_dim)
    }

    fn mark_dim(&self) -> usize {
        self.parts[0].mark_dim()
    }

    fn name(&self) -> String {
        let parts: Vec<_> = self.parts.iter().map(|p| p.name()).collect();
        format!("{}({})", self.map, parts.join(", "))
    }

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        Ok(self.map.value(&self.inner(config)?))
    }

    fn evaluate_with_insertion(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Result<DVector<f64>> {
        let pieces = self
            .parts
            .iter()
            .map(|p| p.evaluate_with_insertion(config, time, mark))
            .collect::<Result<_>>()?;
        Ok(self.map.value(&self.stack(pieces)))
    }

    /// Chain rule: `Φ′(ε⁺F) · ∂ₓ ε⁺F`, available when every part has a Jacobian.
    fn mark_jacobian(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        let jacobians: Option<Vec<_>> = self.parts.iter().map(|p| p.mark_jacobian(config, time, mark)).collect();
        let jacobians = jacobians?;
        Some((|| {
            let mut inner = DMatrix::zeros(self.input_dim, self.mark_dim());
            let mut at = 0;
            for j in jacobians {
                let j = j?;
                inner.rows_mut(at, j.nrows()).copy_from(&j);
                at += j.nrows();
            }
            let u = self.stack(
                self.parts
                    .iter()
                    .map(|p| p.evaluate_with_insertion(config, time, mark))
                    .collect::<Result<_>>()?,
            );
            Ok(self.map.jacobian(&u) * inner)
        })())
    }
}
