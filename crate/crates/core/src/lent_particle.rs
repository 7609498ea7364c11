//! The lent particle method.
//!
//! For each atom `(t_i, x_i)` of the configuration: take the atom out (`ε⁻`),
//! put it back with a free mark `x` (`ε⁺`), differentiate in `x` at `x = x_i`
//! and contract with the bottom coefficient `ξ(x_i)`. Summing over atoms gives
//! `Γ[F] = Σ_i J_i ξ(x_i) J_iᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::intensity::BottomCarreDuChamp;
use crate::point_process::{Mark, PointConfiguration};
use crate::stats::CompensatedSum;

/// Relative central-difference step.
pub const FD_RELATIVE_STEP: f64 = 1e-5;
/// Halvings of the step allowed before giving up on a mark near the origin.
pub const MAX_STEP_SHRINKS: u32 = 4;
/// Eigenvalues below `−PSD_TOLERANCE · trace` are treated as a genuine failure.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `ε⁺`: add the particle `(time, mark)`.
pub fn epsilon_plus(config: &PointConfiguration, time: f64, mark: Mark) -> Result<PointConfiguration> {
    config.insert(time, mark)
}

/// `ε⁻`: take atom `index` back.
pub fn epsilon_minus(config: &PointConfiguration, index: usize) -> Result<PointConfiguration> {
    config.remove(index)
}

/// How the mark Jacobian of `ε⁺F` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// Hand-coded derivative when the functional has one, else finite differences.
    #[default]
    Auto,
    FiniteDifference,
    /// Fails on functionals without a hand-coded derivative.
    Analytic,
}

impl std::str::FromStr for JacobianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(JacobianMode::Auto),
            "fd" | "finite_difference" => Ok(JacobianMode::FiniteDifference),
            "analytic" => Ok(JacobianMode::Analytic),
            other => Err(Error::InvalidInput(format!("unknown jacobian mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for JacobianMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JacobianMode::Auto => "auto",
            JacobianMode::FiniteDifference => "fd",
            JacobianMode::Analytic => "analytic",
        })
    }
}

/// Whether the segment `[x − η e_k, x + η e_k]` avoids the origin.
fn segment_in_domain(mark: &Mark, k: usize, eta: f64) -> bool {
    let others_zero = mark.iter().enumerate().all(|(j, v)| j == k || *v == 0.0);
    !(others_zero && mark[k].abs() <= eta)
}

/// Central differences of `x ↦ F(config ∪ {(time, x)})` at `mark`, step
/// `η = 1e-5 · max(|x_k|, 1)` per coordinate, halved while the stencil would
/// touch the origin.
pub fn finite_difference_jacobian(
    f: &dyn Functional,
    config: &PointConfiguration,
    time: f64,
    mark: &Mark,
) -> Result<DMatrix<f64>> {
    let p = mark.dim();
    let mut jac = DMatrix::zeros(f.output_dim(), p);
    for k in 0..p {
        let mut eta = FD_RELATIVE_STEP * mark[k].abs().max(1.0);
        let mut shrinks = 0;
        while !segment_in_domain(mark, k, eta) {
            if shrinks == MAX_STEP_SHRINKS {
                return Err(Error::StepOutsideDomain { atom: 0, shrinks });
            }
            eta /= 2.0;
            shrinks += 1;
        }
        let up = f.evaluate_with_insertion(config, time, &mark.with_coord(k, mark[k] + eta))?;
        let down = f.evaluate_with_insertion(config, time, &mark.with_coord(k, mark[k] - eta))?;
        jac.set_column(k, &((up - down) / (2.0 * eta)));
    }
    Ok(jac)
}

/// The `d × p` Jacobian of `x ↦ F(config ∪ {(time, x)})` at `mark`.
pub fn mark_jacobian(
    f: &dyn Functional,
    config: &PointConfiguration,
    time: f64,
    mark: &Mark,
    mode: JacobianMode,
) -> Result<DMatrix<f64>> {
    let jac = match mode {
        JacobianMode::FiniteDifference => finite_difference_jacobian(f, config, time, mark)?,
        JacobianMode::Auto => match f.mark_jacobian(config, time, mark) {
            Some(j) => j?,
            None => finite_difference_jacobian(f, config, time, mark)?,
        },
        JacobianMode::Analytic => f
            .mark_jacobian(config, time, mark)
            .ok_or_else(|| Error::Precondition(format!("{} has no analytic mark derivative", f.name())))??,
    };
    if jac.nrows() != f.output_dim() || jac.ncols() != mark.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.output_dim() * mark.dim(),
            got: jac.nrows() * jac.ncols(),
            context: "mark jacobian shape",
        });
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            atom: 0,
            detail: format!("mark jacobian of {} at {mark:?}", f.name()),
        });
    }
    Ok(jac)
}

/// `γ[ε⁺F](time, mark) = J ξ(mark) Jᵀ`.
pub fn gamma_of_added_particle(
    f: &dyn Functional,
    config: &PointConfiguration,
    time: f64,
    mark: &Mark,
    structure: &BottomCarreDuChamp,
    mode: JacobianMode,
) -> Result<DMatrix<f64>> {
    let m = mark_jacobian(f, config, time, mark, mode)? * structure.factor(mark);
    Ok(&m * m.transpose())
}

/// `J_i L(x_i)` for every atom, with `L Lᵀ = ξ`. These are the per-atom
/// rows of the sharp gradient and the square roots of the Γ contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpFactors {
    pub output_dim: usize,
    pub mark_dim: usize,
    pub per_atom: Vec<DMatrix<f64>>,
}

impl SharpFactors {
    pub fn compute(
        f: &dyn Functional,
        config: &PointConfiguration,
        structure: &BottomCarreDuChamp,
        mode: JacobianMode,
    ) -> Result<Self> {
        let mut per_atom = Vec::with_capacity(config.len());
        for (i, atom) in config.atoms().iter().enumerate() {
            let reduced = epsilon_minus(config, i)?;
            let jac = mark_jacobian(f, &reduced, atom.time, &atom.mark, mode).map_err(|e| e.at_atom(i))?;
            per_atom.push(jac * structure.factor(&atom.mark));
        }
        Ok(SharpFactors {
            output_dim: f.output_dim(),
            mark_dim: config.mark_dim(),
            per_atom,
        })
    }

    /// `F♯ = Σ_i J_i L(x_i) ε_i` for auxiliary uniforms `r_i`, with
    /// `ε_{i,k}` the `k`-th Rademacher digit of `r_i`.
    pub fn draw(&self, aux: &[f64]) -> Result<SharpSample> {
        if aux.len() != self.per_atom.len() {
            return Err(Error::DimensionMismatch {
                expected: self.per_atom.len(),
                got: aux.len(),
                context: "auxiliary marks",
            });
        }
        let mut value = DVector::zeros(self.output_dim);
        let mut noise = Vec::with_capacity(aux.len() * self.mark_dim);
        for (d, &r) in self.per_atom.iter().zip(aux) {
            let eps = DVector::from_iterator(self.mark_dim, (1..=self.mark_dim).map(|k| rademacher(r, k as u32)));
            noise.extend(eps.iter());
            value += d * eps;
        }
        Ok(SharpSample { value, noise })
    }

    /// `Σ_i (J_i L_i)(J_i L_i)ᵀ`, which is `Γ[F]` before symmetrization.
    pub fn gamma(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.output_dim, self.output_dim);
        for d in &self.per_atom {
            g += d * d.transpose();
        }
        g
    }
}

/// `ξ_k(r) = +1` when `⌊2^k r⌋` is odd, `−1` otherwise. For uniform `r` the
/// digits are independent with mean 0 and variance 1; `ξ_1(r) = sign(r − ½)`.
pub fn rademacher(r: f64, k: u32) -> f64 {
    let digit = (r * (1u64 << k) as f64).floor() as u64;
    if digit % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// One draw of the sharp gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpSample {
    pub value: DVector<f64>,
    /// `ε_{i,k}` flattened atom-major.
    pub noise: Vec<f64>,
}

/// `F♯` for one fresh set of auxiliary marks.
pub fn sharp_sample<R: Rng + ?Sized>(
    f: &dyn Functional,
    config: &PointConfiguration,
    structure: &BottomCarreDuChamp,
    mode: JacobianMode,
    rng: &mut R,
) -> Result<SharpSample> {
    let factors = SharpFactors::compute(f, config, structure, mode)?;
    let aux: Vec<f64> = (0..config.len()).map(|_| rng.random()).collect();
    factors.draw(&aux)
}

/// `Γ[F]` on one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSample {
    /// Symmetric PSD matrix after projection.
    pub matrix: DMatrix<f64>,
    /// Per-atom terms `J_i ξ(x_i) J_iᵀ`, in atom order.
    pub contributions: Vec<DMatrix<f64>>,
    /// Smallest eigenvalue of the raw sum.
    pub min_eigenvalue: f64,
    /// Whether negative eigenvalues were clamped.
    pub projected: bool,
    pub source: Option<u64>,
}

impl GammaSample {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Build from per-atom terms: compensated entrywise sum, symmetrize,
    /// check the PSD floor and clamp.
    pub fn from_contributions(dim: usize, contributions: Vec<DMatrix<f64>>, source: Option<u64>) -> Result<Self> {
        let mut sum = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in r..dim {
                let mut acc = CompensatedSum::default();
                for m in &contributions {
                    acc.add(0.5 * (m[(r, c)] + m[(c, r)]));
                }
                sum[(r, c)] = acc.value();
                sum[(c, r)] = acc.value();
            }
        }
        let (matrix, min_eigenvalue, projected) = project_psd(sum)?;
        Ok(GammaSample {
            matrix,
            contributions,
            min_eigenvalue,
            projected,
            source,
        })
    }
}

/// Clamp negative eigenvalues of a symmetric matrix, failing below `−1e-10 · trace`.
pub fn project_psd(m: DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool)> {
    let trace = m.trace();
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        if v < -PSD_TOLERANCE * trace.abs() {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: v,
                trace,
            });
        }
        return Ok((DMatrix::from_element(1, 1, v.max(0.0)), v, v < 0.0));
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * trace.abs() {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            trace,
        });
    }
    if min >= 0.0 {
        return Ok((m, min, false));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let p = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok((0.5 * (&p + p.transpose()), min, true))
}

/// `Γ[F] = ∫ ε⁻ γ[ε⁺F] dN` on one configuration.
pub fn carre_du_champ(
    f: &dyn Functional,
    config: &PointConfiguration,
    structure: &BottomCarreDuChamp,
    mode: JacobianMode,
) -> Result<GammaSample> {
    if config.mark_dim() != f.mark_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.mark_dim(),
            got: config.mark_dim(),
            context: "configuration mark dimension",
        });
    }
    let factors = SharpFactors::compute(f, config, structure, mode)?;
    let contributions = factors.per_atom.iter().map(|d| d * d.transpose()).collect();
    GammaSample::from_contributions(f.output_dim(), contributions, config.source())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::functionals::{Composite, LinearCompensated, StochIntegral, TriangularSystem};
    use crate::point_process::Atom;
    use crate::registry::{MarkFn, ScalarFn, SmoothMap};
    use crate::rng::{Purpose, StreamKey};

    fn config(atoms: &[(f64, f64)]) -> PointConfiguration {
        PointConfiguration::new(1.0, 1, atoms.iter().map(|&(t, x)| Atom::new(t, Mark::scalar(x))).collect()).unwrap()
    }

    fn lin(shape: ScalarFn) -> Arc<dyn Functional> {
        Arc::new(LinearCompensated::with_compensator(MarkFn::new(shape), 0.0, 1))
    }

    #[test]
    fn plus_minus_round_trip() {
        let c = config(&[(0.2, 1.0), (0.7, -2.0)]);
        let e = PointConfiguration::empty(1.0, 1);
        assert_eq!(epsilon_plus(&e, 0.5, Mark::scalar(1.0)).unwrap().len(), 1);
        let plus = epsilon_plus(&c, 0.5, Mark::scalar(3.0)).unwrap();
        assert_eq!(plus.len(), 3);
        assert_eq!(plus.atoms()[1].time, 0.5);
        assert_eq!(epsilon_minus(&plus, 1).unwrap(), c);
        assert!(epsilon_plus(&c, 0.2, Mark::scalar(3.0)).is_err());
        assert!(matches!(epsilon_minus(&c, 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn identity_functional_gives_x_squared() {
        let f = lin(ScalarFn::Identity);
        let c = config(&[(0.3, 0.4)]);
        for mode in [JacobianMode::Analytic, JacobianMode::FiniteDifference] {
            let g = gamma_of_added_particle(f.as_ref(), &c, 0.6, &Mark::scalar(2.0), &BottomCarreDuChamp::Levy, mode).unwrap();
            assert!((g[(0, 0)] - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_configuration_has_zero_gamma() {
        let f = StochIntegral::new(ScalarFn::Sin, ScalarFn::Identity, 1, 1.0).unwrap();
        let g = carre_du_champ(&f, &PointConfiguration::empty(1.0, 1), &BottomCarreDuChamp::Levy, JacobianMode::Auto).unwrap();
        assert_eq!(g.matrix, DMatrix::zeros(1, 1));
        assert!(g.contributions.is_empty());
    }

    #[test]
    fn linear_functional_gamma_is_n_of_gamma() {
        let f = lin(ScalarFn::Sin);
        let c = config(&[(0.1, 0.5), (0.4, -1.5), (0.9, 2.0)]);
        let g = carre_du_champ(f.as_ref(), &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic).unwrap();
        let expected: f64 = c.atoms().iter().map(|a| (a.mark[0] * a.mark[0].cos()).powi(2)).sum();
        assert!((g.matrix[(0, 0)] - expected).abs() < 1e-14);
    }

    #[test]
    fn triangular_system_matches_two_term_sum() {
        let z = TriangularSystem::new([0.0; 3], 1.0);
        let c = PointConfiguration::new(
            1.0,
            2,
            vec![
                Atom::new(0.1, Mark::new(&[0.6, 0.0])),
                Atom::new(0.3, Mark::new(&[0.0, 0.9])),
                Atom::new(0.5, Mark::new(&[-0.4, 0.0])),
            ],
        )
        .unwrap();
        let closed = z.closed_form_gamma(&c).unwrap();
        for mode in [JacobianMode::Analytic, JacobianMode::FiniteDifference] {
            let g = carre_du_champ(&z, &c, &BottomCarreDuChamp::Levy, mode).unwrap();
            assert!((&g.matrix - &closed).abs().max() < 1e-8 * closed.abs().max());
        }
        let g = carre_du_champ(&z, &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic).unwrap();
        assert!(g.eigenvalues()[0] > 1e-6);
    }

    #[test]
    fn ignored_atom_contributes_nothing() {
        // atoms after the end time are invisible to the functional
        let f = StochIntegral::new(ScalarFn::Cos, ScalarFn::Identity, 1, 0.5).unwrap();
        let c = config(&[(0.2, 0.7), (0.8, 1.3)]);
        let g = carre_du_champ(&f, &c, &BottomCarreDuChamp::Levy, JacobianMode::FiniteDifference).unwrap();
        assert_eq!(g.contributions[1][(0, 0)], 0.0);
        assert!(g.contributions[0][(0, 0)] > 0.0);
    }

    #[test]
    fn analytic_mode_requires_a_derivative() {
        struct Opaque;
        impl Functional for Opaque {
            fn output_dim(&self) -> usize {
                1
            }
            fn mark_dim(&self) -> usize {
                1
            }
            fn name(&self) -> String {
                "opaque".into()
            }
            fn evaluate(&self, c: &PointConfiguration) -> Result<DVector<f64>> {
                Ok(DVector::from_element(1, c.atoms().iter().map(|a| a.mark[0].powi(3)).sum()))
            }
        }
        let c = config(&[(0.2, 0.5)]);
        assert!(carre_du_champ(&Opaque, &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic).is_err());
        let g = carre_du_champ(&Opaque, &c, &BottomCarreDuChamp::Levy, JacobianMode::Auto).unwrap();
        // (x · 3x²)² at x = 0.5
        assert!((g.matrix[(0, 0)] - (3.0 * 0.125f64).powi(2)).abs() < 1e-10);
    }

    #[test]
    fn step_shrinks_near_the_origin() {
        let f = lin(ScalarFn::Identity);
        let c = PointConfiguration::empty(1.0, 1);
        let tiny = Mark::scalar(3e-6);
        let j = finite_difference_jacobian(f.as_ref(), &c, 0.5, &tiny).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-9);
        let too_small = Mark::scalar(1e-7);
        assert!(matches!(
            finite_difference_jacobian(f.as_ref(), &c, 0.5, &too_small),
            Err(Error::StepOutsideDomain { .. })
        ));
    }

    #[test]
    fn rademacher_digits_are_balanced() {
        assert_eq!(rademacher(0.3, 1), -1.0);
        assert_eq!(rademacher(0.7, 1), 1.0);
        // digits 1 and 2 over the four quarter cells cover all sign pairs once
        let pairs: Vec<_> = [0.1, 0.3, 0.6, 0.9].iter().map(|&r| (rademacher(r, 1), rademacher(r, 2))).collect();
        assert_eq!(pairs, vec![(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]);
    }

    #[test]
    fn sharp_of_linear_functional() {
        let f = lin(ScalarFn::Sin);
        let c = config(&[(0.1, 0.5), (0.4, -1.5)]);
        let factors = SharpFactors::compute(f.as_ref(), &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic).unwrap();
        let s = factors.draw(&[0.8, 0.2]).unwrap();
        let expected = 0.5 * 0.5f64.cos() * 1.0 + 1.5 * (-1.5f64).cos() * -1.0;
        assert!((s.value[0] - expected).abs() < 1e-15);
        assert_eq!(s.noise, vec![1.0, -1.0]);
    }

    #[test]
    fn sharp_second_moment_estimates_gamma() {
        let f = StochIntegral::new(ScalarFn::Sin, ScalarFn::Identity, 1, 1.0).unwrap();
        let c = config(&[(0.1, 0.5), (0.3, -0.9), (0.6, 1.4), (0.8, 0.2)]);
        let gamma = carre_du_champ(&f, &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic).unwrap().matrix[(0, 0)];
        let mut rng = StreamKey::new(5).stream(Purpose::SharpNoise, 0);
        let n = 10_000;
        let (mut first, mut second) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let s = sharp_sample(&f, &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic, &mut rng).unwrap();
            first.push(s.value[0]);
            second.push(s.value[0] * s.value[0]);
        }
        let mean = crate::stats::Estimate::mean_of(&first);
        let sq = crate::stats::Estimate::mean_of(&second);
        assert!(mean.within(0.0, 3.0), "{mean:?}");
        assert!(sq.within(gamma, 3.0), "{sq:?} vs {gamma}");
    }

    #[test]
    fn projection_clamps_tiny_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-13]);
        let (p, min, projected) = project_psd(m).unwrap();
        assert!(projected && min < 0.0);
        assert!(p.symmetric_eigen().eigenvalues.min() >= -1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(project_psd(bad), Err(Error::NotPositiveSemidefinite { .. })));
    }

    fn arb_config() -> impl Strategy<Value = PointConfiguration> {
        prop::collection::vec((0.001f64..1.0, prop_oneof![-2.0f64..-0.05, 0.05f64..2.0]), 0..8).prop_filter_map(
            "distinct times",
            |atoms| PointConfiguration::new(1.0, 1, atoms.into_iter().map(|(t, x)| Atom::new(t, Mark::scalar(x))).collect()).ok(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn chain_rule_for_composites(c in arb_config()) {
            let parts = vec![lin(ScalarFn::Sin), lin(ScalarFn::Square), lin(ScalarFn::Tanh)];
            let stacked = Composite::new(SmoothMap::Identity, parts.clone()).unwrap();
            let h = Composite::new(SmoothMap::Product, parts).unwrap();
            let cross = carre_du_champ(&stacked, &c, &BottomCarreDuChamp::Levy, JacobianMode::Analytic).unwrap().matrix;
            let grad = SmoothMap::Product.jacobian(&stacked.inner(&c).unwrap());
            let expected = (&grad * cross * grad.transpose())[(0, 0)];
            for (mode, tol) in [(JacobianMode::Analytic, 1e-6), (JacobianMode::FiniteDifference, 1e-4)] {
                let got = carre_du_champ(&h, &c, &BottomCarreDuChamp::Levy, mode).unwrap().matrix[(0, 0)];
                prop_assert!((got - expected).abs() <= tol * expected.abs().max(1e-12), "{got} vs {expected}");
            }
        }

        #[test]
        fn analytic_matches_finite_difference(c in arb_config(), alpha in 0.0005f64..1.0, x in 0.05f64..2.0) {
            prop_assume!(c.insertion_index(alpha).is_ok());
            let f = StochIntegral::new(ScalarFn::Sin, ScalarFn::Identity, 1, 1.0).unwrap();
            let an = f.mark_jacobian(&c, alpha, &Mark::scalar(x)).unwrap().unwrap()[(0, 0)];
            let fd = finite_difference_jacobian(&f, &c, alpha, &Mark::scalar(x)).unwrap()[(0, 0)];
            prop_assert!((an - fd).abs() <= 1e-6 * an.abs().max(1.0));
        }
    }
}
