//! Coarser cutoffs are obtained by thinning one configuration drawn at the
//! finest cutoff, so the det Γ > 0 frequency should not increase with ε.

use lent_particle::diagnostics::tol_det;
use lent_particle::functionals::{AuxPath, Functional, RunningSupremum, TriangularSystem};
use lent_particle::intensity::{BottomCarreDuChamp, IntensityMeasure, LevyDensity, MarkLaw};
use lent_particle::lent_particle::{carre_du_champ, JacobianMode};
use lent_particle::point_process::{sample_indexed, PointConfiguration};
use lent_particle::rng::{Purpose, StreamKey};

const CUTOFFS: [f64; 3] = [1e-3, 1e-2, 1e-1];
const SAMPLES: u64 = 2000;

fn thin(config: &PointConfiguration, coarse: &IntensityMeasure) -> PointConfiguration {
    let atoms = config.atoms().iter().filter(|a| coarse.contains(&a.mark)).cloned().collect();
    PointConfiguration::new(config.horizon(), config.mark_dim(), atoms).unwrap()
}

fn det_positive_fractions(f: &dyn Functional, fine: &IntensityMeasure) -> Vec<f64> {
    let key = StreamKey::new(11);
    let coarse: Vec<_> = CUTOFFS.iter().map(|&e| fine.with_truncation(e).unwrap()).collect();
    let mut hits = vec![0usize; CUTOFFS.len()];
    for i in 0..SAMPLES {
        let c = sample_indexed(fine, &key, i);
        for (k, m) in coarse.iter().enumerate() {
            let g = carre_du_champ(f, &thin(&c, m), &BottomCarreDuChamp::Levy, JacobianMode::Analytic).unwrap().matrix;
            if g.trace() > 0.0 && g.determinant() > tol_det(&g) {
                hits[k] += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / SAMPLES as f64).collect()
}

fn assert_non_increasing(fracs: &[f64]) {
    assert!(fracs.windows(2).all(|w| w[1] <= w[0]), "{fracs:?}");
    assert!(fracs[0] > fracs[2], "{fracs:?}");
}

#[test]
fn supremum_frequency_falls_with_cutoff() {
    let fine = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::power_law(0.5, 1.0).unwrap()), 1.0, CUTOFFS[0]).unwrap();
    let k = AuxPath::Sine { amplitude: 1.0, steps: 64 }.realize(1, 1.0, &mut StreamKey::new(11).stream(Purpose::AuxiliaryPath, 0));
    let f = RunningSupremum::new(k, 1, 1.0).unwrap();
    assert_non_increasing(&det_positive_fractions(&f, &fine));
}

#[test]
fn triangular_frequency_falls_with_cutoff() {
    let d = LevyDensity::power_law(0.5, 1.0).unwrap();
    let fine = IntensityMeasure::new(MarkLaw::IndependentPair(d, d), 1.0, CUTOFFS[0]).unwrap();
    let f = TriangularSystem::new([0.0; 3], 1.0);
    assert_non_increasing(&det_positive_fractions(&f, &fine));
}
