//! Monte Carlo aggregation and density diagnostics.
//!
//! Absolute continuity of a law cannot be established numerically. What is
//! reported is the sufficient statistic `det Γ > 0` (its frequency over
//! samples) together with a kernel density estimate of the law.

mod kde;
mod output;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use kde::{interval_mass, silverman_bandwidth, Kde1d, Kde2d, MIN_KDE_SAMPLES};
pub use output::{gamma_samples_csv, kde_csv, write_run};

use crate::error::{Error, Result};
use crate::exec::parallel_map;
use crate::functionals::{Functional, FunctionalSpec};
use crate::intensity::{BottomCarreDuChamp, IntensityMeasure};
use crate::lent_particle::{carre_du_champ, JacobianMode};
use crate::point_process::{sample_indexed, PointConfiguration};
use crate::rng::{Purpose, StreamKey};
use crate::stats::Estimate;

/// Default relative singular-value threshold for ranks.
pub const TOL_RANK: f64 = 1e-9;
/// Share of failed samples tolerated before a run aborts.
pub const MAX_FAILURE_RATE: f64 = 1e-3;

/// `1e-12 · (trace / d)^d`.
pub fn tol_det(gamma: &DMatrix<f64>) -> f64 {
    let d = gamma.nrows() as i32;
    1e-12 * (gamma.trace() / d as f64).powi(d)
}

/// Number of singular values above `tol_rank · σ_max`.
pub fn rank(gamma: &DMatrix<f64>, tol_rank: f64) -> usize {
    let sv = gamma.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol_rank * max).count()
}

/// Histogram of ranks over `{0, …, d}`.
pub fn rank_statistics(samples: &[DMatrix<f64>], tol_rank: f64) -> Result<Vec<usize>> {
    let d = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("rank statistics need at least one matrix".into()))?
        .nrows();
    let mut hist = vec![0; d + 1];
    for m in samples {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: m.nrows(),
                context: "rank statistics matrix size",
            });
        }
        hist[rank(m, tol_rank)] += 1;
    }
    Ok(hist)
}

/// Settings shared by every Monte Carlo run.
#[derive(Debug, Clone)]
pub struct MonteCarloSettings {
    pub n_samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub mode: JacobianMode,
    pub structure: BottomCarreDuChamp,
    pub tol_rank: f64,
    /// Which output component to estimate a density for.
    pub kde_components: Vec<usize>,
}

impl MonteCarloSettings {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        MonteCarloSettings {
            n_samples,
            seed,
            workers: 1,
            mode: JacobianMode::Auto,
            structure: BottomCarreDuChamp::Levy,
            tol_rank: TOL_RANK,
            kde_components: vec![0],
        }
    }
}

/// What one Monte Carlo sample produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: u64,
    pub atoms: usize,
    pub value: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub determinant: f64,
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub det_positive: bool,
    pub projected: bool,
    pub min_eigenvalue: f64,
}

/// The density estimate attached to a report.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    One(Kde1d),
    Two(Kde2d),
}

/// Aggregates of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub functional: String,
    pub measure: String,
    pub seed: u64,
    pub n_samples: usize,
    pub n_failed: usize,
    pub first_failure: Option<String>,
    pub output_dim: usize,
    pub value_mean: Vec<Estimate>,
    pub gamma_trace: Estimate,
    pub frac_nonempty: f64,
    pub frac_det_positive: f64,
    /// `det Γ > 0` among samples with at least one atom.
    pub frac_det_positive_nonempty: Option<f64>,
    pub frac_full_rank: f64,
    pub rank_histogram: Vec<usize>,
    pub n_projected: usize,
    /// Most negative `λ_min / trace` seen before projection.
    pub worst_psd_ratio: f64,
    pub density: Option<Density>,
    /// Drift of the jumps removed by truncation, not added to any path.
    pub truncation_bias: Option<Vec<f64>>,
    pub config_hash: Option<String>,
    pub runtime_seconds: Option<f64>,
}

impl DiagnosticsReport {
    pub fn density_mass(&self) -> Option<f64> {
        match &self.density {
            Some(Density::One(k)) => Some(k.grid_mass()),
            Some(Density::Two(k)) => Some(k.grid_mass()),
            None => None,
        }
    }

    /// Human-readable summary for `report.txt`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |l: String| {
            s.push_str(&l);
            s.push('\n');
        };
        line("diagnostics".into());
        line(format!("functional = {}", self.functional));
        line(format!("measure = {}", self.measure));
        line(format!("seed = {}", self.seed));
        if let Some(h) = &self.config_hash {
            line(format!("config_sha256 = {h}"));
        }
        line(format!("n_samples = {}", self.n_samples));
        line(format!("n_failed = {}", self.n_failed));
        if let Some(f) = &self.first_failure {
            line(format!("first_failure = {f}"));
        }
        for (k, e) in self.value_mean.iter().enumerate() {
            line(format!("mean_F{} = {} (se {})", k + 1, e.value, e.std_error));
        }
        line(format!("mean_trace_gamma = {} (se {})", self.gamma_trace.value, self.gamma_trace.std_error));
        line(format!("frac_nonempty = {}", self.frac_nonempty));
        line(format!("frac_det_positive = {}", self.frac_det_positive));
        if let Some(f) = self.frac_det_positive_nonempty {
            line(format!("frac_det_positive_nonempty = {f}"));
        }
        line(format!("frac_full_rank({}) = {}", self.output_dim, self.frac_full_rank));
        let hist: Vec<String> = self.rank_histogram.iter().enumerate().map(|(r, c)| format!("{r}:{c}")).collect();
        line(format!("rank_histogram = {}", hist.join(" ")));
        line(format!("psd_projections = {}", self.n_projected));
        line(format!("worst_min_eigenvalue_over_trace = {:e}", self.worst_psd_ratio));
        if let Some(b) = &self.truncation_bias {
            let parts: Vec<String> = b.iter().map(|v| v.to_string()).collect();
            line(format!("truncation_drift_bias = {}", parts.join(" ")));
        } else {
            line("truncation_drift_bias = infinite (not reported)".into());
        }
        if let Some(m) = self.density_mass() {
            line(format!("kde_grid_mass = {m}"));
        }
        if let Some(t) = self.runtime_seconds {
            line(format!("runtime_seconds = {t:.3}"));
        }
        line(String::new());
        line(
            "note: det Γ > 0 almost surely is a sufficient condition for a density; the frequency above \
             is evidence under truncation, not a proof of absolute continuity."
                .into(),
        );
        s
    }
}

/// A finished run: aggregates plus per-sample records in index order.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub report: DiagnosticsReport,
    pub samples: Vec<SampleRecord>,
}

fn record(
    index: u64,
    config: &PointConfiguration,
    f: &dyn Functional,
    settings: &MonteCarloSettings,
) -> Result<SampleRecord> {
    let value = f.evaluate(config)?;
    let g = carre_du_champ(f, config, &settings.structure, settings.mode)?;
    let eigenvalues = g.eigenvalues();
    let determinant = g.determinant();
    let rank = rank(&g.matrix, settings.tol_rank);
    Ok(SampleRecord {
        index,
        atoms: config.len(),
        det_positive: determinant > tol_det(&g.matrix),
        value,
        determinant,
        eigenvalues,
        rank,
        projected: g.projected,
        min_eigenvalue: g.min_eigenvalue,
        gamma: g.matrix,
    })
}

/// Run with a configuration sampler and a functional factory, both indexed by sample.
pub fn run_monte_carlo_with<S, B>(
    sample: S,
    build: B,
    measure_label: String,
    settings: &MonteCarloSettings,
) -> Result<MonteCarloRun>
where
    S: Fn(u64) -> PointConfiguration + Sync,
    B: Fn(u64) -> Result<Arc<dyn Functional>> + Sync,
{
    if settings.n_samples == 0 {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let n = settings.n_samples;
    let results = parallel_map(n, settings.workers, |i| {
        let index = i as u64;
        let config = sample(index);
        let f = build(index)?;
        record(index, &config, f.as_ref(), settings).map(|r| (r, f.name()))
    });
    let mut samples = Vec::with_capacity(n);
    let mut failures = Vec::new();
    let mut name = None;
    for r in results {
        match r {
            Ok((rec, nm)) => {
                name.get_or_insert(nm);
                samples.push(rec);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * n as f64 {
        return Err(Error::SampleFailures {
            failed: failures.len(),
            total: n,
            first: failures[0].clone(),
        });
    }
    if samples.is_empty() {
        return Err(Error::SampleFailures {
            failed: failures.len(),
            total: n,
            first: failures.first().cloned().unwrap_or_default(),
        });
    }
    let report = aggregate(
        name.unwrap_or_default(),
        measure_label,
        settings,
        &samples,
        failures.len(),
        failures.first().cloned(),
    )?;
    Ok(MonteCarloRun { report, samples })
}

/// Run a functional family against a measure: sample `i` uses configuration
/// stream `i` and, for random auxiliary paths, auxiliary-path stream `i`.
pub fn run_monte_carlo(spec: &FunctionalSpec, measure: &IntensityMeasure, settings: &MonteCarloSettings) -> Result<MonteCarloRun> {
    let key = StreamKey::new(settings.seed);
    let fixed = if spec.is_random() {
        None
    } else {
        Some(spec.build(measure, &mut key.stream(Purpose::AuxiliaryPath, 0))?)
    };
    let mut run = run_monte_carlo_with(
        |i| sample_indexed(measure, &key, i),
        |i| match &fixed {
            Some(f) => Ok(f.clone()),
            None => spec.build(measure, &mut key.stream(Purpose::AuxiliaryPath, i)),
        },
        measure.to_string(),
        settings,
    )?;
    run.report.truncation_bias = measure.small_jump_drift().map(|m| m.to_vec());
    Ok(run)
}

fn aggregate(
    functional: String,
    measure: String,
    settings: &MonteCarloSettings,
    samples: &[SampleRecord],
    n_failed: usize,
    first_failure: Option<String>,
) -> Result<DiagnosticsReport> {
    let d = samples[0].value.len();
    let m = samples.len() as f64;
    let value_mean = (0..d)
        .map(|k| Estimate::mean_of(&samples.iter().map(|s| s.value[k]).collect::<Vec<_>>()))
        .collect();
    let traces: Vec<f64> = samples.iter().map(|s| s.gamma.trace()).collect();
    let nonempty = samples.iter().filter(|s| s.atoms > 0).count();
    let det_pos = samples.iter().filter(|s| s.det_positive).count();
    let det_pos_nonempty = samples.iter().filter(|s| s.atoms > 0 && s.det_positive).count();
    let full_rank = samples.iter().filter(|s| s.rank == d).count();
    let mut rank_histogram = vec![0; d + 1];
    for s in samples {
        rank_histogram[s.rank] += 1;
    }
    let worst_psd_ratio = samples
        .iter()
        .map(|s| {
            let t = s.gamma.trace();
            if t > 0.0 {
                s.min_eigenvalue.min(0.0) / t
            } else {
                0.0
            }
        })
        .fold(0.0, f64::min);
    let density = match settings.kde_components.as_slice() {
        [k] if *k < d && samples.len() >= MIN_KDE_SAMPLES => {
            Some(Density::One(Kde1d::fit(&samples.iter().map(|s| s.value[*k]).collect::<Vec<_>>())?))
        }
        [a, b] if *a < d && *b < d && samples.len() >= MIN_KDE_SAMPLES => {
            let pts: Vec<[f64; 2]> = samples.iter().map(|s| [s.value[*a], s.value[*b]]).collect();
            Some(Density::Two(Kde2d::fit(&pts, 96)?))
        }
        _ => None,
    };
    Ok(DiagnosticsReport {
        functional,
        measure,
        seed: settings.seed,
        n_samples: settings.n_samples,
        n_failed,
        first_failure,
        output_dim: d,
        value_mean,
        gamma_trace: Estimate::mean_of(&traces),
        frac_nonempty: nonempty as f64 / m,
        frac_det_positive: det_pos as f64 / m,
        frac_det_positive_nonempty: (nonempty > 0).then(|| det_pos_nonempty as f64 / nonempty as f64),
        frac_full_rank: full_rank as f64 / m,
        rank_histogram,
        n_projected: samples.iter().filter(|s| s.projected).count(),
        worst_psd_ratio,
        density,
        truncation_bias: None,
        config_hash: None,
        runtime_seconds: None,
    })
}
