//! Execution of a [`RunConfig`]: one task, its CSV files and a `report.txt`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use crate::chaos::{exponential_identity_check, ChaosIntegrand};
use crate::config::{RunConfig, Task};
use crate::diagnostics::{self, MonteCarloSettings};
use crate::error::Error;
use crate::exec::parallel_map;
use crate::functionals::{Built, FunctionalSpec};
use crate::intensity::IntensityMeasure;
use crate::lent_particle::{carre_du_champ, JacobianMode, SharpFactors};
use crate::plot;
use crate::point_process::{laplace_characteristic, sample_indexed, Mark};
use crate::rng::{Purpose, StreamKey};
use crate::stats::Estimate;

/// A finished task. `passed` is false when a tolerance gate failed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub report: String,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Library(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl RunError {
    /// 1 for usage and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) | RunError::Usage(_) => 1,
            RunError::Library(Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Precondition(_)) => 1,
            RunError::Library(_) => 2,
        }
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content)?;
        self.files.push(path);
        Ok(())
    }
}

fn header(config: &RunConfig) -> String {
    let mut s = String::new();
    writeln!(s, "task = {}", config.task.name()).unwrap();
    writeln!(s, "seed = {}", config.seed).unwrap();
    writeln!(s, "config_sha256 = {}", config.hash()).unwrap();
    writeln!(s, "measure = {}", config.measure).unwrap();
    if let Some(f) = &config.functional {
        writeln!(s, "functional = {f:?}").unwrap();
    }
    s
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Run the configured task with `workers` threads, writing into `config.out`.
pub fn run(config: &RunConfig, workers: usize) -> Result<Outcome, RunError> {
    let mut w = Writer::new(&config.out)?;
    let mut report = header(config);
    let passed = match config.task {
        Task::Simulate => simulate(config, workers, &mut w, &mut report)?,
        Task::Gamma => gamma(config, workers, &mut w, &mut report)?,
        Task::Sharp => sharp(config, workers, &mut w, &mut report)?,
        Task::Chaos => chaos(config, &mut w, &mut report)?,
        Task::Laplace => laplace(config, workers, &mut report)?,
        Task::Diagnose => diagnose(config, workers, &mut w, &mut report)?,
    };
    writeln!(report, "status = {}", status(passed)).unwrap();
    w.write("report.txt", &report)?;
    Ok(Outcome {
        passed,
        report,
        files: w.files,
    })
}

fn functional(config: &RunConfig) -> Result<&FunctionalSpec, RunError> {
    config
        .functional
        .as_ref()
        .ok_or_else(|| RunError::Usage(format!("task {} needs a [functional] section", config.task.name())))
}

fn simulate(config: &RunConfig, workers: usize, w: &mut Writer, report: &mut String) -> Result<bool, RunError> {
    let key = StreamKey::new(config.seed);
    let m = &config.measure;
    let configs = parallel_map(config.n_samples, workers, |i| sample_indexed(m, &key, i as u64));
    let p = m.mark_dim();
    let mut csv = String::from("sample,time");
    for k in 1..=p {
        write!(csv, ",x{k}").unwrap();
    }
    csv.push('\n');
    for (i, c) in configs.iter().enumerate() {
        for a in c.atoms() {
            write!(csv, "{i},{}", a.time).unwrap();
            for v in a.mark.iter() {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
    }
    w.write("configurations.csv", &csv)?;

    let k = config.tolerances.se_multiplier;
    let counts: Vec<f64> = configs.iter().map(|c| c.len() as f64).collect();
    let count = Estimate::mean_of(&counts);
    let lambda = m.truncated_mass();
    let count_ok = (count.value - lambda).abs() <= k * count.std_error + 1e-12 * (1.0 + lambda);
    writeln!(report, "n_samples = {}", config.n_samples).unwrap();
    writeln!(report, "mean_atoms = {} (se {})", count.value, count.std_error).unwrap();
    writeln!(report, "expected_atoms = {lambda}").unwrap();
    writeln!(report, "atoms_check = {}", status(count_ok)).unwrap();

    let mut passed = count_ok;
    for c in 0..p {
        let sums: Vec<f64> = configs.iter().map(|cfg| cfg.atoms().iter().map(|a| a.mark[c]).sum()).collect();
        let est = Estimate::mean_of(&sums);
        let target = m.space_time_integral(|_, x| x[c])?;
        let ok = (est.value - target).abs() <= k * est.std_error + 1e-12 * (1.0 + target.abs());
        passed &= ok;
        writeln!(report, "mean_jump_sum_x{} = {} (se {}), expected {target}: {}", c + 1, est.value, est.std_error, status(ok)).unwrap();
    }
    match m.small_jump_drift() {
        Some(d) => writeln!(report, "truncation_drift_bias = {:?}", d.to_vec()).unwrap(),
        None => writeln!(report, "truncation_drift_bias = infinite").unwrap(),
    }
    Ok(passed)
}

/// Builds one functional per sample only when its auxiliary path is random.
struct Builder<'a> {
    spec: &'a FunctionalSpec,
    measure: &'a IntensityMeasure,
    key: StreamKey,
    fixed: Option<Built>,
}

impl<'a> Builder<'a> {
    fn new(spec: &'a FunctionalSpec, measure: &'a IntensityMeasure, key: StreamKey) -> Result<Self, Error> {
        let fixed = if spec.is_random() {
            None
        } else {
            Some(spec.build_concrete(measure, &mut key.stream(Purpose::AuxiliaryPath, 0))?)
        };
        Ok(Builder {
            spec,
            measure,
            key,
            fixed,
        })
    }

    fn get(&self, i: u64) -> Result<Built, Error> {
        match &self.fixed {
            Some(b) => Ok(b.clone()),
            None => self.spec.build_concrete(self.measure, &mut self.key.stream(Purpose::AuxiliaryPath, i)),
        }
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `max|a − b| / max|b|`, zero when both vanish.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = max_abs(&(a - b));
    if d == 0.0 {
        0.0
    } else {
        d / max_abs(b)
    }
}

fn gamma(config: &RunConfig, workers: usize, w: &mut Writer, report: &mut String) -> Result<bool, RunError> {
    let spec = functional(config)?;
    let key = StreamKey::new(config.seed);
    let builder = Builder::new(spec, &config.measure, key)?;
    let structure = config.structure.bottom();
    let rows = parallel_map(config.n_samples, workers, |i| -> Result<_, Error> {
        let c = sample_indexed(&config.measure, &key, i as u64);
        let built = builder.get(i as u64)?;
        let g = carre_du_champ(built.functional().as_ref(), &c, &structure, config.mode)?;
        let closed = built.closed_form_gamma(&c, &structure).transpose()?;
        Ok((c.len(), g, closed))
    });
    let tol = match config.mode {
        JacobianMode::FiniteDifference => config.tolerances.gamma_relative.max(1e-4),
        _ => config.tolerances.gamma_relative,
    };
    let mut csv = String::from("sample,atoms,det,trace,closed_form_trace,relative_error\n");
    let mut worst: f64 = 0.0;
    let mut have_closed = false;
    for (i, r) in rows.into_iter().enumerate() {
        let (atoms, g, closed) = r?;
        let (cf, err) = match &closed {
            Some(cf) => {
                have_closed = true;
                let e = relative_error(&g.matrix, cf);
                worst = worst.max(e);
                (cf.trace().to_string(), e.to_string())
            }
            None => (String::new(), String::new()),
        };
        writeln!(csv, "{i},{atoms},{},{},{cf},{err}", g.determinant(), g.trace()).unwrap();
    }
    w.write("gamma_samples.csv", &csv)?;
    writeln!(report, "n_samples = {}", config.n_samples).unwrap();
    writeln!(report, "jacobian_mode = {}", config.mode).unwrap();
    if have_closed {
        writeln!(report, "max_relative_error_vs_closed_form = {worst:e}").unwrap();
        writeln!(report, "tolerance = {tol:e}").unwrap();
        Ok(worst <= tol)
    } else {
        writeln!(report, "closed_form = not available for this family and structure").unwrap();
        Ok(true)
    }
}

fn sharp(config: &RunConfig, workers: usize, w: &mut Writer, report: &mut String) -> Result<bool, RunError> {
    let spec = functional(config)?;
    let key = StreamKey::new(config.seed);
    let builder = Builder::new(spec, &config.measure, key)?;
    let structure = config.structure.bottom();
    let k = config.tolerances.se_multiplier;
    let draws = config.n_samples;
    let rows = parallel_map(config.configs, workers, |i| -> Result<_, Error> {
        let c = sample_indexed(&config.measure, &key, i as u64);
        let f = builder.get(i as u64)?.functional();
        let factors = SharpFactors::compute(f.as_ref(), &c, &structure, config.mode)?;
        let gamma = carre_du_champ(f.as_ref(), &c, &structure, config.mode)?.matrix;
        let mut rng = key.stream(Purpose::SharpNoise, i as u64);
        let mut squares = Vec::with_capacity(draws);
        let mut aux = vec![0.0; c.len()];
        for _ in 0..draws {
            aux.iter_mut().for_each(|r| *r = rng.random());
            squares.push(factors.draw(&aux)?.value.norm_squared());
        }
        Ok((c.len(), gamma.trace(), Estimate::mean_of(&squares)))
    });
    let mut csv = String::from("config,atoms,gamma_trace,mean_sharp_square,se,z\n");
    let mut passed = true;
    let mut worst_z: f64 = 0.0;
    for (i, r) in rows.into_iter().enumerate() {
        let (atoms, target, est) = r?;
        let ok = (est.value - target).abs() <= k * est.std_error + 1e-12 * (1.0 + target.abs());
        passed &= ok;
        let z = est.z_score(target);
        if z.is_finite() {
            worst_z = worst_z.max(z);
        }
        writeln!(csv, "{i},{atoms},{target},{},{},{z}", est.value, est.std_error).unwrap();
    }
    w.write("sharp.csv", &csv)?;
    writeln!(report, "configs = {}", config.configs).unwrap();
    writeln!(report, "draws_per_config = {draws}").unwrap();
    writeln!(report, "max_z = {worst_z}").unwrap();
    writeln!(report, "gate = {k} standard errors").unwrap();
    Ok(passed)
}

fn chaos(config: &RunConfig, w: &mut Writer, report: &mut String) -> Result<bool, RunError> {
    let key = StreamKey::new(config.seed);
    let f = config.test_fn;
    let g = ChaosIntegrand::new(move |t: f64, x: &Mark| f.value(t, x), &config.measure)?;
    let tol = config.tolerances.chaos_residual;
    let mut csv = String::from("trial,atoms,n,partial_sum,residual\n");
    let mut worst: f64 = 0.0;
    let mut non_monotone = 0;
    let mut curves = Vec::new();
    for trial in 0..config.trials {
        let c = sample_indexed(&config.measure, &key, trial as u64);
        let check = exponential_identity_check(&c, &g, config.n_max)?;
        for (n, (s, r)) in check.partial_sums.iter().zip(&check.residuals).enumerate() {
            writeln!(csv, "{trial},{},{n},{s},{r}", c.len()).unwrap();
        }
        worst = worst.max(check.final_residual());
        if !check.is_monotone_above(1e-2 * tol) {
            non_monotone += 1;
        }
        if curves.len() < 4 {
            curves.push(check.residuals.iter().map(|r| r.max(1e-300).log10()).collect::<Vec<_>>());
        }
    }
    w.write("chaos_residuals.csv", &csv)?;
    if config.plots {
        let ns: Vec<f64> = (0..=config.n_max).map(|n| n as f64).collect();
        let series: Vec<(&[f64], &[f64])> = curves.iter().map(|c| (ns.as_slice(), c.as_slice())).collect();
        w.write("chaos_residuals.svg", &plot::line_plot("exponential identity residuals", "n", "log10 residual", &series))?;
    }
    writeln!(report, "nu_g = {}", g.nu_g()).unwrap();
    writeln!(report, "trials = {}", config.trials).unwrap();
    writeln!(report, "n_max = {}", config.n_max).unwrap();
    writeln!(report, "max_final_residual = {worst:e}").unwrap();
    // early partial sums can overshoot, so this is informational
    writeln!(report, "trials_with_non_monotone_residuals = {non_monotone}").unwrap();
    writeln!(report, "tolerance = {tol:e}").unwrap();
    Ok(worst < tol)
}

fn laplace(config: &RunConfig, workers: usize, report: &mut String) -> Result<bool, RunError> {
    let key = StreamKey::new(config.seed);
    let f = config.test_fn;
    let check = laplace_characteristic(&config.measure, |t, x| f.value(t, x), config.n_samples, &key, workers)?;
    let k = config.tolerances.se_multiplier;
    let passed = check.passes(k);
    writeln!(report, "test_fn = {} (scale {})", f.shape, f.scale).unwrap();
    writeln!(report, "n_samples = {}", check.n_samples).unwrap();
    writeln!(report, "mc_re = {} (se {})", check.estimate_re.value, check.estimate_re.std_error).unwrap();
    writeln!(report, "mc_im = {} (se {})", check.estimate_im.value, check.estimate_im.std_error).unwrap();
    writeln!(report, "closed_form_re = {}", check.target_re).unwrap();
    writeln!(report, "closed_form_im = {}", check.target_im).unwrap();
    writeln!(report, "abs_difference = {}", check.abs_difference()).unwrap();
    writeln!(report, "gate = {k} standard errors per part: {}", status(passed)).unwrap();
    Ok(passed)
}

fn diagnose(config: &RunConfig, workers: usize, w: &mut Writer, report: &mut String) -> Result<bool, RunError> {
    let spec = functional(config)?;
    let mut settings = MonteCarloSettings::new(config.n_samples, config.seed);
    settings.workers = workers;
    settings.mode = config.mode;
    settings.structure = config.structure.bottom();
    settings.tol_rank = config.tolerances.tol_rank;
    settings.kde_components = config.kde.clone();
    let start = Instant::now();
    let mut run = diagnostics::run_monte_carlo(spec, &config.measure, &settings)?;
    run.report.config_hash = Some(config.hash());
    run.report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    w.write("gamma_samples.csv", &diagnostics::gamma_samples_csv(&run.samples))?;
    let mut passed = true;
    if let Some(d) = &run.report.density {
        w.write("kde.csv", &diagnostics::kde_csv(d))?;
        if config.plots {
            w.write("kde.svg", &plot::density_plot(&run.report.functional, d))?;
        }
        let mass = run.report.density_mass().unwrap_or(1.0);
        passed = (mass - 1.0).abs() <= 1e-6;
    }
    report.push_str(&run.report.render());
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn run_text(text: &str) -> (Outcome, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(text).unwrap();
        c.out = dir.path().to_path_buf();
        (run(&c, 2).unwrap(), dir)
    }

    #[test]
    fn laplace_on_uniform_reports_target_and_gate() {
        let (o, _d) = run_text(
            "[measure]\npreset = uniform\nlo = 0.5\nhi = 1.5\nmass = 2\n[run]\ntask = laplace\nn_samples = 20000\ntest_fn = sin\n",
        );
        for key in ["mc_re", "mc_im", "closed_form_re", "closed_form_im", "abs_difference", "se", "gate"] {
            assert!(o.report.contains(key), "{key}\n{}", o.report);
        }
        assert!(o.passed, "{}", o.report);
    }

    #[test]
    fn chaos_writes_residual_table() {
        let (o, d) = run_text(
            "[measure]\npreset = uniform\nlo = 1\nhi = 2\nmass = 0.5\n[run]\ntask = chaos\nn_max = 12\ntrials = 20\ntest_fn = affine(-0.5,0.5)\nplots = true\n",
        );
        assert!(o.passed, "{}", o.report);
        let csv = fs::read_to_string(d.path().join("chaos_residuals.csv")).unwrap();
        assert!(csv.starts_with("trial,atoms,n,partial_sum,residual\n"));
        assert_eq!(csv.lines().count(), 1 + 20 * 13);
        assert!(d.path().join("chaos_residuals.svg").exists());
    }

    #[test]
    fn chaos_rejects_out_of_range_integrand() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config("[measure]\npreset = uniform\nlo = 1\nhi = 2\nmass = 3\n[run]\ntask = chaos\ntest_fn = identity\n").unwrap();
        c.out = dir.path().to_path_buf();
        let e = run(&c, 1).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn diagnose_triangular_reports_full_rank() {
        let (o, d) = run_text(
            "[measure]\npreset = independent_pair\nfirst = power_law(0.5,1)\nsecond = power_law(0.5,1)\ntruncation = 0.01\n\
             [functional]\nfamily = triangular_system\n[run]\ntask = diagnose\nn_samples = 300\nkde = 0, 1\nplots = true\n",
        );
        assert!(o.report.contains("frac_full_rank(3) = "), "{}", o.report);
        assert!(o.report.contains("not a proof"));
        for f in ["gamma_samples.csv", "kde.csv", "kde.svg", "report.txt"] {
            assert!(d.path().join(f).exists(), "{f}");
        }
        assert!(o.passed);
    }

    #[test]
    fn gamma_matches_closed_form() {
        let (o, _d) = run_text(
            "[measure]\npreset = symmetric_power_law\nbeta = 0.5\ncutoff = 1\ntruncation = 0.01\n\
             [functional]\nfamily = stoch_integral\nphi = tanh\n[run]\ntask = gamma\nn_samples = 50\nmode = analytic\n",
        );
        assert!(o.passed, "{}", o.report);
    }

    #[test]
    fn simulate_counts_atoms() {
        let (o, d) = run_text("[measure]\npreset = power_law\nbeta = 0.5\ncutoff = 1\ntruncation = 0.1\n[run]\ntask = simulate\nn_samples = 2000\n");
        assert!(o.passed, "{}", o.report);
        let csv = fs::read_to_string(d.path().join("configurations.csv")).unwrap();
        assert!(csv.starts_with("sample,time,x1\n"));
    }

    #[test]
    fn sharp_matches_gamma() {
        let (o, _d) = run_text(
            "[measure]\npreset = power_law\nbeta = 0.5\ncutoff = 1\ntruncation = 0.05\n\
             [functional]\nfamily = linear_compensated\nf = sin\n[run]\ntask = sharp\nn_samples = 4000\nconfigs = 5\n",
        );
        assert!(o.passed, "{}", o.report);
    }
}
