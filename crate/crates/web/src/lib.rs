//! Browser bindings. Every entry point takes the same `key = value` config
//! text the CLI reads.

use wasm_bindgen::prelude::*;

use lent_particle::chaos::{exponential_identity_check, ChaosIntegrand};
use lent_particle::config::{parse_config, RunConfig};
use lent_particle::diagnostics::{run_monte_carlo, Density, MonteCarloSettings};
use lent_particle::point_process::{sample_indexed, Mark};
use lent_particle::rng::StreamKey;

// JsValue cannot be built off-wasm, so the logic returns String errors and
// the exported wrappers convert.
type Out<T> = Result<T, String>;

fn parse(text: &str) -> Out<RunConfig> {
    parse_config(text).map_err(|e| e.to_string())
}

fn msg(e: lent_particle::Error) -> String {
    e.to_string()
}

/// One configuration as `[t0, x0, t1, x1, …]`, first mark coordinate only.
#[wasm_bindgen]
pub fn sample_path(config: &str, seed: u64, index: u64) -> Result<Vec<f64>, JsValue> {
    path(config, seed, index).map_err(|e| JsValue::from_str(&e))
}

fn path(config: &str, seed: u64, index: u64) -> Out<Vec<f64>> {
    let c = parse(config)?;
    let conf = sample_indexed(&c.measure, &StreamKey::new(seed), index);
    Ok(conf.atoms().iter().flat_map(|a| [a.time, a.mark[0]]).collect())
}

#[wasm_bindgen]
pub struct Diagnosis {
    report: String,
    grid: Vec<f64>,
    density: Vec<f64>,
}

#[wasm_bindgen]
impl Diagnosis {
    #[wasm_bindgen(getter)]
    pub fn report(&self) -> String {
        self.report.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }
}

/// det Γ frequencies and a density estimate of the first component.
#[wasm_bindgen]
pub fn diagnose(config: &str, samples: usize, seed: u64) -> Result<Diagnosis, JsValue> {
    diagnosis(config, samples, seed).map_err(|e| JsValue::from_str(&e))
}

fn diagnosis(config: &str, samples: usize, seed: u64) -> Out<Diagnosis> {
    let c = parse(config)?;
    let spec = c
        .functional
        .as_ref()
        .ok_or("a [functional] section is required")?;
    let mut settings = MonteCarloSettings::new(samples.max(1), seed);
    settings.workers = 1;
    settings.mode = c.mode;
    settings.structure = c.structure.bottom();
    settings.tol_rank = c.tolerances.tol_rank;
    settings.kde_components = vec![0];
    let run = run_monte_carlo(spec, &c.measure, &settings).map_err(msg)?;
    let (grid, density) = match &run.report.density {
        Some(Density::One(k)) => (k.grid.clone(), k.density.clone()),
        _ => (Vec::new(), Vec::new()),
    };
    Ok(Diagnosis {
        report: run.report.render(),
        grid,
        density,
    })
}

/// `log10` residuals of the exponential chaos expansion, `n = 0..=n_max`,
/// using the config's `test_fn` as `g`.
#[wasm_bindgen]
pub fn chaos_residuals(config: &str, seed: u64, index: u64) -> Result<Vec<f64>, JsValue> {
    residuals(config, seed, index).map_err(|e| JsValue::from_str(&e))
}

fn residuals(config: &str, seed: u64, index: u64) -> Out<Vec<f64>> {
    let c = parse(config)?;
    let f = c.test_fn;
    let g = ChaosIntegrand::new(move |t: f64, x: &Mark| f.value(t, x), &c.measure).map_err(msg)?;
    let conf = sample_indexed(&c.measure, &StreamKey::new(seed), index);
    let check = exponential_identity_check(&conf, &g, c.n_max).map_err(msg)?;
    Ok(check.residuals.iter().map(|r| r.max(1e-300).log10()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAOS: &str = "[measure]\npreset = uniform\nlo = 1\nhi = 2\nmass = 0.5\n[run]\ntask = chaos\ntest_fn = affine(-0.5,0.5)\n";

    #[test]
    fn path_is_sorted_pairs() {
        let p = path(CHAOS, 3, 0).unwrap();
        assert_eq!(p.len() % 2, 0);
        assert!(p.chunks(2).all(|a| (1.0..=2.0).contains(&a[1])));
        assert!(p.chunks(2).collect::<Vec<_>>().windows(2).all(|w| w[0][0] <= w[1][0]));
    }

    #[test]
    fn chaos_curve_ends_small() {
        let r = residuals(CHAOS, 3, 1).unwrap();
        assert_eq!(r.len(), 13);
        assert!(*r.last().unwrap() < -8.0);
    }

    #[test]
    fn diagnose_supremum() {
        let text = "[measure]\npreset = power_law\nbeta = 0.5\ncutoff = 1\ntruncation = 1e-2\n[functional]\nfamily = running_supremum\nk_path = sine(1,32)\n[run]\ntask = diagnose\n";
        let d = diagnosis(text, 300, 7).unwrap();
        assert!(d.report().contains("frac_det_positive"));
        assert_eq!(d.grid().len(), d.density().len());
        assert!(!d.grid().is_empty());
    }

    #[test]
    fn page_default_config_runs() {
        let page = include_str!("../www/index.html");
        let start = page.find("<textarea id=\"config\">").unwrap() + "<textarea id=\"config\">".len();
        let text = &page[start..start + page[start..].find("</textarea>").unwrap()];
        assert!(!path(text, 42, 0).unwrap().is_empty());
        assert!(!diagnosis(text, 200, 42).unwrap().grid().is_empty());
        assert_eq!(residuals(text, 42, 0).unwrap().len(), 13);
    }
}
