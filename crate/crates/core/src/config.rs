//! Line-based run configuration.
//!
//! ```text
//! # comments start with '#'
//! [measure]
//! preset = power_law
//! beta = 0.5
//! cutoff = 1.0
//! truncation = 0.001
//!
//! [functional]
//! family = stoch_integral
//! phi = sin
//! h = identity
//!
//! [run]
//! task = gamma
//! ```
//!
//! Parsing reports every problem it finds, each tagged with its line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::functionals::{AuxPath, FunctionalSpec};
use crate::intensity::{BottomCarreDuChamp, IntensityMeasure, LevyDensity, MarkLaw};
use crate::lent_particle::JacobianMode;
use crate::registry::{split_call, MarkFn, MatrixFn, ScalarFn, SmoothMap, TimeWeight};

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;

const MEASURE_KEYS: &[&str] = &[
    "preset", "beta", "cutoff", "lo", "hi", "mass", "inner", "outer", "first", "second", "horizon", "truncation",
];
const FUNCTIONAL_KEYS: &[&str] = &[
    "family", "f", "coord", "scale", "time", "phi", "h", "t_end", "k_path", "psi", "s_path", "dim", "start", "map",
    "parts",
];
const RUN_KEYS: &[&str] = &[
    "task", "n_samples", "seed", "out", "mode", "structure", "test_fn", "test_scale", "n_max", "trials", "configs",
    "kde", "plots",
];
const TOLERANCE_KEYS: &[&str] = &["se_multiplier", "gamma_relative", "chaos_residual", "tol_rank"];
const SECTIONS: &[(&str, &[&str])] = &[
    ("measure", MEASURE_KEYS),
    ("functional", FUNCTIONAL_KEYS),
    ("run", RUN_KEYS),
    ("tolerances", TOLERANCE_KEYS),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Simulate,
    Gamma,
    Sharp,
    Chaos,
    Laplace,
    Diagnose,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Simulate, Task::Gamma, Task::Sharp, Task::Chaos, Task::Laplace, Task::Diagnose];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Gamma => "gamma",
            Task::Sharp => "sharp",
            Task::Chaos => "chaos",
            Task::Laplace => "laplace",
            Task::Diagnose => "diagnose",
        }
    }

    pub fn needs_functional(&self) -> bool {
        matches!(self, Task::Gamma | Task::Sharp | Task::Diagnose)
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`{}", suggest(s, Task::ALL.map(|t| t.name()).as_slice())))
    }
}

/// The bottom carré du champ, restricted to the choices a file can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Levy,
    Euclidean,
}

impl Structure {
    pub fn bottom(&self) -> BottomCarreDuChamp {
        match self {
            Structure::Levy => BottomCarreDuChamp::Levy,
            Structure::Euclidean => BottomCarreDuChamp::Euclidean,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Structure::Levy => "levy",
            Structure::Euclidean => "euclidean",
        }
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "levy" => Ok(Structure::Levy),
            "euclidean" => Ok(Structure::Euclidean),
            other => Err(format!("unknown structure `{other}` (levy or euclidean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Monte Carlo gates are `|estimate − target| ≤ se_multiplier · SE`.
    pub se_multiplier: f64,
    /// Relative agreement of numeric and closed-form Γ.
    pub gamma_relative: f64,
    pub chaos_residual: f64,
    pub tol_rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            se_multiplier: 3.0,
            gamma_relative: 1e-6,
            chaos_residual: 1e-8,
            tol_rank: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub measure: IntensityMeasure,
    pub functional: Option<FunctionalSpec>,
    pub task: Task,
    pub n_samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub mode: JacobianMode,
    pub structure: Structure,
    /// `f` for `laplace`, `g` for `chaos`.
    pub test_fn: MarkFn,
    pub n_max: usize,
    /// Random configurations for `chaos`.
    pub trials: usize,
    /// Fixed configurations for `sharp`.
    pub configs: usize,
    /// Output components whose joint law gets a density estimate (at most two).
    pub kde: Vec<usize>,
    pub plots: bool,
    pub tolerances: Tolerances,
}

impl RunConfig {
    /// A config with every optional key at its default.
    pub fn new(measure: IntensityMeasure, task: Task) -> Self {
        RunConfig {
            measure,
            functional: None,
            task,
            n_samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            out: PathBuf::from("out"),
            mode: JacobianMode::Auto,
            structure: Structure::Levy,
            test_fn: MarkFn::new(ScalarFn::Sin),
            n_max: 12,
            trials: 100,
            configs: 20,
            kde: vec![0],
            plots: false,
            tolerances: Tolerances::default(),
        }
    }

    /// Canonical text; `parse_config(&c.render()) == Ok(c)`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("[measure]\npreset", preset_name(self.measure.law()).into());
        match *self.measure.law() {
            MarkLaw::Scalar(LevyDensity::PowerLaw { beta, cutoff })
            | MarkLaw::Scalar(LevyDensity::SymmetricPowerLaw { beta, cutoff }) => {
                kv("beta", fmt_f64(beta));
                kv("cutoff", fmt_f64(cutoff));
            }
            MarkLaw::Scalar(LevyDensity::Uniform { lo, hi, mass }) => {
                kv("lo", fmt_f64(lo));
                kv("hi", fmt_f64(hi));
                kv("mass", fmt_f64(mass));
            }
            MarkLaw::Annulus { inner, outer, mass } => {
                kv("inner", fmt_f64(inner));
                kv("outer", fmt_f64(outer));
                kv("mass", fmt_f64(mass));
            }
            MarkLaw::IndependentPair(a, b) | MarkLaw::Product(a, b) => {
                kv("first", a.to_string());
                kv("second", b.to_string());
            }
        }
        kv("horizon", fmt_f64(self.measure.horizon()));
        kv("truncation", fmt_f64(self.measure.truncation()));
        if let Some(f) = &self.functional {
            kv("\n[functional]\nfamily", f.family().into());
            let t_end = |kv: &mut dyn FnMut(&str, String), t: &Option<f64>| {
                if let Some(t) = t {
                    kv("t_end", fmt_f64(*t));
                }
            };
            match f {
                FunctionalSpec::LinearCompensated { f } => {
                    kv("f", f.shape.to_string());
                    kv("coord", f.coord.to_string());
                    kv("scale", fmt_f64(f.scale));
                    kv("time", f.time.name().into());
                }
                FunctionalSpec::StochIntegral { phi, h, t_end: t } => {
                    kv("phi", phi.to_string());
                    kv("h", h.to_string());
                    t_end(&mut kv, t);
                }
                FunctionalSpec::RunningSupremum { k_path, t_end: t } => {
                    kv("k_path", render_aux(k_path));
                    t_end(&mut kv, t);
                }
                FunctionalSpec::VectorStochIntegral { psi, s_path, dim, t_end: t } => {
                    kv("psi", psi.to_string());
                    kv("s_path", render_aux(s_path));
                    kv("dim", dim.to_string());
                    t_end(&mut kv, t);
                }
                FunctionalSpec::TriangularSystem { start, t_end: t } => {
                    kv("start", start.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(", "));
                    t_end(&mut kv, t);
                }
                FunctionalSpec::Composite { map, parts } => {
                    kv("map", map.to_string());
                    let parts: Vec<String> = parts.iter().map(|p| format!("{}@{}", p.shape, p.coord)).collect();
                    kv("parts", parts.join("; "));
                }
            }
        }
        kv("\n[run]\ntask", self.task.name().into());
        kv("n_samples", self.n_samples.to_string());
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("mode", self.mode.to_string());
        kv("structure", self.structure.name().into());
        kv("test_fn", self.test_fn.shape.to_string());
        kv("test_scale", fmt_f64(self.test_fn.scale));
        kv("n_max", self.n_max.to_string());
        kv("trials", self.trials.to_string());
        kv("configs", self.configs.to_string());
        let kde = if self.kde.is_empty() {
            "none".to_string()
        } else {
            self.kde.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
        };
        kv("kde", kde);
        kv("plots", self.plots.to_string());
        let t = &self.tolerances;
        kv("\n[tolerances]\nse_multiplier", fmt_f64(t.se_multiplier));
        kv("gamma_relative", fmt_f64(t.gamma_relative));
        kv("chaos_residual", fmt_f64(t.chaos_residual));
        kv("tol_rank", fmt_f64(t.tol_rank));
        s
    }

    /// SHA-256 of the rendered config with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let digest = Sha256::digest(c.render().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn preset_name(law: &MarkLaw) -> &'static str {
    match law {
        MarkLaw::Scalar(LevyDensity::PowerLaw { .. }) => "power_law",
        MarkLaw::Scalar(LevyDensity::SymmetricPowerLaw { .. }) => "symmetric_power_law",
        MarkLaw::Scalar(LevyDensity::Uniform { .. }) => "uniform",
        MarkLaw::Annulus { .. } => "annulus",
        MarkLaw::IndependentPair(..) => "independent_pair",
        MarkLaw::Product(..) => "product",
    }
}

const PRESETS: &[&str] = &["power_law", "symmetric_power_law", "uniform", "annulus", "independent_pair", "product"];
const FAMILIES: &[&str] = &[
    "linear_compensated",
    "stoch_integral",
    "running_supremum",
    "vector_stoch_integral",
    "triangular_system",
    "composite",
];

fn render_aux(p: &AuxPath) -> String {
    match *p {
        AuxPath::Zero => "zero".into(),
        AuxPath::Sine { amplitude, steps } => format!("sine({amplitude:?},{steps})"),
        AuxPath::Drift { rate, steps } => format!("drift({rate:?},{steps})"),
        AuxPath::RandomWalk {
            sigma,
            steps,
            first_coordinate,
        } => {
            if first_coordinate {
                format!("random_walk({sigma:?},{steps})")
            } else {
                format!("random_walk({sigma:?},{steps},0)")
            }
        }
    }
}

fn count(v: f64, what: &str) -> Result<usize, String> {
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e9 {
        Ok(v as usize)
    } else {
        Err(format!("{what} must be a positive integer, got {v}"))
    }
}

/// `zero`, `sine(amplitude,steps)`, `drift(rate,steps)`, `random_walk(sigma,steps[,first])`.
pub fn parse_aux(text: &str) -> Result<AuxPath, String> {
    let (name, args) = split_call(text).map_err(|e| e.to_string())?;
    match (name, args.as_slice()) {
        ("zero", []) => Ok(AuxPath::Zero),
        ("sine", &[amplitude, steps]) => Ok(AuxPath::Sine {
            amplitude,
            steps: count(steps, "steps")?,
        }),
        ("drift", &[rate, steps]) => Ok(AuxPath::Drift {
            rate,
            steps: count(steps, "steps")?,
        }),
        ("random_walk", &[sigma, steps]) | ("random_walk", &[sigma, steps, _]) => {
            let first_coordinate = match args.get(2) {
                None => true,
                Some(&v) if v == 1.0 => true,
                Some(&v) if v == 0.0 => false,
                Some(v) => return Err(format!("random_walk third argument must be 0 or 1, got {v}")),
            };
            Ok(AuxPath::RandomWalk {
                sigma,
                steps: count(steps, "steps")?,
                first_coordinate,
            })
        }
        _ => Err(format!(
            "`{text}` is not one of zero, sine(amplitude,steps), drift(rate,steps), random_walk(sigma,steps[,first])"
        )),
    }
}

/// `shape` or `shape@coord`.
fn parse_part(text: &str) -> Result<MarkFn, String> {
    let (shape, coord) = match text.rsplit_once('@') {
        Some((s, c)) => (s, c.trim().parse::<usize>().map_err(|e| format!("bad coordinate in `{text}`: {e}"))?),
        None => (text, 0),
    };
    let shape = ScalarFn::parse(shape).map_err(|e| e.to_string())?;
    Ok(MarkFn::new(shape).on_coord(coord))
}

fn suggest(word: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(word, c), *c))
        .filter(|(d, c)| *d <= 3.max(c.len() / 3))
        .min()
        .map(|(_, c)| format!(" (did you mean `{c}`?)"))
        .unwrap_or_default()
}

/// One problem in a config file. `line` is 1-based; `None` for whole-file problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Fields {
    sections: BTreeMap<&'static str, (usize, BTreeMap<&'static str, Entry>)>,
    errors: Vec<ConfigError>,
}

impl Fields {
    fn error(&mut self, line: Option<usize>, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let entry = self.sections.get_mut(section)?.1.get_mut(key)?;
        entry.used = true;
        Some((entry.value.clone(), entry.line))
    }

    fn optional<T>(&mut self, section: &str, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let (value, line) = self.raw(section, key)?;
        match parse(&value) {
            Ok(v) => Some(v),
            Err(e) => {
                self.error(Some(line), format!("[{section}] {key}: {e}"));
                None
            }
        }
    }

    fn required<T>(&mut self, section: &str, key: &str, why: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        if self.sections.get(section).is_some_and(|(_, m)| m.contains_key(key)) {
            self.optional(section, key, parse)
        } else {
            let line = self.sections.get(section).map(|(l, _)| *l);
            self.error(line, format!("missing required key `{key}` in [{section}] ({why})"));
            None
        }
    }

    /// Flag keys that were recognised but not consumed by the chosen preset or family.
    fn check_unused(&mut self, section: &str, owner: &str) {
        let Some((_, map)) = self.sections.get(section) else { return };
        let unused: Vec<(usize, &str)> =
            map.iter().filter(|(_, e)| !e.used).map(|(k, e)| (e.line, *k)).collect();
        for (line, key) in unused {
            self.error(Some(line), format!("key `{key}` in [{section}] is not used by {owner}"));
        }
    }
}

fn float(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, got `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got `{s}`"))
    }
}

fn positive_int(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("expected a positive integer, got `{s}`")),
    }
}

fn index(s: &str) -> Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
}

fn seed(s: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|_| format!("expected an unsigned 64-bit integer, got `{s}`"))
}

fn via<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn density(s: &str) -> Result<LevyDensity, String> {
    via(s)
}

/// Parse a config, collecting every error.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut fields = Fields {
        sections: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut current: Option<(&'static str, &'static [&'static str])> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                fields.error(Some(line_no), format!("malformed section header `{line}`"));
                current = None;
                continue;
            };
            let name = name.trim();
            match SECTIONS.iter().find(|(s, _)| *s == name) {
                Some(&(s, keys)) => {
                    if fields.sections.contains_key(s) {
                        fields.error(Some(line_no), format!("section [{s}] appears twice"));
                    }
                    fields.sections.entry(s).or_insert((line_no, BTreeMap::new()));
                    current = Some((s, keys));
                }
                None => {
                    let names: Vec<&str> = SECTIONS.iter().map(|(s, _)| *s).collect();
                    fields.error(Some(line_no), format!("unknown section [{name}]{}", suggest(name, &names)));
                    current = None;
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            fields.error(Some(line_no), format!("expected `key = value`, got `{line}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some((section, keys)) = current else {
            fields.error(Some(line_no), format!("key `{key}` appears outside any section"));
            continue;
        };
        let Some(&known) = keys.iter().find(|k| **k == key) else {
            fields.error(Some(line_no), format!("unknown key `{key}` in [{section}]{}", suggest(key, keys)));
            continue;
        };
        let map = &mut fields.sections.get_mut(section).expect("section registered").1;
        if map.contains_key(known) {
            fields.error(Some(line_no), format!("duplicate key `{key}` in [{section}]"));
            continue;
        }
        map.insert(
            known,
            Entry {
                value: value.to_string(),
                line: line_no,
                used: false,
            },
        );
    }

    let measure = parse_measure(&mut fields);
    let task = if fields.has_section("run") {
        fields.required("run", "task", "one of simulate, gamma, sharp, chaos, laplace, diagnose", via::<Task>)
    } else {
        fields.error(None, "missing [run] section with a `task` key".into());
        None
    };
    let functional = if fields.has_section("functional") {
        parse_functional(&mut fields)
    } else {
        if let Some(t) = task.filter(|t| t.needs_functional()) {
            fields.error(None, format!("missing required [functional] section with key `family` (task {} needs one)", t.name()));
        }
        None
    };

    let mut cfg = measure.zip(task).map(|(m, t)| RunConfig::new(m, t));
    macro_rules! set {
        ($section:literal, $key:literal, $parse:expr, |$c:ident, $v:ident| $assign:expr) => {
            if let Some($v) = fields.optional($section, $key, $parse) {
                if let Some($c) = cfg.as_mut() {
                    $assign;
                }
            }
        };
    }
    set!("run", "n_samples", positive_int, |c, v| c.n_samples = v);
    set!("run", "seed", seed, |c, v| c.seed = v);
    set!("run", "out", |s: &str| Ok::<_, String>(PathBuf::from(s)), |c, v| c.out = v);
    set!("run", "mode", via::<JacobianMode>, |c, v| c.mode = v);
    set!("run", "structure", via::<Structure>, |c, v| c.structure = v);
    set!("run", "test_fn", via::<ScalarFn>, |c, v| c.test_fn.shape = v);
    set!("run", "test_scale", float, |c, v| c.test_fn.scale = v);
    set!("run", "n_max", positive_int, |c, v| c.n_max = v);
    set!("run", "trials", positive_int, |c, v| c.trials = v);
    set!("run", "configs", positive_int, |c, v| c.configs = v);
    set!("run", "kde", parse_kde, |c, v| c.kde = v);
    set!("run", "plots", via::<bool>, |c, v| c.plots = v);
    set!("tolerances", "se_multiplier", float, |c, v| c.tolerances.se_multiplier = v);
    set!("tolerances", "gamma_relative", float, |c, v| c.tolerances.gamma_relative = v);
    set!("tolerances", "chaos_residual", float, |c, v| c.tolerances.chaos_residual = v);
    set!("tolerances", "tol_rank", float, |c, v| c.tolerances.tol_rank = v);

    if let Some(c) = cfg.as_mut() {
        c.functional = functional;
    }
    if fields.errors.is_empty() {
        Ok(cfg.expect("no errors implies a complete config"))
    } else {
        fields.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(ConfigErrors(fields.errors))
    }
}

fn parse_kde(s: &str) -> Result<Vec<usize>, String> {
    if s == "none" {
        return Ok(Vec::new());
    }
    let v = s.split(',').map(|p| index(p.trim())).collect::<Result<Vec<_>, _>>()?;
    if v.len() > 2 {
        return Err("at most two components".into());
    }
    Ok(v)
}

fn parse_measure(fields: &mut Fields) -> Option<IntensityMeasure> {
    if !fields.has_section("measure") {
        fields.error(None, "missing [measure] section".into());
        return None;
    }
    let preset = fields.required("measure", "preset", "the jump law", |s| {
        PRESETS
            .iter()
            .find(|p| **p == s)
            .copied()
            .ok_or_else(|| format!("unknown preset `{s}`{}", suggest(s, PRESETS)))
    });
    let horizon = fields.optional("measure", "horizon", float).unwrap_or(1.0);
    let truncation = fields.optional("measure", "truncation", float).unwrap_or(1e-3);
    let Some(preset) = preset else {
        // mark everything as seen to avoid follow-on noise
        for k in MEASURE_KEYS {
            fields.raw("measure", k);
        }
        return None;
    };
    let why = format!("needed by preset {preset}");
    let law: Option<Result<MarkLaw, String>> = match preset {
        "power_law" | "symmetric_power_law" => {
            let beta = fields.required("measure", "beta", &why, float);
            let cutoff = fields.required("measure", "cutoff", &why, float);
            beta.zip(cutoff).map(|(b, c)| {
                let d = if preset == "power_law" {
                    LevyDensity::power_law(b, c)
                } else {
                    LevyDensity::symmetric_power_law(b, c)
                };
                d.map(MarkLaw::Scalar).map_err(|e| e.to_string())
            })
        }
        "uniform" => {
            let lo = fields.required("measure", "lo", &why, float);
            let hi = fields.required("measure", "hi", &why, float);
            let mass = fields.required("measure", "mass", &why, float);
            match (lo, hi, mass) {
                (Some(lo), Some(hi), Some(m)) => {
                    Some(LevyDensity::uniform(lo, hi, m).map(MarkLaw::Scalar).map_err(|e| e.to_string()))
                }
                _ => None,
            }
        }
        "annulus" => {
            let inner = fields.required("measure", "inner", &why, float);
            let outer = fields.required("measure", "outer", &why, float);
            let mass = fields.required("measure", "mass", &why, float);
            match (inner, outer, mass) {
                (Some(i), Some(o), Some(m)) => Some(MarkLaw::annulus(i, o, m).map_err(|e| e.to_string())),
                _ => None,
            }
        }
        _ => {
            let a = fields.required("measure", "first", &why, density);
            let b = fields.required("measure", "second", &why, density);
            a.zip(b).map(|(a, b)| {
                Ok(if preset == "product" {
                    MarkLaw::Product(a, b)
                } else {
                    MarkLaw::IndependentPair(a, b)
                })
            })
        }
    };
    fields.check_unused("measure", &format!("preset {preset}"));
    let line = fields.sections.get("measure").map(|(l, _)| *l);
    match law? {
        Ok(law) => match IntensityMeasure::new(law, horizon, truncation) {
            Ok(m) => Some(m),
            Err(e) => {
                fields.error(line, format!("[measure] {e}"));
                None
            }
        },
        Err(e) => {
            fields.error(line, format!("[measure] {e}"));
            None
        }
    }
}

fn parse_functional(fields: &mut Fields) -> Option<FunctionalSpec> {
    let family = fields.required("functional", "family", "the functional to build", |s| {
        FAMILIES
            .iter()
            .find(|p| **p == s)
            .copied()
            .ok_or_else(|| format!("unknown family `{s}`{}", suggest(s, FAMILIES)))
    });
    let Some(family) = family else {
        for k in FUNCTIONAL_KEYS {
            fields.raw("functional", k);
        }
        return None;
    };
    let why = format!("needed by family {family}");
    let t_end = fields.optional("functional", "t_end", float);
    let spec = match family {
        "linear_compensated" => {
            let shape = fields.required("functional", "f", &why, via::<ScalarFn>);
            let coord = fields.optional("functional", "coord", index).unwrap_or(0);
            let scale = fields.optional("functional", "scale", float).unwrap_or(1.0);
            let time = fields.optional("functional", "time", via::<TimeWeight>).unwrap_or(TimeWeight::One);
            shape.map(|s| FunctionalSpec::LinearCompensated {
                f: MarkFn::new(s).on_coord(coord).scaled(scale).with_time(time),
            })
        }
        "stoch_integral" => {
            let phi = fields.required("functional", "phi", &why, via::<ScalarFn>);
            let h = fields.optional("functional", "h", via::<ScalarFn>).unwrap_or(ScalarFn::Identity);
            phi.map(|phi| FunctionalSpec::StochIntegral { phi, h, t_end })
        }
        "running_supremum" => {
            let k_path = fields.optional("functional", "k_path", parse_aux).unwrap_or(AuxPath::Zero);
            Some(FunctionalSpec::RunningSupremum { k_path, t_end })
        }
        "vector_stoch_integral" => {
            let psi = fields.required("functional", "psi", &why, via::<MatrixFn>);
            let s_path = fields.optional("functional", "s_path", parse_aux).unwrap_or(AuxPath::Zero);
            let dim = fields.required("functional", "dim", &why, positive_int);
            psi.zip(dim).map(|(psi, dim)| FunctionalSpec::VectorStochIntegral { psi, s_path, dim, t_end })
        }
        "triangular_system" => {
            let start = fields
                .optional("functional", "start", |s| {
                    let v = s.split(',').map(|p| float(p.trim())).collect::<Result<Vec<_>, _>>()?;
                    <[f64; 3]>::try_from(v).map_err(|v| format!("expected three numbers, got {}", v.len()))
                })
                .unwrap_or([0.0; 3]);
            Some(FunctionalSpec::TriangularSystem { start, t_end })
        }
        _ => {
            let map = fields.required("functional", "map", &why, via::<SmoothMap>);
            let parts = fields.required("functional", "parts", &why, |s| {
                s.split(';').map(|p| parse_part(p.trim())).collect::<Result<Vec<_>, _>>()
            });
            map.zip(parts).map(|(map, parts)| FunctionalSpec::Composite { map, parts })
        }
    };
    fields.check_unused("functional", &format!("family {family}"));
    spec
}

impl FromStr for SmoothMap {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        SmoothMap::parse(s)
    }
}

impl FromStr for MatrixFn {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        MatrixFn::parse(s)
    }
}
