//! Experiment configuration files.
//!
//! The format is flat `key = value` text grouped by `[section]` headers.
//! `#` and `;` start comments. Keys before the first header belong to
//! `[experiment]`. Every key must be recognised; typos are reported with
//! their line number.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::greedy::GreedyConfig;
use crate::problem::{make_problem, ParametricProblem};
use crate::tuning::{default_grid, log_grid, KernelFamily, ModelSpec, SearchParam, SearchSpec};

/// Parsed `section.key -> (value, line)` table that tracks which keys were read.
#[derive(Debug)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
    sections: BTreeMap<String, usize>,
    used: RefCell<Vec<(String, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut sections = BTreeMap::new();
        let mut section = "experiment".to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::ConfigLine { line, msg: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(Error::ConfigLine { line, msg: format!("invalid section name '{name}'") });
                }
                if sections.insert(name.to_string(), line).is_some() {
                    return Err(Error::ConfigLine { line, msg: format!("section [{name}] appears twice") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::ConfigLine { line, msg: format!("expected 'key = value', got '{content}'") })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::ConfigLine { line, msg: "missing key before '='".into() });
            }
            if value.is_empty() {
                return Err(Error::ConfigLine { line, msg: format!("missing value for '{key}'") });
            }
            let slot = (section.clone(), key.to_string());
            if let Some((_, first)) = entries.get(&slot) {
                return Err(Error::ConfigLine { line, msg: format!("'{key}' already set on line {first}") });
            }
            entries.insert(slot, (value.to_string(), line));
        }
        Ok(Self { entries, sections, used: RefCell::new(Vec::new()) })
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section) || self.entries.keys().any(|(s, _)| s == section)
    }

    /// Raw string value and its line number.
    pub fn raw(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        let slot = (section.to_string(), key.to_string());
        let (value, line) = self.entries.get(&slot)?;
        self.used.borrow_mut().push(slot);
        Some((value.as_str(), *line))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::ConfigLine { line, msg: format!("{section}.{key}: '{value}': {e}") }),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)?.ok_or_else(|| Error::Config(format!("missing required key {section}.{key}")))
    }

    /// Comma-separated list of numbers; `inf` is accepted.
    pub fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((value, line)) = self.raw(section, key) else {
            return Ok(None);
        };
        parse_list(value).map(Some).map_err(|msg| Error::ConfigLine { line, msg: format!("{section}.{key}: {msg}") })
    }

    /// Grid value: a list, `log(lo, hi, per_decade)` or `default`.
    pub fn grid(&self, section: &str, key: &str, param: SearchParam) -> Result<Option<Vec<f64>>> {
        let Some((value, line)) = self.raw(section, key) else {
            return Ok(None);
        };
        let err = |msg: String| Error::ConfigLine { line, msg: format!("{section}.{key}: {msg}") };
        if value == "default" {
            return Ok(Some(default_grid(param)));
        }
        if let Some(args) = value.strip_prefix("log(").and_then(|v| v.strip_suffix(')')) {
            let parts = parse_list(args).map_err(err)?;
            let [lo, hi, per_decade] = parts[..] else {
                return Err(err("log grid needs (lo, hi, points_per_decade)".into()));
            };
            if !(lo > 0.0 && hi > lo && per_decade >= 1.0 && per_decade.fract() == 0.0) {
                return Err(err("log grid needs 0 < lo < hi and an integer point count".into()));
            }
            return Ok(Some(log_grid(lo, hi, per_decade as usize)));
        }
        parse_list(value).map(Some).map_err(err)
    }

    /// Fails on the first key that no consumer read.
    pub fn check_all_used(&self) -> Result<()> {
        let used = self.used.borrow();
        for (slot, (_, line)) in &self.entries {
            if !used.contains(slot) {
                return Err(Error::ConfigLine { line: *line, msg: format!("unknown key {}.{}", slot.0, slot.1) });
            }
        }
        for (name, line) in &self.sections {
            if !KNOWN_SECTIONS.contains(&name.as_str()) {
                return Err(Error::ConfigLine { line: *line, msg: format!("unknown section [{name}]") });
            }
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: [&str; 7] = ["experiment", "kernel", "greedy", "search", "test", "reference", "compare"];

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<f64>().map_err(|e| format!("'{item}': {e}"))
        })
        .collect()
}

/// Where the anisotropic position kernel's leading direction comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum AnisoSource {
    None,
    Literal { direction: Vec<f64>, along: f64, across: f64 },
    ActiveSubspace { along: f64, across: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub spec: SearchSpec,
    pub gamma_interior: f64,
    pub gamma_boundary: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestConfig {
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Points per axis of the regular position grids.
    pub grid: usize,
    pub slice_mu: Vec<f64>,
    /// Number of log-spaced checkpoints in `convergence.csv`; 0 disables it.
    pub checkpoints: usize,
    pub n_mu: usize,
}

/// Full-collocation reference used when no exact solution exists.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceConfig {
    pub n: usize,
    pub boundary_ratio: f64,
    pub family: KernelFamily,
    /// Native shape parameters (`eps^2` for Gaussians, `eps` for Matérn).
    pub shape_x: f64,
    pub shape_mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareConfig {
    pub betas: Vec<f64>,
    /// Per-beta overrides, aligned with `betas`.
    pub overrides: Vec<(SearchParam, Vec<f64>)>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ParametricProblem,
    pub seed: u64,
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Model with an isotropic position kernel; see `aniso` for the rest.
    pub model: ModelSpec,
    pub aniso: AnisoSource,
    pub search: Option<SearchConfig>,
    pub test: TestConfig,
    pub reference: ReferenceConfig,
    pub compare: CompareConfig,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let cfg = Self::from_raw(&raw)?;
        raw.check_all_used()?;
        Ok(cfg)
    }

    fn from_raw(raw: &RawConfig) -> Result<Self> {
        let problem_name: String = raw.require("experiment", "problem")?;
        let problem = make_problem(&problem_name)?;
        let name = raw.get_or("experiment", "name", problem.name())?;
        let seed = raw.get_or("experiment", "seed", 1u64)?;
        let n_interior = raw.get_or("experiment", "n_interior", 10_000usize)?;
        let n_boundary = raw.get_or("experiment", "n_boundary", 10_000usize)?;
        let out_dir = raw.get_or("experiment", "out", PathBuf::from("out").join(&name))?;

        let family: Option<KernelFamily> = raw.get("kernel", "family")?;
        let family_x = raw.get("kernel", "family_x")?.or(family).unwrap_or(KernelFamily::Gaussian);
        let family_mu = raw.get("kernel", "family_mu")?.or(family).unwrap_or(KernelFamily::Gaussian);
        let shape_x = shape(raw, "kernel", "x", family_x)?
            .ok_or_else(|| Error::Config("kernel needs eps_x2 or eps_x".into()))?;
        let shape_mu = shape(raw, "kernel", "mu", family_mu)?
            .ok_or_else(|| Error::Config("kernel needs eps_mu2 or eps_mu".into()))?;
        let aniso = aniso_source(raw, problem.dim_x(), family_x)?;

        let greedy = GreedyConfig {
            beta: raw.get_or("greedy", "beta", 1.0)?,
            n_max: raw.get_or("greedy", "n_max", 100usize)?,
            eps_acc: raw.get_or("greedy", "eps_acc", 1e-15)?,
            eps_stab: raw.get_or("greedy", "eps_stab", 1e-15)?,
        };
        greedy.validate().map_err(|e| Error::Config(e.to_string()))?;
        let w_interior: f64 = raw.get_or("greedy", "w_interior", 1.0)?;
        let w_boundary: f64 = raw.get_or("greedy", "w_boundary", 1.0)?;
        for (key, v) in [("w_interior", w_interior), ("w_boundary", w_boundary)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("greedy.{key} must be positive, got {v}")));
            }
        }
        let model = ModelSpec { family_x, family_mu, shape_x, shape_mu, aniso: None, w_interior, w_boundary, greedy };

        let search = if raw.has_section("search") { Some(search_config(raw)?) } else { None };

        let (mu_lo, mu_hi) = problem.geometry.mu_range();
        let test = TestConfig {
            n_interior: raw.get_or("test", "n_interior", 5000usize)?,
            n_boundary: raw.get_or("test", "n_boundary", 5000usize)?,
            grid: raw.get_or("test", "grid", 101usize)?,
            slice_mu: raw.list("test", "slice_mu")?.unwrap_or_else(|| vec![mu_lo, 0.5 * (mu_lo + mu_hi), mu_hi]),
            checkpoints: raw.get_or("test", "checkpoints", 0usize)?,
            n_mu: raw.get_or("test", "n_mu", 20usize)?,
        };
        if test.grid < 2 || test.n_mu < 1 {
            return Err(Error::Config("test.grid must be at least 2 and test.n_mu at least 1".into()));
        }

        let ref_family = raw.get("reference", "family")?.unwrap_or(family_x);
        let reference = ReferenceConfig {
            n: raw.get_or("reference", "n", 2000usize)?,
            boundary_ratio: raw.get_or("reference", "boundary_ratio", 0.1)?,
            family: ref_family,
            shape_x: shape(raw, "reference", "x", ref_family)?.unwrap_or(shape_x),
            shape_mu: shape(raw, "reference", "mu", ref_family)?.unwrap_or(shape_mu),
        };
        if !(0.0..=1.0).contains(&reference.boundary_ratio) || reference.n == 0 {
            return Err(Error::Config("reference needs n >= 1 and boundary_ratio in [0, 1]".into()));
        }

        let compare = compare_config(raw, greedy.beta)?;
        Ok(Self {
            name,
            problem,
            seed,
            n_interior,
            n_boundary,
            model,
            aniso,
            search,
            test,
            reference,
            compare,
            out_dir,
        })
    }
}

/// Reads `eps_<axis>2` or `eps_<axis>` and converts to the family's native form.
fn shape(raw: &RawConfig, section: &str, axis: &str, family: KernelFamily) -> Result<Option<f64>> {
    let squared: Option<f64> = raw.get(section, &format!("eps_{axis}2"))?;
    let plain: Option<f64> = raw.get(section, &format!("eps_{axis}"))?;
    let value = match (squared, plain) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(format!("{section}: give only one of eps_{axis}2 and eps_{axis}")));
        }
        (Some(e2), None) => Some(match family {
            KernelFamily::Gaussian => e2,
            KernelFamily::Matern => e2.sqrt(),
        }),
        (None, Some(e)) => Some(match family {
            KernelFamily::Gaussian => e * e,
            KernelFamily::Matern => e,
        }),
        (None, None) => None,
    };
    if let Some(v) = value {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{section}: eps_{axis} must be positive")));
        }
    }
    Ok(value)
}

fn aniso_source(raw: &RawConfig, dim_x: usize, family_x: KernelFamily) -> Result<AnisoSource> {
    let mode = raw.get_or("kernel", "anisotropic", "none".to_string())?;
    let along_across = || -> Result<(f64, f64)> {
        let along: f64 = raw.require("kernel", "along")?;
        let across: f64 = raw.require("kernel", "across")?;
        if !(along > 0.0 && across > 0.0) {
            return Err(Error::Config("kernel.along and kernel.across must be positive".into()));
        }
        if family_x != KernelFamily::Gaussian {
            return Err(Error::Config("anisotropic position kernels require the gaussian family".into()));
        }
        Ok((along, across))
    };
    match mode.as_str() {
        "none" => Ok(AnisoSource::None),
        "literal" => {
            let (along, across) = along_across()?;
            let direction = raw.list("kernel", "direction")?.unwrap_or_else(|| vec![1.0; dim_x]);
            if direction.len() != dim_x {
                return Err(Error::Config(format!("kernel.direction needs {dim_x} entries")));
            }
            let norm = crate::linalg::norm(&direction);
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Config("kernel.direction must be a non-zero vector".into()));
            }
            let direction = direction.iter().map(|v| v / norm).collect();
            Ok(AnisoSource::Literal { direction, along, across })
        }
        "active-subspace" => {
            let (along, across) = along_across()?;
            Ok(AnisoSource::ActiveSubspace { along, across })
        }
        other => Err(Error::Config(format!(
            "kernel.anisotropic must be none, literal or active-subspace, got '{other}'"
        ))),
    }
}

fn search_config(raw: &RawConfig) -> Result<SearchConfig> {
    let order = raw.get_or("search", "order", "eps_x2, eps_mu2, w_B".to_string())?;
    let mut stages = Vec::new();
    for name in order.split(',') {
        let param: SearchParam = name.trim().parse()?;
        let grid = raw.grid("search", &param.to_string(), param)?.unwrap_or_else(|| default_grid(param));
        stages.push((param, grid));
    }
    let spec = SearchSpec { stages };
    spec.validate()?;
    Ok(SearchConfig {
        spec,
        gamma_interior: raw.get_or("search", "gamma_interior", 1.0)?,
        gamma_boundary: raw.get_or("search", "gamma_boundary", 1.0)?,
        n_interior: raw.get_or("search", "n_interior", 10_000usize)?,
        n_boundary: raw.get_or("search", "n_boundary", 10_000usize)?,
    })
}

fn compare_config(raw: &RawConfig, beta: f64) -> Result<CompareConfig> {
    let betas = raw.list("compare", "betas")?.unwrap_or_else(|| vec![beta]);
    if betas.is_empty() || betas.iter().any(|b| b.is_nan() || *b < 0.0) {
        return Err(Error::Config("compare.betas must be non-negative".into()));
    }
    let mut overrides = Vec::new();
    for param in [SearchParam::EpsX2, SearchParam::EpsMu2, SearchParam::EpsX, SearchParam::EpsMu, SearchParam::WBoundary] {
        let key = match param {
            SearchParam::WBoundary => "w_boundary".to_string(),
            other => other.to_string(),
        };
        if let Some(values) = raw.list("compare", &key)? {
            if values.len() != betas.len() {
                return Err(Error::Config(format!(
                    "compare.{key} has {} entries but compare.betas has {}",
                    values.len(),
                    betas.len()
                )));
            }
            overrides.push((param, values));
        }
    }
    Ok(CompareConfig { betas, overrides })
}
