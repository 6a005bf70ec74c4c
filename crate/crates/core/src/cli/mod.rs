//! Experiment driver behind the `pde-greedy` binary.
//!
//! Each command reads an [`ExperimentConfig`], samples its candidate sets
//! from seed-derived streams and writes CSV artifacts into the output
//! directory. Column layouts are published here so downstream readers can
//! validate headers.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{AnisoSource, CompareConfig, ExperimentConfig, RawConfig, ReferenceConfig, SearchConfig, TestConfig};

use crate::error::{Error, Result};
use crate::greedy::StopCause;
use crate::io::{fmt_f64, CsvOut};
use crate::kernels::{PositionKernel, ProductKernel};
use crate::problem::{CandidateSet, Functional, ParametricProblem};
use crate::surrogate::{full_collocation_solve, Surrogate};
use crate::tuning::{
    active_subspace_direction, build_anisotropic_b, consecutive_grid_search, KernelFamily, ModelSpec,
    SearchResult, ValidationSets,
};

pub const HISTORY_HEADER: [&str; 8] =
    ["iteration", "kind", "eta", "P_i", "max_residual", "n_interior_cum", "n_boundary_cum", "elapsed_s"];
pub const REPORT_HEADER: [&str; 11] = [
    "experiment",
    "problem",
    "seed",
    "n",
    "n_interior",
    "n_boundary",
    "r_bnd",
    "stop_cause",
    "max_training_residual",
    "linf_test_error",
    "train_time_s",
];
pub const CONVERGENCE_HEADER: [&str; 5] = ["experiment", "dim_x", "n", "max_training_residual", "linf_test_error"];
pub const COMPARE_HEADER: [&str; 11] = [
    "beta",
    "n",
    "n_boundary",
    "r_bnd",
    "stop_cause",
    "linf_error",
    "error_reference",
    "shape_x",
    "shape_mu",
    "w_boundary",
    "train_time_s",
];
pub const LOSS_HEADER: [&str; 6] = ["stage", "parameter", "value", "validation_loss", "n_final", "stop_cause"];
pub const BEST_HEADER: [&str; 3] = ["parameter", "value", "validation_loss"];
/// Columns that hold wall-clock measurements and differ between reruns.
pub const TIMING_COLUMNS: [&str; 2] = ["elapsed_s", "train_time_s"];

fn coordinate_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn selected_header(dim_x: usize, dim_mu: usize) -> Vec<String> {
    let mut h = vec!["index".to_string(), "kind".to_string()];
    h.extend(coordinate_names("x", dim_x));
    h.extend(coordinate_names("mu", dim_mu));
    h.extend(["weight", "target", "alpha"].map(String::from));
    h
}

pub fn residuals_header(dim_x: usize, dim_mu: usize) -> Vec<String> {
    let mut h = vec!["kind".to_string()];
    h.extend(coordinate_names("x", dim_x));
    h.extend(coordinate_names("mu", dim_mu));
    h.extend(["abs_residual", "abs_error"].map(String::from));
    h
}

pub fn slices_header(dim_x: usize, dim_mu: usize) -> Vec<String> {
    let mut h = coordinate_names("mu", dim_mu);
    h.extend(coordinate_names("x", dim_x));
    h.extend(["value", "exact"].map(String::from));
    h
}

pub fn testset_header(dim_x: usize, dim_mu: usize) -> Vec<String> {
    let mut h = coordinate_names("mu", dim_mu);
    h.extend(coordinate_names("x", dim_x));
    h.push("exact".to_string());
    h
}

/// Process exit code for an error: 2 for configuration and I/O problems,
/// 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteGram { .. }
        | Error::IllConditioned { .. }
        | Error::AlreadySatisfied { .. }
        | Error::Degenerate(_) => 3,
        Error::SearchFailed { source, .. } => exit_code(source),
        _ => 2,
    }
}

/// Independent sampling streams derived from the experiment seed.
#[derive(Clone, Copy, Debug)]
enum Stream {
    Training,
    Validation,
    Test,
    Reference,
}

fn stream_seed(seed: u64, stream: Stream) -> u64 {
    let offset = match stream {
        Stream::Training => return seed,
        Stream::Validation => 0x9E37_79B9_7F4A_7C15,
        Stream::Test => 0xBF58_476D_1CE4_E5B9,
        Stream::Reference => 0x94D0_49BB_1331_11EB,
    };
    seed ^ offset
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn functional_fields(f: &Functional) -> Vec<String> {
    let mut row = vec![f.kind.tag().to_string()];
    row.extend(f.position.iter().chain(&f.parameter).map(|&v| fmt_f64(v)));
    row
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", dir.display())))
}

/// Outcome of `run`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub experiment: String,
    pub problem: String,
    pub seed: u64,
    pub n: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub r_bnd: f64,
    pub stop_cause: StopCause,
    pub max_training_residual: f64,
    pub linf_test_error: Option<f64>,
    pub train_time_s: f64,
}

impl RunReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &REPORT_HEADER)?;
        out.row([
            self.experiment.clone(),
            self.problem.clone(),
            self.seed.to_string(),
            self.n.to_string(),
            self.n_interior.to_string(),
            self.n_boundary.to_string(),
            fmt_f64(self.r_bnd),
            self.stop_cause.to_string(),
            fmt_f64(self.max_training_residual),
            opt_f64(self.linf_test_error),
            format!("{:.6}", self.train_time_s),
        ])?;
        out.finish()
    }
}

/// One row of the beta comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub beta: f64,
    pub n: usize,
    pub n_boundary: usize,
    pub r_bnd: f64,
    pub stop_cause: StopCause,
    pub linf_error: f64,
    /// `exact` or `reference`.
    pub error_reference: &'static str,
    pub shape_x: f64,
    pub shape_mu: f64,
    pub w_boundary: f64,
    pub train_time_s: f64,
}

pub fn training_set(cfg: &ExperimentConfig) -> Result<CandidateSet> {
    cfg.problem.sample(cfg.n_interior, cfg.n_boundary, stream_seed(cfg.seed, Stream::Training))
}

pub fn test_set(cfg: &ExperimentConfig) -> Result<CandidateSet> {
    cfg.problem.sample(cfg.test.n_interior, cfg.test.n_boundary, stream_seed(cfg.seed, Stream::Test))
}

/// Model spec with the anisotropic matrix resolved. Returns the leading
/// direction when one was used.
pub fn resolve_model(cfg: &ExperimentConfig, training: &CandidateSet) -> Result<(ModelSpec, Option<Vec<f64>>)> {
    let mut model = cfg.model.clone();
    let (direction, along, across) = match &cfg.aniso {
        AnisoSource::None => return Ok((model, None)),
        AnisoSource::Literal { direction, along, across } => (direction.clone(), *along, *across),
        AnisoSource::ActiveSubspace { along, across } => {
            let gradients: Vec<Vec<f64>> = training
                .interior()
                .iter()
                .map(|f| cfg.problem.source_gradient(&f.position, &f.parameter))
                .collect();
            (active_subspace_direction(&gradients)?, *along, *across)
        }
    };
    model.aniso = Some(build_anisotropic_b(&direction, along, across)?);
    log::info!("anisotropic position kernel along {direction:?}");
    Ok((model, Some(direction)))
}

/// `count` parameter values spread evenly over the problem's range.
pub fn equidistant_mu(range: (f64, f64), count: usize) -> Vec<f64> {
    let (lo, hi) = range;
    if count <= 1 || hi == lo {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

fn axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Regular grid over the bounding box, `points` per axis on every position
/// coordinate. Row-major with the last coordinate fastest.
fn position_grid(problem: &ParametricProblem, points: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = problem.geometry.bounding_box().iter().map(|&(lo, hi)| axis(lo, hi, points)).collect();
    let mut grid = vec![Vec::new()];
    for ax in &axes {
        grid = grid.into_iter().flat_map(|p| ax.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    grid
}

/// Cartesian parameter × position test grid restricted to the closed domain.
pub fn cartesian_test_grid(problem: &ParametricProblem, n_mu: usize, points: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let positions = position_grid(problem, points);
    let mut out = Vec::new();
    for mu in equidistant_mu(problem.geometry.mu_range(), n_mu) {
        let mu = vec![mu];
        for x in &positions {
            if problem.geometry.in_closure(x, &mu) {
                out.push((x.clone(), mu.clone()));
            }
        }
    }
    out
}

/// Up to `count` roughly log-spaced sizes from 10 (or 1) to `n_final`.
pub fn log_checkpoints(n_final: usize, count: usize) -> Vec<usize> {
    if count == 0 || n_final == 0 {
        return Vec::new();
    }
    let lo = 10.min(n_final) as f64;
    let hi = n_final as f64;
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            (lo * (hi / lo).powf(t)).round() as usize
        })
        .collect();
    out.dedup();
    out
}

/// Full-collocation surrogate on a fresh sample with the configured boundary share.
pub fn build_reference(cfg: &ExperimentConfig) -> Result<Surrogate> {
    let rc = &cfg.reference;
    let n_boundary = ((rc.n as f64) * rc.boundary_ratio).round() as usize;
    let n_interior = rc.n - n_boundary;
    let set = cfg.problem.sample(n_interior.max(1), n_boundary.max(1), stream_seed(cfg.seed, Stream::Reference))?;
    let position = |family: KernelFamily, shape: f64, dim: usize| match family {
        KernelFamily::Gaussian => PositionKernel::gaussian(shape, dim),
        KernelFamily::Matern => PositionKernel::matern(shape, dim),
    };
    let kernel = ProductKernel::new(
        position(rc.family, rc.shape_x, cfg.problem.dim_x())?,
        position(rc.family, rc.shape_mu, cfg.problem.dim_mu())?,
    );
    log::info!("building full-collocation reference with n = {}", set.len());
    full_collocation_solve(&kernel, &set.functionals, &set.targets())
}

fn write_selected(path: &Path, s: &Surrogate) -> Result<()> {
    let (dx, dmu) = (s.kernel().dim_x(), s.kernel().dim_mu());
    let mut out = CsvOut::create(path, &selected_header(dx, dmu).iter().map(String::as_str).collect::<Vec<_>>())?;
    for (i, (f, a)) in s.functionals().iter().zip(s.alpha()).enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(functional_fields(f));
        row.extend([fmt_f64(f.weight), fmt_f64(f.target), fmt_f64(*a)]);
        out.row(row)?;
    }
    out.finish()
}

/// Writes per-test-functional residuals; returns the max pointwise error
/// against the exact solution when one is known.
fn write_residuals(path: &Path, problem: &ParametricProblem, s: &Surrogate, test: &CandidateSet) -> Result<Option<f64>> {
    let header = residuals_header(test.dim_x(), test.dim_mu());
    let mut out = CsvOut::create(path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut worst: Option<f64> = None;
    for f in &test.functionals {
        let residual = (f.target - s.apply_functional(f)?).abs();
        let error = match problem.exact(&f.position, &f.parameter) {
            Some(u) => Some((u - s.eval(&f.position, &f.parameter)?).abs()),
            None => None,
        };
        if let Some(e) = error {
            worst = Some(worst.map_or(e, |w| w.max(e)));
        }
        let mut row = functional_fields(f);
        row.extend([fmt_f64(residual), opt_f64(error)]);
        out.row(row)?;
    }
    out.finish()?;
    Ok(worst)
}

fn write_slices(path: &Path, cfg: &ExperimentConfig, s: &Surrogate) -> Result<()> {
    let problem = &cfg.problem;
    let dx = problem.dim_x();
    let header = slices_header(dx, problem.dim_mu());
    let mut out = CsvOut::create(path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let bbox = problem.geometry.bounding_box();
    let first = axis(bbox[0].0, bbox[0].1, cfg.test.grid);
    let second = if dx > 1 { axis(bbox[1].0, bbox[1].1, cfg.test.grid) } else { vec![0.0] };
    let mut x: Vec<f64> = bbox.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    for &m in &cfg.test.slice_mu {
        let mu = [m];
        for &a in &first {
            for &b in &second {
                x[0] = a;
                if dx > 1 {
                    x[1] = b;
                }
                let mut row = vec![fmt_f64(m)];
                row.extend(x.iter().map(|&v| fmt_f64(v)));
                if problem.geometry.in_closure(&x, &mu) {
                    row.push(fmt_f64(s.eval(&x, &mu)?));
                    row.push(opt_f64(problem.exact(&x, &mu)));
                } else {
                    row.extend([String::new(), String::new()]);
                }
                out.row(row)?;
            }
        }
    }
    out.finish()
}

fn linf_error(problem: &ParametricProblem, s: &Surrogate, sites: &[Functional]) -> Result<Option<f64>> {
    let mut worst: Option<f64> = None;
    for f in sites {
        if let Some(u) = problem.exact(&f.position, &f.parameter) {
            let e = (u - s.eval(&f.position, &f.parameter)?).abs();
            worst = Some(worst.map_or(e, |w| w.max(e)));
        }
    }
    Ok(worst)
}

fn write_convergence(
    path: &Path,
    cfg: &ExperimentConfig,
    s: &Surrogate,
    history: &crate::greedy::History,
    test: &CandidateSet,
) -> Result<()> {
    let mut out = CsvOut::create(path, &CONVERGENCE_HEADER)?;
    for n in log_checkpoints(s.n(), cfg.test.checkpoints) {
        let truncated = s.truncated(n)?;
        let err = linf_error(&cfg.problem, &truncated, &test.functionals)?;
        out.row([
            cfg.name.clone(),
            cfg.problem.dim_x().to_string(),
            n.to_string(),
            opt_f64(history.max_residual_at(n)),
            opt_f64(err),
        ])?;
    }
    out.finish()
}

fn run_search(
    cfg: &ExperimentConfig,
    search: &SearchConfig,
    initial: &ModelSpec,
    training: &CandidateSet,
) -> Result<SearchResult> {
    let validation_set =
        cfg.problem.sample(search.n_interior, search.n_boundary, stream_seed(cfg.seed, Stream::Validation))?;
    let validation = ValidationSets::from_candidates(&validation_set, search.gamma_interior, search.gamma_boundary);
    consecutive_grid_search(&search.spec, initial, training, &validation)
}

fn write_search(dir: &Path, search: &SearchConfig, result: &SearchResult) -> Result<()> {
    result.write_csv(&dir.join("loss_table.csv"))?;
    let mut out = CsvOut::create(&dir.join("best.csv"), &BEST_HEADER)?;
    for (param, _) in &search.spec.stages {
        out.row([param.to_string(), fmt_f64(result.best.get(*param)), fmt_f64(result.best_loss)])?;
    }
    out.finish()
}

/// `run`: optional grid search, one greedy training, all artifacts.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    prepare_out_dir(&cfg.out_dir)?;
    let dir = cfg.out_dir.as_path();
    let training = training_set(cfg)?;
    let (mut model, _) = resolve_model(cfg, &training)?;
    if let Some(search) = &cfg.search {
        let result = run_search(cfg, search, &model, &training)?;
        write_search(dir, search, &result)?;
        model = result.best;
    }

    let start = Instant::now();
    let (surrogate, history) = model.train(&training)?;
    let train_time_s = start.elapsed().as_secs_f64();
    let stop_cause = history.stop_cause.unwrap_or(StopCause::MaxIterations);
    log::info!("{}: n = {} ({stop_cause}) in {train_time_s:.3} s", cfg.name, surrogate.n());

    history.write_csv(&dir.join("history.csv"))?;
    write_selected(&dir.join("selected.csv"), &surrogate)?;
    let test = test_set(cfg)?;
    let linf_test_error = write_residuals(&dir.join("residuals.csv"), &cfg.problem, &surrogate, &test)?;
    write_slices(&dir.join("slices.csv"), cfg, &surrogate)?;
    if cfg.test.checkpoints > 0 {
        write_convergence(&dir.join("convergence.csv"), cfg, &surrogate, &history, &test)?;
    }
    surrogate.save(&dir.join("surrogate.txt"))?;

    let n = surrogate.n();
    let report = RunReport {
        experiment: cfg.name.clone(),
        problem: cfg.problem.name(),
        seed: cfg.seed,
        n,
        n_interior: n - surrogate.n_boundary(),
        n_boundary: surrogate.n_boundary(),
        r_bnd: surrogate.boundary_ratio(),
        stop_cause,
        max_training_residual: history.max_residual_at(n).unwrap_or(history.initial_max_residual),
        linf_test_error,
        train_time_s,
    };
    report.write_csv(&dir.join("report.csv"))?;
    Ok(report)
}

/// `compare-beta`: one run per beta on shared candidates, errors on the
/// Cartesian test grid against the exact solution or a reference surrogate.
pub fn cmd_compare_beta(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    prepare_out_dir(&cfg.out_dir)?;
    let training = training_set(cfg)?;
    let (base, _) = resolve_model(cfg, &training)?;
    let grid = cartesian_test_grid(&cfg.problem, cfg.test.n_mu, cfg.test.grid);
    if grid.is_empty() {
        return Err(Error::Config("the Cartesian test grid has no points inside the domain".into()));
    }
    let (truth, error_reference): (Vec<f64>, &'static str) = if cfg.problem.has_exact() {
        let values = grid.iter().map(|(x, mu)| cfg.problem.exact(x, mu).expect("exact solution")).collect();
        (values, "exact")
    } else {
        let reference = build_reference(cfg)?;
        let values = grid.iter().map(|(x, mu)| reference.eval(x, mu)).collect::<Result<_>>()?;
        (values, "reference")
    };

    let mut rows = Vec::new();
    for (i, &beta) in cfg.compare.betas.iter().enumerate() {
        let mut model = base.clone();
        model.greedy.beta = beta;
        for (param, values) in &cfg.compare.overrides {
            model.set(*param, values[i]).map_err(|e| Error::Config(e.to_string()))?;
        }
        let start = Instant::now();
        let (s, history) = model.train(&training)?;
        let train_time_s = start.elapsed().as_secs_f64();
        let mut linf_error: f64 = 0.0;
        for ((x, mu), u) in grid.iter().zip(&truth) {
            linf_error = linf_error.max((u - s.eval(x, mu)?).abs());
        }
        log::info!("beta = {beta}: n = {}, r_bnd = {:.4}, error = {linf_error:.5e}", s.n(), s.boundary_ratio());
        rows.push(CompareRow {
            beta,
            n: s.n(),
            n_boundary: s.n_boundary(),
            r_bnd: s.boundary_ratio(),
            stop_cause: history.stop_cause.unwrap_or(StopCause::MaxIterations),
            linf_error,
            error_reference,
            shape_x: model.shape_x,
            shape_mu: model.shape_mu,
            w_boundary: model.w_boundary,
            train_time_s,
        });
    }

    let mut out = CsvOut::create(&cfg.out_dir.join("compare.csv"), &COMPARE_HEADER)?;
    for r in &rows {
        out.row([
            fmt_f64(r.beta),
            r.n.to_string(),
            r.n_boundary.to_string(),
            fmt_f64(r.r_bnd),
            r.stop_cause.to_string(),
            fmt_f64(r.linf_error),
            r.error_reference.to_string(),
            fmt_f64(r.shape_x),
            fmt_f64(r.shape_mu),
            fmt_f64(r.w_boundary),
            format!("{:.6}", r.train_time_s),
        ])?;
    }
    out.finish()?;
    Ok(rows)
}

/// `export-testset`: the Cartesian grid with exact values where known.
/// Returns the number of rows written.
pub fn cmd_export_testset(cfg: &ExperimentConfig) -> Result<usize> {
    prepare_out_dir(&cfg.out_dir)?;
    let problem = &cfg.problem;
    let header = testset_header(problem.dim_x(), problem.dim_mu());
    let mut out = CsvOut::create(&cfg.out_dir.join("testset.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let grid = cartesian_test_grid(problem, cfg.test.n_mu, cfg.test.grid);
    for (x, mu) in &grid {
        let mut row: Vec<String> = mu.iter().chain(x).map(|&v| fmt_f64(v)).collect();
        row.push(opt_f64(problem.exact(x, mu)));
        out.row(row)?;
    }
    out.finish()?;
    Ok(grid.len())
}

/// `search`: consecutive grid search only.
pub fn cmd_search(cfg: &ExperimentConfig) -> Result<SearchResult> {
    let search = cfg.search.as_ref().ok_or_else(|| Error::Config("the config has no [search] section".into()))?;
    prepare_out_dir(&cfg.out_dir)?;
    let training = training_set(cfg)?;
    let (model, _) = resolve_model(cfg, &training)?;
    let result = run_search(cfg, search, &model, &training)?;
    write_search(&cfg.out_dir, search, &result)?;
    Ok(result)
}

/// Applies command-line overrides on top of a loaded config.
pub fn apply_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>, betas: Option<Vec<f64>>) -> Result<()> {
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(betas) = betas {
        if betas.is_empty() || betas.iter().any(|b| b.is_nan() || *b < 0.0) {
            return Err(Error::Config("betas must be non-negative".into()));
        }
        if cfg.compare.overrides.iter().any(|(_, v)| v.len() != betas.len()) {
            return Err(Error::Config("--betas length does not match the per-beta lists in [compare]".into()));
        }
        cfg.compare.betas = betas;
    }
    Ok(())
}
