//! Hyperparameter selection and kernel construction helpers.
//!
//! Shape parameters and the boundary weight are tuned by consecutive 1D grid
//! searches on a weighted sum of the worst interior and boundary validation
//! residuals. Anisotropic position kernels are built from a dominant
//! direction found by an active-subspace analysis of source gradients.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::greedy::{run_greedy, GreedyConfig, History, StopCause};
use crate::io::{fmt_f64, CsvOut};
use crate::kernels::{PositionKernel, ProductKernel};
use crate::linalg::{self, SymMatrix};
use crate::problem::{CandidateSet, Functional};
use crate::surrogate::Surrogate;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Matern,
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(Self::Gaussian),
            "matern" | "matern2" => Ok(Self::Matern),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Matern => "matern",
        })
    }
}

/// Everything needed to train one surrogate besides the data.
///
/// Shape parameters are stored in each family's native form: `eps^2` for
/// Gaussians and `eps` for the quadratic Matérn kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub family_x: KernelFamily,
    pub family_mu: KernelFamily,
    pub shape_x: f64,
    pub shape_mu: f64,
    /// Replaces the isotropic position kernel with `exp(-h^T B h)`.
    pub aniso: Option<SymMatrix>,
    pub w_interior: f64,
    pub w_boundary: f64,
    pub greedy: GreedyConfig,
}

impl ModelSpec {
    pub fn build_kernel(&self, dim_x: usize, dim_mu: usize) -> Result<ProductKernel> {
        let kx = match &self.aniso {
            Some(b) => {
                Error::check_dim(dim_x, b.dim())?;
                PositionKernel::gaussian_aniso(b.clone())?
            }
            None => build_position(self.family_x, self.shape_x, dim_x)?,
        };
        Ok(ProductKernel::new(kx, build_position(self.family_mu, self.shape_mu, dim_mu)?))
    }

    /// Sets a tunable parameter by name.
    pub fn set(&mut self, param: SearchParam, value: f64) -> Result<()> {
        if !(value > 0.0) {
            return Err(Error::InvalidArgument(format!("{param} must be positive, got {value}")));
        }
        match param {
            SearchParam::EpsX2 | SearchParam::EpsX if self.aniso.is_some() => {
                return Err(Error::Config(format!("{param} cannot be tuned with an anisotropic kernel")));
            }
            SearchParam::EpsX2 => self.shape_x = from_squared(self.family_x, value),
            SearchParam::EpsX => self.shape_x = from_plain(self.family_x, value),
            SearchParam::EpsMu2 => self.shape_mu = from_squared(self.family_mu, value),
            SearchParam::EpsMu => self.shape_mu = from_plain(self.family_mu, value),
            SearchParam::WBoundary => self.w_boundary = value,
        }
        Ok(())
    }

    /// Current value of a tunable parameter in the units used by `set`.
    pub fn get(&self, param: SearchParam) -> f64 {
        let squared = |family, shape: f64| match family {
            KernelFamily::Gaussian => shape,
            KernelFamily::Matern => shape * shape,
        };
        match param {
            SearchParam::EpsX2 => squared(self.family_x, self.shape_x),
            SearchParam::EpsX => squared(self.family_x, self.shape_x).sqrt(),
            SearchParam::EpsMu2 => squared(self.family_mu, self.shape_mu),
            SearchParam::EpsMu => squared(self.family_mu, self.shape_mu).sqrt(),
            SearchParam::WBoundary => self.w_boundary,
        }
    }

    /// Trains on a copy of `training` with this spec's weights.
    pub fn train(&self, training: &CandidateSet) -> Result<(Surrogate, History)> {
        let kernel = self.build_kernel(training.dim_x(), training.dim_mu())?;
        let mut set = training.clone();
        set.set_weights(self.w_interior, self.w_boundary);
        run_greedy(&kernel, &set, self.greedy)
    }
}

fn build_position(family: KernelFamily, shape: f64, dim: usize) -> Result<PositionKernel> {
    match family {
        KernelFamily::Gaussian => PositionKernel::gaussian(shape, dim),
        KernelFamily::Matern => PositionKernel::matern(shape, dim),
    }
}

fn from_squared(family: KernelFamily, eps2: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => eps2,
        KernelFamily::Matern => eps2.sqrt(),
    }
}

fn from_plain(family: KernelFamily, eps: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => eps * eps,
        KernelFamily::Matern => eps,
    }
}

/// Tunable hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchParam {
    EpsX2,
    EpsMu2,
    EpsX,
    EpsMu,
    WBoundary,
}

impl FromStr for SearchParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eps_x2" => Ok(Self::EpsX2),
            "eps_mu2" => Ok(Self::EpsMu2),
            "eps_x" => Ok(Self::EpsX),
            "eps_mu" => Ok(Self::EpsMu),
            "w_B" | "w_b" | "w_boundary" => Ok(Self::WBoundary),
            other => Err(Error::Config(format!("unknown search parameter '{other}'"))),
        }
    }
}

impl fmt::Display for SearchParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EpsX2 => "eps_x2",
            Self::EpsMu2 => "eps_mu2",
            Self::EpsX => "eps_x",
            Self::EpsMu => "eps_mu",
            Self::WBoundary => "w_B",
        })
    }
}

/// Ordered list of 1D searches.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpec {
    pub stages: Vec<(SearchParam, Vec<f64>)>,
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("search needs at least one stage".into()));
        }
        for (param, grid) in &self.stages {
            if grid.is_empty() {
                return Err(Error::Config(format!("grid for {param} is empty")));
            }
            if grid.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config(format!("grid for {param} must be positive")));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("grid for {param} must be strictly ascending")));
            }
        }
        Ok(())
    }
}

/// Logarithmic grid with `per_decade` points per decade on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|i| lo * 10f64.powf(decades * i as f64 / steps.max(1) as f64))
        .collect()
}

/// Default grids: 7 points per decade, `[1e-3, 1e2]` for squared shapes and
/// `[1e-1, 1e3]` for the boundary weight.
pub fn default_grid(param: SearchParam) -> Vec<f64> {
    match param {
        SearchParam::EpsX2 | SearchParam::EpsMu2 => log_grid(1e-3, 1e2, 7),
        SearchParam::EpsX | SearchParam::EpsMu => log_grid(1e-3_f64.sqrt(), 1e2_f64.sqrt(), 7),
        SearchParam::WBoundary => log_grid(1e-1, 1e3, 7),
    }
}

/// Held-out functionals and loss weights.
#[derive(Clone, Debug)]
pub struct ValidationSets {
    pub interior: Vec<Functional>,
    pub boundary: Vec<Functional>,
    pub gamma_interior: f64,
    pub gamma_boundary: f64,
}

impl ValidationSets {
    pub fn from_candidates(set: &CandidateSet, gamma_interior: f64, gamma_boundary: f64) -> Self {
        Self {
            interior: set.interior().to_vec(),
            boundary: set.boundary().to_vec(),
            gamma_interior,
            gamma_boundary,
        }
    }
}

/// `γ_L max_{L,val} |y - λ(s)| + γ_B max_{B,val} |y - λ(s)|`.
pub fn validation_loss(s: &Surrogate, v: &ValidationSets) -> Result<f64> {
    if v.interior.is_empty() || v.boundary.is_empty() {
        return Err(Error::InvalidArgument("validation sets must be non-empty".into()));
    }
    let worst = |fs: &[Functional]| -> Result<f64> {
        fs.iter().try_fold(0.0_f64, |m, f| Ok(m.max((f.target - s.apply_functional(f)?).abs())))
    };
    Ok(v.gamma_interior * worst(&v.interior)? + v.gamma_boundary * worst(&v.boundary)?)
}

/// One grid evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub stage: usize,
    pub parameter: SearchParam,
    pub value: f64,
    pub validation_loss: f64,
    pub n_final: usize,
    pub stop_cause: StopCause,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: ModelSpec,
    pub best_loss: f64,
    pub table: Vec<LossRow>,
}

impl SearchResult {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out =
            CsvOut::create(path, &["stage", "parameter", "value", "validation_loss", "n_final", "stop_cause"])?;
        for r in &self.table {
            out.row([
                r.stage.to_string(),
                r.parameter.to_string(),
                fmt_f64(r.value),
                fmt_f64(r.validation_loss),
                r.n_final.to_string(),
                r.stop_cause.to_string(),
            ])?;
        }
        out.finish()
    }
}

/// Tunes the parameters of `spec` one at a time, each fixed at its argmin
/// (ties to the smaller value) before the next stage. Every grid point is a
/// fresh training run.
pub fn consecutive_grid_search(
    spec: &SearchSpec,
    initial: &ModelSpec,
    training: &CandidateSet,
    validation: &ValidationSets,
) -> Result<SearchResult> {
    spec.validate()?;
    let mut best = initial.clone();
    let mut best_loss = f64::INFINITY;
    let mut table = Vec::new();
    for (stage, (param, grid)) in spec.stages.iter().enumerate() {
        let mut stage_best: Option<(f64, f64)> = None;
        for &value in grid {
            let mut trial = best.clone();
            trial.set(*param, value)?;
            let wrap = |e: Error| Error::SearchFailed { parameter: param.to_string(), value, source: Box::new(e) };
            let (surrogate, history) = trial.train(training).map_err(wrap)?;
            let loss = validation_loss(&surrogate, validation).map_err(wrap)?;
            log::info!("stage {stage}: {param} = {value:.6e} -> loss {loss:.6e} (n = {})", surrogate.n());
            table.push(LossRow {
                stage,
                parameter: *param,
                value,
                validation_loss: loss,
                n_final: surrogate.n(),
                stop_cause: history.stop_cause.unwrap_or(StopCause::MaxIterations),
            });
            if stage_best.is_none_or(|(_, l)| loss < l) {
                stage_best = Some((value, loss));
            }
        }
        let (value, loss) = stage_best.expect("grids are non-empty");
        best.set(*param, value)?;
        best_loss = loss;
    }
    Ok(SearchResult { best, best_loss, table })
}

/// Dominant direction of the uncentred gradient second-moment matrix
/// `(1/N) Σ g g^T`, unit length with its first non-zero entry non-negative.
pub fn active_subspace_direction(gradients: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = gradients.first().map_or(0, Vec::len);
    if dim == 0 || gradients.len() < dim {
        return Err(Error::InvalidArgument(format!(
            "need at least {dim} gradient samples of positive dimension, got {}",
            gradients.len()
        )));
    }
    let mut m = SymMatrix::zeros(dim);
    for g in gradients {
        Error::check_dim(dim, g.len())?;
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, m.get(i, j) + g[i] * g[j]);
            }
        }
    }
    let n = gradients.len() as f64;
    for i in 0..dim {
        for j in 0..=i {
            m.set(i, j, m.get(i, j) / n);
        }
    }
    if m.max_abs() == 0.0 {
        return Err(Error::Degenerate("all gradient samples are zero".into()));
    }
    let pair = linalg::power_iteration(&m, 1e-10, 1_000_000)?;
    let mut v = pair.vector;
    let tiny = 1e-12 * v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if let Some(first) = v.iter().find(|c| c.abs() > tiny) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
    Ok(v)
}

/// `B = V diag(along, across, ..., across) V^T`, with `V` completing `v1`
/// to an orthonormal basis by Gram-Schmidt on the standard basis (the
/// standard vector most aligned with `v1` is dropped).
pub fn build_anisotropic_b(v1: &[f64], along: f64, across: f64) -> Result<SymMatrix> {
    let d = v1.len();
    if d == 0 || (linalg::norm(v1) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("direction must be a unit vector".into()));
    }
    if !(along > 0.0) || !(across > 0.0) {
        return Err(Error::InvalidArgument("eigenvalues must be positive".into()));
    }
    let drop = (0..d).max_by(|&a, &b| v1[a].abs().total_cmp(&v1[b].abs())).unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = vec![v1.to_vec()];
    for k in (0..d).filter(|&k| k != drop) {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let c = linalg::dot(&e, q);
                e.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        linalg::normalize(&mut e);
        basis.push(e);
    }
    let scales: Vec<f64> = (0..d).map(|i| if i == 0 { along } else { across }).collect();
    Ok(SymMatrix::from_lower_fn(d, |i, j| {
        basis.iter().zip(&scales).map(|(v, s)| s * v[i] * v[j]).sum()
    }))
}
