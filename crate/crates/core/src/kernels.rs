//! Base kernels and their operator-applied (Riesz representer) entries.
//!
//! All derivative entries are closed forms. For a radial profile `phi(r)` the
//! Laplacian in `d` dimensions is `phi'' + (d - 1) phi' / r`; the Gaussian
//! forms are written in `s = r^2`, where no removable singularity appears,
//! and the quadratic Matérn forms simplify so that `phi'/r` is regular.

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::problem::Functional;

/// Differential operator acting on the position block of a joint point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiffOp {
    /// Point evaluation (Dirichlet boundary operator).
    Identity,
    /// `-Δ_x`, the interior Poisson operator.
    NegLaplacian,
}

impl DiffOp {
    pub fn is_interior(self) -> bool {
        matches!(self, DiffOp::NegLaplacian)
    }

    /// One-letter tag used in CSV files.
    pub fn tag(self) -> &'static str {
        match self {
            DiffOp::Identity => "B",
            DiffOp::NegLaplacian => "I",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag.trim() {
            "B" => Some(DiffOp::Identity),
            "I" => Some(DiffOp::NegLaplacian),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Family {
    GaussianIso { eps2: f64 },
    GaussianAniso { b: SymMatrix, trace_b: f64, trace_b2: f64 },
    MaternQuadratic { eps: f64 },
}

/// A translation-invariant kernel on `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionKernel {
    family: Family,
    dim: usize,
}

impl PositionKernel {
    /// Isotropic Gaussian `exp(-eps2 |x - x'|^2)`.
    pub fn gaussian(eps2: f64, dim: usize) -> Result<Self> {
        check_positive("eps2", eps2)?;
        check_dim_positive(dim)?;
        Ok(Self { family: Family::GaussianIso { eps2 }, dim })
    }

    /// Anisotropic Gaussian `exp(-(x - x')^T B (x - x'))` for SPD `B`.
    pub fn gaussian_aniso(b: SymMatrix) -> Result<Self> {
        let dim = b.dim();
        check_dim_positive(dim)?;
        if dim > MAX_ANISO_DIM {
            return Err(Error::InvalidArgument(format!(
                "anisotropic Gaussian supports at most {MAX_ANISO_DIM} dimensions"
            )));
        }
        if linalg::cholesky(&b).is_err() {
            return Err(Error::InvalidArgument("anisotropy matrix is not positive definite".into()));
        }
        let trace_b = b.trace();
        let b2 = b.matmul(&b);
        let trace_b2 = (0..dim).map(|i| b2[i * dim + i]).sum();
        Ok(Self { family: Family::GaussianAniso { b, trace_b, trace_b2 }, dim })
    }

    /// Quadratic Matérn `(3 + 3 eps r + eps^2 r^2) exp(-eps r)`.
    pub fn matern(eps: f64, dim: usize) -> Result<Self> {
        check_positive("eps", eps)?;
        check_dim_positive(dim)?;
        Ok(Self { family: Family::MaternQuadratic { eps }, dim })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Short family name used in file headers.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::GaussianIso { .. } => "gaussian",
            Family::GaussianAniso { .. } => "gaussian-aniso",
            Family::MaternQuadratic { .. } => "matern2",
        }
    }

    /// Shape parameters: `eps^2` for the isotropic Gaussian, `eps` for
    /// Matérn, the row-major entries of `B` for the anisotropic Gaussian.
    pub fn shape_parameters(&self) -> Vec<f64> {
        match &self.family {
            Family::GaussianIso { eps2 } => vec![*eps2],
            Family::GaussianAniso { b, .. } => b.as_slice().to_vec(),
            Family::MaternQuadratic { eps } => vec![*eps],
        }
    }

    /// Rebuilds a kernel from [`family_name`](Self::family_name) and
    /// [`shape_parameters`](Self::shape_parameters).
    pub fn from_parts(family: &str, params: &[f64], dim: usize) -> Result<Self> {
        match family {
            "gaussian" if params.len() == 1 => Self::gaussian(params[0], dim),
            "matern2" if params.len() == 1 => Self::matern(params[0], dim),
            "gaussian-aniso" if params.len() == dim * dim => {
                Self::gaussian_aniso(SymMatrix::from_row_major(dim, params.to_vec())?)
            }
            _ => Err(Error::InvalidArgument(format!(
                "cannot build kernel '{family}' from {} parameters in dimension {dim}",
                params.len()
            ))),
        }
    }

    /// `k(x, x)`, identical for all `x`.
    pub fn diagonal_value(&self) -> f64 {
        match self.family {
            Family::MaternQuadratic { .. } => 3.0,
            _ => 1.0,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `Δ` applied to the first argument.
    pub fn laplacian_first(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.laplacian_unchecked(x, y))
    }

    /// `Δ^[1] Δ^[2] k`, the bi-Laplacian of the profile.
    pub fn bilaplacian(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.bilaplacian_unchecked(x, y))
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        Error::check_dim(self.dim, x.len())?;
        Error::check_dim(self.dim, y.len())
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.family {
            Family::GaussianIso { eps2 } => (-eps2 * sq_dist(x, y)).exp(),
            Family::GaussianAniso { b, .. } => {
                let (q, _, _) = aniso_forms(b, x, y, false);
                (-q).exp()
            }
            Family::MaternQuadratic { eps } => {
                let er = eps * sq_dist(x, y).sqrt();
                (3.0 + 3.0 * er + er * er) * (-er).exp()
            }
        }
    }

    pub(crate) fn apply(&self, op_l: DiffOp, op_r: DiffOp, x: &[f64], y: &[f64]) -> f64 {
        match (op_l, op_r) {
            (DiffOp::Identity, DiffOp::Identity) => self.eval_unchecked(x, y),
            (DiffOp::NegLaplacian, DiffOp::Identity) | (DiffOp::Identity, DiffOp::NegLaplacian) => {
                -self.laplacian_unchecked(x, y)
            }
            (DiffOp::NegLaplacian, DiffOp::NegLaplacian) => self.bilaplacian_unchecked(x, y),
        }
    }

    fn laplacian_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim as f64;
        match &self.family {
            Family::GaussianIso { eps2 } => {
                let s = sq_dist(x, y);
                (4.0 * eps2 * eps2 * s - 2.0 * eps2 * d) * (-eps2 * s).exp()
            }
            Family::GaussianAniso { b, trace_b, .. } => {
                let (q, bh2, _) = aniso_forms(b, x, y, false);
                (4.0 * bh2 - 2.0 * trace_b) * (-q).exp()
            }
            Family::MaternQuadratic { eps } => {
                let er = eps * sq_dist(x, y).sqrt();
                eps * eps * (-er).exp() * (er * er - d * (1.0 + er))
            }
        }
    }

    fn bilaplacian_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim as f64;
        match &self.family {
            Family::GaussianIso { eps2 } => {
                let s = sq_dist(x, y);
                let e2 = *eps2;
                let e4 = e2 * e2;
                let lap_factor = 4.0 * e4 * s - 2.0 * e2 * d;
                (lap_factor * lap_factor + 8.0 * e4 * d - 32.0 * e4 * e2 * s) * (-e2 * s).exp()
            }
            Family::GaussianAniso { b, trace_b, trace_b2 } => {
                // q = h'Bh, a = h'B^2h, c = h'B^3h with h = x - y.
                let (q, a, c) = aniso_forms(b, x, y, true);
                let lap_factor = 4.0 * a - 2.0 * trace_b;
                (lap_factor * lap_factor + 8.0 * trace_b2 - 32.0 * c) * (-q).exp()
            }
            Family::MaternQuadratic { eps } => {
                let er = eps * sq_dist(x, y).sqrt();
                let e4 = eps * eps * eps * eps;
                e4 * (-er).exp() * (er * er - (2.0 * d + 3.0) * er + d * (d + 2.0))
            }
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_dim_positive(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidArgument("kernel dimension must be positive".into()))
    } else {
        Ok(())
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Largest supported dimension for the anisotropic Gaussian.
pub const MAX_ANISO_DIM: usize = 16;

/// Returns `(h'Bh, h'B^2h, h'B^3h)`; the last term only when `cubic` is set.
fn aniso_forms(b: &SymMatrix, x: &[f64], y: &[f64], cubic: bool) -> (f64, f64, f64) {
    let n = b.dim();
    let mut h = [0.0; MAX_ANISO_DIM];
    let mut bh = [0.0; MAX_ANISO_DIM];
    for i in 0..n {
        h[i] = x[i] - y[i];
    }
    for (i, out) in bh.iter_mut().enumerate().take(n) {
        *out = linalg::dot(b.row(i), &h[..n]);
    }
    let q = linalg::dot(&h[..n], &bh[..n]);
    let a = linalg::dot(&bh[..n], &bh[..n]);
    let c = if cubic {
        (0..n).map(|i| bh[i] * linalg::dot(b.row(i), &bh[..n])).sum()
    } else {
        0.0
    };
    (q, a, c)
}

/// Borrowed joint point `(x, mu)`.
#[derive(Clone, Copy, Debug)]
pub struct Site<'a> {
    pub x: &'a [f64],
    pub mu: &'a [f64],
}

impl<'a> Site<'a> {
    pub fn new(x: &'a [f64], mu: &'a [f64]) -> Self {
        Self { x, mu }
    }
}

/// Product kernel `k_x(x, x') k_mu(mu, mu')`; operators act on `k_x` only.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductKernel {
    pub kx: PositionKernel,
    pub kmu: PositionKernel,
}

impl ProductKernel {
    pub fn new(kx: PositionKernel, kmu: PositionKernel) -> Self {
        Self { kx, kmu }
    }

    pub fn dim_x(&self) -> usize {
        self.kx.dim()
    }

    pub fn dim_mu(&self) -> usize {
        self.kmu.dim()
    }

    pub fn eval(&self, a: Site<'_>, b: Site<'_>) -> Result<f64> {
        self.gram_entry(DiffOp::Identity, a, DiffOp::Identity, b)
    }

    /// `(op_l^[1] op_r^[2] k)(a, b)`.
    pub fn gram_entry(&self, op_l: DiffOp, a: Site<'_>, op_r: DiffOp, b: Site<'_>) -> Result<f64> {
        self.check_site(a)?;
        self.check_site(b)?;
        Ok(self.gram_entry_unchecked(op_l, a, op_r, b))
    }

    #[inline]
    pub(crate) fn gram_entry_unchecked(
        &self,
        op_l: DiffOp,
        a: Site<'_>,
        op_r: DiffOp,
        b: Site<'_>,
    ) -> f64 {
        self.kx.apply(op_l, op_r, a.x, b.x) * self.kmu.eval_unchecked(a.mu, b.mu)
    }

    /// Functional kernel `<v_a, v_b>`: first slot carries `a`'s operator.
    pub fn functional_gram(&self, a: &Functional, b: &Functional) -> Result<f64> {
        self.gram_entry(a.kind, a.site(), b.kind, b.site())
    }

    #[inline]
    pub(crate) fn functional_gram_unchecked(&self, a: &Functional, b: &Functional) -> f64 {
        self.gram_entry_unchecked(a.kind, a.site(), b.kind, b.site())
    }

    /// Riesz representer of `lam` evaluated at `z`.
    pub fn riesz_eval(&self, lam: &Functional, z: Site<'_>) -> Result<f64> {
        self.gram_entry(lam.kind, lam.site(), DiffOp::Identity, z)
    }

    pub(crate) fn check_site(&self, s: Site<'_>) -> Result<()> {
        Error::check_dim(self.dim_x(), s.x.len())?;
        Error::check_dim(self.dim_mu(), s.mu.len())
    }

    pub(crate) fn check_functional(&self, f: &Functional) -> Result<()> {
        self.check_site(f.site())
    }
}
