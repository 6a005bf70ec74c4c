//! Kernel expansions `s_n = Σ α_i v_{λ_i}` and the dense collocation solver.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, write_text};
use crate::kernels::{DiffOp, PositionKernel, ProductKernel, Site};
use crate::linalg::{self, LowerTriangular, SymMatrix};
use crate::problem::Functional;

/// Largest system assembled by [`full_collocation_solve`].
pub const MAX_DENSE: usize = 5000;

/// Relative tolerance of the build-time check `|K α - y| <= tol |y|`.
pub const SOLVE_CHECK_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Surrogate {
    kernel: ProductKernel,
    functionals: Vec<Functional>,
    alpha: Vec<f64>,
    chol: Option<LowerTriangular>,
    solve_residual: f64,
}

impl Surrogate {
    /// Wraps an expansion. The functionals' targets are the interpolation data.
    /// The relative residual `|K α - y| / |y|` is computed and kept for diagnostics.
    pub fn new(
        kernel: ProductKernel,
        functionals: Vec<Functional>,
        alpha: Vec<f64>,
        chol: Option<LowerTriangular>,
    ) -> Result<Self> {
        if functionals.is_empty() {
            return Err(Error::InvalidArgument("a surrogate needs at least one functional".into()));
        }
        if alpha.len() != functionals.len() {
            return Err(Error::DimensionMismatch { expected: functionals.len(), got: alpha.len() });
        }
        for f in &functionals {
            kernel.check_functional(f)?;
        }
        let mut s = Self { kernel, functionals, alpha, chol, solve_residual: 0.0 };
        s.solve_residual = s.relative_system_residual();
        if s.solve_residual > SOLVE_CHECK_TOL {
            log::debug!(
                "surrogate with n = {} solves its system only to relative residual {:.3e}",
                s.n(),
                s.solve_residual
            );
        }
        Ok(s)
    }

    fn relative_system_residual(&self) -> f64 {
        let y_norm = linalg::norm(&self.targets());
        let mut r2 = 0.0;
        for a in &self.functionals {
            let r = self.apply_unchecked(a) - a.target;
            r2 += r * r;
        }
        if y_norm > 0.0 {
            r2.sqrt() / y_norm
        } else {
            r2.sqrt()
        }
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn chol(&self) -> Option<&LowerTriangular> {
        self.chol.as_ref()
    }

    pub fn n(&self) -> usize {
        self.functionals.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.functionals.iter().filter(|f| !f.is_interior()).count()
    }

    /// Fraction `r_bnd` of boundary functionals.
    pub fn boundary_ratio(&self) -> f64 {
        self.n_boundary() as f64 / self.n() as f64
    }

    /// `|K α - y| / |y|` measured at construction.
    pub fn solve_residual(&self) -> f64 {
        self.solve_residual
    }

    pub fn targets(&self) -> Vec<f64> {
        self.functionals.iter().map(|f| f.target).collect()
    }

    /// `s_n(x, mu)`.
    pub fn eval(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        let z = Site::new(x, mu);
        self.kernel.check_site(z)?;
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: Site<'_>) -> f64 {
        self.functionals
            .iter()
            .zip(&self.alpha)
            .map(|(f, a)| a * self.kernel.gram_entry_unchecked(f.kind, f.site(), DiffOp::Identity, z))
            .sum()
    }

    /// `λ(s_n) = Σ α_i k_Λ(λ, λ_i)`.
    pub fn apply_functional(&self, lam: &Functional) -> Result<f64> {
        self.kernel.check_functional(lam)?;
        Ok(self.apply_unchecked(lam))
    }

    pub(crate) fn apply_unchecked(&self, lam: &Functional) -> f64 {
        self.functionals
            .iter()
            .zip(&self.alpha)
            .map(|(f, a)| a * self.kernel.functional_gram_unchecked(lam, f))
            .sum()
    }

    /// Squared native-space norm `y^T α`.
    pub fn native_norm_sq(&self) -> f64 {
        linalg::dot(&self.targets(), &self.alpha).max(0.0)
    }

    /// The expansion on the first `m` functionals, re-solved with the
    /// leading block of the retained factor. Needs the factor.
    pub fn truncated(&self, m: usize) -> Result<Surrogate> {
        let chol = self
            .chol
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("surrogate has no retained factor".into()))?;
        if m == 0 || m > self.n() {
            return Err(Error::InvalidArgument(format!("cannot truncate n = {} to {m}", self.n())));
        }
        let lead = chol.leading(m);
        let functionals = self.functionals[..m].to_vec();
        let y: Vec<f64> = functionals.iter().map(|f| f.target).collect();
        let alpha = lead.solve_normal(&y);
        Surrogate::new(self.kernel.clone(), functionals, alpha, Some(lead))
    }

    /// Writes the flat text format: a header with the kernels and sizes,
    /// then one `kind x.. mu.. target alpha` line per functional.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pde-greedy-surrogate 1");
        for (tag, k) in [("kernel_x", &self.kernel.kx), ("kernel_mu", &self.kernel.kmu)] {
            let params: Vec<String> = k.shape_parameters().into_iter().map(fmt_f64).collect();
            let _ = writeln!(out, "{tag} {} {}", k.family_name(), params.join(" "));
        }
        let _ = writeln!(out, "dims {} {}", self.kernel.dim_x(), self.kernel.dim_mu());
        let _ = writeln!(out, "n {}", self.n());
        for (f, a) in self.functionals.iter().zip(&self.alpha) {
            let mut line = f.kind.tag().to_string();
            for v in f.position.iter().chain(&f.parameter).chain([&f.target, a]) {
                line.push(' ');
                line.push_str(&fmt_f64(*v));
            }
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn from_text(text: &str, context: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse { context: format!("{context}:{line}"), msg: msg.into() };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() < 5 || lines[0].trim() != "pde-greedy-surrogate 1" {
            return Err(err(1, "missing surrogate header"));
        }
        let dims: Vec<&str> = lines[3].split_whitespace().collect();
        if dims.len() != 3 || dims[0] != "dims" {
            return Err(err(4, "expected 'dims <d_x> <d_mu>'"));
        }
        let dx: usize = dims[1].parse().map_err(|_| err(4, "bad d_x"))?;
        let dmu: usize = dims[2].parse().map_err(|_| err(4, "bad d_mu"))?;
        let parse_kernel = |idx: usize, tag: &str, dim: usize| -> Result<PositionKernel> {
            let parts: Vec<&str> = lines[idx].split_whitespace().collect();
            if parts.len() < 3 || parts[0] != tag {
                return Err(err(idx + 1, &format!("expected '{tag} <family> <params>'")));
            }
            let ctx = format!("{context}:{}", idx + 1);
            let params = parts[2..].iter().map(|p| parse_f64(p, &ctx)).collect::<Result<Vec<_>>>()?;
            PositionKernel::from_parts(parts[1], &params, dim)
        };
        let kernel = ProductKernel::new(parse_kernel(1, "kernel_x", dx)?, parse_kernel(2, "kernel_mu", dmu)?);
        let n: usize = lines[4]
            .strip_prefix("n ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| err(5, "expected 'n <count>'"))?;
        if lines.len() != 5 + n {
            return Err(err(5, &format!("expected {n} functional lines, found {}", lines.len() - 5)));
        }
        let mut functionals = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for (i, line) in lines[5..].iter().enumerate() {
            let ctx = format!("{context}:{}", i + 6);
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 1 + dx + dmu + 2 {
                return Err(err(i + 6, "wrong number of fields"));
            }
            let kind = DiffOp::from_tag(parts[0]).ok_or_else(|| err(i + 6, "bad kind"))?;
            let nums = parts[1..].iter().map(|p| parse_f64(p, &ctx)).collect::<Result<Vec<_>>>()?;
            functionals.push(Functional::new(
                kind,
                nums[..dx].to_vec(),
                nums[dx..dx + dmu].to_vec(),
                1.0,
                nums[dx + dmu],
            ));
            alpha.push(nums[dx + dmu + 1]);
        }
        Surrogate::new(kernel, functionals, alpha, None)
    }
}

/// Dense Gram matrix `K_ij = k_Λ(λ_i, λ_j)`.
pub fn assemble_gram(kernel: &ProductKernel, functionals: &[Functional]) -> Result<SymMatrix> {
    for f in functionals {
        kernel.check_functional(f)?;
    }
    let mut bad = None;
    let k = SymMatrix::from_lower_fn(functionals.len(), |i, j| {
        let v = kernel.functional_gram_unchecked(&functionals[i], &functionals[j]);
        if !v.is_finite() && bad.is_none() {
            bad = Some((i, j));
        }
        v
    });
    match bad {
        Some((first, second)) => Err(Error::NonFiniteGram { first, second }),
        None => Ok(k),
    }
}

/// Symmetric collocation on all given functionals: assembles the full Gram
/// matrix and solves `K α = y` by Cholesky with jitter escalation.
pub fn full_collocation_solve(kernel: &ProductKernel, functionals: &[Functional], y: &[f64]) -> Result<Surrogate> {
    let n = functionals.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no functionals given".into()));
    }
    if n > MAX_DENSE {
        return Err(Error::InvalidArgument(format!("dense collocation limited to {MAX_DENSE} functionals, got {n}")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let mut seen = HashSet::with_capacity(n);
    for (i, f) in functionals.iter().enumerate() {
        let key: (DiffOp, Vec<u64>) =
            (f.kind, f.position.iter().chain(&f.parameter).map(|v| v.to_bits()).collect());
        if !seen.insert(key) {
            return Err(Error::InvalidArgument(format!("functional {i} is a duplicate")));
        }
    }
    let k = assemble_gram(kernel, functionals)?;
    let (chol, jitter) = linalg::cholesky_jittered(&k)?;
    if jitter > 0.0 {
        log::info!("dense collocation needed diagonal jitter {jitter:.3e}");
    }
    let alpha = chol.solve_normal(y);
    let functionals: Vec<Functional> = functionals
        .iter()
        .zip(y)
        .map(|(f, &t)| Functional { target: t, ..f.clone() })
        .collect();
    Surrogate::new(kernel.clone(), functionals, alpha, Some(chol))
}
