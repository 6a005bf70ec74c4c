//! Parametric Poisson benchmark problems and candidate functional sampling.
//!
//! Every problem is `-Δ_x u(., mu) = f(., mu)` in `Ω(mu)` with Dirichlet data
//! `u = g` on `∂Ω(mu)`. Interior functionals carry `f`, boundary ones `g`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, CsvOut};
use crate::kernels::{DiffOp, Site};

/// One collocation condition `δ_x ∘ L(mu)` or `δ_x ∘ B(mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    pub kind: DiffOp,
    pub position: Vec<f64>,
    pub parameter: Vec<f64>,
    /// Selection weight `w(λ)`; enters the greedy criterion only.
    pub weight: f64,
    pub target: f64,
}

impl Functional {
    pub fn new(kind: DiffOp, position: Vec<f64>, parameter: Vec<f64>, weight: f64, target: f64) -> Self {
        Self { kind, position, parameter, weight, target }
    }

    #[inline]
    pub fn site(&self) -> Site<'_> {
        Site::new(&self.position, &self.parameter)
    }

    pub fn is_interior(&self) -> bool {
        self.kind.is_interior()
    }
}

/// Candidate functionals for one parametric problem. Interior functionals
/// come first, followed by the boundary ones.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub functionals: Vec<Functional>,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub seed: Option<u64>,
}

impl CandidateSet {
    /// Builds a set from arbitrary functionals, reordering them interior first.
    pub fn from_functionals(functionals: Vec<Functional>) -> Self {
        let (mut interior, boundary): (Vec<_>, Vec<_>) =
            functionals.into_iter().partition(|f| f.is_interior());
        let n_interior = interior.len();
        let n_boundary = boundary.len();
        interior.extend(boundary);
        Self { functionals: interior, n_interior, n_boundary, seed: None }
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn dim_x(&self) -> usize {
        self.functionals.first().map_or(0, |f| f.position.len())
    }

    pub fn dim_mu(&self) -> usize {
        self.functionals.first().map_or(0, |f| f.parameter.len())
    }

    pub fn interior(&self) -> &[Functional] {
        &self.functionals[..self.n_interior]
    }

    pub fn boundary(&self) -> &[Functional] {
        &self.functionals[self.n_interior..]
    }

    pub fn targets(&self) -> Vec<f64> {
        self.functionals.iter().map(|f| f.target).collect()
    }

    /// Sets `w(λ)` to `w_interior` / `w_boundary` by kind.
    pub fn set_weights(&mut self, w_interior: f64, w_boundary: f64) {
        for f in &mut self.functionals {
            f.weight = if f.is_interior() { w_interior } else { w_boundary };
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let (dx, dmu) = (self.dim_x(), self.dim_mu());
        let mut header = vec!["kind".to_string()];
        header.extend((1..=dx).map(|i| format!("x_{i}")));
        header.extend((1..=dmu).map(|i| format!("mu_{i}")));
        header.push("weight".into());
        header.push("target".into());
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut out = CsvOut::create(path, &header_ref)?;
        for f in &self.functionals {
            let mut row = vec![f.kind.tag().to_string()];
            row.extend(f.position.iter().chain(&f.parameter).map(|&v| fmt_f64(v)));
            row.push(fmt_f64(f.weight));
            row.push(fmt_f64(f.target));
            out.row(&row)?;
        }
        out.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header = reader.headers()?.clone();
        let ctx = path.display().to_string();
        if header.get(0) != Some("kind") {
            return Err(Error::Parse { context: ctx, msg: "first column must be 'kind'".into() });
        }
        let dx = header.iter().filter(|h| h.starts_with("x_")).count();
        let dmu = header.iter().filter(|h| h.starts_with("mu_")).count();
        if header.len() != dx + dmu + 3
            || header.get(dx + dmu + 1) != Some("weight")
            || header.get(dx + dmu + 2) != Some("target")
        {
            return Err(Error::Parse { context: ctx, msg: "unexpected header layout".into() });
        }
        let mut functionals = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let here = format!("{ctx}:{}", line + 2);
            let kind = DiffOp::from_tag(&rec[0])
                .ok_or_else(|| Error::Parse { context: here.clone(), msg: format!("bad kind '{}'", &rec[0]) })?;
            let nums = (1..rec.len()).map(|i| parse_f64(&rec[i], &here)).collect::<Result<Vec<_>>>()?;
            functionals.push(Functional::new(
                kind,
                nums[..dx].to_vec(),
                nums[dx..dx + dmu].to_vec(),
                nums[dx + dmu],
                nums[dx + dmu + 1],
            ));
        }
        Ok(Self::from_functionals(functionals))
    }
}

/// Position-parameter geometry families.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// `Ω(mu) = B_1(0) ∪ B_1((mu, 0))`, `mu ∈ [0, 1.1]`.
    MovingCircles,
    /// `Ω = (0,1)^dim_x`, scalar `mu` uniform in `mu_range`.
    UnitCube { dim_x: usize, mu_range: (f64, f64) },
}

pub const MOVING_CIRCLES_MU: (f64, f64) = (0.0, 1.1);
const BOX_X: (f64, f64) = (-1.0, 2.1);
const BOX_Y: (f64, f64) = (-1.0, 1.0);

impl Geometry {
    pub fn dim_x(&self) -> usize {
        match self {
            Geometry::MovingCircles => 2,
            Geometry::UnitCube { dim_x, .. } => *dim_x,
        }
    }

    pub fn mu_range(&self) -> (f64, f64) {
        match self {
            Geometry::MovingCircles => MOVING_CIRCLES_MU,
            Geometry::UnitCube { mu_range, .. } => *mu_range,
        }
    }

    /// Axis-aligned box containing `Ω(mu)` for all parameters.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            Geometry::MovingCircles => vec![BOX_X, BOX_Y],
            Geometry::UnitCube { dim_x, .. } => vec![(0.0, 1.0); *dim_x],
        }
    }

    /// Open-domain membership `x ∈ Ω(mu)`.
    pub fn contains(&self, x: &[f64], mu: &[f64]) -> bool {
        match self {
            Geometry::MovingCircles => {
                let m = mu[0];
                x[0] * x[0] + x[1] * x[1] < 1.0 || (x[0] - m).powi(2) + x[1] * x[1] < 1.0
            }
            Geometry::UnitCube { .. } => x.iter().all(|&v| v > 0.0 && v < 1.0),
        }
    }

    /// Membership in the closure of `Ω(mu)`.
    pub fn in_closure(&self, x: &[f64], mu: &[f64]) -> bool {
        self.contains(x, mu) || self.on_boundary(x, mu, 1e-12)
    }

    /// Whether `x` satisfies the defining equation of `∂Ω(mu)` within `tol`.
    pub fn on_boundary(&self, x: &[f64], mu: &[f64], tol: f64) -> bool {
        match self {
            Geometry::MovingCircles => {
                let d0 = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let d1 = ((x[0] - mu[0]).powi(2) + x[1] * x[1]).sqrt();
                ((d0 - 1.0).abs() <= tol && d1 >= 1.0 - tol) || ((d1 - 1.0).abs() <= tol && d0 >= 1.0 - tol)
            }
            Geometry::UnitCube { .. } => {
                x.iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
                    && x.iter().any(|&v| v == 0.0 || v == 1.0)
            }
        }
    }

    /// Samples sites with zero targets and unit weights.
    pub fn sample(&self, n_interior: usize, n_boundary: usize, seed: u64) -> Result<CandidateSet> {
        match self {
            Geometry::MovingCircles => sample_moving_circles(n_interior, n_boundary, seed),
            Geometry::UnitCube { dim_x, mu_range } => {
                sample_unit_cube(*dim_x, *mu_range, n_interior, n_boundary, seed)
            }
        }
    }
}

fn check_counts(n_interior: usize, n_boundary: usize) -> Result<()> {
    if n_interior == 0 || n_boundary == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample counts must be positive (got {n_interior} interior, {n_boundary} boundary)"
        )));
    }
    Ok(())
}

/// Keeps sampled sites pairwise distinct (bitwise).
struct Distinct(HashSet<Vec<u64>>);

impl Distinct {
    fn new(capacity: usize) -> Self {
        Self(HashSet::with_capacity(capacity))
    }

    fn insert(&mut self, x: &[f64], mu: &[f64]) -> bool {
        self.0.insert(x.iter().chain(mu).map(|v| v.to_bits()).collect())
    }
}

#[inline]
fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    a + (b - a) * rng.gen::<f64>()
}

/// Moving-circles sampler: rejection sampling in the tight bounding box for
/// the interior, uniform angle on a uniformly chosen circle for the boundary
/// (rejected when strictly inside the other circle).
pub fn sample_moving_circles(n_interior: usize, n_boundary: usize, seed: u64) -> Result<CandidateSet> {
    check_counts(n_interior, n_boundary)?;
    let geometry = Geometry::MovingCircles;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = Distinct::new(n_interior + n_boundary);
    let mut functionals = Vec::with_capacity(n_interior + n_boundary);
    while functionals.len() < n_interior {
        let mu = [uniform(&mut rng, MOVING_CIRCLES_MU)];
        let x = [uniform(&mut rng, BOX_X), uniform(&mut rng, BOX_Y)];
        if geometry.contains(&x, &mu) && seen.insert(&x, &mu) {
            functionals.push(Functional::new(DiffOp::NegLaplacian, x.to_vec(), mu.to_vec(), 1.0, 0.0));
        }
    }
    while functionals.len() < n_interior + n_boundary {
        let mu = [uniform(&mut rng, MOVING_CIRCLES_MU)];
        let second = rng.gen::<bool>();
        let angle = uniform(&mut rng, (0.0, 2.0 * PI));
        let (center, other) = if second { (mu[0], 0.0) } else { (0.0, mu[0]) };
        let x = [center + angle.cos(), angle.sin()];
        let inside_other = (x[0] - other).powi(2) + x[1] * x[1] < (1.0 - 1e-12_f64).powi(2);
        if !inside_other && seen.insert(&x, &mu) {
            functionals.push(Functional::new(DiffOp::Identity, x.to_vec(), mu.to_vec(), 1.0, 0.0));
        }
    }
    Ok(CandidateSet { functionals, n_interior, n_boundary, seed: Some(seed) })
}

/// Unit-hypercube sampler with a scalar parameter. Boundary sites fix one
/// uniformly chosen coordinate to 0 or 1.
pub fn sample_unit_cube(
    dim_x: usize,
    mu_range: (f64, f64),
    n_interior: usize,
    n_boundary: usize,
    seed: u64,
) -> Result<CandidateSet> {
    check_counts(n_interior, n_boundary)?;
    if dim_x == 0 {
        return Err(Error::InvalidArgument("dim_x must be at least 1".into()));
    }
    if !(mu_range.0 <= mu_range.1) {
        return Err(Error::InvalidArgument(format!("invalid parameter range {mu_range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = Distinct::new(n_interior + n_boundary);
    let mut functionals = Vec::with_capacity(n_interior + n_boundary);
    while functionals.len() < n_interior {
        let x: Vec<f64> = (0..dim_x).map(|_| rng.gen::<f64>()).collect();
        let mu = vec![uniform(&mut rng, mu_range)];
        // gen::<f64>() is in [0, 1); the open cube excludes 0.
        if x.iter().all(|&v| v > 0.0) && seen.insert(&x, &mu) {
            functionals.push(Functional::new(DiffOp::NegLaplacian, x, mu, 1.0, 0.0));
        }
    }
    while functionals.len() < n_interior + n_boundary {
        let j = rng.gen_range(0..dim_x);
        let side = if rng.gen::<bool>() { 1.0 } else { 0.0 };
        let mut x: Vec<f64> = (0..dim_x).map(|_| rng.gen::<f64>()).collect();
        x[j] = side;
        let mu = vec![uniform(&mut rng, mu_range)];
        if seen.insert(&x, &mu) {
            functionals.push(Functional::new(DiffOp::Identity, x, mu, 1.0, 0.0));
        }
    }
    Ok(CandidateSet { functionals, n_interior, n_boundary, seed: Some(seed) })
}

/// Names of the built-in benchmark problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    MovingCirclesSmooth,
    MovingCirclesSingular,
    MovingSource,
    /// Moving source with support radius 1/4: `50 max(1 - 16 |x - m|^2, 0)`.
    MovingSourceLocal,
    SinusHighDim { dim_x: usize },
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "moving-circles-smooth" => return Ok(Self::MovingCirclesSmooth),
            "moving-circles-singular" => return Ok(Self::MovingCirclesSingular),
            "moving-source" => return Ok(Self::MovingSource),
            "moving-source-local" => return Ok(Self::MovingSourceLocal),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("sinus-highdim") {
            let digits = rest.trim_start_matches(['-', ':', '(']).trim_end_matches(')');
            if let Ok(dim_x) = digits.parse::<usize>() {
                if dim_x >= 1 {
                    return Ok(Self::SinusHighDim { dim_x });
                }
            }
        }
        Err(Error::Config(format!("unknown problem '{s}'")))
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MovingCirclesSmooth => write!(f, "moving-circles-smooth"),
            Self::MovingCirclesSingular => write!(f, "moving-circles-singular"),
            Self::MovingSource => write!(f, "moving-source"),
            Self::MovingSourceLocal => write!(f, "moving-source-local"),
            Self::SinusHighDim { dim_x } => write!(f, "sinus-highdim-{dim_x}"),
        }
    }
}

/// A fully specified parametric boundary value problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricProblem {
    pub kind: ProblemKind,
    pub geometry: Geometry,
}

/// Looks up a benchmark by name, e.g. `moving-source` or `sinus-highdim-5`.
pub fn make_problem(name: &str) -> Result<ParametricProblem> {
    Ok(ParametricProblem::new(name.parse()?))
}

impl ParametricProblem {
    pub fn new(kind: ProblemKind) -> Self {
        let geometry = match kind {
            ProblemKind::MovingCirclesSmooth | ProblemKind::MovingCirclesSingular => Geometry::MovingCircles,
            ProblemKind::MovingSource | ProblemKind::MovingSourceLocal => Geometry::UnitCube { dim_x: 2, mu_range: (0.0, 1.0) },
            ProblemKind::SinusHighDim { dim_x } => Geometry::UnitCube { dim_x, mu_range: (0.0, 1.0) },
        };
        Self { kind, geometry }
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    pub fn dim_x(&self) -> usize {
        self.geometry.dim_x()
    }

    pub fn dim_mu(&self) -> usize {
        1
    }

    pub fn has_exact(&self) -> bool {
        matches!(self.kind, ProblemKind::MovingCirclesSmooth | ProblemKind::SinusHighDim { .. })
    }

    /// Source term `f(x, mu)`.
    pub fn source(&self, x: &[f64], mu: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::MovingCirclesSmooth => -2.0,
            ProblemKind::MovingCirclesSingular => -1.0,
            ProblemKind::MovingSource => {
                let m = moving_source_center(mu[0]);
                let r2 = (x[0] - m).powi(2) + (x[1] - m).powi(2);
                50.0 * (1.0 - r2 / 16.0).max(0.0)
            }
            ProblemKind::MovingSourceLocal => {
                let m = moving_source_center(mu[0]);
                let r2 = (x[0] - m).powi(2) + (x[1] - m).powi(2);
                50.0 * (1.0 - 16.0 * r2).max(0.0)
            }
            ProblemKind::SinusHighDim { dim_x } => {
                let (phase, k2) = sinus_phase(x, mu[0], dim_x);
                k2 * phase.sin()
            }
        }
    }

    /// Dirichlet data `g(x, mu)`.
    pub fn boundary_value(&self, x: &[f64], mu: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::MovingCirclesSingular | ProblemKind::MovingSource | ProblemKind::MovingSourceLocal => 0.0,
            _ => self.exact(x, mu).unwrap_or(0.0),
        }
    }

    /// Exact solution where one is known.
    pub fn exact(&self, x: &[f64], mu: &[f64]) -> Option<f64> {
        match self.kind {
            ProblemKind::MovingCirclesSmooth => Some(0.5 * (x[0] * x[0] + x[1] * x[1] + mu[0] * mu[0])),
            ProblemKind::SinusHighDim { dim_x } => Some(sinus_phase(x, mu[0], dim_x).0.sin()),
            _ => None,
        }
    }

    /// Target value `λ(u)` for a functional of the given kind.
    pub fn target(&self, kind: DiffOp, x: &[f64], mu: &[f64]) -> f64 {
        match kind {
            DiffOp::NegLaplacian => self.source(x, mu),
            DiffOp::Identity => self.boundary_value(x, mu),
        }
    }

    /// Gradient of `f` in `x` by central differences.
    pub fn source_gradient(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let fp = self.source(&xp, mu);
                xp[i] = x[i] - h;
                let fm = self.source(&xp, mu);
                xp[i] = x[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Overwrites targets of `set` with `f` / `g`.
    pub fn label(&self, set: &mut CandidateSet) {
        for f in &mut set.functionals {
            f.target = self.target(f.kind, &f.position, &f.parameter);
        }
    }

    /// Samples and labels a candidate set with unit weights.
    pub fn sample(&self, n_interior: usize, n_boundary: usize, seed: u64) -> Result<CandidateSet> {
        let mut set = self.geometry.sample(n_interior, n_boundary, seed)?;
        self.label(&mut set);
        Ok(set)
    }
}

/// Midpoint coordinate `0.1 + 0.8 mu` of the moving source (both axes).
pub fn moving_source_center(mu: f64) -> f64 {
    0.1 + 0.8 * mu
}

/// Returns `(<x, kappa(mu)>, |kappa(mu)|^2)`.
fn sinus_phase(x: &[f64], mu: f64, dim_x: usize) -> (f64, f64) {
    let d = dim_x as f64;
    let c = ((1.0 - mu) * PI + mu * 2.0 * PI) / d;
    (c * x.iter().sum::<f64>(), d * c * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_laplacian(p: &ParametricProblem, x: &[f64], mu: &[f64], h: f64) -> f64 {
        let u0 = p.exact(x, mu).unwrap();
        let mut xp = x.to_vec();
        let mut acc = 0.0;
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let a = p.exact(&xp, mu).unwrap();
            xp[i] = x[i] - h;
            let b = p.exact(&xp, mu).unwrap();
            xp[i] = x[i];
            acc += (a - 2.0 * u0 + b) / (h * h);
        }
        acc
    }

    #[test]
    fn counts_and_reproducibility() {
        let a = sample_moving_circles(300, 200, 7).unwrap();
        let b = sample_moving_circles(300, 200, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        assert_eq!(a.interior().len(), 300);
        let c = sample_moving_circles(300, 200, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(sample_moving_circles(0, 10, 1).is_err());
        assert!(sample_unit_cube(2, (0.0, 1.0), 10, 0, 1).is_err());
    }

    #[test]
    fn moving_circles_membership() {
        let g = Geometry::MovingCircles;
        let set = sample_moving_circles(2000, 2000, 3).unwrap();
        for f in set.interior() {
            assert!(g.contains(&f.position, &f.parameter));
            let mu = f.parameter[0];
            assert!((0.0..=1.1).contains(&mu));
        }
        for f in set.boundary() {
            assert!(g.on_boundary(&f.position, &f.parameter, 1e-12), "{f:?}");
        }
    }

    #[test]
    fn zero_parameter_slice_is_unit_disc() {
        let g = Geometry::MovingCircles;
        assert!(g.contains(&[0.5, 0.5], &[0.0]));
        assert!(!g.contains(&[1.5, 0.0], &[0.0]));
        assert!(g.contains(&[1.5, 0.0], &[1.0]));
    }

    #[test]
    fn unit_cube_boundary_has_face_coordinate() {
        let set = sample_unit_cube(4, (0.0, 1.0), 100, 500, 11).unwrap();
        for f in set.boundary() {
            assert!(f.position.iter().any(|&v| v == 0.0 || v == 1.0));
        }
        for f in set.interior() {
            assert!(f.position.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn unit_cube_interior_mean() {
        let n = 20_000;
        let set = sample_unit_cube(3, (0.0, 2.0), n, 1, 5).unwrap();
        // sigma of a uniform on [a,b] is (b-a)/sqrt(12).
        for c in 0..3 {
            let mean = set.interior().iter().map(|f| f.position[c]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 3.0 / 12f64.sqrt() / (n as f64).sqrt());
        }
        let mean_mu = set.interior().iter().map(|f| f.parameter[0]).sum::<f64>() / n as f64;
        assert!((mean_mu - 1.0).abs() < 3.0 * 2.0 / 12f64.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn names_round_trip() {
        for name in ["moving-circles-smooth", "moving-circles-singular", "moving-source", "moving-source-local", "sinus-highdim-7"] {
            assert_eq!(make_problem(name).unwrap().name(), name);
        }
        assert_eq!(
            "sinus-highdim(3)".parse::<ProblemKind>().unwrap(),
            ProblemKind::SinusHighDim { dim_x: 3 }
        );
        assert!(matches!(make_problem("heat"), Err(Error::Config(_))));
        assert!(make_problem("sinus-highdim-0").is_err());
    }

    #[test]
    fn problem_examples() {
        let p = make_problem("moving-circles-smooth").unwrap();
        assert_eq!(p.source(&[0.3, 0.2], &[0.5]), -2.0);
        let lap = fd_laplacian(&p, &[0.3, 0.2], &[0.5], 1e-4);
        assert!((lap - 2.0).abs() < 1e-5);

        let p = make_problem("moving-source").unwrap();
        assert_eq!(p.source(&[0.5, 0.5], &[0.5]), 50.0);
        assert_eq!(p.source(&[5.0, 5.0], &[0.5]), 0.0);

        let p = make_problem("moving-source-local").unwrap();
        assert_eq!(p.source(&[0.5, 0.5], &[0.5]), 50.0);
        assert_eq!(p.source(&[0.5, 0.75], &[0.5]), 0.0);
        assert_eq!(p.source(&[0.5, 0.625], &[0.5]), 37.5);

        let p = make_problem("sinus-highdim-2").unwrap();
        let x = [0.3, 0.45];
        let expected = 2.0 * PI * PI * (PI * (x[0] + x[1])).sin();
        assert!((p.source(&x, &[1.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_solutions_are_consistent() {
        for name in ["moving-circles-smooth", "sinus-highdim-2", "sinus-highdim-5"] {
            let p = make_problem(name).unwrap();
            let set = p.sample(200, 50, 21).unwrap();
            for f in set.interior() {
                let fd = fd_laplacian(&p, &f.position, &f.parameter, 1e-4);
                assert!((f.target + fd).abs() <= 1e-5 * (1.0 + f.target.abs()), "{name}");
            }
            for f in set.boundary() {
                assert_eq!(f.target, p.exact(&f.position, &f.parameter).unwrap());
            }
        }
    }

    #[test]
    fn source_gradient_of_sinus_is_diagonal() {
        let p = make_problem("sinus-highdim-3").unwrap();
        let g = p.source_gradient(&[0.2, 0.4, 0.1], &[0.3]);
        assert!((g[0] - g[1]).abs() < 1e-6 && (g[1] - g[2]).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cands.csv");
        let mut set = make_problem("sinus-highdim-3").unwrap().sample(20, 10, 1).unwrap();
        set.set_weights(1.0, 100.0);
        set.write_csv(&path).unwrap();
        let mut back = CandidateSet::read_csv(&path).unwrap();
        back.seed = set.seed;
        assert_eq!(back, set);
    }
}
