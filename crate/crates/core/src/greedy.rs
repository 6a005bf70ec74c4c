//! Greedy generalized kernel interpolation with the β-selection rule.
//!
//! The loop keeps the Newton basis evaluated on every candidate functional,
//! which is a partial pivoted Cholesky factorization of the candidate Gram
//! matrix built one column per iteration. Residuals and squared power values
//! of all candidates are updated in place, so an iteration costs `O(N i)`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvOut};
use crate::kernels::{DiffOp, ProductKernel, Site};
use crate::linalg::LowerTriangular;
use crate::problem::{CandidateSet, Functional};
use crate::surrogate::Surrogate;

/// Stopping parameters and the selection exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyConfig {
    /// Exponent in `w |r|^β P^(1-β)`; `f64::INFINITY` selects `w |r| / P`.
    pub beta: f64,
    pub n_max: usize,
    pub eps_acc: f64,
    pub eps_stab: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { beta: 1.0, n_max: 100, eps_acc: 1e-15, eps_stab: 1e-15 }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, inf], got {}", self.beta)));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        if !(self.eps_acc >= 0.0) || !(self.eps_stab >= 0.0) {
            return Err(Error::InvalidArgument("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

/// Why the greedy loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopCause {
    MaxIterations,
    Accuracy,
    Stability,
}

impl fmt::Display for StopCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopCause::MaxIterations => "n_max",
            StopCause::Accuracy => "accuracy",
            StopCause::Stability => "stability",
        })
    }
}

impl FromStr for StopCause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_max" => Ok(StopCause::MaxIterations),
            "accuracy" => Ok(StopCause::Accuracy),
            "stability" => Ok(StopCause::Stability),
            other => Err(Error::InvalidArgument(format!("unknown stop cause '{other}'"))),
        }
    }
}

/// One row of the iteration log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub candidate: usize,
    pub interior: bool,
    pub position: Vec<f64>,
    pub parameter: Vec<f64>,
    pub eta: f64,
    pub power: f64,
    /// `max_j |y_j - λ_j(s_i)|` over all candidates after the update.
    pub max_residual: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<IterationRecord>,
    pub stop_cause: Option<StopCause>,
    /// Max training residual before the first selection.
    pub initial_max_residual: f64,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Max training residual after `n` selections (`n = 0` is the initial value).
    pub fn max_residual_at(&self, n: usize) -> Option<f64> {
        if n == 0 {
            Some(self.initial_max_residual)
        } else {
            self.records.get(n - 1).map(|r| r.max_residual)
        }
    }

    /// `min_{m <= n}` of the max training residual.
    pub fn min_residual_up_to(&self, n: usize) -> Option<f64> {
        (0..=n.min(self.len())).map(|m| self.max_residual_at(m)).try_fold(f64::INFINITY, |acc, v| {
            v.map(|v| acc.min(v))
        })
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = CsvOut::create(
            path,
            &["iteration", "kind", "eta", "P_i", "max_residual", "n_interior_cum", "n_boundary_cum", "elapsed_s"],
        )?;
        for r in &self.records {
            out.row([
                r.iteration.to_string(),
                if r.interior { "I" } else { "B" }.to_string(),
                fmt_f64(r.eta),
                fmt_f64(r.power),
                fmt_f64(r.max_residual),
                r.n_interior.to_string(),
                r.n_boundary.to_string(),
                format!("{:.6}", r.elapsed_s),
            ])?;
        }
        out.finish()
    }
}

/// Newton basis values stored block-major: for each block of candidates, the
/// values of all basis functions on that block are contiguous.
#[derive(Clone, Debug)]
pub struct NewtonBasis {
    len: usize,
    count: usize,
    blocks: Vec<Vec<f64>>,
}

impl NewtonBasis {
    /// Candidates per block.
    pub const BLOCK: usize = 2048;

    pub fn new(len: usize) -> Self {
        Self { len, count: 0, blocks: vec![Vec::new(); len.div_ceil(Self::BLOCK)] }
    }

    /// Number of basis functions.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn block_len(&self, b: usize) -> usize {
        Self::BLOCK.min(self.len - b * Self::BLOCK)
    }

    /// `N_{i+1}(λ_j)`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let (b, o) = (j / Self::BLOCK, j % Self::BLOCK);
        self.blocks[b][i * self.block_len(b) + o]
    }

    /// Values of all basis functions at candidate `j`.
    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i, j)).collect()
    }

    /// Values of basis function `i` at all candidates.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.blocks.len())
            .flat_map(|b| {
                let n = self.block_len(b);
                self.blocks[b][i * n..(i + 1) * n].iter().copied()
            })
            .collect()
    }

    /// `col[j] -= Σ_i N_{i+1}(λ_j) coeffs[i]`.
    fn subtract_combination(&self, coeffs: &[f64], col: &mut [f64]) {
        for (b, block) in col.chunks_mut(Self::BLOCK).enumerate() {
            let n = block.len();
            let data = &self.blocks[b][..n * self.count];
            let mut groups = data.chunks_exact(4 * n);
            let mut cs = coeffs.chunks_exact(4);
            for (group, c) in (&mut groups).zip(&mut cs) {
                let (v0, rest) = group.split_at(n);
                let (v1, rest) = rest.split_at(n);
                let (v2, v3) = rest.split_at(n);
                // Same rounding sequence as one basis at a time.
                for j in 0..n {
                    let mut x = block[j];
                    x -= v0[j] * c[0];
                    x -= v1[j] * c[1];
                    x -= v2[j] * c[2];
                    x -= v3[j] * c[3];
                    block[j] = x;
                }
            }
            for (basis, &c) in groups.remainder().chunks_exact(n).zip(cs.remainder()) {
                for (x, v) in block.iter_mut().zip(basis) {
                    *x -= v * c;
                }
            }
        }
    }

    fn push(&mut self, col: &[f64]) {
        for (b, values) in col.chunks(Self::BLOCK).enumerate() {
            self.blocks[b].extend_from_slice(values);
        }
        self.count += 1;
    }
}

/// Working state of a greedy run.
#[derive(Clone, Debug)]
pub struct GreedyState {
    /// Selected candidate indices in selection order.
    pub selected: Vec<usize>,
    /// Newton basis values on the candidates.
    pub newton: NewtonBasis,
    /// Squared power values `P_{Λ_i}(λ_j)^2`, clamped at zero.
    pub power2: Vec<f64>,
    /// `y_j - λ_j(s_i)`.
    pub residual: Vec<f64>,
    /// Cholesky factor of the selected Gram block; its diagonal are the `P_i`.
    pub chol: LowerTriangular,
    pub newton_coeffs: Vec<f64>,
    /// Smallest value seen before clamping `power2` (diagnostic).
    pub min_unclamped_power2: f64,
}

impl GreedyState {
    pub fn n(&self) -> usize {
        self.selected.len()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

/// `η(λ) = w |r|^β P^(1-β)`, with `w |r| / P` for `β = ∞`.
#[inline]
pub fn criterion_value(weight: f64, residual: f64, power2: f64, beta: f64) -> f64 {
    let p = power2.sqrt();
    let r = residual.abs();
    if beta == 0.0 {
        weight * p
    } else if beta == 1.0 {
        weight * r
    } else if beta.is_infinite() {
        weight * r / p
    } else {
        weight * r.powf(beta) * p.powf(1.0 - beta)
    }
}

/// Index of the eligible candidate maximizing η, ties to the lowest index.
/// Candidates already selected or with `power2 <= eps_stab^2` are excluded.
/// Returns `None` when nothing is eligible (stability stop).
pub fn selection_criterion(
    state: &GreedyState,
    weights: &[f64],
    beta: f64,
    eps_stab: f64,
    is_selected: &[bool],
) -> Option<(usize, f64)> {
    let floor = eps_stab * eps_stab;
    let mut best: Option<(usize, f64)> = None;
    for (j, &w) in weights.iter().enumerate() {
        let p2 = state.power2[j];
        if is_selected[j] || !(p2 > floor) {
            continue;
        }
        let eta = criterion_value(w, state.residual[j], p2, beta);
        if eta.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| eta > b) {
            best = Some((j, eta));
        }
    }
    best
}

/// Candidate kinds, weights and sites in contiguous arrays, so the per-step
/// kernel pass streams through memory.
struct PackedCandidates {
    kinds: Vec<DiffOp>,
    weights: Vec<f64>,
    positions: Vec<f64>,
    parameters: Vec<f64>,
    dim_x: usize,
    dim_mu: usize,
}

impl PackedCandidates {
    fn new(candidates: &[Functional], dim_x: usize, dim_mu: usize) -> Self {
        Self {
            kinds: candidates.iter().map(|f| f.kind).collect(),
            weights: candidates.iter().map(|f| f.weight).collect(),
            positions: candidates.iter().flat_map(|f| f.position.iter().copied()).collect(),
            parameters: candidates.iter().flat_map(|f| f.parameter.iter().copied()).collect(),
            dim_x,
            dim_mu,
        }
    }

    #[inline]
    fn site(&self, j: usize) -> Site<'_> {
        Site::new(
            &self.positions[j * self.dim_x..(j + 1) * self.dim_x],
            &self.parameters[j * self.dim_mu..(j + 1) * self.dim_mu],
        )
    }
}

/// Incremental greedy solver over a fixed candidate set.
pub struct GreedySolver<'a> {
    kernel: &'a ProductKernel,
    candidates: &'a [Functional],
    packed: PackedCandidates,
    config: GreedyConfig,
    state: GreedyState,
    is_selected: Vec<bool>,
    history: History,
    scratch: Vec<f64>,
    start: Instant,
    counts: (usize, usize),
}

impl<'a> GreedySolver<'a> {
    pub fn new(kernel: &'a ProductKernel, candidates: &'a CandidateSet, config: GreedyConfig) -> Result<Self> {
        Self::from_functionals(kernel, &candidates.functionals, config)
    }

    pub fn from_functionals(
        kernel: &'a ProductKernel,
        candidates: &'a [Functional],
        config: GreedyConfig,
    ) -> Result<Self> {
        config.validate()?;
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("candidate set is empty".into()));
        }
        for f in candidates {
            kernel.check_functional(f)?;
        }
        let start = Instant::now();
        let mut power2 = Vec::with_capacity(candidates.len());
        for (j, f) in candidates.iter().enumerate() {
            let d = kernel.functional_gram_unchecked(f, f);
            if !d.is_finite() {
                return Err(Error::NonFiniteGram { first: j, second: j });
            }
            power2.push(d);
        }
        let residual: Vec<f64> = candidates.iter().map(|f| f.target).collect();
        let packed = PackedCandidates::new(candidates, kernel.dim_x(), kernel.dim_mu());
        let state = GreedyState {
            selected: Vec::new(),
            newton: NewtonBasis::new(candidates.len()),
            power2,
            residual,
            chol: LowerTriangular::with_capacity(config.n_max.min(candidates.len())),
            newton_coeffs: Vec::new(),
            min_unclamped_power2: f64::INFINITY,
        };
        let history = History { initial_max_residual: state.max_abs_residual(), ..History::default() };
        Ok(Self {
            kernel,
            candidates,
            packed,
            config,
            state,
            is_selected: vec![false; candidates.len()],
            history,
            scratch: vec![0.0; candidates.len()],
            start,
            counts: (0, 0),
        })
    }

    pub fn state(&self) -> &GreedyState {
        &self.state
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn stop_cause(&self) -> Option<StopCause> {
        self.history.stop_cause
    }

    fn check_stop(&self) -> Option<StopCause> {
        if self.state.n() >= self.config.n_max || self.state.n() >= self.candidates.len() {
            Some(StopCause::MaxIterations)
        } else if !(self.state.max_abs_residual() > self.config.eps_acc) {
            Some(StopCause::Accuracy)
        } else {
            None
        }
    }

    /// Performs one greedy iteration. Returns the stop cause once the loop
    /// has terminated; `Ok(None)` means a functional was added.
    pub fn step(&mut self) -> Result<Option<StopCause>> {
        if let Some(cause) = self.history.stop_cause {
            return Ok(Some(cause));
        }
        if let Some(cause) = self.check_stop() {
            self.history.stop_cause = Some(cause);
            return Ok(Some(cause));
        }
        let Some((p, eta)) = selection_criterion(
            &self.state,
            &self.packed.weights,
            self.config.beta,
            self.config.eps_stab,
            &self.is_selected,
        ) else {
            self.history.stop_cause = Some(StopCause::Stability);
            return Ok(Some(StopCause::Stability));
        };
        let power = self.state.power2[p].sqrt();
        if !(power > self.config.eps_stab) {
            self.history.stop_cause = Some(StopCause::Stability);
            return Ok(Some(StopCause::Stability));
        }

        // New Newton column: (k_Λ(λ_j, λ_p) - Σ_m N_m(λ_j) N_m(λ_p)) / P.
        let pivot = &self.candidates[p];
        let col = &mut self.scratch;
        let packed = &self.packed;
        for (j, c) in col.iter_mut().enumerate() {
            let g = self.kernel.gram_entry_unchecked(packed.kinds[j], packed.site(j), pivot.kind, pivot.site());
            if !g.is_finite() {
                return Err(Error::NonFiniteGram { first: j, second: p });
            }
            *c = g;
        }
        let at_pivot = self.state.newton.row(p);
        self.state.newton.subtract_combination(&at_pivot, col);
        col.iter_mut().for_each(|c| *c /= power);
        // N_i vanishes on the previously selected functionals.
        for &j in &self.state.selected {
            col[j] = 0.0;
        }
        col[p] = power;

        let mut chol_row = at_pivot;
        chol_row.push(power);
        self.state.chol.push_row(&chol_row);

        let coeff = self.state.residual[p] / power;
        let mut min_unclamped = self.state.min_unclamped_power2;
        for ((p2, r), c) in self.state.power2.iter_mut().zip(self.state.residual.iter_mut()).zip(col.iter()) {
            let updated = *p2 - c * c;
            min_unclamped = min_unclamped.min(updated);
            *p2 = updated.max(0.0);
            *r -= coeff * c;
        }
        self.state.min_unclamped_power2 = min_unclamped;
        self.state.power2[p] = 0.0;
        self.is_selected[p] = true;
        self.state.selected.push(p);
        self.state.newton_coeffs.push(coeff);
        self.state.newton.push(col);

        if pivot.is_interior() {
            self.counts.0 += 1;
        } else {
            self.counts.1 += 1;
        }
        self.history.records.push(IterationRecord {
            iteration: self.state.n(),
            candidate: p,
            interior: pivot.is_interior(),
            position: pivot.position.clone(),
            parameter: pivot.parameter.clone(),
            eta,
            power,
            max_residual: self.state.max_abs_residual(),
            n_interior: self.counts.0,
            n_boundary: self.counts.1,
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
        Ok(None)
    }

    /// Runs until a stopping criterion fires.
    pub fn run(&mut self) -> Result<StopCause> {
        loop {
            if let Some(cause) = self.step()? {
                return Ok(cause);
            }
        }
    }

    /// Current surrogate `s_i`, solving `L L^T α = y` on the selected set.
    pub fn surrogate(&self) -> Result<Surrogate> {
        if self.state.n() == 0 {
            let initial = self.history.initial_max_residual;
            return Err(if initial > self.config.eps_acc {
                Error::Degenerate("no candidate functional is eligible for selection".into())
            } else {
                Error::AlreadySatisfied { max_residual: initial }
            });
        }
        let selected: Vec<Functional> = self.state.selected.iter().map(|&j| self.candidates[j].clone()).collect();
        let y: Vec<f64> = selected.iter().map(|f| f.target).collect();
        let alpha = self.state.chol.solve_normal(&y);
        Surrogate::new(self.kernel.clone(), selected, alpha, Some(self.state.chol.clone()))
    }

    pub fn into_parts(self) -> (GreedyState, History) {
        (self.state, self.history)
    }
}

/// Runs the greedy loop to completion and returns the surrogate and its log.
pub fn run_greedy(
    kernel: &ProductKernel,
    candidates: &CandidateSet,
    config: GreedyConfig,
) -> Result<(Surrogate, History)> {
    let mut solver = GreedySolver::new(kernel, candidates, config)?;
    let cause = solver.run()?;
    log::debug!("greedy stopped after {} selections ({cause})", solver.state().n());
    let surrogate = solver.surrogate()?;
    Ok((surrogate, solver.into_parts().1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{DiffOp, PositionKernel};

    fn toy_kernel() -> ProductKernel {
        ProductKernel::new(PositionKernel::gaussian(4.0, 1).unwrap(), PositionKernel::gaussian(1.0, 1).unwrap())
    }

    /// `-u'' = -2` on (0,1), `u = x^2`: 48 interior points and the two ends.
    fn toy_candidates(n: usize) -> CandidateSet {
        let mut fs = Vec::new();
        for i in 1..=n - 2 {
            let x = i as f64 / (n - 1) as f64;
            fs.push(Functional::new(DiffOp::NegLaplacian, vec![x], vec![0.0], 1.0, -2.0));
        }
        fs.push(Functional::new(DiffOp::Identity, vec![0.0], vec![0.0], 1.0, 0.0));
        fs.push(Functional::new(DiffOp::Identity, vec![1.0], vec![0.0], 1.0, 1.0));
        CandidateSet::from_functionals(fs)
    }

    #[test]
    fn criterion_collapses() {
        assert_eq!(criterion_value(2.0, 5.0, 9.0, 0.0), 6.0);
        assert_eq!(criterion_value(2.0, -5.0, 9.0, 1.0), 10.0);
        assert!((criterion_value(2.0, 5.0, 9.0, f64::INFINITY) - 10.0 / 3.0).abs() < 1e-15);
        assert!((criterion_value(1.0, 4.0, 16.0, 0.5) - 4.0).abs() < 1e-14);
        assert!((criterion_value(1.0, 4.0, 16.0, 2.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn p_greedy_ignores_residuals() {
        let k = toy_kernel();
        let mut a = toy_candidates(30);
        let mut b = a.clone();
        for (i, f) in b.functionals.iter_mut().enumerate() {
            f.target = (i as f64).sin() * 10.0;
        }
        a.set_weights(1.0, 3.0);
        b.set_weights(1.0, 3.0);
        let cfg = GreedyConfig { beta: 0.0, n_max: 10, eps_acc: 0.0, eps_stab: 1e-12 };
        let (_, ha) = run_greedy(&k, &a, cfg).unwrap();
        let (_, hb) = run_greedy(&k, &b, cfg).unwrap();
        let sa: Vec<_> = ha.records.iter().map(|r| r.candidate).collect();
        let sb: Vec<_> = hb.records.iter().map(|r| r.candidate).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn zero_data_is_already_satisfied() {
        let k = toy_kernel();
        let mut c = toy_candidates(20);
        c.functionals.iter_mut().for_each(|f| f.target = 0.0);
        let cfg = GreedyConfig { beta: 1.0, ..GreedyConfig::default() };
        match run_greedy(&k, &c, cfg) {
            Err(Error::AlreadySatisfied { max_residual }) => assert_eq!(max_residual, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selected_never_reselected_and_residual_vanishes() {
        let k = toy_kernel();
        let c = toy_candidates(50);
        let cfg = GreedyConfig { beta: 1.0, n_max: 20, eps_acc: 0.0, eps_stab: 1e-10 };
        let mut solver = GreedySolver::new(&k, &c, cfg).unwrap();
        solver.run().unwrap();
        let st = solver.state();
        let mut sorted = st.selected.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), st.selected.len());
        for &j in &st.selected {
            assert!(st.residual[j].abs() <= 1e-10 * 3.0, "{j} {:e}", st.residual[j]);
            assert_eq!(st.power2[j], 0.0);
        }
        assert_eq!(st.chol.diagonal(), solver.history().records.iter().map(|r| r.power).collect::<Vec<_>>());
    }

    #[test]
    fn stop_cause_is_recorded() {
        let k = toy_kernel();
        let c = toy_candidates(10);
        let cfg = GreedyConfig { beta: 1.0, n_max: 3, eps_acc: 0.0, eps_stab: 0.0 };
        let (s, h) = run_greedy(&k, &c, cfg).unwrap();
        assert_eq!(h.stop_cause, Some(StopCause::MaxIterations));
        assert_eq!(s.n(), 3);
        // Huge stability threshold: nothing is eligible.
        let cfg = GreedyConfig { beta: 1.0, n_max: 3, eps_acc: 0.0, eps_stab: 1e6 };
        assert!(matches!(run_greedy(&k, &c, cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let k = toy_kernel();
        let c = toy_candidates(10);
        for cfg in [
            GreedyConfig { beta: -1.0, ..GreedyConfig::default() },
            GreedyConfig { n_max: 0, ..GreedyConfig::default() },
            GreedyConfig { eps_acc: -1.0, ..GreedyConfig::default() },
        ] {
            assert!(matches!(run_greedy(&k, &c, cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn history_csv_has_schema() {
        let k = toy_kernel();
        let c = toy_candidates(10);
        let (_, h) = run_greedy(&k, &c, GreedyConfig { n_max: 4, ..GreedyConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,kind,eta,P_i,max_residual,n_interior_cum,n_boundary_cum,elapsed_s"
        );
        assert_eq!(lines.count(), 4);
    }
}
