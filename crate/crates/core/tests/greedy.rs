use nalgebra::{DMatrix, DVector};
use pde_greedy::{
    full_collocation_solve, run_greedy, CandidateSet, DiffOp, Functional, GreedyConfig, GreedySolver, PositionKernel,
    ProductKernel, StopCause,
};
use proptest::prelude::*;

fn kernel_1d(eps: f64) -> ProductKernel {
    ProductKernel::new(PositionKernel::matern(eps, 1).unwrap(), PositionKernel::gaussian(1.0, 1).unwrap())
}

/// `-u'' = -2` on (0,1) with `u = x^2`: `n - 2` equispaced interior sites and both ends.
fn square_candidates(n: usize) -> CandidateSet {
    let mut fs = Vec::new();
    for i in 1..=n - 2 {
        let x = i as f64 / (n - 1) as f64;
        fs.push(Functional::new(DiffOp::NegLaplacian, vec![x], vec![0.0], 1.0, -2.0));
    }
    fs.push(Functional::new(DiffOp::Identity, vec![0.0], vec![0.0], 1.0, 0.0));
    fs.push(Functional::new(DiffOp::Identity, vec![1.0], vec![0.0], 1.0, 1.0));
    CandidateSet::from_functionals(fs)
}

fn nalgebra_alpha(kernel: &ProductKernel, fs: &[Functional]) -> DVector<f64> {
    let n = fs.len();
    let gram = DMatrix::from_fn(n, n, |i, j| kernel.functional_gram(&fs[i], &fs[j]).unwrap());
    let y = DVector::from_iterator(n, fs.iter().map(|f| f.target));
    gram.cholesky().expect("selected Gram block is positive definite").solve(&y)
}

#[test]
fn greedy_coefficients_match_nalgebra_cholesky() {
    let kernel = kernel_1d(8.0);
    let set = square_candidates(60);
    let cfg = GreedyConfig { beta: 1.0, n_max: 12, eps_acc: 0.0, eps_stab: 1e-10 };
    let (s, _) = run_greedy(&kernel, &set, cfg).unwrap();
    let oracle = nalgebra_alpha(&kernel, s.functionals());
    let diff = s.alpha().iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = oracle.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(diff <= 1e-8 * scale, "max difference {diff:e}, scale {scale:e}");
}

#[test]
fn greedy_matches_full_collocation_on_selected_set() {
    let kernel = kernel_1d(8.0);
    let set = square_candidates(60);
    let cfg = GreedyConfig { beta: 0.5, n_max: 15, eps_acc: 0.0, eps_stab: 1e-10 };
    let (s, _) = run_greedy(&kernel, &set, cfg).unwrap();
    let dense = full_collocation_solve(&kernel, s.functionals(), &s.targets()).unwrap();
    for (a, b) in s.alpha().iter().zip(dense.alpha()) {
        assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn one_dimensional_square_reaches_dense_accuracy() {
    let kernel = ProductKernel::new(PositionKernel::gaussian(1.0, 1).unwrap(), PositionKernel::gaussian(1.0, 1).unwrap());
    let set = square_candidates(50);
    let cfg = GreedyConfig { beta: 1.0, n_max: 15, eps_acc: 1e-15, eps_stab: 1e-15 };
    let (s, history) = run_greedy(&kernel, &set, cfg).unwrap();
    let greedy_residual = history.max_residual_at(15).unwrap();
    let dense = full_collocation_solve(&kernel, &set.functionals, &set.targets()).unwrap();
    let dense_residual = set
        .functionals
        .iter()
        .map(|f| (f.target - dense.apply_functional(f).unwrap()).abs())
        .fold(0.0, f64::max);
    assert!(greedy_residual < 1e-6, "greedy residual {greedy_residual:e}");
    assert!(greedy_residual <= 10.0 * dense_residual, "{greedy_residual:e} vs dense {dense_residual:e}");
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        let err = (s.eval(&[x], &[0.0]).unwrap() - x * x).abs();
        assert!(err < 1e-4, "x = {x}: error {err:e}");
    }
}

#[test]
fn plain_p_greedy_on_identity_data_fills_the_interval() {
    let kernel = kernel_1d(6.0);
    let fs: Vec<Functional> = (0..41)
        .map(|i| {
            let x = i as f64 / 40.0;
            Functional::new(DiffOp::Identity, vec![x], vec![0.0], 1.0, x.sin())
        })
        .collect();
    let set = CandidateSet::from_functionals(fs);
    let cfg = GreedyConfig { beta: 0.0, n_max: 3, eps_acc: 0.0, eps_stab: 1e-12 };
    let (s, _) = run_greedy(&kernel, &set, cfg).unwrap();
    let mut xs: Vec<f64> = s.functionals().iter().map(|f| f.position[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs, vec![0.0, 0.5, 1.0]);
}

fn random_set() -> impl Strategy<Value = (CandidateSet, f64)> {
    (
        prop::collection::vec((0.02..0.98_f64, 0.0..1.0_f64), 8..30),
        prop::collection::vec(0.0..1.0_f64, 2..6),
        -2.0..2.0_f64,
        prop::sample::select(vec![0.0, 0.5, 1.0, 2.0, f64::INFINITY]),
    )
        .prop_map(|(interior, boundary_mu, scale, beta)| {
            let mut fs = Vec::new();
            for (x, mu) in interior {
                fs.push(Functional::new(DiffOp::NegLaplacian, vec![x], vec![mu], 1.0, scale * (1.0 + x * mu)));
            }
            for (i, mu) in boundary_mu.into_iter().enumerate() {
                let x = (i % 2) as f64;
                fs.push(Functional::new(DiffOp::Identity, vec![x], vec![mu], 10.0, scale * mu - 0.3));
            }
            (CandidateSet::from_functionals(fs), beta)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_state_invariants((set, beta) in random_set()) {
        let kernel = ProductKernel::new(PositionKernel::matern(4.0, 1).unwrap(), PositionKernel::matern(2.0, 1).unwrap());
        let cfg = GreedyConfig { beta, n_max: 12, eps_acc: 0.0, eps_stab: 1e-6 };
        let mut solver = GreedySolver::new(&kernel, &set, cfg).unwrap();
        let initial = solver.state().power2.clone();
        for (j, f) in set.functionals.iter().enumerate() {
            prop_assert_eq!(initial[j], kernel.functional_gram(f, f).unwrap());
        }
        let max_y = set.functionals.iter().fold(0.0_f64, |m, f| m.max(f.target.abs()));
        let mut previous = initial.clone();
        let mut norm = 0.0;
        while solver.step().unwrap().is_none() {
            let st = solver.state();
            for (j, (&now, &before)) in st.power2.iter().zip(&previous).enumerate() {
                prop_assert!(now <= before + 1e-12, "power grew at {}: {} > {}", j, now, before);
                prop_assert!(now >= 0.0 && now <= initial[j]);
            }
            prop_assert!(st.min_unclamped_power2 >= -1e-12);
            for &j in &st.selected {
                prop_assert!(st.residual[j].abs() <= 1e-10 * (1.0 + max_y), "residual {} at {}", st.residual[j], j);
            }
            let next = solver.surrogate().unwrap().native_norm_sq();
            prop_assert!(next >= norm - 1e-10, "norm decreased {} -> {}", norm, next);
            norm = next;
            previous = st.power2.clone();
        }
        let st = solver.state();
        let mut distinct = st.selected.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), st.selected.len());
        let powers: Vec<f64> = solver.history().records.iter().map(|r| r.power).collect();
        prop_assert_eq!(st.chol.diagonal(), powers);
        prop_assert!(matches!(solver.stop_cause(), Some(StopCause::MaxIterations | StopCause::Stability | StopCause::Accuracy)));
        let counts = solver.history().records.iter().map(|r| (r.n_interior, r.n_boundary));
        let mut last = (0, 0);
        for c in counts {
            prop_assert!(c.0 >= last.0 && c.1 >= last.1 && c.0 + c.1 == last.0 + last.1 + 1);
            last = c;
        }
    }

    #[test]
    fn selection_is_deterministic((set, beta) in random_set()) {
        let kernel = kernel_1d(5.0);
        let cfg = GreedyConfig { beta, n_max: 8, eps_acc: 0.0, eps_stab: 1e-6 };
        let (a, _) = run_greedy(&kernel, &set, cfg).unwrap();
        let (b, _) = run_greedy(&kernel, &set, cfg).unwrap();
        prop_assert_eq!(a.alpha(), b.alpha());
    }
}
