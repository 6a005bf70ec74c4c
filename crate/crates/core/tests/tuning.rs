use nalgebra::{DMatrix, SymmetricEigen};
use pde_greedy::linalg::SymMatrix;
use pde_greedy::tuning::{
    active_subspace_direction, build_anisotropic_b, consecutive_grid_search, validation_loss, KernelFamily, ModelSpec,
    SearchParam, SearchSpec, ValidationSets,
};
use pde_greedy::{make_problem, GreedyConfig, PositionKernel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_nalgebra(m: &SymMatrix) -> DMatrix<f64> {
    let d = m.dim();
    DMatrix::from_fn(d, d, |i, j| m.get(i, j))
}

fn second_moment(gradients: &[Vec<f64>]) -> DMatrix<f64> {
    let d = gradients[0].len();
    let mut m = DMatrix::zeros(d, d);
    for g in gradients {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += g[i] * g[j];
            }
        }
    }
    m / gradients.len() as f64
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn active_subspace_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [2, 3, 6, 9] {
        let lead = unit((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let gradients: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a = rng.gen_range(-3.0..3.0);
                (0..d).map(|i| a * lead[i] + 0.2 * rng.gen_range(-1.0..1.0)).collect()
            })
            .collect();
        let v = active_subspace_direction(&gradients).unwrap();
        let eig = SymmetricEigen::new(second_moment(&gradients));
        let top = eig.eigenvalues.imax();
        let oracle: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
        assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
        assert!(dot(&v, &oracle).abs() > 1.0 - 1e-8, "d = {d}: |cos| {}", dot(&v, &oracle).abs());
        let first = v.iter().find(|c| c.abs() > 1e-12).unwrap();
        assert!(*first > 0.0);
    }
}

#[test]
fn isotropic_gradients_still_give_an_eigenvector() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 4;
    let gradients: Vec<Vec<f64>> =
        (0..4000).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let v = active_subspace_direction(&gradients).unwrap();
    let m = second_moment(&gradients);
    let mv: Vec<f64> = (0..d).map(|i| (0..d).map(|j| m[(i, j)] * v[j]).sum()).collect();
    let theta = dot(&v, &mv);
    let residual = mv.iter().zip(&v).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
    assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
    assert!(residual <= 1e-8 * theta, "eigen residual {residual:e}, θ {theta}");
}

#[test]
fn sinus_source_gradients_point_along_the_diagonal() {
    for d in [2, 5, 9] {
        let problem = make_problem(&format!("sinus-highdim-{d}")).unwrap();
        let set = problem.sample(500, 100, 3).unwrap();
        let gradients: Vec<Vec<f64>> =
            set.interior().iter().map(|f| problem.source_gradient(&f.position, &f.parameter)).collect();
        let v = active_subspace_direction(&gradients).unwrap();
        let cos = v.iter().sum::<f64>() / (d as f64).sqrt();
        assert!(cos.abs() > 0.99, "d = {d}: |cos| {cos}");
    }
}

#[test]
fn anisotropic_matrix_for_the_two_dimensional_diagonal() {
    let v1 = [0.5_f64.sqrt(), 0.5_f64.sqrt()];
    let b = build_anisotropic_b(&v1, 2.5, 0.0025).unwrap();
    let eig = SymmetricEigen::new(to_nalgebra(&b));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    assert!((values[0] - 0.0025).abs() < 1e-14 && (values[1] - 2.5).abs() < 1e-14);
    let bv = b.mul_vec(&v1);
    assert!(bv.iter().zip(&v1).all(|(a, v)| (a - 2.5 * v).abs() < 1e-14));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn anisotropic_matrix_spectrum(
        raw in prop::collection::vec(-1.0..1.0_f64, 2..7),
        along in 0.01..10.0_f64,
        across in 0.0001..1.0_f64,
    ) {
        prop_assume!(raw.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        let v1 = unit(raw);
        let d = v1.len();
        let b = build_anisotropic_b(&v1, along, across).unwrap();
        for i in 0..d {
            for j in 0..d {
                prop_assert_eq!(b.get(i, j), b.get(j, i));
            }
        }
        let bv = b.mul_vec(&v1);
        for (a, v) in bv.iter().zip(&v1) {
            prop_assert!((a - along * v).abs() <= 1e-10 * along.max(1.0));
        }
        let eig = SymmetricEigen::new(to_nalgebra(&b));
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        let mut expected = vec![across; d - 1];
        expected.push(along);
        expected.sort_by(f64::total_cmp);
        for (got, want) in values.iter().zip(&expected) {
            prop_assert!((got - want).abs() <= 1e-10 * along.max(1.0), "{} vs {}", got, want);
        }
        prop_assert!(PositionKernel::gaussian_aniso(b).is_ok());
    }

    #[test]
    fn equal_scales_give_a_multiple_of_identity(raw in prop::collection::vec(-1.0..1.0_f64, 2..6), c in 0.01..5.0_f64) {
        prop_assume!(raw.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        let v1 = unit(raw);
        let b = build_anisotropic_b(&v1, c, c).unwrap();
        for i in 0..v1.len() {
            for j in 0..v1.len() {
                let want = if i == j { c } else { 0.0 };
                prop_assert!((b.get(i, j) - want).abs() <= 1e-12 * c.max(1.0));
            }
        }
    }
}

fn small_smooth_spec() -> ModelSpec {
    ModelSpec {
        family_x: KernelFamily::Gaussian,
        family_mu: KernelFamily::Gaussian,
        shape_x: 0.0063096,
        shape_mu: 0.01,
        aniso: None,
        w_interior: 1.0,
        w_boundary: 1.0,
        greedy: GreedyConfig { beta: 1.0, n_max: 30, eps_acc: 1e-15, eps_stab: 1e-15 },
    }
}

#[test]
fn grid_search_is_deterministic_and_respects_single_point_grids() {
    let problem = make_problem("moving-circles-smooth").unwrap();
    let training = problem.sample(400, 400, 1).unwrap();
    let validation = ValidationSets::from_candidates(&problem.sample(200, 200, 2).unwrap(), 1.0, 1.0);
    let spec = SearchSpec {
        stages: vec![
            (SearchParam::EpsX2, vec![0.001, 0.0063096, 0.04]),
            (SearchParam::EpsMu2, vec![0.01]),
            (SearchParam::WBoundary, vec![0.1, 1.0, 10.0]),
        ],
    };
    let a = consecutive_grid_search(&spec, &small_smooth_spec(), &training, &validation).unwrap();
    let b = consecutive_grid_search(&spec, &small_smooth_spec(), &training, &validation).unwrap();
    assert_eq!(a.best, b.best);
    assert_eq!(a.best_loss, b.best_loss);
    assert_eq!(a.table, b.table);
    assert_eq!(a.table.len(), 7);
    assert_eq!(a.best.shape_mu, 0.01);
    for stage in 0..3 {
        let rows: Vec<_> = a.table.iter().filter(|r| r.stage == stage).collect();
        let min = rows.iter().map(|r| r.validation_loss).fold(f64::INFINITY, f64::min);
        let chosen = rows.iter().find(|r| r.validation_loss == min).unwrap();
        assert_eq!(a.best.get(chosen.parameter), chosen.value);
        assert!(rows.iter().all(|r| r.validation_loss >= 0.0));
    }
}

#[test]
fn validation_loss_vanishes_on_interpolated_functionals() {
    let problem = make_problem("moving-circles-smooth").unwrap();
    let training = problem.sample(300, 300, 4).unwrap();
    let (s, _) = small_smooth_spec().train(&training).unwrap();
    let (interior, boundary): (Vec<_>, Vec<_>) = s.functionals().iter().cloned().partition(|f| f.is_interior());
    let scale = s.targets().iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    let on_selected = ValidationSets { interior, boundary, gamma_interior: 1.0, gamma_boundary: 1.0 };
    let loss = validation_loss(&s, &on_selected).unwrap();
    assert!(loss >= 0.0 && loss <= 1e-6 * scale, "loss {loss:e}");
    let held_out = ValidationSets::from_candidates(&problem.sample(200, 200, 5).unwrap(), 0.005, 1.0);
    assert!(validation_loss(&s, &held_out).unwrap() > loss);
    let empty = ValidationSets { interior: vec![], boundary: vec![], gamma_interior: 1.0, gamma_boundary: 1.0 };
    assert!(validation_loss(&s, &empty).is_err());
}
