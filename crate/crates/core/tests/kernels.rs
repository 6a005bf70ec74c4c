use pde_greedy::kernels::{DiffOp, PositionKernel, ProductKernel, Site};
use pde_greedy::linalg::{cholesky_jittered, SymMatrix};
use pde_greedy::problem::Functional;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-4;

/// Central-difference Laplacian in the first argument.
fn fd_laplacian(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    let mut total = 0.0;
    let f0 = f(x);
    let mut p = x.to_vec();
    for k in 0..x.len() {
        p[k] = x[k] + FD_STEP;
        let fp = f(&p);
        p[k] = x[k] - FD_STEP;
        let fm = f(&p);
        p[k] = x[k];
        total += (fp - 2.0 * f0 + fm) / (FD_STEP * FD_STEP);
    }
    total
}

fn kernels(dim: usize) -> Vec<PositionKernel> {
    let mut b = SymMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..=i {
            let v = if i == j { 1.5 + 0.3 * i as f64 } else { 0.2 / (1 + i + j) as f64 };
            b.set(i, j, v);
        }
    }
    vec![
        PositionKernel::gaussian(0.7, dim).unwrap(),
        PositionKernel::gaussian_aniso(b).unwrap(),
        PositionKernel::matern(2.0, dim).unwrap(),
        PositionKernel::matern(5.0, dim).unwrap(),
    ]
}

/// Random point pairs at distance > 0.1 inside a box of half-width 0.8.
fn site_pairs(dim: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if r2 > 0.01 {
            out.push((x, y));
        }
    }
    out
}

fn relative_error(exact: f64, approx: f64, scale: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(1e-3 * scale)
}

#[test]
fn laplacian_matches_finite_differences() {
    for dim in [1, 2, 3, 5] {
        for k in kernels(dim) {
            let scale = k.laplacian_first(&vec![0.0; dim], &vec![0.0; dim]).unwrap().abs();
            for (x, y) in site_pairs(dim, 40, 11 + dim as u64) {
                let exact = k.laplacian_first(&x, &y).unwrap();
                let approx = fd_laplacian(|p| k.eval(p, &y).unwrap(), &x);
                let err = relative_error(exact, approx, scale);
                assert!(err < 1e-5, "{} dim {dim}: {exact} vs {approx} ({err:e})", k.family_name());
            }
        }
    }
}

#[test]
fn bilaplacian_matches_finite_differences() {
    for dim in [1, 2, 3, 5] {
        for k in kernels(dim) {
            let scale = k.bilaplacian(&vec![0.0; dim], &vec![0.0; dim]).unwrap().abs();
            for (x, y) in site_pairs(dim, 40, 23 + dim as u64) {
                let exact = k.bilaplacian(&x, &y).unwrap();
                let approx = fd_laplacian(|p| k.laplacian_first(&x, p).unwrap(), &y);
                let err = relative_error(exact, approx, scale);
                assert!(err < 1e-5, "{} dim {dim}: {exact} vs {approx} ({err:e})", k.family_name());
            }
        }
    }
}

#[test]
fn product_gram_entries_match_operator_conventions() {
    let k = ProductKernel::new(PositionKernel::matern(3.0, 2).unwrap(), PositionKernel::gaussian(0.5, 1).unwrap());
    for (x, y) in site_pairs(2, 20, 5) {
        let (mu, nu) = ([0.3], [0.7]);
        let a = Site::new(&x, &mu);
        let b = Site::new(&y, &nu);
        let kmu = k.kmu.eval(&mu, &nu).unwrap();
        let ii = k.gram_entry(DiffOp::Identity, a, DiffOp::Identity, b).unwrap();
        assert_eq!(ii, k.eval(a, b).unwrap());
        let li = k.gram_entry(DiffOp::NegLaplacian, a, DiffOp::Identity, b).unwrap();
        let fd = -fd_laplacian(|p| k.kx.eval(p, &y).unwrap(), &x) * kmu;
        assert!((li - fd).abs() <= 1e-5 * (1.0 + fd.abs()));
        let il = k.gram_entry(DiffOp::Identity, a, DiffOp::NegLaplacian, b).unwrap();
        assert!((il - li).abs() <= 1e-12 * (1.0 + li.abs()), "radial kernels are symmetric in the mixed entry");
        let ll = k.gram_entry(DiffOp::NegLaplacian, a, DiffOp::NegLaplacian, b).unwrap();
        let fd = fd_laplacian(|p| k.kx.laplacian_first(&x, p).unwrap(), &y) * kmu;
        assert!((ll - fd).abs() <= 1e-5 * (1.0 + fd.abs()));
    }
}

fn random_functionals(count: usize, seed: u64) -> Vec<Functional> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = if i % 2 == 0 { DiffOp::NegLaplacian } else { DiffOp::Identity };
            let x = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            Functional::new(kind, x, vec![rng.gen_range(0.0..1.0)], 1.0, 0.0)
        })
        .collect()
}

#[test]
fn functional_gram_is_positive_definite_with_small_jitter() {
    for kx in [PositionKernel::gaussian(2.0, 2).unwrap(), PositionKernel::matern(3.0, 2).unwrap()] {
        let kmu = PositionKernel::gaussian(1.0, 1).unwrap();
        let k = ProductKernel::new(kx, kmu);
        let lams = random_functionals(50, 3);
        let gram = SymMatrix::from_lower_fn(lams.len(), |i, j| k.functional_gram(&lams[i], &lams[j]).unwrap());
        let (_, jitter) = cholesky_jittered(&gram).unwrap();
        assert!(jitter <= 1e-10);
    }
}

proptest! {
    #[test]
    fn gram_is_symmetric(seed in 0u64..1000, eps2 in 0.1f64..5.0) {
        let k = ProductKernel::new(PositionKernel::gaussian(eps2, 2).unwrap(), PositionKernel::matern(eps2, 1).unwrap());
        let lams = random_functionals(6, seed);
        for a in &lams {
            for b in &lams {
                let ab = k.functional_gram(a, b).unwrap();
                let ba = k.functional_gram(b, a).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
            }
        }
    }

    #[test]
    fn radial_kernels_ignore_coordinate_permutations(
        x in proptest::collection::vec(-1.0f64..1.0, 3),
        y in proptest::collection::vec(-1.0f64..1.0, 3),
        eps in 0.2f64..4.0,
    ) {
        let perm = |v: &[f64]| vec![v[2], v[0], v[1]];
        for k in [PositionKernel::gaussian(eps, 3).unwrap(), PositionKernel::matern(eps, 3).unwrap()] {
            let a = k.eval(&x, &y).unwrap();
            let b = k.eval(&perm(&x), &perm(&y)).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
            let a = k.bilaplacian(&x, &y).unwrap();
            let b = k.bilaplacian(&perm(&x), &perm(&y)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn anisotropic_gaussian_with_scaled_identity_is_isotropic(
        x in proptest::collection::vec(-1.0f64..1.0, 2),
        y in proptest::collection::vec(-1.0f64..1.0, 2),
        eps2 in 0.05f64..5.0,
    ) {
        let mut b = SymMatrix::zeros(2);
        b.set(0, 0, eps2);
        b.set(1, 1, eps2);
        let aniso = PositionKernel::gaussian_aniso(b).unwrap();
        let iso = PositionKernel::gaussian(eps2, 2).unwrap();
        for (p, q) in [
            (aniso.eval(&x, &y).unwrap(), iso.eval(&x, &y).unwrap()),
            (aniso.laplacian_first(&x, &y).unwrap(), iso.laplacian_first(&x, &y).unwrap()),
            (aniso.bilaplacian(&x, &y).unwrap(), iso.bilaplacian(&x, &y).unwrap()),
        ] {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }
}
