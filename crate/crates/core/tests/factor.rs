use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitforge::design::{self, presets, Design};
use splitforge::error::Error;
use splitforge::factor::{factor_cholesky, factor_eigen, factor_stieltjes, reduce_initial_point};
use splitforge::linalg::{self, Mat};
use splitforge::runtime::{self, InstanceClass, InstanceSpec, Placement, RunOptions};

fn product_error(m: &Mat, w: &Mat) -> f64 {
    linalg::max_abs(&(m.transpose() * m - w))
}

fn null_error(m: &Mat) -> f64 {
    (m * linalg::ones(m.ncols())).amax()
}

fn path(n: usize) -> Mat {
    let mut w = Mat::zeros(n, n);
    for i in 0..n - 1 {
        w[(i, i)] += 1.0;
        w[(i + 1, i + 1)] += 1.0;
        w[(i, i + 1)] = -1.0;
        w[(i + 1, i)] = -1.0;
    }
    w
}

/// A design with `Z` complete and a random Stieltjes `W` with every edge present.
fn random_design(rng: &mut ChaCha8Rng, n: usize) -> Design {
    loop {
        let mut w = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.gen_range(0.2..1.0);
                w[(i, j)] = -v;
                w[(j, i)] = -v;
                w[(i, i)] += v;
                w[(j, j)] += v;
            }
        }
        let z = presets::fully_connected(n).unwrap().z;
        let zmax = linalg::sym_eigenvalues(&z)[n - 1];
        let wmax = linalg::sym_eigenvalues(&w)[n - 1];
        w *= rng.gen_range(0.6..1.0) * zmax / wmax;
        let d = Design::new(z, w, 0.5).unwrap();
        if design::validate(&d, 1e-8).passed {
            return d;
        }
    }
}

#[test]
fn stieltjes_examples() {
    let m = factor_stieltjes(&path(2)).unwrap();
    assert_eq!(m, Mat::from_row_slice(1, 2, &[-1.0, 1.0]));
    let m = factor_stieltjes(&path(3)).unwrap();
    assert_eq!(m, Mat::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0]));
    let m = factor_stieltjes(&(path(2) * 4.0)).unwrap();
    assert_eq!(m, Mat::from_row_slice(1, 2, &[-2.0, 2.0]));
}

#[test]
fn stieltjes_rows_have_two_opposite_entries() {
    let w = presets::two_block_fiedler(4).unwrap().w;
    let m = factor_stieltjes(&w).unwrap();
    assert_eq!(m.nrows(), 4);
    for row in m.row_iter() {
        let nz: Vec<f64> = row.iter().cloned().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 2);
        assert!(nz[0] * nz[1] < 0.0);
    }
    assert!(product_error(&m, &w) <= 1e-8);
}

#[test]
fn stieltjes_rejects_positive_entries() {
    let bad = Mat::from_row_slice(3, 3, &[1.0, 0.5, -1.5, 0.5, 0.5, -1.0, -1.5, -1.0, 2.5]);
    assert!(matches!(factor_stieltjes(&bad), Err(Error::NotStieltjes { row: 1, col: 2, .. })));
}

#[test]
fn minimal_factors_reproduce_w() {
    let cases = [
        path(2),
        presets::mt(3).unwrap().w,
        presets::fully_connected(3).unwrap().w,
        presets::two_block_fiedler(4).unwrap().w,
        presets::ryu_ext(5).unwrap().w,
    ];
    for w in &cases {
        let n = w.nrows();
        for m in [factor_cholesky(w).unwrap(), factor_eigen(w).unwrap()] {
            assert_eq!(m.shape(), (n - 1, n));
            assert!(product_error(&m, w) <= 1e-8);
            assert!(null_error(&m) <= 1e-8);
        }
    }
}

#[test]
fn eigen_factor_rows_are_orthogonal() {
    let w = presets::fully_connected(3).unwrap().w;
    let m = factor_eigen(&w).unwrap();
    let g = &m * m.transpose();
    assert!(g[(0, 1)].abs() <= 1e-10);
}

#[test]
fn two_by_two_minimal_factors() {
    let m = factor_cholesky(&path(2)).unwrap();
    assert!((m[(0, 0)].abs() - 1.0).abs() < 1e-12 && (m[(0, 0)] + m[(0, 1)]).abs() < 1e-12);
    let m = factor_eigen(&path(2)).unwrap();
    assert!((m[(0, 0)].abs() - 1.0).abs() < 1e-12 && (m[(0, 0)] + m[(0, 1)]).abs() < 1e-12);
}

#[test]
fn reduced_start_matches_lifted_start() {
    let w = presets::two_block_fiedler(4).unwrap().w;
    let m = factor_stieltjes(&w).unwrap();
    let mm = factor_eigen(&w).unwrap();
    let z0 = runtime::random_point(m.nrows(), 3, 9);
    let zr = reduce_initial_point(&m, &mm, &z0).unwrap();
    let lhs = mm.transpose() * &zr;
    let rhs = m.transpose() * &z0;
    assert!((lhs - &rhs).norm() <= 1e-8 * (1.0 + z0.norm()));
    assert_eq!(reduce_initial_point(&m, &m, &z0).unwrap().shape(), z0.shape());
    let zero = reduce_initial_point(&m, &mm, &Mat::zeros(m.nrows(), 3)).unwrap();
    assert_eq!(zero.amax(), 0.0);
}

#[test]
fn mismatched_factors_are_rejected() {
    let m = factor_stieltjes(&path(3)).unwrap();
    let other = factor_eigen(&presets::fully_connected(3).unwrap().w).unwrap();
    let z0 = Mat::zeros(m.nrows(), 1);
    assert!(matches!(reduce_initial_point(&m, &other, &z0), Err(Error::IncompatibleFactor(_))));
}

#[test]
fn all_factors_give_the_same_iterates() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = RunOptions { max_iter: 50, residual_target: 0.0, record_x: true, ..RunOptions::default() };
    for trial in 0..10 {
        let d = random_design(&mut rng, 4);
        let spec = InstanceSpec {
            class: InstanceClass::StronglyMonotoneLipschitz,
            n: 4,
            mu: 1.0,
            lip: 2.0,
            dim: 3,
            seed: trial,
            placement: Placement::Last,
        };
        let ops = runtime::make_instance(&spec).unwrap();
        let edge = factor_stieltjes(&d.w).unwrap();
        assert!(edge.nrows() > 3);
        let z0 = runtime::random_point(edge.nrows(), 3, 100 + trial);
        let base = runtime::run_d_iteration(&d, &edge, &ops, &z0, &opts).unwrap();
        for m in [factor_eigen(&d.w).unwrap(), factor_cholesky(&d.w).unwrap()] {
            let zr = reduce_initial_point(&edge, &m, &z0).unwrap();
            let other = runtime::run_d_iteration(&d, &m, &ops, &zr, &opts).unwrap();
            let xs = base.x_history.as_ref().unwrap();
            let ys = other.x_history.as_ref().unwrap();
            assert_eq!(xs.len(), 50);
            let dev = xs.iter().zip(ys).map(|(a, b)| linalg::max_abs(&(a - b))).fold(0.0, f64::max);
            assert!(dev <= 1e-8, "trial {trial}: deviation {dev:e}");
        }
    }
}
