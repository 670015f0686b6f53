mod common;

use common::{random_steps_mesh, rng, tanh_sinh};
use nalgebra::{DMatrix, DVector};
use num::{BigRational, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::Rng;
use tfac_core::special::gamma;
use tfac_core::{l1_row, omega, KernelWorkspace, TimeMesh};

/// `(1/tau_k) int_{t_{k-1}}^{t_k} omega_{1-alpha}(t_n - s) ds` by quadrature.
fn l1_by_quadrature(mesh: &TimeMesh, n: usize, k: usize, alpha: f64) -> f64 {
    let tn = mesh.t(n);
    let (a, b) = (mesh.t(k - 1), mesh.t(k));
    let g = gamma(1.0 - alpha);
    let integral = tanh_sinh(a, b, |_, _, db| {
        let dist = (tn - b) + db;
        dist.powf(-alpha) / g
    });
    integral / mesh.tau(k)
}

#[test]
fn l1_row_matches_quadrature() {
    let mut r = rng(11);
    for alpha in [0.2, 0.5, 0.8] {
        let mesh = random_steps_mesh(&mut r, 6);
        for n in 1..=6 {
            let row = l1_row(&mesh, n, alpha).unwrap();
            for k in 1..=n {
                let q = l1_by_quadrature(&mesh, n, k, alpha);
                let a = row.get(n - k);
                assert!((a - q).abs() <= 1e-12 * q.abs(), "alpha={alpha} n={n} k={k}: {a} vs {q}");
            }
        }
    }
}

#[test]
fn l1_row_positive_decreasing_at_level_three() {
    let mesh = TimeMesh::from_steps(&[0.3, 0.01, 0.7]).unwrap();
    let row = l1_row(&mesh, 3, 0.5).unwrap();
    let c = row.coeffs();
    assert!(c[2] > 0.0 && c[0] > c[1] && c[1] > c[2]);
}

/// Solves the orthogonal identity as an upper-triangular linear system for
/// the DOC row of level `n`.
fn doc_row_by_lu(ws: &KernelWorkspace, n: usize) -> Vec<f64> {
    // Unknown x_j = theta^{(n)}_{n-j}; equation k: sum_{j>=k} x_j a^{(j)}_{j-k} = delta_{nk}.
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        for j in k..=n {
            m[(k - 1, j - 1)] = ws.a(j, j - k);
        }
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let x = m.lu().solve(&rhs).expect("nonsingular");
    (0..n).map(|i| x[n - 1 - i]).collect()
}

#[test]
fn doc_rows_match_direct_solve() {
    let mut r = rng(12);
    for alpha in [0.1, 0.5, 0.9] {
        let mesh = random_steps_mesh(&mut r, 50);
        let ws = KernelWorkspace::from_mesh(&mesh, alpha).unwrap();
        for n in [1, 2, 7, 25, 50] {
            let direct = doc_row_by_lu(&ws, n);
            let theta = ws.theta(n).unwrap();
            let scale = theta[0].abs();
            for (a, b) in theta.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-12 * scale, "alpha={alpha} n={n}: {a} vs {b}");
            }
            assert!(ws.check_identities(n).unwrap().max() < 1e-12);
        }
    }
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

#[test]
fn doc_and_dcc_match_exact_rational_recursion() {
    let mut r = rng(13);
    let n_max = 12;
    let mesh = random_steps_mesh(&mut r, n_max);
    let ws = KernelWorkspace::from_mesh(&mesh, 0.7).unwrap();
    let a = |n: usize, j: usize| rational(ws.a(n, j));

    let mut theta_exact: Vec<Vec<BigRational>> = Vec::new();
    for n in 1..=n_max {
        let mut th = vec![BigRational::zero(); n];
        th[0] = BigRational::from_integer(1.into()) / a(n, 0);
        for k in (1..n).rev() {
            let mut s = BigRational::zero();
            for j in k + 1..=n {
                s += &th[n - j] * a(j, j - k);
            }
            th[n - k] = -s / a(k, 0);
        }
        theta_exact.push(th);
    }
    for n in 1..=n_max {
        let theta = ws.theta(n).unwrap();
        let p = ws.p(n).unwrap();
        for j in 0..n {
            let exact = theta_exact[n - 1][j].to_f64().unwrap();
            assert!((theta[j] - exact).abs() <= 1e-13 * theta[0], "theta n={n} j={j}");
            // p^{(n)}_{n-k} = sum_{m=k}^{n} theta^{(m)}_{m-k}
            let k = n - j;
            let mut pe = BigRational::zero();
            for m in k..=n {
                pe += &theta_exact[m - 1][m - k];
            }
            let pe = pe.to_f64().unwrap();
            assert!((p[j] - pe).abs() <= 1e-13 * theta[0], "p n={n} j={j}");
        }
    }
}

#[test]
fn dcc_equals_partial_sum_definition_bitwise() {
    let mut r = rng(14);
    let mesh = random_steps_mesh(&mut r, 60);
    let ws = KernelWorkspace::from_mesh(&mesh, 0.35).unwrap();
    for n in 1..=60 {
        let p = ws.p(n).unwrap();
        for k in 1..=n {
            let mut s = 0.0;
            for m in k..=n {
                s += ws.theta(m).unwrap()[m - k];
            }
            assert_eq!(p[n - k], s);
        }
        // theta^{(n)}_{n-k} = p^{(n)}_{n-k} - p^{(n-1)}_{n-k-1}
        if n >= 2 {
            let prev = ws.p(n - 1).unwrap();
            let theta = ws.theta(n).unwrap();
            for j in 1..n {
                assert!((theta[j] - (p[j] - prev[j - 1])).abs() <= 1e-15 * p[j].abs().max(1.0));
            }
        }
    }
}

#[test]
fn identities_hold_on_long_meshes() {
    let mut r = rng(15);
    let mesh = random_steps_mesh(&mut r, 500);
    let ws = KernelWorkspace::from_mesh(&mesh, 0.7).unwrap();
    let res = ws.check_all_identities(500).unwrap();
    assert!(res.max() < 1e-11, "{res:?}");
    let graded = TimeMesh::composite_random(500, 4.0, 1.0, 3).unwrap();
    let ws = KernelWorkspace::from_mesh(&graded, 0.4).unwrap();
    assert!(ws.check_all_identities(500).unwrap().max() < 1e-11);
}

#[test]
fn near_unit_order_uniform_mesh() {
    let mesh = TimeMesh::uniform(1.0, 40).unwrap();
    let ws = KernelWorkspace::from_mesh(&mesh, 0.999).unwrap();
    let tau = mesh.tau(1);
    for n in 1..=40 {
        assert!(ws.check_identities(n).unwrap().max() < 1e-11);
        let theta = ws.theta(n).unwrap();
        for &t in &theta[1..] {
            assert!(t.abs() < 1e-2 * tau);
        }
    }
}

#[test]
fn doc_transform_of_linear_data_first_level() {
    let mesh = TimeMesh::from_steps(&[0.37, 0.2]).unwrap();
    let ws = KernelWorkspace::from_mesh(&mesh, 0.6).unwrap();
    let v: Vec<f64> = mesh.nodes().to_vec();
    let back = ws.doc_transform(&ws.caputo_l1(&v).unwrap()).unwrap();
    assert!((back[0] - 0.37).abs() < 1e-15);
    let zeros = ws.doc_transform(&ws.caputo_l1(&[2.0, 2.0, 2.0]).unwrap()).unwrap();
    assert!(zeros.iter().all(|&z| z == 0.0));
}

#[test]
fn fractional_integral_of_ones_is_bounded() {
    // sum_j p^{(n)}_{n-j} <= omega_{1+alpha}(t_n) with the DCC row as a
    // quadrature of the fractional integral of 1.
    let mesh = TimeMesh::uniform(2.0, 64).unwrap();
    let alpha = 0.5;
    let ws = KernelWorkspace::from_mesh(&mesh, alpha).unwrap();
    let i = ws.fractional_integral(&vec![1.0; 64]).unwrap();
    let exact = omega(1.0 + alpha, 2.0).unwrap();
    assert!(i <= exact && i > 0.9 * exact);
}

fn mesh_strategy() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-2.0f64..0.0, 1..60), 0.05f64..0.95)
        .prop_map(|(e, a)| (e.into_iter().map(|x| 10f64.powf(x)).collect(), a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_properties_hold((steps, alpha) in mesh_strategy()) {
        let mesh = TimeMesh::from_steps(&steps).unwrap();
        let ws = KernelWorkspace::from_mesh(&mesh, alpha).unwrap();
        for n in 1..=mesh.steps() {
            let p = ws.check_properties(n).unwrap();
            prop_assert!(p.all_hold(), "{:?}", p);
            prop_assert!(ws.check_identities(n).unwrap().max() < 1e-11);
            let zeta = ws.auxiliary_row(n).unwrap();
            prop_assert!(zeta.iter().all(|&z| z >= 0.0));
            prop_assert!(zeta.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn quadratic_slack_nonnegative(
        (steps, alpha) in mesh_strategy(),
        seed in any::<u64>(),
    ) {
        let mesh = TimeMesh::from_steps(&steps).unwrap();
        let ws = KernelWorkspace::from_mesh(&mesh, alpha).unwrap();
        let mut r = rng(seed);
        let n = mesh.steps();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        prop_assert!(ws.quadratic_bound_slack(&w, n).unwrap() >= -1e-12);
        if n == 1 {
            prop_assert!(ws.quadratic_bound_slack(&w, 1).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn doc_round_trip((steps, alpha) in mesh_strategy(), seed in any::<u64>()) {
        let mesh = TimeMesh::from_steps(&steps).unwrap();
        let ws = KernelWorkspace::from_mesh(&mesh, alpha).unwrap();
        let mut r = rng(seed);
        let v: Vec<f64> = (0..=mesh.steps()).map(|_| r.random_range(-1.0..1.0)).collect();
        let back = ws.doc_transform(&ws.caputo_l1(&v).unwrap()).unwrap();
        for (m, b) in back.iter().enumerate() {
            prop_assert!((b - (v[m + 1] - v[m])).abs() < 1e-12);
        }
    }
}
