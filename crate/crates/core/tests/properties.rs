use approx::assert_relative_eq;
use ife_core::assembly::{bilinear_matrix, Method, PenaltyConfig, SemilinearProblem};
use ife_core::benchmarks::{example_circle, example_nonlinear_ring, BenchmarkId};
use ife_core::experiment::build_space;
use ife_core::geometry::{LevelSet, Point, Side};
use ife_core::ife::{build_ife_basis, FemSpace};
use ife_core::mesh::build_uniform_square_mesh;
use ife_core::quadrature::quad_split;
use ife_core::recovery::Recovery;
use proptest::prelude::*;

mod common;
use common::{line_through, p1_stiffness, raster_minus, split_of};

fn random_line() -> impl Strategy<Value = (f64, f64, f64)> {
    (
        0usize..3,
        1usize..3,
        0.05f64..0.95,
        0.05f64..0.95,
        any::<bool>(),
    )
        .prop_map(|(e0, de, s0, s1, flip)| line_through(e0, s0, (e0 + de) % 3, s1, flip))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ife_basis_satisfies_interface_conditions(line in random_line(), log_ratio in -3.0f64..3.0) {
        let split = split_of(line);
        let (bm, bp) = (1.0, 10f64.powf(log_ratio));
        let basis = build_ife_basis(&split, bm, bp).unwrap();
        let n = split.segment_normal;
        for i in 0..3 {
            let (m, p) = (&basis.minus[i], &basis.plus[i]);
            for z in &split.cut_points {
                prop_assert!((m.eval(z) - p.eval(z)).abs() < 1e-10);
            }
            let flux = bm * m.grad().dot(&n) - bp * p.grad().dot(&n);
            prop_assert!(flux.abs() < 1e-9 * bm.max(bp) * (m.grad().norm() + p.grad().norm()).max(1.0));
            for j in 0..3 {
                let piece = basis.piece(split.vertex_sides[j]);
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((piece[i].eval(&split.vertices[j]) - expected).abs() < 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_quadrature_matches_raster(line in random_line(), i in 0i32..3, j in 0i32..3) {
        let split = split_of(line);
        let [qm, _] = quad_split(&split, 4).unwrap();
        let quad: f64 = qm.iter().map(|q| q.weight * q.point.x.powi(i) * q.point.y.powi(j)).sum();
        let raster = raster_minus(line, i, j);
        prop_assert!((quad - raster).abs() < 1e-6, "{} vs {}", quad, raster);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equal_coefficients_reduce_to_p1(n in 3usize..10, r in 0.3f64..0.8, beta in 0.01f64..100.0, eps in -1i32..=1) {
        let mesh = build_uniform_square_mesh(-1.0, 1.0, -1.0, 1.0, n)
            .unwrap()
            .classify(&LevelSet::circle(r));
        // radii that cross an edge twice are rejected by design
        prop_assume!(mesh.is_ok());
        let mesh = mesh.unwrap();
        let oracle = p1_stiffness(&mesh, beta);
        let space = FemSpace::new(mesh, &move |_| beta, &move |_| beta).unwrap();
        let spec = example_circle(beta, beta).unwrap();
        let cfg = PenaltyConfig::new(eps as f64, 1.0 + beta).unwrap();
        let a = bilinear_matrix(&space, &spec, &cfg, true).unwrap();
        let diff = (a.to_dense() - oracle.to_dense()).abs().max();
        prop_assert!(diff < 1e-12 * beta.max(1.0), "{}", diff);
    }

    #[test]
    fn symmetric_iff_epsilon_is_minus_one(n in 3usize..8, log_ratio in -3.0f64..3.0, eps in -1i32..=1, sigma in 0.1f64..10.0) {
        let bp = 10f64.powf(log_ratio);
        let spec = example_circle(1.0, bp).unwrap();
        let space = build_space(BenchmarkId::Circle, &spec, n).unwrap();
        let cfg = PenaltyConfig::new(eps as f64, sigma).unwrap();
        let a = bilinear_matrix(&space, &spec, &cfg, true).unwrap();
        prop_assert_eq!(a.asymmetry() <= 1e-12 * a.max_abs(), eps == -1);
    }

    #[test]
    fn recovery_preserves_quadratics(n in 6usize..14, r in 0.35f64..0.75, c in prop::array::uniform6(-2.0f64..2.0)) {
        let mesh = build_uniform_square_mesh(-1.0, 1.0, -1.0, 1.0, n)
            .unwrap()
            .classify(&LevelSet::circle(r));
        // radii that cross an edge twice are rejected by design
        prop_assume!(mesh.is_ok());
        let mesh = mesh.unwrap();
        let rec = Recovery::new(&mesh).unwrap();
        let q = |p: &Point| c[0] + c[1] * p.x + c[2] * p.y + c[3] * p.x * p.x + c[4] * p.x * p.y + c[5] * p.y * p.y;
        let values: Vec<f64> = rec.submesh.vertices.iter().map(q).collect();
        let field = rec.recover_values(&values);
        for side in Side::BOTH {
            for v in 0..rec.submesh.num_vertices() {
                if rec.submesh.on_side[side.index()][v] {
                    let p = rec.submesh.vertices[v];
                    let gx = c[1] + 2.0 * c[3] * p.x + c[4] * p.y;
                    let gy = c[2] + c[4] * p.x + 2.0 * c[5] * p.y;
                    let g = field.at(side, v);
                    prop_assert!((g.x - gx).abs() < 1e-9 && (g.y - gy).abs() < 1e-9, "{} {:?}", v, g);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(n in prop_oneof![Just(2usize), Just(4)], eps in -1i32..=1, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let spec = example_nonlinear_ring(1.0, 1000.0).unwrap();
        let space = build_space(BenchmarkId::Ring, &spec, n).unwrap();
        let cfg = PenaltyConfig::new(eps as f64, Method::Symmetric.default_sigma0(1000.0)).unwrap();
        let problem = SemilinearProblem::new(&space, &spec, &cfg).unwrap();
        let constrained = problem.linear_system().is_constrained();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..space.num_dofs()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let d: Vec<f64> = constrained
            .iter()
            .map(|&c| if c { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let jd = problem.jacobian(&u).mul_vec(&d);
        let step = 1e-6;
        let at = |s: f64| -> Vec<f64> { u.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
        let (rp, rm) = (problem.residual(&at(step)), problem.residual(&at(-step)));
        let scale = jd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (k, v) in jd.iter().enumerate() {
            let fd = (rp[k] - rm[k]) / (2.0 * step);
            prop_assert!((v - fd).abs() <= 1e-6 * scale, "{} {} {}", k, v, fd);
        }
    }
}

#[test]
fn equal_coefficient_basis_is_p1() {
    let split = split_of(line_through(0, 0.4, 1, 0.7, false));
    let basis = build_ife_basis(&split, 7.0, 7.0).unwrap();
    let p1 = ife_core::ife::p1_basis(&split.vertices);
    for i in 0..3 {
        for piece in [&basis.minus[i], &basis.plus[i]] {
            assert_relative_eq!(piece.a, p1[i].a, epsilon = 1e-12);
            assert_relative_eq!(piece.b, p1[i].b, epsilon = 1e-12);
            assert_relative_eq!(piece.c, p1[i].c, epsilon = 1e-12);
        }
    }
}

#[test]
fn raster_oracle_on_a_known_cut() {
    // x < 1/2 inside the unit triangle has area 3/8
    assert_relative_eq!(raster_minus((1.0, 0.0, -0.5), 0, 0), 0.375, epsilon = 1e-8);
}
