//! Refinement-level invariants checked on the benchmark problems.

use ife_core::assembly::{solve_linear, Method, PenaltyConfig, VOLUME_DEGREE};
use ife_core::benchmarks::BenchmarkId;
use ife_core::experiment::{build_space, run, RunConfig};
use ife_core::metrics::recovered_gradient_error;
use ife_core::quadrature::quad_triangle;
use ife_core::recovery::Recovery;
use ife_core::solver::SolverOptions;

#[test]
fn energy_error_decreases_under_refinement() {
    for b in BenchmarkId::ALL {
        let out =
            run(&RunConfig::new(b, Method::Symmetric).with_levels(&[16, 32, 64, 128])).unwrap();
        let de = out.table.column(|r| r.de);
        assert!(de.windows(2).all(|w| w[1] < w[0]), "{b}: {de:?}");
    }
}

#[test]
fn recovered_error_obeys_the_triangle_inequality() {
    let spec = BenchmarkId::Circle.problem(None).unwrap();
    let space = build_space(BenchmarkId::Circle, &spec, 16).unwrap();
    let cfg = PenaltyConfig::for_method(Method::Symmetric, 10.0);
    let (u_h, _, _) = solve_linear(&space, &spec, &cfg, &SolverOptions::default()).unwrap();
    let rec = Recovery::new(space.mesh()).unwrap();
    let field = rec.recover(&space, &u_h);
    let sub = &rec.submesh;
    let ex = spec.exact().unwrap();

    let (mut discrete, mut gap) = (0.0, 0.0);
    for k in 0..sub.num_triangles() {
        let grad_h = space
            .local_function(&u_h, sub.parents[k], sub.sides[k])
            .grad();
        for q in quad_triangle(&sub.triangle_points(k), VOLUME_DEGREE).unwrap() {
            discrete += q.weight * (ex.grad(sub.sides[k], q.point) - grad_h).norm_squared();
            gap += q.weight * (grad_h - field.eval(sub, k, &q.point)).norm_squared();
        }
    }
    let dre = recovered_gradient_error(&space, sub, &field, &spec).unwrap();
    assert!(dre <= discrete.sqrt() + gap.sqrt() + 1e-8);
}

#[test]
fn recovery_operator_norm_scales_like_one_over_h() {
    let scaled: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let mesh = BenchmarkId::Circle.mesh(n).unwrap();
            let spec = BenchmarkId::Circle.problem(None).unwrap();
            let mesh = mesh.classify(&spec.level_set).unwrap();
            Recovery::new(&mesh).unwrap().operator.infinity_norm() * mesh.h
        })
        .collect();
    for w in scaled.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.4..=2.5).contains(&ratio), "{scaled:?}");
    }
}
