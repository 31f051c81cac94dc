//! Manufactured benchmark problems with exact solutions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::{ExactSolution, Nonlinearity, ProblemSpec};
use crate::error::{Error, Result};
use crate::geometry::{LevelSet, Point, Vector};
use crate::mesh::{build_square_ring_mesh, build_uniform_square_mesh, InterfaceMesh};

pub const CIRCLE_RADIUS: f64 = PI / 6.0;
pub const RING_RADIUS: f64 = PI / 3.0;
pub const RING_OUTER: f64 = 2.0;
pub const RING_INNER: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    /// Circular interface in `[-1,1]^2`, piecewise constant coefficient.
    Circle,
    /// Cardioid interface with a variable coefficient inside.
    Cardioid,
    /// Semilinear problem `-div(beta grad u) + sin u = f` on a square ring.
    Ring,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 3] = [
        BenchmarkId::Circle,
        BenchmarkId::Cardioid,
        BenchmarkId::Ring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Circle => "circle",
            BenchmarkId::Cardioid => "cardioid",
            BenchmarkId::Ring => "ring",
        }
    }

    /// Coefficient pair used when none is given.
    pub fn default_beta(self) -> (f64, f64) {
        match self {
            BenchmarkId::Circle => (1.0, 10.0),
            BenchmarkId::Cardioid => (3.0, 100.0),
            BenchmarkId::Ring => (1.0, 1000.0),
        }
    }

    pub fn default_levels(self) -> Vec<usize> {
        match self {
            BenchmarkId::Ring => vec![8, 16, 32, 64],
            _ => vec![16, 32, 64, 128],
        }
    }

    /// The problem for a coefficient pair. The cardioid's coefficients are fixed and
    /// ignore `beta`.
    pub fn problem(self, beta: Option<(f64, f64)>) -> Result<ProblemSpec> {
        let (bm, bp) = beta.unwrap_or(self.default_beta());
        match self {
            BenchmarkId::Circle => example_circle(bm, bp),
            BenchmarkId::Cardioid => {
                if beta.is_some() {
                    log::warn!("the cardioid benchmark has fixed coefficients; ignoring --beta");
                }
                Ok(example_cardioid())
            }
            BenchmarkId::Ring => example_nonlinear_ring(bm, bp),
        }
    }

    /// Cells across the domain for level `n`, i.e. grid spacing `1/n`.
    pub fn cells(self, n: usize) -> usize {
        match self {
            BenchmarkId::Circle | BenchmarkId::Cardioid => 2 * n,
            BenchmarkId::Ring => 2 * RING_OUTER as usize * n,
        }
    }

    /// Mesh for refinement level `n`.
    pub fn mesh(self, n: usize) -> Result<InterfaceMesh> {
        let cells = self.cells(n);
        match self {
            BenchmarkId::Circle | BenchmarkId::Cardioid => {
                build_uniform_square_mesh(-1.0, 1.0, -1.0, 1.0, cells)
            }
            BenchmarkId::Ring => build_square_ring_mesh(RING_OUTER, RING_INNER, cells),
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown benchmark {s:?} (expected circle, cardioid or ring)"
                ))
            })
    }
}

fn check_betas(bm: f64, bp: f64) -> Result<()> {
    if bm > 0.0 && bp > 0.0 && bm.is_finite() && bp.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "coefficients must be positive, got ({bm}, {bp})"
        )))
    }
}

fn constant(c: f64) -> crate::geometry::ScalarFn {
    Arc::new(move |_| c)
}

fn radius(p: Point) -> f64 {
    p.coords.norm()
}

/// `u^- = r^3 / beta^-`, `u^+ = r^3 / beta^+ + (1/beta^- - 1/beta^+) r0^3`, `f = -9r`.
pub fn example_circle(beta_minus: f64, beta_plus: f64) -> Result<ProblemSpec> {
    check_betas(beta_minus, beta_plus)?;
    let r0 = CIRCLE_RADIUS;
    let shift = (1.0 / beta_minus - 1.0 / beta_plus) * r0.powi(3);
    let minus: crate::geometry::ScalarFn = Arc::new(move |p| radius(p).powi(3) / beta_minus);
    let plus: crate::geometry::ScalarFn = Arc::new(move |p| radius(p).powi(3) / beta_plus + shift);
    let level_set = LevelSet::circle(r0);
    let ls = level_set.clone();
    let (m, pl) = (minus.clone(), plus.clone());
    let source: crate::geometry::ScalarFn = Arc::new(|p| -9.0 * radius(p));
    Ok(ProblemSpec {
        name: "circle".into(),
        level_set,
        beta_minus: constant(beta_minus),
        beta_plus: constant(beta_plus),
        source_minus: source.clone(),
        source_plus: source,
        flux_jump: None,
        dirichlet: Arc::new(move |p| if ls.eval(p) < 0.0 { m(p) } else { pl(p) }),
        nonlinearity: None,
        exact: Some(ExactSolution {
            minus,
            plus,
            grad_minus: Arc::new(move |p| 3.0 * radius(p) * p.coords / beta_minus),
            grad_plus: Arc::new(move |p| 3.0 * radius(p) * p.coords / beta_plus),
        }),
    })
}

/// `phi = (3(x^2+y^2) - x)^2 - x^2 - y^2`.
pub fn cardioid_phi(p: Point) -> f64 {
    let q = 3.0 * (p.x * p.x + p.y * p.y) - p.x;
    q * q - p.x * p.x - p.y * p.y
}

pub fn cardioid_grad(p: Point) -> Vector {
    let q = 3.0 * (p.x * p.x + p.y * p.y) - p.x;
    Vector::new(
        2.0 * q * (6.0 * p.x - 1.0) - 2.0 * p.x,
        12.0 * q * p.y - 2.0 * p.y,
    )
}

pub fn cardioid_laplacian(p: Point) -> f64 {
    let q = 3.0 * (p.x * p.x + p.y * p.y) - p.x;
    let a = 6.0 * p.x - 1.0;
    2.0 * a * a + 72.0 * p.y * p.y + 24.0 * q - 4.0
}

/// Cardioid interface, `beta^- = xy + 3`, `beta^+ = 100`, `u = phi / beta`.
pub fn example_cardioid() -> ProblemSpec {
    let beta_m = |p: Point| p.x * p.y + 3.0;
    let grad_beta_m = |p: Point| Vector::new(p.y, p.x);
    let bp = 100.0;
    // -div(beta grad(phi/beta)) = -lap phi + grad phi . grad beta / beta - phi |grad beta|^2 / beta^2
    let source_minus = move |p: Point| {
        let b = beta_m(p);
        let gb = grad_beta_m(p);
        -cardioid_laplacian(p) + cardioid_grad(p).dot(&gb) / b
            - cardioid_phi(p) * gb.norm_squared() / (b * b)
    };
    let level_set = LevelSet::new(cardioid_phi).with_gradient(cardioid_grad);
    let exact = ExactSolution {
        minus: Arc::new(move |p| cardioid_phi(p) / beta_m(p)),
        plus: Arc::new(move |p| cardioid_phi(p) / bp),
        grad_minus: Arc::new(move |p| {
            let b = beta_m(p);
            cardioid_grad(p) / b - cardioid_phi(p) * grad_beta_m(p) / (b * b)
        }),
        grad_plus: Arc::new(move |p| cardioid_grad(p) / bp),
    };
    let (m, pl) = (exact.minus.clone(), exact.plus.clone());
    ProblemSpec {
        name: "cardioid".into(),
        level_set,
        beta_minus: Arc::new(beta_m),
        beta_plus: constant(bp),
        source_minus: Arc::new(source_minus),
        source_plus: Arc::new(|p| -cardioid_laplacian(p)),
        flux_jump: None,
        dirichlet: Arc::new(move |p| if cardioid_phi(p) < 0.0 { m(p) } else { pl(p) }),
        nonlinearity: None,
        exact: Some(exact),
    }
}

/// `u^- = log r / beta^-`, `u^+ = log r / beta^+ + (1/beta^- - 1/beta^+) log r0`,
/// `f = sin u` since `log r` is harmonic.
pub fn example_nonlinear_ring(beta_minus: f64, beta_plus: f64) -> Result<ProblemSpec> {
    check_betas(beta_minus, beta_plus)?;
    let r0 = RING_RADIUS;
    let shift = (1.0 / beta_minus - 1.0 / beta_plus) * r0.ln();
    let minus: crate::geometry::ScalarFn = Arc::new(move |p| radius(p).ln() / beta_minus);
    let plus: crate::geometry::ScalarFn = Arc::new(move |p| radius(p).ln() / beta_plus + shift);
    let level_set = LevelSet::circle(r0);
    let ls = level_set.clone();
    let (m, pl) = (minus.clone(), plus.clone());
    let (m2, pl2) = (minus.clone(), plus.clone());
    Ok(ProblemSpec {
        name: "ring".into(),
        level_set,
        beta_minus: constant(beta_minus),
        beta_plus: constant(beta_plus),
        source_minus: Arc::new(move |p| m2(p).sin()),
        source_plus: Arc::new(move |p| pl2(p).sin()),
        flux_jump: None,
        dirichlet: Arc::new(move |p| if ls.eval(p) < 0.0 { m(p) } else { pl(p) }),
        nonlinearity: Some(Nonlinearity::sine()),
        exact: Some(ExactSolution {
            minus,
            plus,
            grad_minus: Arc::new(move |p| p.coords / (p.coords.norm_squared() * beta_minus)),
            grad_plus: Arc::new(move |p| p.coords / (p.coords.norm_squared() * beta_plus)),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `-div(beta grad u) + s(u)` by central differences of the flux.
    fn fd_operator(spec: &ProblemSpec, side: Side, p: Point, h: f64) -> f64 {
        let ex = spec.exact.as_ref().unwrap();
        let flux = |q: Point, dir: Vector| {
            // beta du/d(dir) at q by central differences
            let d = (ex.value(side, q + dir * h) - ex.value(side, q - dir * h)) / (2.0 * h);
            spec.beta(side, q) * d
        };
        let ex_ = Vector::new(1.0, 0.0);
        let ey = Vector::new(0.0, 1.0);
        let div = (flux(p + ex_ * h, ex_) - flux(p - ex_ * h, ex_)) / (2.0 * h)
            + (flux(p + ey * h, ey) - flux(p - ey * h, ey)) / (2.0 * h);
        let s = spec
            .nonlinearity
            .as_ref()
            .map_or(0.0, |n| (n.value)(ex.value(side, p)));
        -div + s
    }

    fn check_source(spec: &ProblemSpec, sample: impl Fn(&mut ChaCha8Rng) -> Point) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 2];
        let mut tries = 0;
        while counts.iter().any(|&c| c < 1000) {
            tries += 1;
            assert!(tries < 200_000);
            let p = sample(&mut rng);
            let phi = spec.level_set.eval(p);
            // keep the FD stencil on one side
            if phi.abs() < 1e-2 {
                continue;
            }
            let side = spec.level_set.side(p);
            if counts[side.index()] >= 1000 {
                continue;
            }
            counts[side.index()] += 1;
            let fd = fd_operator(spec, side, p, 1e-4);
            let f = spec.source(side, p);
            assert!(
                (fd - f).abs() <= 1e-4 * (1.0 + f.abs()),
                "{} {side} at {p:?}: fd {fd} vs f {f}",
                spec.name
            );
        }
    }

    fn square_sample(rng: &mut ChaCha8Rng) -> Point {
        Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn circle_source_by_finite_differences() {
        let spec = example_circle(1.0, 10.0).unwrap();
        check_source(&spec, square_sample);
        assert_eq!(spec.source(Side::Minus, Point::new(0.5, 0.0)), -4.5);
    }

    #[test]
    fn cardioid_source_by_finite_differences() {
        check_source(&example_cardioid(), square_sample);
    }

    #[test]
    fn ring_source_by_finite_differences() {
        let spec = example_nonlinear_ring(1.0, 1000.0).unwrap();
        check_source(&spec, |rng| loop {
            let p = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if p.x.abs().max(p.y.abs()) > 0.5 {
                break p;
            }
        });
    }

    #[test]
    fn cardioid_laplacian_matches_five_point_stencil() {
        let p = Point::new(0.5, 0.5);
        let h = 1e-4;
        let fd = (cardioid_phi(p + Vector::new(h, 0.0))
            + cardioid_phi(p - Vector::new(h, 0.0))
            + cardioid_phi(p + Vector::new(0.0, h))
            + cardioid_phi(p - Vector::new(0.0, h))
            - 4.0 * cardioid_phi(p))
            / (h * h);
        let exact = cardioid_laplacian(p);
        assert!((fd - exact).abs() <= 1e-5 * exact.abs(), "{fd} vs {exact}");
        let spec = example_cardioid();
        assert!((spec.source(Side::Plus, p) + exact).abs() < 1e-14);
    }

    /// Interface points of each benchmark by bisection along rays from the origin.
    fn interface_points(spec: &ProblemSpec, count: usize) -> Vec<Point> {
        (0..count)
            .filter_map(|k| {
                let theta = 2.0 * PI * (k as f64 + 0.37) / count as f64;
                let dir = Vector::new(theta.cos(), theta.sin());
                let mut lo = 1e-3;
                let mut hi = 0.99;
                let f = |t: f64| spec.level_set.eval(Point::from(dir * t * 2.0));
                if f(lo).signum() == f(hi).signum() {
                    return None;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid).signum() == f(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(Point::from(dir * lo * 2.0))
            })
            .collect()
    }

    #[test]
    fn jump_conditions_hold_on_the_interface() {
        let specs = [
            example_circle(1.0, 1000.0).unwrap(),
            example_cardioid(),
            example_nonlinear_ring(1.0, 1000.0).unwrap(),
        ];
        for spec in &specs {
            let pts = interface_points(spec, 100);
            assert!(pts.len() >= 90, "{}: {} points", spec.name, pts.len());
            let ex = spec.exact.as_ref().unwrap();
            for p in pts {
                let um = ex.value(Side::Minus, p);
                let up = ex.value(Side::Plus, p);
                assert!(
                    (um - up).abs() < 1e-10 * (1.0 + um.abs()),
                    "{}: [u] at {p:?}",
                    spec.name
                );
                let n = spec.level_set.gradient(p).unwrap().normalize();
                let fm = spec.beta(Side::Minus, p) * ex.grad(Side::Minus, p).dot(&n);
                let fp = spec.beta(Side::Plus, p) * ex.grad(Side::Plus, p).dot(&n);
                assert!(
                    (fm - fp).abs() < 1e-10 * (1.0 + fm.abs()),
                    "{}: flux at {p:?}",
                    spec.name
                );
            }
        }
    }

    #[test]
    fn exact_gradients_match_finite_differences() {
        let h = 1e-6;
        for spec in [example_circle(1.0, 10.0).unwrap(), example_cardioid()] {
            let ex = spec.exact.as_ref().unwrap();
            for p in [
                Point::new(0.3, -0.2),
                Point::new(0.8, 0.6),
                Point::new(-0.05, 0.1),
            ] {
                for side in Side::BOTH {
                    let g = ex.grad(side, p);
                    let gx = (ex.value(side, p + Vector::new(h, 0.0))
                        - ex.value(side, p - Vector::new(h, 0.0)))
                        / (2.0 * h);
                    let gy = (ex.value(side, p + Vector::new(0.0, h))
                        - ex.value(side, p - Vector::new(0.0, h)))
                        / (2.0 * h);
                    assert!((g - Vector::new(gx, gy)).norm() < 1e-7 * (1.0 + g.norm()));
                }
            }
        }
    }

    #[test]
    fn ring_excludes_origin_and_parses() {
        let mesh = BenchmarkId::Ring.mesh(16).unwrap();
        assert!(mesh
            .vertices
            .iter()
            .all(|p| p.x.abs().max(p.y.abs()) >= 0.5 - 1e-12));
        assert_eq!("ring".parse::<BenchmarkId>().unwrap(), BenchmarkId::Ring);
        assert!("square".parse::<BenchmarkId>().is_err());
        assert!(example_circle(0.0, 1.0).is_err());
    }
}
