//! Geometry helpers and oracles shared by the integration tests.
#![allow(dead_code)]

use ife_core::geometry::{p1_gradients, LevelSet, Point};
use ife_core::mesh::{ElementSplit, InterfaceMesh};
use ife_core::sparse::CsrMatrix;

pub fn unit_triangle() -> [Point; 3] {
    [
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(0.0, 1.0),
    ]
}

pub fn point_on_edge(k: usize, s: f64) -> Point {
    let t = unit_triangle();
    let (a, b) = (t[k], t[(k + 1) % 3]);
    a + (b - a) * s
}

/// Straight level set through points on two different edges of the unit triangle.
pub fn line_through(e0: usize, s0: f64, e1: usize, s1: f64, flip: bool) -> (f64, f64, f64) {
    let (p, q) = (point_on_edge(e0, s0), point_on_edge(e1, s1));
    let (a, b) = (q.y - p.y, p.x - q.x);
    let c = -(a * p.x + b * p.y);
    if flip {
        (-a, -b, -c)
    } else {
        (a, b, c)
    }
}

pub fn split_of(line: (f64, f64, f64)) -> ElementSplit {
    let (a, b, c) = line;
    let mesh = InterfaceMesh::from_triangles(unit_triangle().to_vec(), vec![[0, 1, 2]], 1)
        .unwrap()
        .classify(&LevelSet::new(move |p: Point| a * p.x + b * p.y + c))
        .unwrap();
    mesh.split(0).expect("cut triangle").clone()
}

pub fn p1_stiffness(mesh: &InterfaceMesh, beta: f64) -> CsrMatrix {
    let mut triplets = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let g = p1_gradients(&mesh.triangle_points(t));
        let area = mesh.triangle_area(t);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], beta * area * g[i].dot(&g[j])));
            }
        }
    }
    let n = mesh.num_vertices();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Integral of `x^i y^j` over the part of the unit triangle where the line is negative,
/// by the midpoint rule in x and exact integration in y on each column.
pub fn raster_minus(line: (f64, f64, f64), i: i32, j: i32) -> f64 {
    let (a, b, c) = line;
    let steps = 20_000;
    let dx = 1.0 / steps as f64;
    let mut total = 0.0;
    for k in 0..steps {
        let x = (k as f64 + 0.5) * dx;
        let (mut lo, mut hi): (f64, f64) = (0.0, 1.0 - x);
        // a x + b y + c < 0
        if b.abs() < 1e-300 {
            if a * x + c >= 0.0 {
                continue;
            }
        } else {
            let y0 = -(a * x + c) / b;
            if b > 0.0 {
                hi = hi.min(y0);
            } else {
                lo = lo.max(y0);
            }
        }
        if hi <= lo {
            continue;
        }
        let jp = (j + 1) as f64;
        total += x.powi(i) * (hi.powi(j + 1) - lo.powi(j + 1)) / jp * dx;
    }
    total
}
