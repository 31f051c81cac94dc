//! Symmetric Gauss rules on triangles, split elements and segments.

use crate::error::{Error, Result};
use crate::geometry::{signed_area, Point, Side};
use crate::mesh::ElementSplit;

/// A quadrature point with its physical weight.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub point: Point,
    pub weight: f64,
}

// Barycentric orbits (a, a, 1 - 2a) of the Dunavant rules, with weights normalized to 1.
const DEG2: [(f64, f64); 1] = [(1.0 / 6.0, 1.0 / 3.0)];
const DEG4: [(f64, f64); 2] = [
    (0.445948490915965, 0.223381589678011),
    (0.091576213509771, 0.109951743655322),
];
const DEG6_SYM: [(f64, f64); 2] = [
    (0.249286745170910, 0.116786275726379),
    (0.063089014491502, 0.050844906370207),
];
// (a, b, 1 - a - b) orbit with 6 permutations
const DEG6_ASYM: (f64, f64, f64) = (0.053145049844817, 0.310352451033784, 0.082851075618374);

/// Barycentric points and reference weights (summing to 1) for the given degree of exactness.
pub fn reference_rule(degree: usize) -> Result<Vec<([f64; 3], f64)>> {
    let mut rule = Vec::new();
    let push_orbit = |rule: &mut Vec<([f64; 3], f64)>, a: f64, w: f64| {
        let c = 1.0 - 2.0 * a;
        rule.push(([a, a, c], w));
        rule.push(([a, c, a], w));
        rule.push(([c, a, a], w));
    };
    match degree {
        2 => DEG2.iter().for_each(|&(a, w)| push_orbit(&mut rule, a, w)),
        4 => DEG4.iter().for_each(|&(a, w)| push_orbit(&mut rule, a, w)),
        6 => {
            DEG6_SYM
                .iter()
                .for_each(|&(a, w)| push_orbit(&mut rule, a, w));
            let (a, b, w) = DEG6_ASYM;
            let c = 1.0 - a - b;
            for bary in [
                [a, b, c],
                [a, c, b],
                [b, a, c],
                [b, c, a],
                [c, a, b],
                [c, b, a],
            ] {
                rule.push((bary, w));
            }
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unsupported triangle quadrature degree {degree} (use 2, 4 or 6)"
            )))
        }
    }
    Ok(rule)
}

/// Quadrature rule mapped onto a triangle. Weights sum to the (unsigned) area.
pub fn quad_triangle(tri: &[Point; 3], degree: usize) -> Result<Vec<QuadPoint>> {
    let rule = reference_rule(degree)?;
    Ok(map_rule(&rule, tri))
}

pub(crate) fn map_rule(rule: &[([f64; 3], f64)], tri: &[Point; 3]) -> Vec<QuadPoint> {
    let area = signed_area(&tri[0], &tri[1], &tri[2]).abs();
    rule.iter()
        .map(|(b, w)| QuadPoint {
            point: Point::from(tri[0].coords * b[0] + tri[1].coords * b[1] + tri[2].coords * b[2]),
            weight: w * area,
        })
        .collect()
}

/// Triangles of the fan of a convex polygon from its first vertex.
pub fn fan_triangles(poly: &[Point]) -> Vec<[Point; 3]> {
    (1..poly.len().saturating_sub(1))
        .map(|k| [poly[0], poly[k], poly[k + 1]])
        .collect()
}

/// Quadrature over T^- and T^+ of a split element, indexed by `Side::index`.
pub fn quad_split(split: &ElementSplit, degree: usize) -> Result<[Vec<QuadPoint>; 2]> {
    let rule = reference_rule(degree)?;
    let mut out: [Vec<QuadPoint>; 2] = [Vec::new(), Vec::new()];
    for side in Side::BOTH {
        for tri in fan_triangles(&split.polygon_points(side)) {
            out[side.index()].extend(map_rule(&rule, &tri));
        }
    }
    Ok(out)
}

const GAUSS4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Four-point Gauss-Legendre rule on the segment `a`-`b`; weights sum to its length.
pub fn quad_segment(a: Point, b: Point) -> [QuadPoint; 4] {
    let half = 0.5 * (b - a).norm();
    let mid = nalgebra::center(&a, &b);
    let dir = 0.5 * (b - a);
    std::array::from_fn(|k| QuadPoint {
        point: mid + dir * GAUSS4_NODES[k],
        weight: half * GAUSS4_WEIGHTS[k],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSet;
    use crate::mesh::build_uniform_square_mesh;

    fn unit() -> [Point; 3] {
        [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ]
    }

    fn integrate(q: &[QuadPoint], f: impl Fn(&Point) -> f64) -> f64 {
        q.iter().map(|qp| qp.weight * f(&qp.point)).sum()
    }

    #[test]
    fn constants_and_monomials() {
        let q2 = quad_triangle(&unit(), 2).unwrap();
        assert!((integrate(&q2, |_| 1.0) - 0.5).abs() < 1e-15);
        let q4 = quad_triangle(&unit(), 4).unwrap();
        let v = integrate(&q4, |p| p.x * p.x * p.y * p.y);
        assert!((v - 1.0 / 180.0).abs() < 1e-14, "{v}");
        assert!(quad_triangle(&unit(), 3).is_err());
    }

    /// Exact integral of x^i y^j over the unit right triangle: i! j! / (i + j + 2)!.
    fn monomial_exact(i: u32, j: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn exact_up_to_degree() {
        for degree in [2usize, 4, 6] {
            let q = quad_triangle(&unit(), degree).unwrap();
            for i in 0..=degree as u32 {
                for j in 0..=(degree as u32 - i) {
                    let v = integrate(&q, |p| p.x.powi(i as i32) * p.y.powi(j as i32));
                    assert!(
                        (v - monomial_exact(i, j)).abs() < 1e-14,
                        "degree {degree}: x^{i} y^{j}: {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn linear_exactness_on_arbitrary_triangle() {
        let tri = [
            Point::new(0.3, -1.2),
            Point::new(2.1, 0.4),
            Point::new(-0.7, 1.9),
        ];
        let area = signed_area(&tri[0], &tri[1], &tri[2]);
        let cx = (tri[0].x + tri[1].x + tri[2].x) / 3.0;
        for d in [2, 4, 6] {
            let q = quad_triangle(&tri, d).unwrap();
            assert!((integrate(&q, |p| p.x) - area * cx).abs() < 1e-14);
        }
    }

    #[test]
    fn split_weights() {
        // one triangle (0,0),(1,0),(0,1) of a mesh cut by x = 0.5
        let tri = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let mesh = crate::mesh::InterfaceMesh::from_triangles(tri.to_vec(), vec![[0, 1, 2]], 1)
            .unwrap()
            .classify(&LevelSet::new(|p: Point| p.x - 0.5))
            .unwrap();
        let s = mesh.split(0).unwrap();
        let [qm, qp] = quad_split(s, 4).unwrap();
        let minus = integrate(&qm, |_| 1.0);
        let plus = integrate(&qp, |_| 1.0);
        assert!((minus - 0.375).abs() < 1e-15);
        assert!((minus + plus - 0.5).abs() < 1e-15);

        // raster oracle: midpoint rule over the plus side {x > 0.5, x + y < 1}
        let steps = 4000usize;
        let dx = 1.0 / steps as f64;
        let mut raster = 0.0;
        for i in 0..steps {
            let x = (i as f64 + 0.5) * dx;
            if x <= 0.5 {
                continue;
            }
            // exact inner integral in y of the indicator (column height 1 - x)
            raster += x * (1.0 - x) * dx;
        }
        let exact_plus_x = integrate(&qp, |p| p.x);
        assert!(
            (exact_plus_x - raster).abs() < 1e-6,
            "{exact_plus_x} vs {raster}"
        );
    }

    #[test]
    fn split_areas_on_circle_mesh() {
        let m = build_uniform_square_mesh(-1.0, 1.0, -1.0, 1.0, 8)
            .unwrap()
            .classify(&LevelSet::circle(0.6))
            .unwrap();
        for &t in &m.interface_elements() {
            let s = m.split(t).unwrap();
            let [qm, qp] = quad_split(s, 4).unwrap();
            assert!((integrate(&qm, |_| 1.0) - s.area(Side::Minus)).abs() < 1e-15);
            assert!((integrate(&qp, |_| 1.0) - s.area(Side::Plus)).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_rule_is_exact_for_cubics() {
        let q = quad_segment(Point::new(0.0, 0.0), Point::new(2.0, 0.0));
        let v: f64 = q.iter().map(|qp| qp.weight * qp.point.x.powi(7)).sum();
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
    }
}
