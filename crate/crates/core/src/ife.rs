//! Linear immersed finite element space.
//!
//! On regular elements the local space is plain P1. On an interface element each
//! nodal basis function is piecewise linear with respect to the cut segment z4-z5:
//! it matches the nodal values at the three vertices, is continuous at both cut
//! points and has continuous flux `beta * d/dn` across the segment.

use nalgebra::{Matrix6, Matrix6x3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{barycentric, diameter, p1_gradients, Point, Side, Vector};
use crate::mesh::{ElementClass, ElementSplit, InterfaceMesh};

/// Smallest acceptable reciprocal condition number of the scaled 6x6 basis system.
pub const BASIS_RCOND_TOLERANCE: f64 = 1e-12;

/// The linear function `a + b x + c y`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Linear {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Linear {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Linear { a, b, c }
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        self.a + self.b * p.x + self.c * p.y
    }

    #[inline]
    pub fn grad(&self) -> Vector {
        Vector::new(self.b, self.c)
    }

    fn add(&self, o: &Linear) -> Linear {
        Linear::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

/// P1 nodal basis on a triangle.
pub fn p1_basis(tri: &[Point; 3]) -> [Linear; 3] {
    let g = p1_gradients(tri);
    std::array::from_fn(|i| {
        let a = 1.0 - g[i].dot(&tri[i].coords);
        Linear::new(a, g[i].x, g[i].y)
    })
}

/// The three IFE nodal functions of one interface element, as a minus and a plus piece.
#[derive(Clone, Debug)]
pub struct IfeLocalBasis {
    pub element: usize,
    pub minus: [Linear; 3],
    pub plus: [Linear; 3],
    pub beta_minus: f64,
    pub beta_plus: f64,
}

impl IfeLocalBasis {
    pub fn piece(&self, side: Side) -> &[Linear; 3] {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }
}

/// Solves the 6x6 nodal/continuity/flux system for all three nodal functions.
pub fn build_ife_basis(
    split: &ElementSplit,
    beta_minus: f64,
    beta_plus: f64,
) -> Result<IfeLocalBasis> {
    if !(beta_minus > 0.0 && beta_plus > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "diffusion coefficients must be positive (got {beta_minus}, {beta_plus})"
        )));
    }
    // Local frame: origin at the centroid, lengths scaled by the element diameter.
    let verts = &split.vertices;
    let origin = Point::from((verts[0].coords + verts[1].coords + verts[2].coords) / 3.0);
    let scale = diameter(verts);
    let local = |p: &Point| (p - origin) / scale;

    // unknowns: (a+, b+, c+, a-, b-, c-)
    let mut m = Matrix6::<f64>::zeros();
    for (k, v) in verts.iter().enumerate() {
        let off = match split.vertex_sides[k] {
            Side::Plus => 0,
            Side::Minus => 3,
        };
        let q = local(v);
        m[(k, off)] = 1.0;
        m[(k, off + 1)] = q.x;
        m[(k, off + 2)] = q.y;
    }
    for (r, z) in split.cut_points.iter().enumerate() {
        let q = local(z);
        let row = 3 + r;
        m[(row, 0)] = 1.0;
        m[(row, 1)] = q.x;
        m[(row, 2)] = q.y;
        m[(row, 3)] = -1.0;
        m[(row, 4)] = -q.x;
        m[(row, 5)] = -q.y;
    }
    let n = split.segment_normal;
    let bmax = beta_minus.max(beta_plus);
    m[(5, 1)] = beta_plus / bmax * n.x;
    m[(5, 2)] = beta_plus / bmax * n.y;
    m[(5, 4)] = -beta_minus / bmax * n.x;
    m[(5, 5)] = -beta_minus / bmax * n.y;

    let sv = m.singular_values();
    let smax = sv.max();
    let rcond = if smax > 0.0 { sv.min() / smax } else { 0.0 };
    if !(rcond >= BASIS_RCOND_TOLERANCE) {
        return Err(Error::DegenerateCut {
            element: split.parent,
            rcond,
        });
    }
    let mut rhs = Matrix6x3::<f64>::zeros();
    for i in 0..3 {
        rhs[(i, i)] = 1.0;
    }
    let sol = m.lu().solve(&rhs).ok_or(Error::DegenerateCut {
        element: split.parent,
        rcond,
    })?;

    let to_global = |a: f64, b: f64, c: f64| {
        let (bg, cg) = (b / scale, c / scale);
        Linear::new(a - bg * origin.x - cg * origin.y, bg, cg)
    };
    let plus = std::array::from_fn(|i| to_global(sol[(0, i)], sol[(1, i)], sol[(2, i)]));
    let minus = std::array::from_fn(|i| to_global(sol[(3, i)], sol[(4, i)], sol[(5, i)]));
    Ok(IfeLocalBasis {
        element: split.parent,
        minus,
        plus,
        beta_minus,
        beta_plus,
    })
}

/// Global IFE space: one dof per mesh vertex.
#[derive(Clone, Debug)]
pub struct FemSpace {
    mesh: InterfaceMesh,
    /// Parallel to the mesh's split list.
    bases: Vec<IfeLocalBasis>,
    boundary_dofs: Vec<usize>,
}

impl FemSpace {
    /// Builds the space on a classified mesh. Coefficients are sampled at the midpoint of
    /// each element's cut segment.
    pub fn new(
        mesh: InterfaceMesh,
        beta_minus: &(dyn Fn(Point) -> f64 + Sync),
        beta_plus: &(dyn Fn(Point) -> f64 + Sync),
    ) -> Result<Self> {
        let classification = mesh.classification()?;
        let bases = classification
            .splits
            .par_iter()
            .map(|s| {
                let mid = s.segment_midpoint();
                build_ife_basis(s, beta_minus(mid), beta_plus(mid))
            })
            .collect::<Result<Vec<_>>>()?;
        let boundary_dofs = (0..mesh.num_vertices())
            .filter(|&v| mesh.boundary[v])
            .collect();
        Ok(FemSpace {
            mesh,
            bases,
            boundary_dofs,
        })
    }

    pub fn mesh(&self) -> &InterfaceMesh {
        &self.mesh
    }

    pub fn into_mesh(self) -> InterfaceMesh {
        self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn dofs(&self, t: usize) -> [usize; 3] {
        self.mesh.triangles[t]
    }

    pub fn ife_basis(&self, t: usize) -> Option<&IfeLocalBasis> {
        let c = self.mesh.classification().ok()?;
        c.split_of[t].map(|i| &self.bases[i])
    }

    pub fn ife_bases(&self) -> &[IfeLocalBasis] {
        &self.bases
    }

    pub fn element_class(&self, t: usize) -> ElementClass {
        self.mesh
            .element_class(t)
            .expect("space is built on a classified mesh")
    }

    /// Local basis functions on the `side` piece of element `t`. Regular elements
    /// return P1 for either side.
    pub fn piece(&self, t: usize, side: Side) -> [Linear; 3] {
        match self.ife_basis(t) {
            Some(b) => *b.piece(side),
            None => p1_basis(&self.mesh.triangle_points(t)),
        }
    }

    /// Side of element `t` containing `p`: the class side for regular elements, the
    /// cut-segment side for interface elements.
    pub fn side_at(&self, t: usize, p: &Point) -> Side {
        match self.mesh.split(t) {
            Some(s) => s.side_of(p),
            None => self.element_class(t).regular_side().unwrap(),
        }
    }

    /// Values and gradients of the three local basis functions at `p` inside element `t`.
    pub fn eval_basis(&self, t: usize, p: &Point) -> Result<([f64; 3], [Vector; 3])> {
        if t >= self.mesh.num_triangles() {
            return Err(Error::InvalidArgument(format!("no element {t}")));
        }
        let lambda = barycentric(&self.mesh.triangle_points(t), p);
        if lambda.iter().any(|&l| l < -1e-12) {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) is outside element {t}",
                p.x, p.y
            )));
        }
        let piece = self.piece(t, self.side_at(t, p));
        Ok((
            std::array::from_fn(|i| piece[i].eval(p)),
            std::array::from_fn(|i| piece[i].grad()),
        ))
    }

    /// Restriction of the finite element function `coeffs` to the `side` piece of `t`.
    pub fn local_function(&self, coeffs: &[f64], t: usize, side: Side) -> Linear {
        let piece = self.piece(t, side);
        let dofs = self.dofs(t);
        let mut f = Linear::default();
        for i in 0..3 {
            let w = coeffs[dofs[i]];
            f = f.add(&Linear::new(w * piece[i].a, w * piece[i].b, w * piece[i].c));
        }
        f
    }

    /// Nodal interpolant of `u`.
    pub fn interpolate(&self, u: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        self.mesh.vertices.par_iter().map(|p| u(*p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LevelSet;
    use crate::mesh::build_uniform_square_mesh;
    use std::f64::consts::PI;

    fn single_triangle_split(phi: LevelSet) -> ElementSplit {
        let tri = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let m = InterfaceMesh::from_triangles(tri, vec![[0, 1, 2]], 1)
            .unwrap()
            .classify(&phi)
            .unwrap();
        m.split(0).unwrap().clone()
    }

    #[test]
    fn equal_coefficients_give_p1() {
        let s = single_triangle_split(LevelSet::circle(0.6));
        let b = build_ife_basis(&s, 3.0, 3.0).unwrap();
        let p1 = p1_basis(&s.vertices);
        for i in 0..3 {
            for piece in [&b.minus[i], &b.plus[i]] {
                assert!((piece.a - p1[i].a).abs() < 1e-12);
                assert!((piece.b - p1[i].b).abs() < 1e-12);
                assert!((piece.c - p1[i].c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vertical_cut_traces() {
        // x = 0.5 cuts (0,0)-(1,0) and (1,0)-(0,1)
        let s = single_triangle_split(LevelSet::new(|p: Point| p.x - 0.5));
        assert!((s.cut_points[0] - Point::new(0.5, 0.0)).norm() < 1e-15);
        assert!((s.cut_points[1] - Point::new(0.5, 0.5)).norm() < 1e-15);
        let b = build_ife_basis(&s, 1.0, 2.0).unwrap();
        // nodal function of vertex (1, 0), trace along y = 0
        let (bm, bp) = (b.minus[1].b, b.plus[1].b);
        assert!((1.0 * bm - 2.0 * bp).abs() < 1e-12);
        assert!((0.5 * bm + 0.5 * bp - 1.0).abs() < 1e-12);
        assert!((bm - 4.0 / 3.0).abs() < 1e-12 && (bp - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn partition_of_unity() {
        let s = single_triangle_split(LevelSet::new(|p: Point| p.x + 0.3 * p.y - 0.4));
        let b = build_ife_basis(&s, 10.0, 1.0).unwrap();
        for piece in [&b.minus, &b.plus] {
            let a: f64 = piece.iter().map(|f| f.a).sum();
            let bx: f64 = piece.iter().map(|f| f.b).sum();
            let cy: f64 = piece.iter().map(|f| f.c).sum();
            assert!((a - 1.0).abs() < 1e-12 && bx.abs() < 1e-12 && cy.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_beta() {
        let s = single_triangle_split(LevelSet::circle(0.6));
        assert!(build_ife_basis(&s, 0.0, 1.0).is_err());
    }

    fn circle_space(n: usize, bm: f64, bp: f64) -> FemSpace {
        let m = build_uniform_square_mesh(-1.0, 1.0, -1.0, 1.0, n)
            .unwrap()
            .classify(&LevelSet::circle(PI / 6.0))
            .unwrap();
        FemSpace::new(m, &move |_| bm, &move |_| bp).unwrap()
    }

    #[test]
    fn eval_basis_cases() {
        let space = circle_space(16, 1.0, 10.0);
        let mesh = space.mesh();
        let regular = (0..mesh.num_triangles())
            .find(|&t| space.element_class(t) != ElementClass::Interface)
            .unwrap();
        let p = mesh.triangle_points(regular)[0];
        let (v, _) = space.eval_basis(regular, &p).unwrap();
        assert_eq!(v, [1.0, 0.0, 0.0]);

        let t = mesh.interface_elements()[0];
        let split = mesh.split(t).unwrap();
        let z = split.cut_points[0];
        let b = space.ife_basis(t).unwrap();
        for i in 0..3 {
            assert!((b.minus[i].eval(&z) - b.plus[i].eval(&z)).abs() < 1e-10);
        }
        assert!(space.eval_basis(t, &Point::new(5.0, 5.0)).is_err());

        let flat = circle_space(16, 2.0, 2.0);
        let [a, bb, c] = flat.mesh().triangle_points(t);
        let centroid = Point::from((a.coords + bb.coords + c.coords) / 3.0);
        let (v, _) = flat.eval_basis(t, &centroid).unwrap();
        for x in v {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_of_linears_is_exact() {
        let space = circle_space(8, 1.0, 1.0);
        let u = |p: Point| 0.3 + 2.0 * p.x - 1.5 * p.y;
        let ui = space.interpolate(u);
        let mesh = space.mesh();
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle_points(t);
            let p = Point::from(0.2 * a.coords + 0.5 * b.coords + 0.3 * c.coords);
            let f = space.local_function(&ui, t, space.side_at(t, &p));
            assert!((f.eval(&p) - u(p)).abs() < 1e-12);
        }
        let ones = space.interpolate(|_| 1.0);
        assert!(ones.iter().all(|&x| x == 1.0));
    }
}
