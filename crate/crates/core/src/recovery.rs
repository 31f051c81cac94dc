//! Immersed gradient recovery: a body-fitted submesh, enrichment of IFE functions to
//! it, and polynomial preserving recovery (PPR) run separately on each side.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::assembly::{ProblemSpec, VOLUME_DEGREE};
use crate::error::{Error, Result};
use crate::geometry::{barycentric, Point, Side, Vector};
use crate::ife::FemSpace;
use crate::mesh::{InterfaceMesh, NodeRef};
use crate::quadrature::quad_triangle;

/// Largest accepted condition number of the normal equations of a patch fit.
pub const PATCH_CONDITION_LIMIT: f64 = 1e4;
pub const MAX_RINGS: usize = 4;
const QUADRATIC_TERMS: usize = 6;

/// Parent mesh refined so that every triangle lies on one side of the discrete
/// interface. Parent vertices keep their indices; cut points follow.
#[derive(Clone, Debug)]
pub struct BodyFittedSubmesh {
    pub vertices: Vec<Point>,
    pub num_parent_vertices: usize,
    pub triangles: Vec<[usize; 3]>,
    pub sides: Vec<Side>,
    pub parents: Vec<usize>,
    /// Sub-triangles of each parent element.
    pub children: Vec<Range<usize>>,
    /// Membership of each vertex in the minus and plus side meshes.
    pub on_side: [Vec<bool>; 2],
    /// Mesh edge carrying each cut-point vertex.
    pub cut_edges: Vec<usize>,
}

impl BodyFittedSubmesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, k: usize) -> [Point; 3] {
        self.triangles[k].map(|v| self.vertices[v])
    }

    pub fn is_cut_vertex(&self, v: usize) -> bool {
        v >= self.num_parent_vertices
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|k| {
                let [a, b, c] = self.triangle_points(k);
                crate::geometry::signed_area(&a, &b, &c)
            })
            .sum()
    }
}

pub fn build_submesh(mesh: &InterfaceMesh) -> Result<BodyFittedSubmesh> {
    let c = mesh.classification()?;
    let np = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    let mut cut_vertex = vec![usize::MAX; mesh.edges.len()];
    let mut cut_edges = Vec::new();
    for (e, z) in c.edge_cut.iter().enumerate() {
        if let Some(z) = z {
            cut_vertex[e] = vertices.len();
            vertices.push(*z);
            cut_edges.push(e);
        }
    }
    let node_index = |n: NodeRef| match n {
        NodeRef::Vertex(v) => v,
        NodeRef::Cut(e) => cut_vertex[e],
    };

    let mut triangles = Vec::with_capacity(mesh.num_triangles() + 2 * c.splits.len());
    let mut sides = Vec::with_capacity(triangles.capacity());
    let mut parents = Vec::with_capacity(triangles.capacity());
    let mut children = Vec::with_capacity(mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let start = triangles.len();
        match mesh.split(t) {
            Some(split) => {
                for side in Side::BOTH {
                    let poly: Vec<usize> = split
                        .polygon(side)
                        .iter()
                        .map(|v| node_index(v.node))
                        .collect();
                    for i in 1..poly.len() - 1 {
                        triangles.push([poly[0], poly[i], poly[i + 1]]);
                        sides.push(side);
                        parents.push(t);
                    }
                }
            }
            None => {
                triangles.push(mesh.triangles[t]);
                sides.push(c.element_class[t].regular_side().unwrap());
                parents.push(t);
            }
        }
        children.push(start..triangles.len());
    }

    let mut on_side = [vec![false; vertices.len()], vec![false; vertices.len()]];
    for (tri, side) in triangles.iter().zip(&sides) {
        for &v in tri {
            on_side[side.index()][v] = true;
        }
    }
    Ok(BodyFittedSubmesh {
        vertices,
        num_parent_vertices: np,
        triangles,
        sides,
        parents,
        children,
        on_side,
        cut_edges,
    })
}

/// Nodal values of the IFE function `u_h` on the submesh. Cut points take the average of
/// the traces of every adjacent interface-element piece.
pub fn enrich(space: &FemSpace, u_h: &[f64], sub: &BodyFittedSubmesh) -> Vec<f64> {
    let mut values = u_h.to_vec();
    values.resize(sub.num_vertices(), 0.0);
    let mut counts = vec![0usize; sub.num_vertices()];
    let mut sums = vec![0.0; sub.num_vertices()];
    for (k, tri) in sub.triangles.iter().enumerate() {
        let t = sub.parents[k];
        let f = space.local_function(u_h, t, sub.sides[k]);
        for &v in tri {
            if sub.is_cut_vertex(v) {
                sums[v] += f.eval(&sub.vertices[v]);
                counts[v] += 1;
            }
        }
    }
    for v in sub.num_parent_vertices..sub.num_vertices() {
        values[v] = sums[v] / counts[v] as f64;
    }
    values
}

/// Linear PPR operator: each recovered gradient is a weighted sum of nodal values.
#[derive(Clone, Debug)]
pub struct PprOperator {
    /// `weights[side][v]` lists `(node, weight)` pairs; empty if `v` is not on `side`.
    weights: [Vec<Vec<(usize, Vector)>>; 2],
}

fn side_adjacency(sub: &BodyFittedSubmesh, side: Side) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); sub.num_vertices()];
    for (tri, s) in sub.triangles.iter().zip(&sub.sides) {
        if *s != side {
            continue;
        }
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    adj[tri[i]].push(tri[j]);
                }
            }
        }
    }
    adj.par_iter_mut().for_each(|a| {
        a.sort_unstable();
        a.dedup();
    });
    adj
}

/// Least-squares fit of `values(patch)` by a polynomial with `terms` monomials in
/// coordinates scaled about `center`; returns the gradient weights if well conditioned.
fn fit_weights(points: &[Point], center: Point, terms: usize) -> Option<Vec<Vector>> {
    let m = points.len();
    if m < terms {
        return None;
    }
    let scale = points
        .iter()
        .map(|p| (p - center).norm())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    let a = DMatrix::from_fn(m, terms, |i, j| {
        let d = (points[i] - center) / scale;
        match j {
            0 => 1.0,
            1 => d.x,
            2 => d.y,
            3 => d.x * d.x,
            4 => d.x * d.y,
            _ => d.y * d.y,
        }
    });
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || (smax / smin).powi(2) >= PATCH_CONDITION_LIMIT {
        return None;
    }
    let pinv = svd.pseudo_inverse(0.0).ok()?;
    Some(
        (0..m)
            .map(|i| Vector::new(pinv[(1, i)], pinv[(2, i)]) / scale)
            .collect(),
    )
}

impl PprOperator {
    pub fn build(sub: &BodyFittedSubmesh) -> Result<Self> {
        let mut weights: [Vec<Vec<(usize, Vector)>>; 2] = [Vec::new(), Vec::new()];
        for side in Side::BOTH {
            let adj = side_adjacency(sub, side);
            let on = &sub.on_side[side.index()];
            weights[side.index()] = (0..sub.num_vertices())
                .into_par_iter()
                .map(|v| {
                    if !on[v] {
                        return Ok(Vec::new());
                    }
                    vertex_weights(sub, &adj, v)
                })
                .collect::<Result<_>>()?;
        }
        Ok(PprOperator { weights })
    }

    pub fn weights(&self, side: Side, v: usize) -> &[(usize, Vector)] {
        &self.weights[side.index()][v]
    }

    pub fn apply(&self, side: Side, values: &[f64]) -> Vec<Vector> {
        self.weights[side.index()]
            .par_iter()
            .map(|w| w.iter().map(|(n, wt)| wt * values[*n]).sum())
            .collect()
    }

    /// Largest absolute row sum over both components and both sides.
    pub fn infinity_norm(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .map(|w| {
                let sx: f64 = w.iter().map(|(_, v)| v.x.abs()).sum();
                let sy: f64 = w.iter().map(|(_, v)| v.y.abs()).sum();
                sx.max(sy)
            })
            .fold(0.0, f64::max)
    }
}

fn vertex_weights(
    sub: &BodyFittedSubmesh,
    adj: &[Vec<usize>],
    v: usize,
) -> Result<Vec<(usize, Vector)>> {
    let center = sub.vertices[v];
    let mut patch = vec![v];
    let mut frontier = vec![v];
    let mut seen = std::collections::HashSet::from([v]);
    for _ in 0..MAX_RINGS {
        let mut next = Vec::new();
        for &u in &frontier {
            for &w in &adj[u] {
                if seen.insert(w) {
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        patch.extend_from_slice(&next);
        frontier = next;
        let pts: Vec<Point> = patch.iter().map(|&n| sub.vertices[n]).collect();
        if let Some(w) = fit_weights(&pts, center, QUADRATIC_TERMS) {
            return Ok(patch.iter().copied().zip(w).collect());
        }
    }
    let pts: Vec<Point> = patch.iter().map(|&n| sub.vertices[n]).collect();
    if let Some(w) = fit_weights(&pts, center, 3) {
        log::warn!(
            "quadratic recovery fit degenerate at ({:.6}, {:.6}); using a linear fit",
            center.x,
            center.y
        );
        return Ok(patch.iter().copied().zip(w).collect());
    }
    Err(Error::RecoveryDegenerate {
        vertex: v,
        x: center.x,
        y: center.y,
    })
}

/// Recovered gradients on both side meshes. Cut points carry one gradient per side.
#[derive(Clone, Debug)]
pub struct RecoveredField {
    pub gradients: [Vec<Vector>; 2],
}

impl RecoveredField {
    pub fn at(&self, side: Side, v: usize) -> Vector {
        self.gradients[side.index()][v]
    }

    /// Side-matched nodal gradients of sub-triangle `k`.
    pub fn on_subtriangle(&self, sub: &BodyFittedSubmesh, k: usize) -> [Vector; 3] {
        let side = sub.sides[k];
        sub.triangles[k].map(|v| self.at(side, v))
    }

    /// Recovered gradient at `p` inside sub-triangle `k` by linear interpolation.
    pub fn eval(&self, sub: &BodyFittedSubmesh, k: usize, p: &Point) -> Vector {
        let g = self.on_subtriangle(sub, k);
        let l = barycentric(&sub.triangle_points(k), p);
        g[0] * l[0] + g[1] * l[1] + g[2] * l[2]
    }

    /// `x y gx gy side` per side-mesh vertex, minus side first.
    pub fn write_text(&self, sub: &BodyFittedSubmesh, out: &mut impl Write) -> std::io::Result<()> {
        for side in Side::BOTH {
            for v in 0..sub.num_vertices() {
                if sub.on_side[side.index()][v] {
                    let p = sub.vertices[v];
                    let g = self.at(side, v);
                    writeln!(
                        out,
                        "{:.17e} {:.17e} {:.17e} {:.17e} {side}",
                        p.x, p.y, g.x, g.y
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn dump(&self, sub: &BodyFittedSubmesh, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(sub, &mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Submesh plus the PPR operator built on it; reusable across solutions on one mesh.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub submesh: BodyFittedSubmesh,
    pub operator: PprOperator,
}

impl Recovery {
    pub fn new(mesh: &InterfaceMesh) -> Result<Self> {
        let submesh = build_submesh(mesh)?;
        let operator = PprOperator::build(&submesh)?;
        Ok(Recovery { submesh, operator })
    }

    /// Recovered gradient of nodal values given on the submesh.
    pub fn recover_values(&self, values: &[f64]) -> RecoveredField {
        RecoveredField {
            gradients: Side::BOTH.map(|s| self.operator.apply(s, values)),
        }
    }

    /// Enrichment followed by one-sided PPR.
    pub fn recover(&self, space: &FemSpace, u_h: &[f64]) -> RecoveredField {
        self.recover_values(&enrich(space, u_h, &self.submesh))
    }
}

/// One-shot recovery of `u_h`.
pub fn recover(space: &FemSpace, u_h: &[f64]) -> Result<(Recovery, RecoveredField)> {
    let r = Recovery::new(space.mesh())?;
    let field = r.recover(space, u_h);
    Ok((r, field))
}

#[derive(Clone, Debug)]
pub struct Estimate {
    /// `eta_T` per parent element.
    pub per_element: Vec<f64>,
    pub total: f64,
}

/// `eta_T = |beta^(1/2) (R_h u_h - grad u_h)|_{0,T}` summed over sub-triangles.
pub fn estimate(
    space: &FemSpace,
    u_h: &[f64],
    sub: &BodyFittedSubmesh,
    rec: &RecoveredField,
    spec: &ProblemSpec,
) -> Result<Estimate> {
    let squares: Vec<f64> = (0..space.mesh().num_triangles())
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut acc = 0.0;
            for k in sub.children[t].clone() {
                let side = sub.sides[k];
                let grad_uh = space.local_function(u_h, t, side).grad();
                for q in quad_triangle(&sub.triangle_points(k), VOLUME_DEGREE)? {
                    let d = rec.eval(sub, k, &q.point) - grad_uh;
                    acc += q.weight * spec.beta(side, q.point) * d.norm_squared();
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = squares.iter().sum::<f64>().sqrt();
    Ok(Estimate {
        per_element: squares.into_iter().map(f64::sqrt).collect(),
        total,
    })
}
