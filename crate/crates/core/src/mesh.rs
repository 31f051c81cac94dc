//! Uniform triangulations, interface classification and cut-element geometry.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{diameter, polygon_area, signed_area, LevelSet, Point, Side, Vector};

/// Vertices whose level-set value is below `SNAP_TOLERANCE * h` in magnitude lie on the interface.
pub const SNAP_TOLERANCE: f64 = 1e-12;
/// Relative residual accepted for an edge/interface intersection.
pub const ROOT_TOLERANCE: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;
/// Interior samples per edge used to detect multiple crossings.
const EDGE_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementClass {
    RegularMinus,
    RegularPlus,
    Interface,
}

impl ElementClass {
    pub fn regular_side(self) -> Option<Side> {
        match self {
            ElementClass::RegularMinus => Some(Side::Minus),
            ElementClass::RegularPlus => Some(Side::Plus),
            ElementClass::Interface => None,
        }
    }
}

impl fmt::Display for ElementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementClass::RegularMinus => "minus",
            ElementClass::RegularPlus => "plus",
            ElementClass::Interface => "interface",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeClass {
    Regular,
    Interface,
}

/// A mesh edge. `triangles[0]` is the smaller adjacent triangle index; interior edges
/// carry the second triangle in `triangles[1]`.
#[derive(Clone, Debug)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub triangles: [usize; 2],
    pub interior: bool,
}

impl Edge {
    pub fn other_triangle(&self, t: usize) -> Option<usize> {
        if !self.interior {
            return None;
        }
        if self.triangles[0] == t {
            Some(self.triangles[1])
        } else {
            Some(self.triangles[0])
        }
    }
}

/// Where a vertex of a split polygon comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeRef {
    /// A mesh vertex.
    Vertex(usize),
    /// The interface crossing on a mesh edge.
    Cut(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct SplitVertex {
    pub point: Point,
    pub node: NodeRef,
}

/// Geometry of an interface element cut by the straight segment z4-z5.
#[derive(Clone, Debug)]
pub struct ElementSplit {
    pub parent: usize,
    /// Coordinates of the parent triangle's vertices.
    pub vertices: [Point; 3],
    pub cut_points: [Point; 2],
    pub cut_nodes: [NodeRef; 2],
    /// Counterclockwise loop of T^-.
    pub minus_polygon: Vec<SplitVertex>,
    /// Counterclockwise loop of T^+.
    pub plus_polygon: Vec<SplitVertex>,
    /// Unit normal of z4-z5 pointing from T^- into T^+.
    pub segment_normal: Vector,
    /// Side assigned to each local vertex (vertices on the interface count as plus).
    pub vertex_sides: [Side; 3],
}

impl ElementSplit {
    pub fn polygon(&self, side: Side) -> &[SplitVertex] {
        match side {
            Side::Minus => &self.minus_polygon,
            Side::Plus => &self.plus_polygon,
        }
    }

    pub fn polygon_points(&self, side: Side) -> Vec<Point> {
        self.polygon(side).iter().map(|v| v.point).collect()
    }

    pub fn area(&self, side: Side) -> f64 {
        polygon_area(&self.polygon_points(side))
    }

    /// Signed distance from the cut segment's line, positive on the plus side.
    pub fn segment_distance(&self, p: &Point) -> f64 {
        (p - self.cut_points[0]).dot(&self.segment_normal)
    }

    /// Side of the straight cut segment containing `p`; ties go to plus.
    pub fn side_of(&self, p: &Point) -> Side {
        if self.segment_distance(p) < -1e-14 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    pub fn segment_midpoint(&self) -> Point {
        nalgebra::center(&self.cut_points[0], &self.cut_points[1])
    }
}

/// Result of classifying a mesh against a level set.
#[derive(Clone, Debug)]
pub struct Classification {
    pub vertex_phi: Vec<f64>,
    /// -1, 0 or +1 per vertex after snapping.
    pub vertex_sign: Vec<i8>,
    pub element_class: Vec<ElementClass>,
    /// Tag per edge; boundary edges are always `Regular`.
    pub edge_class: Vec<EdgeClass>,
    /// Interface crossing point for each interface (or boundary-crossing) edge.
    pub edge_cut: Vec<Option<Point>>,
    pub splits: Vec<ElementSplit>,
    /// Index into `splits` for interface elements.
    pub split_of: Vec<Option<usize>>,
}

/// Triangulation with interface bookkeeping.
#[derive(Clone, Debug)]
pub struct InterfaceMesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `triangle_edges[t][k]` joins local vertices k and k+1.
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Maximum element diameter.
    pub h: f64,
    /// Cells per side used to build the grid; used to label refinement levels.
    pub cells: usize,
    classification: Option<Classification>,
}

impl InterfaceMesh {
    /// Builds a mesh from raw vertices and counterclockwise triangles.
    pub fn from_triangles(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        cells: usize,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            if signed_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {t} is not counterclockwise"
                )));
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        triangles: [t, usize::MAX],
                        interior: false,
                    });
                    edges.len() - 1
                });
                let e = &mut edges[id];
                if e.triangles[0] != t {
                    if e.interior {
                        return Err(Error::InvalidArgument(format!(
                            "edge ({}, {}) shared by more than two triangles",
                            key.0, key.1
                        )));
                    }
                    e.triangles[1] = t;
                    e.interior = true;
                }
                te[k] = id;
            }
            triangle_edges.push(te);
        }
        for e in &mut edges {
            if e.interior && e.triangles[1] < e.triangles[0] {
                e.triangles.swap(0, 1);
            }
        }

        let mut boundary = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| !e.interior) {
            boundary[e.vertices[0]] = true;
            boundary[e.vertices[1]] = true;
        }

        let h = triangles
            .iter()
            .map(|t| diameter(&[vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
            .fold(0.0, f64::max);

        Ok(InterfaceMesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary,
            h,
            cells,
            classification: None,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = &self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        (self.vertices[a] - self.vertices[b]).norm()
    }

    pub fn classification(&self) -> Result<&Classification> {
        self.classification.as_ref().ok_or(Error::Unclassified)
    }

    pub fn is_classified(&self) -> bool {
        self.classification.is_some()
    }

    pub fn element_class(&self, t: usize) -> Result<ElementClass> {
        Ok(self.classification()?.element_class[t])
    }

    /// Split geometry of an interface element, `None` for regular elements.
    pub fn split(&self, t: usize) -> Option<&ElementSplit> {
        let c = self.classification.as_ref()?;
        c.split_of[t].map(|i| &c.splits[i])
    }

    pub fn interface_elements(&self) -> Vec<usize> {
        match &self.classification {
            Some(c) => c.splits.iter().map(|s| s.parent).collect(),
            None => Vec::new(),
        }
    }

    pub fn interface_edges(&self) -> Vec<usize> {
        match &self.classification {
            Some(c) => (0..self.edges.len())
                .filter(|&e| c.edge_class[e] == EdgeClass::Interface)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Tags every element and edge against `phi` and builds the split geometry of
    /// interface elements.
    pub fn classify(self, phi: &LevelSet) -> Result<Self> {
        self.classify_with_snap(phi, SNAP_TOLERANCE)
    }

    /// As [`InterfaceMesh::classify`] with a custom relative snapping tolerance.
    pub fn classify_with_snap(mut self, phi: &LevelSet, snap_tolerance: f64) -> Result<Self> {
        let snap = snap_tolerance * self.h;
        let vertex_phi: Vec<f64> = self.vertices.par_iter().map(|p| phi.eval(*p)).collect();
        let vertex_sign: Vec<i8> = vertex_phi
            .iter()
            .map(|&v| {
                if v.abs() < snap {
                    0
                } else if v < 0.0 {
                    -1
                } else {
                    1
                }
            })
            .collect();

        // Edge crossings, with a sampling check for multiple crossings.
        let edge_results: Vec<Result<(EdgeClass, Option<Point>)>> = self
            .edges
            .par_iter()
            .enumerate()
            .map(|(id, e)| {
                let [a, b] = e.vertices;
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                let (sa, sb) = (vertex_sign[a], vertex_sign[b]);
                let mut signs: Vec<i8> = Vec::with_capacity(EDGE_SAMPLES + 2);
                if sa != 0 {
                    signs.push(sa);
                }
                for k in 1..=EDGE_SAMPLES {
                    let t = k as f64 / (EDGE_SAMPLES + 1) as f64;
                    let v = phi.eval(pa + (pb - pa) * t);
                    if v.abs() >= snap {
                        signs.push(if v < 0.0 { -1 } else { 1 });
                    }
                }
                if sb != 0 {
                    signs.push(sb);
                }
                let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
                if changes > 1 {
                    return Err(Error::MeshTooCoarse { edge: id, a, b });
                }
                if (sa as i32) * (sb as i32) < 0 {
                    let z = edge_intersection(pa, pb, phi)?;
                    let class = if e.interior {
                        EdgeClass::Interface
                    } else {
                        EdgeClass::Regular
                    };
                    Ok((class, Some(z)))
                } else {
                    Ok((EdgeClass::Regular, None))
                }
            })
            .collect();
        let mut edge_class = Vec::with_capacity(self.edges.len());
        let mut edge_cut = Vec::with_capacity(self.edges.len());
        for r in edge_results {
            let (c, z) = r?;
            edge_class.push(c);
            edge_cut.push(z);
        }

        let element_results: Vec<Result<(ElementClass, Option<ElementSplit>)>> =
            (0..self.triangles.len())
                .into_par_iter()
                .map(|t| self.classify_element(t, &vertex_sign, &edge_cut))
                .collect();
        let mut element_class = Vec::with_capacity(self.triangles.len());
        let mut splits = Vec::new();
        let mut split_of = vec![None; self.triangles.len()];
        for (t, r) in element_results.into_iter().enumerate() {
            let (c, s) = r?;
            element_class.push(c);
            if let Some(s) = s {
                split_of[t] = Some(splits.len());
                splits.push(s);
            }
        }
        log::debug!(
            "classified {} triangles: {} interface elements",
            self.triangles.len(),
            splits.len()
        );

        self.classification = Some(Classification {
            vertex_phi,
            vertex_sign,
            element_class,
            edge_class,
            edge_cut,
            splits,
            split_of,
        });
        Ok(self)
    }

    fn classify_element(
        &self,
        t: usize,
        vertex_sign: &[i8],
        edge_cut: &[Option<Point>],
    ) -> Result<(ElementClass, Option<ElementSplit>)> {
        let tri = self.triangles[t];
        let s = [
            vertex_sign[tri[0]],
            vertex_sign[tri[1]],
            vertex_sign[tri[2]],
        ];
        let crossing = (0..3).any(|k| (s[k] as i32) * (s[(k + 1) % 3] as i32) < 0);
        if !crossing {
            let class = if s.iter().any(|&v| v < 0) {
                ElementClass::RegularMinus
            } else {
                ElementClass::RegularPlus
            };
            return Ok((class, None));
        }

        let mut minus = Vec::with_capacity(4);
        let mut plus = Vec::with_capacity(4);
        let mut cuts: Vec<SplitVertex> = Vec::with_capacity(2);
        for k in 0..3 {
            let v = tri[k];
            let sv = SplitVertex {
                point: self.vertices[v],
                node: NodeRef::Vertex(v),
            };
            match s[k] {
                0 => {
                    minus.push(sv);
                    plus.push(sv);
                    cuts.push(sv);
                }
                x if x < 0 => minus.push(sv),
                _ => plus.push(sv),
            }
            let next = (k + 1) % 3;
            if (s[k] as i32) * (s[next] as i32) < 0 {
                let e = self.triangle_edges[t][k];
                let z = edge_cut[e].expect("crossing edge has a cut point");
                let cv = SplitVertex {
                    point: z,
                    node: NodeRef::Cut(e),
                };
                minus.push(cv);
                plus.push(cv);
                cuts.push(cv);
            }
        }
        debug_assert_eq!(cuts.len(), 2);

        let (z4, z5) = (cuts[0].point, cuts[1].point);
        let d = z5 - z4;
        let mut normal = Vector::new(d.y, -d.x) / d.norm();
        let minus_vertex = (0..3)
            .find(|&k| s[k] < 0)
            .map(|k| self.vertices[tri[k]])
            .expect("interface element has a minus vertex");
        if normal.dot(&(minus_vertex - z4)) > 0.0 {
            normal = -normal;
        }
        let vertex_sides = s.map(|v| if v < 0 { Side::Minus } else { Side::Plus });
        Ok((
            ElementClass::Interface,
            Some(ElementSplit {
                parent: t,
                vertices: self.triangle_points(t),
                cut_points: [z4, z5],
                cut_nodes: [cuts[0].node, cuts[1].node],
                minus_polygon: minus,
                plus_polygon: plus,
                segment_normal: normal,
                vertex_sides,
            }),
        ))
    }

    /// Writes `v x y` lines followed by `t i j k class` lines.
    pub fn write_text(&self, out: &mut impl Write) -> std::io::Result<()> {
        for p in &self.vertices {
            writeln!(out, "v {:.17e} {:.17e}", p.x, p.y)?;
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let class = match &self.classification {
                Some(c) => c.element_class[t].to_string(),
                None => "unclassified".to_string(),
            };
            writeln!(out, "t {} {} {} {}", tri[0], tri[1], tri[2], class)?;
        }
        Ok(())
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn grid_triangles(n: usize, keep: impl Fn(usize, usize) -> bool) -> (Vec<[usize; 3]>, Vec<usize>) {
    // Each kept square (i, j) is split along its lower-left to upper-right diagonal.
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            if !keep(i, j) {
                continue;
            }
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    // Compact away unused vertices, preserving grid order.
    let mut used = vec![false; (n + 1) * (n + 1)];
    for t in &triangles {
        for &v in t {
            used[v] = true;
        }
    }
    let mut map = vec![usize::MAX; used.len()];
    let mut kept = Vec::new();
    for (g, &u) in used.iter().enumerate() {
        if u {
            map[g] = kept.len();
            kept.push(g);
        }
    }
    for t in &mut triangles {
        for v in t.iter_mut() {
            *v = map[*v];
        }
    }
    (triangles, kept)
}

/// Uniform right-triangle mesh of the rectangle with `n` cells per side.
pub fn build_uniform_square_mesh(
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    n: usize,
) -> Result<InterfaceMesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 cells per side, got {n}"
        )));
    }
    if !(xmax > xmin && ymax > ymin) {
        return Err(Error::InvalidArgument("empty rectangle".into()));
    }
    let (dx, dy) = ((xmax - xmin) / n as f64, (ymax - ymin) / n as f64);
    let (triangles, kept) = grid_triangles(n, |_, _| true);
    let vertices = kept
        .iter()
        .map(|&g| {
            let (i, j) = (g % (n + 1), g / (n + 1));
            Point::new(xmin + i as f64 * dx, ymin + j as f64 * dy)
        })
        .collect();
    InterfaceMesh::from_triangles(vertices, triangles, n)
}

/// Uniform mesh of `[-outer, outer]^2` with the square hole `(-inner, inner)^2` removed.
/// `n` counts cells across the full width; the hole boundary must fall on grid lines.
pub fn build_square_ring_mesh(outer_half: f64, inner_half: f64, n: usize) -> Result<InterfaceMesh> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 cells per side, got {n}"
        )));
    }
    if !(inner_half > 0.0 && inner_half < outer_half) {
        return Err(Error::InvalidArgument(format!(
            "hole half-width {inner_half} must lie in (0, {outer_half})"
        )));
    }
    let d = 2.0 * outer_half / n as f64;
    let offset = (outer_half - inner_half) / d;
    if (offset - offset.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "hole boundary at +-{inner_half} is not on the grid (spacing {d})"
        )));
    }
    let lo = offset.round() as usize;
    let hi = n - lo;
    let (triangles, kept) = grid_triangles(n, |i, j| !(i >= lo && i < hi && j >= lo && j < hi));
    let vertices = kept
        .iter()
        .map(|&g| {
            let (i, j) = (g % (n + 1), g / (n + 1));
            Point::new(-outer_half + i as f64 * d, -outer_half + j as f64 * d)
        })
        .collect();
    InterfaceMesh::from_triangles(vertices, triangles, n)
}

/// Point on the segment `p0`-`p1` where `phi` vanishes, by bisection and one secant polish.
pub fn edge_intersection(p0: Point, p1: Point, phi: &LevelSet) -> Result<Point> {
    let f0 = phi.eval(p0);
    let f1 = phi.eval(p1);
    if f0 == 0.0 {
        return Ok(p0);
    }
    if f1 == 0.0 {
        return Ok(p1);
    }
    if f0 * f1 > 0.0 || f0.is_nan() || f1.is_nan() {
        return Err(Error::NoSignChange([p0.x, p0.y], [p1.x, p1.y]));
    }
    let at = |t: f64| p0 + (p1 - p0) * t;
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let (mut fa, mut fb) = (f0, f1);
    for _ in 0..MAX_BISECTIONS {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = phi.eval(at(m));
        if fm == 0.0 {
            return Ok(at(m));
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    let (mut best, mut fbest) = if fa.abs() <= fb.abs() {
        (a, fa)
    } else {
        (b, fb)
    };
    if fb != fa {
        let s = a - fa * (b - a) / (fb - fa);
        if s >= a && s <= b {
            let fs = phi.eval(at(s));
            if fs.abs() < fbest.abs() {
                best = s;
                fbest = fs;
            }
        }
    }
    let _ = fbest;
    Ok(at(best))
}
