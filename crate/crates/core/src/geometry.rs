//! Points, level sets, and small planar geometry helpers.

use std::fmt;
use std::sync::Arc;

pub type Point = nalgebra::Point2<f64>;
pub type Vector = nalgebra::Vector2<f64>;

/// Scalar field on the plane.
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
/// Vector field on the plane.
pub type VectorFn = Arc<dyn Fn(Point) -> Vector + Send + Sync>;

/// Which side of the interface a point, vertex, or piece belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Minus, Side::Plus];

    pub fn index(self) -> usize {
        match self {
            Side::Minus => 0,
            Side::Plus => 1,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }

    /// Side of a level-set value; zero goes to the plus side.
    pub fn of_value(v: f64) -> Side {
        if v < 0.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Minus => write!(f, "-"),
            Side::Plus => write!(f, "+"),
        }
    }
}

/// Implicit interface description: Omega^- = {phi < 0}, Omega^+ = {phi > 0}.
#[derive(Clone)]
pub struct LevelSet {
    value: ScalarFn,
    gradient: Option<VectorFn>,
}

impl LevelSet {
    pub fn new(value: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        LevelSet {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(Point) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// Circle of radius `r0` centred at the origin, negative inside.
    pub fn circle(r0: f64) -> Self {
        LevelSet::new(move |p: Point| p.x * p.x + p.y * p.y - r0 * r0)
            .with_gradient(|p: Point| Vector::new(2.0 * p.x, 2.0 * p.y))
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        (self.value)(p)
    }

    pub fn gradient(&self, p: Point) -> Option<Vector> {
        self.gradient.as_ref().map(|g| g(p))
    }

    pub fn side(&self, p: Point) -> Side {
        Side::of_value(self.eval(p))
    }
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSet")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Signed area of the triangle (a, b, c); positive when counterclockwise.
#[inline]
pub fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Signed area of a simple polygon (shoelace).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = &poly[i];
        let q = &poly[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

pub fn diameter(points: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            d = d.max((p - q).norm());
        }
    }
    d
}

/// Barycentric coordinates of `p` with respect to the triangle.
pub fn barycentric(tri: &[Point; 3], p: &Point) -> [f64; 3] {
    let area = signed_area(&tri[0], &tri[1], &tri[2]);
    [
        signed_area(p, &tri[1], &tri[2]) / area,
        signed_area(&tri[0], p, &tri[2]) / area,
        signed_area(&tri[0], &tri[1], p) / area,
    ]
}

/// Gradients of the three P1 barycentric functions on a triangle.
pub fn p1_gradients(tri: &[Point; 3]) -> [Vector; 3] {
    let two_area = 2.0 * signed_area(&tri[0], &tri[1], &tri[2]);
    let mut g = [Vector::zeros(); 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let b = &tri[(i + 1) % 3];
        let c = &tri[(i + 2) % 3];
        *gi = Vector::new(b.y - c.y, c.x - b.x) / two_area;
    }
    g
}
