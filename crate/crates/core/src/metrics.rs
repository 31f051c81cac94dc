//! Error norms against an exact solution and observed convergence orders.

use rayon::prelude::*;

use crate::assembly::{interface_edges, PenaltyConfig, ProblemSpec, VOLUME_DEGREE};
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::ife::FemSpace;
use crate::quadrature::{quad_split, quad_triangle, QuadPoint};
use crate::recovery::{estimate, BodyFittedSubmesh, RecoveredField};

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    /// Grid spacing; rows are labelled `1/level`.
    pub h: f64,
    pub level: usize,
    /// Cells across the domain.
    pub cells: usize,
    /// Broken H1 norm of `u - u_h` (L2 part included).
    pub de: f64,
    /// `|grad(u_I - u_h)|_0` with `u_I` the IFE interpolant.
    pub die: f64,
    /// `|grad u - R_h u_h|_0`.
    pub dre: f64,
    /// Energy norm with penalty jump terms.
    pub energy: f64,
    pub l2: f64,
    pub eta: f64,
    /// `eta / |beta^(1/2) grad(u - u_h)|_0`.
    pub effectivity: f64,
    pub dofs: usize,
    pub interface_elements: usize,
}

struct Sums {
    l2: f64,
    h1: f64,
    weighted_h1: f64,
    die: f64,
}

/// Quadrature over element `t` split by the discrete interface, tagged with the
/// discrete side.
fn discrete_quadrature(space: &FemSpace, t: usize) -> Result<Vec<(QuadPoint, Side)>> {
    let mesh = space.mesh();
    Ok(match mesh.split(t) {
        Some(s) => {
            let [m, p] = quad_split(s, VOLUME_DEGREE)?;
            m.into_iter()
                .map(|q| (q, Side::Minus))
                .chain(p.into_iter().map(|q| (q, Side::Plus)))
                .collect()
        }
        None => {
            let side = space.element_class(t).regular_side().unwrap();
            quad_triangle(&mesh.triangle_points(t), VOLUME_DEGREE)?
                .into_iter()
                .map(|q| (q, side))
                .collect()
        }
    })
}

/// IFE interpolant of the exact solution, taking each vertex's side from its sign.
pub fn exact_interpolant(space: &FemSpace, spec: &ProblemSpec) -> Result<Vec<f64>> {
    let ex = spec.exact()?;
    let c = space.mesh().classification()?;
    Ok(space
        .mesh()
        .vertices
        .iter()
        .zip(&c.vertex_sign)
        .map(|(p, &s)| {
            let side = if s < 0 { Side::Minus } else { Side::Plus };
            ex.value(side, *p)
        })
        .collect())
}

/// All reported norms. Each discrete piece is compared with the exact branch of the
/// same side, extended smoothly across the interface where the discrete and exact
/// interfaces disagree. `recovery` supplies the submesh and recovered field for `Dre`
/// and the estimator; without it those entries are NaN.
pub fn compute_errors(
    space: &FemSpace,
    u_h: &[f64],
    recovery: Option<(&BodyFittedSubmesh, &RecoveredField)>,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
) -> Result<ErrorReport> {
    let ex = spec.exact()?;
    let mesh = space.mesh();
    let u_i = exact_interpolant(space, spec)?;
    let diff: Vec<f64> = u_i.iter().zip(u_h).map(|(a, b)| a - b).collect();

    let per_element: Vec<Sums> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| -> Result<Sums> {
            let mut s = Sums {
                l2: 0.0,
                h1: 0.0,
                weighted_h1: 0.0,
                die: 0.0,
            };
            for (q, side) in discrete_quadrature(space, t)? {
                let f = space.local_function(u_h, t, side);
                let e = ex.value(side, q.point) - f.eval(&q.point);
                let ge = ex.grad(side, q.point) - f.grad();
                s.l2 += q.weight * e * e;
                s.h1 += q.weight * ge.norm_squared();
                s.weighted_h1 += q.weight * spec.beta(side, q.point) * ge.norm_squared();
                s.die += q.weight * space.local_function(&diff, t, side).grad().norm_squared();
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let (mut l2, mut h1, mut wh1, mut die) = (0.0, 0.0, 0.0, 0.0);
    for s in &per_element {
        l2 += s.l2;
        h1 += s.h1;
        wh1 += s.weighted_h1;
        die += s.die;
    }

    // [u - u_h] = -[u_h] on interface edges
    let jumps: Vec<f64> = interface_edges(space)?
        .par_iter()
        .map(|ie| {
            let mut acc = 0.0;
            for (q, side) in ie.quadrature() {
                let a = space
                    .local_function(u_h, ie.triangles[0], side)
                    .eval(&q.point);
                let b = space
                    .local_function(u_h, ie.triangles[1], side)
                    .eval(&q.point);
                acc += q.weight * (a - b).powi(2);
            }
            cfg.sigma0 / ie.length * acc
        })
        .collect();
    let energy = (wh1 + jumps.iter().sum::<f64>()).sqrt();

    let (dre, eta) = match recovery {
        Some((sub, rec)) => (
            recovered_gradient_error(space, sub, rec, spec)?,
            estimate(space, u_h, sub, rec, spec)?.total,
        ),
        None => (f64::NAN, f64::NAN),
    };

    // uniform grids are right isosceles, so the diameter is sqrt(2) times the spacing
    let h = mesh.h / std::f64::consts::SQRT_2;
    Ok(ErrorReport {
        h,
        level: (1.0 / h).round() as usize,
        cells: mesh.cells,
        de: (l2 + h1).sqrt(),
        die: die.sqrt(),
        dre,
        energy,
        l2: l2.sqrt(),
        eta,
        effectivity: eta / wh1.sqrt(),
        dofs: space.num_dofs(),
        interface_elements: mesh.classification()?.splits.len(),
    })
}

/// `|grad u - R_h u_h|_0` over the submesh.
pub fn recovered_gradient_error(
    space: &FemSpace,
    sub: &BodyFittedSubmesh,
    rec: &RecoveredField,
    spec: &ProblemSpec,
) -> Result<f64> {
    let ex = spec.exact()?;
    let parts: Vec<f64> = (0..space.mesh().num_triangles())
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut acc = 0.0;
            for k in sub.children[t].clone() {
                for q in quad_triangle(&sub.triangle_points(k), VOLUME_DEGREE)? {
                    let g = ex.grad(sub.sides[k], q.point);
                    acc += q.weight * (g - rec.eval(sub, k, &q.point)).norm_squared();
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// `log(e_prev / e_next) / log(h_prev / h_next)` for consecutive entries.
pub fn observed_orders(h: &[f64], errors: &[f64]) -> Result<Vec<f64>> {
    if h.len() != errors.len() || h.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two matching (h, error) pairs".into(),
        ));
    }
    if h.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "mesh sizes must strictly decrease".into(),
        ));
    }
    Ok(h.windows(2)
        .zip(errors.windows(2))
        .map(|(hw, ew)| (ew[0] / ew[1]).ln() / (hw[0] / hw[1]).ln())
        .collect())
}

/// Rows of a refinement study, coarsest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ErrorReport>,
}

impl ConvergenceTable {
    pub fn new(rows: Vec<ErrorReport>) -> Result<Self> {
        if rows.windows(2).any(|w| !(w[1].h < w[0].h)) {
            return Err(Error::InvalidArgument(
                "rows must have strictly decreasing h".into(),
            ));
        }
        Ok(ConvergenceTable { rows })
    }

    pub fn column(&self, f: impl Fn(&ErrorReport) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Orders of a column; empty for fewer than two rows.
    pub fn orders(&self, f: impl Fn(&ErrorReport) -> f64) -> Vec<f64> {
        if self.rows.len() < 2 {
            return Vec::new();
        }
        observed_orders(&self.column(|r| r.h), &self.column(f)).unwrap_or_default()
    }

    pub fn h(&self) -> Vec<f64> {
        self.column(|r| r.h)
    }
}

/// Mean of the last `k` entries.
pub fn tail_mean(values: &[f64], k: usize) -> f64 {
    let k = k.min(values.len());
    values[values.len() - k..].iter().sum::<f64>() / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders() {
        let o = observed_orders(&[1.0 / 16.0, 1.0 / 32.0], &[4e-2, 1e-2]).unwrap();
        assert!((o[0] - 2.0).abs() < 1e-12);
        let o = observed_orders(&[1.0 / 16.0, 1.0 / 32.0], &[7.20e-2, 3.62e-2]).unwrap();
        assert_eq!(format!("{:.2}", o[0]), "0.99");
        let o = observed_orders(&[0.5, 0.25], &[3.0, 3.0]).unwrap();
        assert_eq!(o[0], 0.0);
        assert!(observed_orders(&[0.25, 0.5], &[1.0, 2.0]).is_err());
        assert!(observed_orders(&[0.25], &[1.0]).is_err());
    }

    #[test]
    fn tail_mean_of_last_entries() {
        assert_eq!(tail_mean(&[1.0, 2.0, 4.0], 2), 3.0);
    }
}
