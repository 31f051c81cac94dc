//! Krylov solvers for the assembled systems.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Relative residual target `||b - A x|| <= tol * ||b||`.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Largest system the dense fallback accepts.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Conjugate gradient for symmetric systems, BiCGSTAB otherwise.
    #[default]
    Auto,
    ConjugateGradient,
    BiCgStab,
    /// LU factorization of the dense matrix; only for small debugging runs.
    Dense,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Auto,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 50_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Incomplete LU factorization with zero fill on the matrix pattern.
struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Option<Self> {
        let mut lu = a.clone();
        let n = lu.nrows();
        let offsets = lu.row_offsets().to_vec();
        let cols = lu.col_indices().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for r in 0..n {
            for k in offsets[r]..offsets[r + 1] {
                if cols[k] == r {
                    diag_pos[r] = k;
                }
            }
            if diag_pos[r] == usize::MAX {
                return None;
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in offsets[i]..offsets[i + 1] {
                pos[cols[k]] = k;
            }
            let vals = lu.values_mut();
            for k in offsets[i]..offsets[i + 1] {
                let j = cols[k];
                if j >= i {
                    break;
                }
                let pivot = vals[diag_pos[j]];
                if pivot == 0.0 {
                    return None;
                }
                vals[k] /= pivot;
                let lij = vals[k];
                for kk in (diag_pos[j] + 1)..offsets[j + 1] {
                    let p = pos[cols[kk]];
                    if p != usize::MAX {
                        vals[p] -= lij * vals[kk];
                    }
                }
            }
            for k in offsets[i]..offsets[i + 1] {
                pos[cols[k]] = usize::MAX;
            }
            if vals[diag_pos[i]] == 0.0 {
                return None;
            }
        }
        Some(Ilu0 { lu, diag_pos })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let offsets = self.lu.row_offsets();
        let cols = self.lu.col_indices();
        let vals = self.lu.values();
        for i in 0..r.len() {
            let mut s = r[i];
            for k in offsets[i]..self.diag_pos[i] {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s;
        }
        for i in (0..r.len()).rev() {
            let mut s = z[i];
            for k in (self.diag_pos[i] + 1)..offsets[i + 1] {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s / vals[self.diag_pos[i]];
        }
    }
}

/// Jacobi-preconditioned conjugate gradient. `x` holds the initial guess.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged {
                solver: "conjugate gradient (matrix not positive definite)",
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = norm(&r) / bnorm;
    }
    // recompute the true residual before giving up
    let ax = a.mul_vec(x);
    let true_rel = norm(&b.iter().zip(&ax).map(|(b, y)| b - y).collect::<Vec<_>>()) / bnorm;
    if true_rel <= tol {
        return Ok(SolveStats {
            iterations: max_iter,
            relative_residual: true_rel,
        });
    }
    Err(Error::SolverDiverged {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: true_rel,
    })
}

/// Right-preconditioned BiCGSTAB with an ILU(0) preconditioner (Jacobi if ILU breaks down).
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let ilu = Ilu0::new(a);
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64], z: &mut [f64]| match &ilu {
        Some(f) => f.apply(r, z),
        None => {
            for i in 0..r.len() {
                z[i] = r[i] * inv_diag[i];
            }
        }
    };

    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm(&r) / bnorm;
    let mut restarts = 0;
    let mut total = 0;
    'outer: loop {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut zz = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        while total < max_iter {
            if rel <= tol {
                return Ok(SolveStats {
                    iterations: total,
                    relative_residual: rel,
                });
            }
            total += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precondition(&p, &mut y);
            a.mul_vec_into(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                break;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) / bnorm <= tol {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                r.copy_from_slice(&s);
                rel = norm(&r) / bnorm;
                continue;
            }
            precondition(&s, &mut zz);
            a.mul_vec_into(&zz, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * zz[i];
                r[i] = s[i] - omega * t[i];
            }
            rel = norm(&r) / bnorm;
        }
        if total >= max_iter || restarts >= 20 {
            break 'outer;
        }
        // breakdown: restart from the true residual
        restarts += 1;
        let ax = a.mul_vec(x);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        rel = norm(&r) / bnorm;
    }
    let ax = a.mul_vec(x);
    let true_rel = norm(&b.iter().zip(&ax).map(|(b, y)| b - y).collect::<Vec<_>>()) / bnorm;
    if true_rel <= tol {
        return Ok(SolveStats {
            iterations: total,
            relative_residual: true_rel,
        });
    }
    Err(Error::SolverDiverged {
        solver: "BiCGSTAB",
        iterations: total,
        residual: true_rel,
    })
}

/// Dense LU solve, limited to [`DENSE_LIMIT`] unknowns.
pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dense solver limited to {DENSE_LIMIT} unknowns, got {}",
            a.nrows()
        )));
    }
    let lu = a.to_dense().lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    lu.solve(&rhs)
        .map(|x| x.as_slice().to_vec())
        .ok_or(Error::SolverDiverged {
            solver: "dense LU (singular matrix)",
            iterations: 0,
            residual: f64::INFINITY,
        })
}

/// Solves `A x = b` starting from `x`, choosing the method from `opts` and symmetry.
pub fn solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    symmetric: bool,
    opts: &SolverOptions,
) -> Result<SolveStats> {
    let kind = match opts.kind {
        SolverKind::Auto if symmetric => SolverKind::ConjugateGradient,
        SolverKind::Auto => SolverKind::BiCgStab,
        k => k,
    };
    let stats = match kind {
        SolverKind::ConjugateGradient => {
            conjugate_gradient(a, b, x, opts.tolerance, opts.max_iterations)?
        }
        SolverKind::BiCgStab => bicgstab(a, b, x, opts.tolerance, opts.max_iterations)?,
        SolverKind::Dense => {
            let sol = dense_solve(a, b)?;
            x.copy_from_slice(&sol);
            let ax = a.mul_vec(x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, y)| b - y).collect();
            let bn = norm(b);
            SolveStats {
                iterations: 1,
                relative_residual: if bn > 0.0 { norm(&r) / bn } else { 0.0 },
            }
        }
        SolverKind::Auto => unreachable!(),
    };
    log::debug!(
        "{kind:?}: {} iterations, relative residual {:.3e}",
        stats.iterations,
        stats.relative_residual
    );
    Ok(stats)
}
