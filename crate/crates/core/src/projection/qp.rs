//! Euclidean projection onto a polytope `{x : A x <= b}`.
//!
//! The objective `½‖x − v‖²` has unit Hessian, so the Goldfarb–Idnani dual
//! active-set method reduces to a sequence of small least-squares solves over
//! the active normals. Iterates stay dual-feasible; each outer iteration adds
//! the most violated row. An ADMM splitting solver is kept as a fallback for
//! systems with many rows or when the active-set run is numerically unhappy.

use serde::{Deserialize, Serialize};

use crate::constraint::{dot, Region};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Certified KKT residual bound for a successful solve.
pub const KKT_TOL: f64 = 1e-6;

const FEAS_TOL: f64 = 1e-12;
const ZERO_STEP: f64 = 1e-14;

/// Active-set is used up to this many rows per knot dimension.
const ACTIVE_SET_ROW_FACTOR: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// One multiplier per row of the stacked system, all non-negative.
    pub duals: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpMethod {
    ActiveSet,
    Admm,
    /// Active set for small systems, ADMM otherwise or on failure.
    Auto,
}

/// Projects `v` onto `region`. Feasible inputs are returned unchanged.
pub fn project_continuous(v: &[f64], region: &Region) -> Result<QpSolution> {
    project_with(v, region, QpMethod::Auto, DEFAULT_MAX_ITER)
}

pub fn project_with(v: &[f64], region: &Region, method: QpMethod, max_iter: usize) -> Result<QpSolution> {
    if v.len() != region.dim() {
        return Err(Error::Shape {
            what: "knot vector",
            expected: region.dim(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("preliminary knot vector".into()));
    }
    let (a, b) = region.inequalities();
    match method {
        QpMethod::ActiveSet => certified(project_active_set(v, &a, &b, max_iter)?),
        QpMethod::Admm => certified(project_admm(v, &a, &b, max_iter)?),
        QpMethod::Auto => {
            if a.len() <= ACTIVE_SET_ROW_FACTOR * v.len() {
                let first = project_active_set(v, &a, &b, max_iter).and_then(certified);
                match first {
                    Ok(sol) => return Ok(sol),
                    Err(Error::QpInfeasible) => return Err(Error::QpInfeasible),
                    Err(_) => {}
                }
            }
            certified(project_admm(v, &a, &b, max_iter)?)
        }
    }
}

fn certified(sol: QpSolution) -> Result<QpSolution> {
    if sol.kkt_residual <= KKT_TOL {
        Ok(sol)
    } else {
        Err(Error::QpMaxIterations {
            iterations: sol.iterations,
            residual: sol.kkt_residual,
        })
    }
}

/// Max-norm KKT residual of `(x, λ)` for `min ½‖x − v‖² s.t. A x <= b`:
/// stationarity, primal feasibility, dual feasibility and complementarity.
pub fn kkt_residual(v: &[f64], a: &[Vec<f64>], b: &[f64], x: &[f64], duals: &[f64]) -> f64 {
    let n = v.len();
    let mut grad: Vec<f64> = (0..n).map(|j| x[j] - v[j]).collect();
    let mut worst: f64 = 0.0;
    for ((row, &bi), &lam) in a.iter().zip(b).zip(duals) {
        for j in 0..n {
            grad[j] += lam * row[j];
        }
        let slack = dot(row, x) - bi;
        worst = worst.max(slack).max(-lam).max((lam * slack).abs());
    }
    grad.iter().fold(worst, |w, g| w.max(g.abs()))
}

/// Dual active-set projection (Goldfarb–Idnani with identity Hessian).
pub fn project_active_set(v: &[f64], a: &[Vec<f64>], b: &[f64], max_iter: usize) -> Result<QpSolution> {
    let n = v.len();
    let m = a.len();
    let mut x = v.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    loop {
        // most violated inactive row
        let mut p = None;
        let mut worst = FEAS_TOL;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let g = dot(&a[i], &x) - b[i];
            let scaled = g / (1.0 + b[i].abs());
            if scaled > worst {
                worst = scaled;
                p = Some(i);
            }
        }
        let Some(p) = p else { break };
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                let duals = scatter(m, &active, &lambda);
                let residual = kkt_residual(v, a, b, &x, &duals);
                return Err(Error::QpMaxIterations {
                    iterations: max_iter,
                    residual,
                });
            }
            let normals: Vec<&[f64]> = active.iter().map(|&i| a[i].as_slice()).collect();
            // r = (NᵀN)⁻¹ Nᵀ a_p, z = −(a_p − N r)
            let r = least_squares_coeffs(&normals, &a[p]);
            let mut z: Vec<f64> = a[p].iter().map(|&ap| -ap).collect();
            for (col, &rc) in normals.iter().zip(&r) {
                for j in 0..n {
                    z[j] += rc * col[j];
                }
            }
            let curvature = dot(&z, &z);
            let g_p = dot(&a[p], &x) - b[p];

            let full_step = if curvature > ZERO_STEP * (1.0 + dot(&a[p], &a[p])) {
                g_p / curvature
            } else {
                f64::INFINITY
            };
            let mut partial_step = f64::INFINITY;
            let mut drop_at = None;
            for (idx, (&rj, &lj)) in r.iter().zip(&lambda).enumerate() {
                if rj > ZERO_STEP {
                    let t = lj / rj;
                    if t < partial_step {
                        partial_step = t;
                        drop_at = Some(idx);
                    }
                }
            }

            if full_step.is_infinite() && partial_step.is_infinite() {
                return Err(Error::QpInfeasible);
            }
            let t = full_step.min(partial_step);
            if full_step.is_finite() {
                for j in 0..n {
                    x[j] += t * z[j];
                }
            }
            for (lj, &rj) in lambda.iter_mut().zip(&r) {
                *lj = (*lj - t * rj).max(0.0);
            }
            lambda_p += t;

            if full_step <= partial_step {
                active.push(p);
                lambda.push(lambda_p);
                break;
            }
            let k = drop_at.expect("finite partial step has an index");
            active.remove(k);
            lambda.remove(k);
        }
    }

    let duals = scatter(m, &active, &lambda);
    let kkt = kkt_residual(v, a, b, &x, &duals);
    Ok(QpSolution {
        x,
        duals,
        kkt_residual: kkt,
        iterations,
    })
}

/// ADMM splitting for `min ½‖x − v‖² s.t. A x <= b`, with a final
/// active-set polish so the returned multipliers certify optimality.
pub fn project_admm(v: &[f64], a: &[Vec<f64>], b: &[f64], max_iter: usize) -> Result<QpSolution> {
    let n = v.len();
    let m = a.len();
    if a.iter().zip(b).all(|(row, &bi)| dot(row, v) <= bi) {
        return Ok(QpSolution {
            x: v.to_vec(),
            duals: vec![0.0; m],
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    let rho = 1.0;
    let sigma = 1e-6;
    // (1 + σ) I + ρ AᵀA
    let mut kkt = vec![vec![0.0; n]; n];
    for (i, row) in kkt.iter_mut().enumerate() {
        row[i] = 1.0 + sigma;
    }
    for arow in a {
        for i in 0..n {
            for j in 0..n {
                kkt[i][j] += rho * arow[i] * arow[j];
            }
        }
    }
    let chol = cholesky(&kkt).ok_or(Error::NonFinite("ADMM system matrix".into()))?;

    let mut x = v.to_vec();
    let mut zc: Vec<f64> = a.iter().zip(b).map(|(row, &bi)| dot(row, &x).min(bi)).collect();
    let mut y = vec![0.0; m];
    let mut best = f64::INFINITY;

    for it in 1..=max_iter {
        let mut rhs: Vec<f64> = (0..n).map(|j| sigma * x[j] + v[j]).collect();
        for ((row, &zi), &yi) in a.iter().zip(&zc).zip(&y) {
            for j in 0..n {
                rhs[j] += row[j] * (rho * zi - yi);
            }
        }
        x = cholesky_solve(&chol, &rhs);
        let ax: Vec<f64> = a.iter().map(|row| dot(row, &x)).collect();
        for i in 0..m {
            zc[i] = (ax[i] + y[i] / rho).min(b[i]);
            y[i] += rho * (ax[i] - zc[i]);
        }

        if it % 25 == 0 || it == max_iter {
            let duals: Vec<f64> = y.iter().map(|&yi| yi.max(0.0)).collect();
            let active: Vec<usize> = (0..m).filter(|&i| duals[i] > 0.0).collect();
            if let Some(sol) = polish(v, a, b, &active) {
                if sol.kkt_residual <= KKT_TOL {
                    return Ok(QpSolution { iterations: it, ..sol });
                }
                best = best.min(sol.kkt_residual);
            }
            best = best.min(kkt_residual(v, a, b, &x, &duals));
        }
    }
    Err(Error::QpMaxIterations {
        iterations: max_iter,
        residual: best,
    })
}

/// Solves the equality-constrained projection on `active` rows and accepts
/// it only if the multipliers are non-negative and the point is feasible.
fn polish(v: &[f64], a: &[Vec<f64>], b: &[f64], active: &[usize]) -> Option<QpSolution> {
    let m = a.len();
    let normals: Vec<&[f64]> = active.iter().map(|&i| a[i].as_slice()).collect();
    // λ = (NᵀN)⁻¹ (Nᵀ v − b_W), x = v − N λ
    let gram = gram(&normals);
    let rhs: Vec<f64> = active.iter().map(|&i| dot(&a[i], v) - b[i]).collect();
    let lam = if active.is_empty() { Vec::new() } else { solve_dense(gram, rhs)? };
    let mut x = v.to_vec();
    for (col, &l) in normals.iter().zip(&lam) {
        for j in 0..x.len() {
            x[j] -= l * col[j];
        }
    }
    let duals = scatter(m, active, &lam);
    let kkt = kkt_residual(v, a, b, &x, &duals);
    Some(QpSolution {
        x,
        duals,
        kkt_residual: kkt,
        iterations: 0,
    })
}

fn scatter(m: usize, idx: &[usize], vals: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (&i, &val) in idx.iter().zip(vals) {
        out[i] = val;
    }
    out
}

fn gram(cols: &[&[f64]]) -> Vec<Vec<f64>> {
    cols.iter()
        .map(|ci| cols.iter().map(|cj| dot(ci, cj)).collect())
        .collect()
}

/// Coefficients r minimizing ‖N r − target‖ for linearly independent columns.
fn least_squares_coeffs(cols: &[&[f64]], target: &[f64]) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let rhs: Vec<f64> = cols.iter().map(|c| dot(c, target)).collect();
    solve_dense(gram(cols), rhs).unwrap_or_else(|| vec![0.0; cols.len()])
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut sol = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * sol[k]).sum();
        sol[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(sol)
}

fn cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (rhs[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}
