//! `min_{w ∈ Δ} ‖Aw − b‖² + ζ‖w‖²` over the probability simplex.
//!
//! Accelerated projected gradient (FISTA with adaptive restart) with fixed
//! step `1/L`, `L = 2(λ_max(AᵀA) + ζ)` bounded from above. Iterations stop
//! when the Frank–Wolfe gap, an upper bound on the suboptimality of the
//! objective, falls below `1e-10 · max(1, f)`. The converged support is then
//! polished by solving the equality-constrained problem on it exactly, which
//! is kept only if it stays feasible and does not raise the objective.
//!
//! Because `Σw = 1`, subtracting the same vector from every column of `A`
//! and from `b` leaves the objective unchanged on the simplex; rows are
//! centered this way first so that common levels do not inflate `L`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MAX_ITERATIONS: usize = 50_000;
pub const TOLERANCE: f64 = 1e-10;
const CHECK_EVERY: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Frank–Wolfe gap at the returned point.
    pub gap: f64,
    pub iterations: usize,
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}`.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

struct Quadratic {
    a: DMatrix<f64>,
    at: DMatrix<f64>,
    b: DVector<f64>,
    zeta: f64,
}

impl Quadratic {
    fn value(&self, w: &DVector<f64>) -> f64 {
        (&self.a * w - &self.b).norm_squared() + self.zeta * w.norm_squared()
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.at * (&self.a * w - &self.b) + w * self.zeta) * 2.0
    }

    /// Exact minimizer on the support of `w` under `Σw = 1` (KKT system),
    /// if it is nonnegative.
    fn polish(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
        let k = support.len();
        let a_s = self.a.select_columns(&support);
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let q = a_s.transpose() * &a_s;
        let c = a_s.transpose() * &self.b;
        let mut rhs = DVector::zeros(k + 1);
        for i in 0..k {
            for j in 0..k {
                kkt[(i, j)] = q[(i, j)];
            }
            kkt[(i, i)] += self.zeta;
            kkt[(i, k)] = 1.0;
            kkt[(k, i)] = 1.0;
            rhs[i] = c[i];
        }
        rhs[k] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;
        if (0..k).any(|i| !(sol[i] >= 0.0)) {
            return None;
        }
        let mut out = DVector::zeros(w.len());
        for (i, &j) in support.iter().enumerate() {
            out[j] = sol[i];
        }
        let total = out.sum();
        Some(out / total)
    }
}

fn fw_gap(grad: &DVector<f64>, w: &DVector<f64>) -> f64 {
    grad.dot(w) - grad.min()
}

fn check_simplex(w: &DVector<f64>) -> Result<()> {
    if w.iter().any(|v| *v < 0.0 || !v.is_finite()) || (w.sum() - 1.0).abs() > 1e-10 {
        return Err(Error::Numerical("simplex weights left the simplex".into()));
    }
    Ok(())
}

/// Solve from the uniform starting point. Columns of `a` are the candidate
/// units (or periods), `b` the target.
pub fn solve_simplex_ridge(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    zeta: f64,
) -> Result<SimplexSolution> {
    let j = a.ncols();
    if j == 0 {
        return Err(invalid("simplex program needs at least one column"));
    }
    if a.nrows() != b.len() {
        return Err(invalid(format!(
            "A has {} rows, b has length {}",
            a.nrows(),
            b.len()
        )));
    }
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(invalid(format!("zeta must be finite and ≥ 0, got {zeta}")));
    }
    let mut a = a.clone();
    let mut b = b.clone();
    for r in 0..a.nrows() {
        let m = a.row(r).mean();
        a.row_mut(r).add_scalar_mut(-m);
        b[r] -= m;
    }
    let at = a.transpose();
    // ‖A‖_F² bounds λ_max(AᵀA)
    let lip = 2.0 * (a.norm_squared() + zeta);
    let quad = Quadratic { a, at, b, zeta };
    let mut x = DVector::from_element(j, 1.0 / j as f64);
    if lip == 0.0 || j == 1 {
        let objective = quad.value(&x);
        return Ok(SimplexSolution {
            weights: x.iter().copied().collect(),
            objective,
            gap: 0.0,
            iterations: 0,
        });
    }
    let step = 1.0 / lip;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for it in 1..=MAX_ITERATIONS {
        let gy = quad.gradient(&y);
        let x_new = project_simplex(&(&y - gy * step));
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // restart momentum when it points uphill
        if (&y - &x_new).dot(&(&x_new - &x)) > 0.0 {
            t = 1.0;
            y = x_new.clone();
        } else {
            y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
            t = t_new;
        }
        x = x_new;
        if it % CHECK_EVERY == 0 || it == MAX_ITERATIONS {
            let f = quad.value(&x);
            let gap = fw_gap(&quad.gradient(&x), &x);
            if gap <= TOLERANCE * f.max(1.0) {
                let (mut x, mut f, mut gap) = (x, f, gap);
                if let Some(p) = quad.polish(&x) {
                    let fp = quad.value(&p);
                    let gp = fw_gap(&quad.gradient(&p), &p);
                    if fp <= f && gp <= gap.max(TOLERANCE * fp.max(1.0)) {
                        (x, f, gap) = (p, fp, gp);
                    }
                }
                check_simplex(&x)?;
                return Ok(SimplexSolution {
                    weights: x.iter().copied().collect(),
                    objective: f,
                    gap,
                    iterations: it,
                });
            }
            if it == MAX_ITERATIONS {
                return Err(Error::NonConvergence {
                    what: "simplex ridge solver",
                    iterations: it,
                    detail: format!("Frank–Wolfe gap {gap:e} at objective {f:e}"),
                });
            }
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// Objective value at arbitrary simplex weights.
pub fn simplex_objective(a: &DMatrix<f64>, b: &DVector<f64>, zeta: f64, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    (a * &w - b).norm_squared() + zeta * w.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_of_simplex_point_is_identity() {
        let v = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let p = project_simplex(&v);
        assert!((p - v).norm() < 1e-15);
        let p = project_simplex(&DVector::from_vec(vec![3.0, -1.0, 0.0]));
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn single_column_is_weight_one() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let s = solve_simplex_ridge(&a, &DVector::from_vec(vec![0.0, 0.0, 0.0]), 0.0).unwrap();
        assert_eq!(s.weights, vec![1.0]);
    }
}
