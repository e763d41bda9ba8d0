//! LP feasibility over box-bounded variables with linear inequality
//! constraints.
//!
//! Instances are tiny (variables = network input dimension, constraints =
//! ReLU phase rows plus output rows), so a dense phase-1 simplex tableau with
//! Bland's anti-cycling rule is used. All constraints are closed; the
//! inactive ReLU phase is relaxed to `z <= 0` upstream, so strict
//! inequalities never occur here.

use crate::error::{Error, Result};
use crate::query::{Hyperbox, LinearConstraint, Relation};

/// A feasibility problem: find a point inside `boxes` satisfying every
/// constraint.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub boxes: Hyperbox,
    pub constraints: Vec<LinearConstraint>,
}

/// Verdict of [`lp_feasible`]. A `Feasible` witness satisfies every box and
/// constraint within `WITNESS_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

/// Tolerance at which feasible witnesses are re-checked.
pub const WITNESS_TOL: f64 = 1e-7;
/// The instance is infeasible when the phase-1 artificial objective stays
/// above this value.
pub const INFEASIBILITY_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, PartialEq)]
enum BasisVar {
    /// A tableau column (shifted variable or slack).
    Col(usize),
    /// A virtual artificial variable attached to one row.
    Artificial(usize),
}

/// Decides feasibility with a phase-1 simplex over the shifted variables
/// `y = x - lower`, `0 <= y <= upper - lower`.
pub fn lp_feasible(p: &LpProblem) -> Result<Feasibility> {
    let n = p.boxes.dim();
    for (i, c) in p.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "constraint {i} has {} coefficients for {} variables",
                c.coeffs.len(),
                n
            )));
        }
    }
    if n == 0 {
        let ok = p
            .constraints
            .iter()
            .all(|c| c.satisfied_at(&[], WITNESS_TOL));
        return Ok(if ok {
            Feasibility::Feasible(vec![])
        } else {
            Feasibility::Infeasible
        });
    }

    let lower = p.boxes.lower();
    let upper = p.boxes.upper();

    // Rows in `a . y <= rhs` form: box uppers first, then the constraints.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + p.constraints.len());
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        rows.push((a, upper[i] - lower[i]));
    }
    for c in &p.constraints {
        let shift: f64 = c.coeffs.iter().zip(lower).map(|(a, l)| a * l).sum();
        match c.relation {
            Relation::Le => rows.push((c.coeffs.clone(), c.rhs - shift)),
            Relation::Ge => rows.push((c.coeffs.iter().map(|a| -a).collect(), -(c.rhs - shift))),
        }
    }

    let m = rows.len();
    let ncols = n + m; // shifted variables then one slack per row
    let mut tableau = vec![vec![0.0; ncols + 1]; m];
    let mut basis = Vec::with_capacity(m);
    for (i, (a, rhs)) in rows.into_iter().enumerate() {
        let negate = rhs < 0.0;
        let sign = if negate { -1.0 } else { 1.0 };
        for j in 0..n {
            tableau[i][j] = sign * a[j];
        }
        tableau[i][n + i] = sign; // slack coefficient
        tableau[i][ncols] = sign * rhs;
        basis.push(if negate {
            BasisVar::Artificial(i)
        } else {
            BasisVar::Col(n + i)
        });
    }

    // Bland order: tableau columns first, artificials last.
    let basis_order = |b: BasisVar| match b {
        BasisVar::Col(j) => j,
        BasisVar::Artificial(i) => ncols + i,
    };

    let mut pivots = 0usize;
    loop {
        // Reduced costs of the artificial-sum objective for the current
        // basis: S_j = sum of T[i][j] over artificial-basic rows.
        let mut entering = None;
        for j in 0..ncols {
            let s: f64 = (0..m)
                .filter(|&i| matches!(basis[i], BasisVar::Artificial(_)))
                .map(|i| tableau[i][j])
                .sum();
            if s > INFEASIBILITY_TOL {
                entering = Some(j);
                break; // Bland: smallest improving column index
            }
        }
        let Some(j) = entering else { break };

        let mut leaving: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let t = tableau[i][j];
            if t > PIVOT_TOL {
                let ratio = tableau[i][ncols] / t;
                let better = ratio < best_ratio - PIVOT_TOL
                    || (ratio < best_ratio + PIVOT_TOL
                        && leaving.is_some_and(|l| basis_order(basis[i]) < basis_order(basis[l])));
                if leaving.is_none() || better {
                    if ratio < best_ratio {
                        best_ratio = ratio;
                    }
                    leaving = Some(i);
                }
            }
        }
        let Some(i) = leaving else {
            // A positive reduced cost implies a positive entry in some
            // artificial row, so a leaving row always exists.
            return Err(Error::Internal(
                "phase-1 simplex found no leaving row".into(),
            ));
        };

        let pivot = tableau[i][j];
        for col in 0..=ncols {
            tableau[i][col] /= pivot;
        }
        for r in 0..m {
            if r != i {
                let factor = tableau[r][j];
                if factor != 0.0 {
                    for col in 0..=ncols {
                        tableau[r][col] -= factor * tableau[i][col];
                    }
                }
            }
        }
        basis[i] = BasisVar::Col(j);

        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::LpUnstable);
        }
    }

    let objective: f64 = (0..m)
        .filter(|&i| matches!(basis[i], BasisVar::Artificial(_)))
        .map(|i| tableau[i][ncols])
        .sum();
    if objective > INFEASIBILITY_TOL {
        return Ok(Feasibility::Infeasible);
    }

    let mut y = vec![0.0; n];
    for i in 0..m {
        if let BasisVar::Col(j) = basis[i] {
            if j < n {
                y[j] = tableau[i][ncols];
            }
        }
    }
    let witness: Vec<f64> = (0..n)
        .map(|i| (lower[i] + y[i]).clamp(lower[i], upper[i]))
        .collect();
    if !p
        .constraints
        .iter()
        .all(|c| c.satisfied_at(&witness, WITNESS_TOL))
    {
        return Err(Error::LpUnstable);
    }
    Ok(Feasibility::Feasible(witness))
}
