//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Slow but simple; meant for problems with a few dozen variables, such as
//! the residual programs of exhaustive enumeration, and as a cross-check of
//! the sparse engine.

use crate::problem::{LinearProblem, Sense};
use crate::simplex::LpStatus;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DenseResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Solves the continuous relaxation of `problem` (integrality is ignored).
pub fn solve_dense(problem: &LinearProblem) -> DenseResult {
    let n = problem.num_vars();
    // Column map: each original variable becomes shift + sum of (sign, column).
    struct Map {
        shift: f64,
        cols: Vec<(usize, f64)>,
    }
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for v in &problem.vars {
        if v.lower.is_finite() {
            let c = ncols;
            ncols += 1;
            if v.upper.is_finite() {
                bound_rows.push((c, v.upper - v.lower));
            }
            maps.push(Map {
                shift: v.lower,
                cols: vec![(c, 1.0)],
            });
        } else if v.upper.is_finite() {
            // x = upper - x'
            let c = ncols;
            ncols += 1;
            maps.push(Map {
                shift: v.upper,
                cols: vec![(c, -1.0)],
            });
        } else {
            let c = ncols;
            ncols += 2;
            maps.push(Map {
                shift: 0.0,
                cols: vec![(c, 1.0), (c + 1, -1.0)],
            });
        }
    }

    // Rows in terms of the shifted columns: (coeffs dense, sense, rhs).
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for row in &problem.rows {
        let mut a = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for &(j, v) in &row.coeffs {
            rhs -= v * maps[j].shift;
            for &(c, s) in &maps[j].cols {
                a[c] += v * s;
            }
        }
        rows.push((a, row.sense, rhs));
    }
    for &(c, u) in &bound_rows {
        let mut a = vec![0.0; ncols];
        a[c] = 1.0;
        rows.push((a, Sense::Le, u));
    }
    let mut cost = vec![0.0; ncols];
    let mut const_obj = 0.0;
    for (j, v) in problem.vars.iter().enumerate() {
        const_obj += v.cost * maps[j].shift;
        for &(c, s) in &maps[j].cols {
            cost[c] += v.cost * s;
        }
    }

    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let art0 = ncols + nslack;
    let width = art0 + m + 1; // last column is rhs
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    let mut s = ncols;
    for (i, (a, sense, rhs)) in rows.iter().enumerate() {
        t[i][..ncols].copy_from_slice(a);
        match sense {
            Sense::Le => {
                t[i][s] = 1.0;
                s += 1;
            }
            Sense::Ge => {
                t[i][s] = -1.0;
                s += 1;
            }
            Sense::Eq => {}
        }
        t[i][width - 1] = *rhs;
        if *rhs < 0.0 {
            for v in t[i].iter_mut() {
                *v = -*v;
            }
        }
        t[i][art0 + i] = 1.0;
        basis[i] = art0 + i;
    }

    // Phase 1.
    let mut c1 = vec![0.0; width - 1];
    for c in c1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    if !run_phase(&mut t, &mut basis, &c1, width - 1) {
        unreachable!("phase one is bounded below");
    }
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= art0)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeas > 1e-7 {
        return DenseResult {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::INFINITY,
        };
    }
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= art0 {
            if let Some(c) = (0..art0).find(|&c| t[i][c].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, c);
            }
        }
    }
    // Phase 2 over non-artificial columns.
    let mut c2 = vec![0.0; width - 1];
    c2[..ncols].copy_from_slice(&cost);
    if !run_phase(&mut t, &mut basis, &c2, art0) {
        return DenseResult {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective: f64::NEG_INFINITY,
        };
    }
    let mut colval = vec![0.0; width - 1];
    for (i, &b) in basis.iter().enumerate() {
        colval[b] = t[i][width - 1];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| mp.shift + mp.cols.iter().map(|&(c, s)| s * colval[c]).sum::<f64>())
        .collect();
    let objective = problem.objective(&x);
    debug_assert!((objective - const_obj - cost.iter().zip(&colval).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-6);
    DenseResult {
        status: LpStatus::Optimal,
        x,
        objective,
    }
}

/// Minimizes `cost` over columns `< allowed`; returns false when unbounded.
fn run_phase(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> bool {
    let m = t.len();
    let rhs = t.first().map_or(0, |r| r.len() - 1);
    loop {
        // Reduced costs via the basic cost vector.
        let mut entering = None;
        for c in 0..allowed {
            if basis.contains(&c) {
                continue;
            }
            let mut d = cost[c];
            for i in 0..m {
                d -= cost[basis[i]] * t[i][c];
            }
            if d < -EPS {
                entering = Some(c);
                break;
            }
        }
        let c = match entering {
            Some(c) => c,
            None => return true,
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][c] > EPS {
                let ratio = t[i][rhs] / t[i][c];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        match leave {
            Some((i, _)) => pivot(t, basis, i, c),
            None => return false,
        }
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[c];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
    }
    basis[r] = c;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp_matches_hand_solution() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, -3.0, false);
        let y = p.add_var("y", 0.0, f64::INFINITY, -5.0, false);
        p.add_row("a", vec![(x, 1.0)], Sense::Le, 4.0);
        p.add_row("b", vec![(y, 2.0)], Sense::Le, 12.0);
        p.add_row("c", vec![(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        let r = solve_dense(&p);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 36.0).abs() < 1e-9);
    }

    #[test]
    fn handles_negative_and_free_variables() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0, false);
        let y = p.add_var("y", -5.0, -1.0, -1.0, false);
        p.add_row("r", vec![(x, 1.0), (y, 1.0)], Sense::Ge, -2.0);
        let r = solve_dense(&p);
        // y = -1, x = -1
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 0.0).abs() < 1e-9, "{:?}", r);
    }

    #[test]
    fn infeasible() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 1.0, 1.0, false);
        p.add_row("r", vec![(x, 1.0)], Sense::Eq, 3.0);
        assert_eq!(solve_dense(&p).status, LpStatus::Infeasible);
    }
}
