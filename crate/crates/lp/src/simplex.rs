//! Bounded-variable revised primal simplex.
//!
//! Every row `a_r x (sense) b_r` is turned into `a_r x - s_r = 0` with the
//! row activity `s_r` bounded according to the sense, so the initial basis
//! of activities is always available. Infeasible starting points (including
//! warm starts after bound changes) are handled by a composite phase one that
//! minimizes the sum of bound violations of the basic variables.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::LpError;
use crate::lu::LuFactors;
use crate::problem::{CscMatrix, LinearProblem, Sense};

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub deadline: Option<Instant>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            feas_tol: 1e-8,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_interval: 64,
            bland_after: 40,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Statuses of the structural variables followed by the row activities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural variable values (meaningful for `Optimal`).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

/// Reusable simplex engine for one constraint matrix; bounds may vary per call.
#[derive(Debug, Clone)]
pub struct Simplex {
    n: usize,
    m: usize,
    csc: CscMatrix,
    cost: Vec<f64>,
    row_lb: Vec<f64>,
    row_ub: Vec<f64>,
    col_scale: Vec<f64>,
    pub options: SimplexOptions,
}

impl Simplex {
    pub fn new(problem: &LinearProblem, options: SimplexOptions) -> Result<Self, LpError> {
        problem.validate()?;
        let csc = CscMatrix::from_problem(problem);
        let n = problem.num_vars();
        let m = problem.num_rows();
        let mut row_lb = Vec::with_capacity(m);
        let mut row_ub = Vec::with_capacity(m);
        for row in &problem.rows {
            let (lo, hi) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            row_lb.push(lo);
            row_ub.push(hi);
        }
        let mut col_scale = Vec::with_capacity(n + m);
        for j in 0..n {
            let norm2: f64 = csc.col(j).map(|(_, v)| v * v).sum();
            col_scale.push((1.0 + norm2).sqrt());
        }
        col_scale.extend(std::iter::repeat(2f64.sqrt()).take(m));
        Ok(Self {
            n,
            m,
            csc,
            cost: problem.vars.iter().map(|v| v.cost).collect(),
            row_lb,
            row_ub,
            col_scale,
            options,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    /// Solves with the given structural bounds, optionally warm-started from a basis.
    pub fn solve(&self, lower: &[f64], upper: &[f64], warm: Option<&Basis>) -> Result<LpResult, LpError> {
        assert_eq!(lower.len(), self.n);
        assert_eq!(upper.len(), self.n);
        for j in 0..self.n {
            if lower[j] > upper[j] + self.options.feas_tol {
                return Ok(LpResult {
                    status: LpStatus::Infeasible,
                    x: vec![0.0; self.n],
                    objective: f64::INFINITY,
                    iterations: 0,
                    basis: None,
                });
            }
        }
        let mut run = Run::new(self, lower, upper, warm)?;
        if warm.is_some() {
            if let Some(res) = run.dual_iterate()? {
                return Ok(res);
            }
        }
        run.iterate()
    }
}

struct Run<'a> {
    sx: &'a Simplex,
    n: usize,
    m: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    basic: Vec<usize>,
    pos: Vec<usize>,
    lu: LuFactors,
    iterations: usize,
    /// Costs used by the dual method, perturbed against degeneracy; row
    /// activities included.
    dual_cost: Vec<f64>,
    // scratch
    rowbuf: Vec<f64>,
    posbuf: Vec<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
}

const NOT_BASIC: usize = usize::MAX;

impl<'a> Run<'a> {
    fn new(sx: &'a Simplex, lower: &[f64], upper: &[f64], warm: Option<&Basis>) -> Result<Self, LpError> {
        let n = sx.n;
        let m = sx.m;
        let total = n + m;
        let mut lb = lower.to_vec();
        let mut ub = upper.to_vec();
        for j in 0..n {
            if lb[j] > ub[j] {
                // Within tolerance: collapse.
                let mid = 0.5 * (lb[j] + ub[j]);
                lb[j] = mid;
                ub[j] = mid;
            }
        }
        lb.extend_from_slice(&sx.row_lb);
        ub.extend_from_slice(&sx.row_ub);

        let mut status = vec![VarStatus::AtLower; total];
        match warm {
            Some(b) if b.status.len() == total && b.status.iter().filter(|s| **s == VarStatus::Basic).count() == m => {
                status.copy_from_slice(&b.status);
            }
            _ => {
                for j in 0..n {
                    status[j] = cold_status(lb[j], ub[j], sx.cost[j]);
                }
                for s in status.iter_mut().skip(n) {
                    *s = VarStatus::Basic;
                }
            }
        }
        // Keep nonbasic statuses consistent with the (possibly new) bounds.
        for j in 0..total {
            status[j] = match status[j] {
                VarStatus::Basic => VarStatus::Basic,
                VarStatus::AtLower if lb[j].is_finite() => VarStatus::AtLower,
                VarStatus::AtUpper if ub[j].is_finite() => VarStatus::AtUpper,
                VarStatus::Free if !lb[j].is_finite() && !ub[j].is_finite() => VarStatus::Free,
                _ => cold_status(lb[j], ub[j], if j < n { sx.cost[j] } else { 0.0 }),
            };
        }
        let mut basic = Vec::with_capacity(m);
        let mut pos = vec![NOT_BASIC; total];
        for j in 0..total {
            if status[j] == VarStatus::Basic {
                pos[j] = basic.len();
                basic.push(j);
            }
        }
        let mut run = Run {
            sx,
            n,
            m,
            lb,
            ub,
            x: vec![0.0; total],
            status,
            basic,
            pos,
            lu: LuFactors::default(),
            iterations: 0,
            dual_cost: Vec::new(),
            rowbuf: vec![0.0; m],
            posbuf: vec![0.0; m],
            y: vec![0.0; m],
            alpha: vec![0.0; m],
        };
        for j in 0..total {
            run.x[j] = run.nonbasic_value(j);
        }
        run.refactor()?;
        Ok(run)
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lb[j],
            VarStatus::AtUpper => self.ub[j],
            VarStatus::Free | VarStatus::Basic => 0.0,
        }
    }

    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            self.sx.csc.col(j).collect()
        } else {
            vec![(j - self.n, -1.0)]
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        for _attempt in 0..4 {
            let cols: Vec<Vec<(usize, f64)>> = self.basic.iter().map(|&j| self.column(j)).collect();
            match LuFactors::factorize(self.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    self.compute_basic_values();
                    return Ok(());
                }
                Err(sing) => {
                    // Swap the deficient basis positions for the activities of the uncovered rows.
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.basic[p];
                        let slack = self.n + r;
                        if self.pos[slack] != NOT_BASIC {
                            continue;
                        }
                        self.status[out] = cold_status(self.lb[out], self.ub[out], 0.0);
                        self.x[out] = self.nonbasic_value(out);
                        self.pos[out] = NOT_BASIC;
                        self.basic[p] = slack;
                        self.pos[slack] = p;
                        self.status[slack] = VarStatus::Basic;
                    }
                }
            }
        }
        Err(LpError::NumericalFailure(
            "basis stayed singular after repeated repair".into(),
        ))
    }

    fn compute_basic_values(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n {
            if self.pos[j] == NOT_BASIC {
                let v = self.x[j];
                if v != 0.0 {
                    for (r, a) in self.sx.csc.col(j) {
                        rhs[r] -= a * v;
                    }
                }
            }
        }
        for r in 0..m {
            let j = self.n + r;
            if self.pos[j] == NOT_BASIC {
                rhs[r] += self.x[j];
            }
        }
        let mut out = vec![0.0; m];
        self.lu.ftran(&mut rhs, &mut out);
        for (p, &j) in self.basic.iter().enumerate() {
            self.x[j] = out[p];
        }
    }

    fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.sx.cost[j] * self.x[j]).sum()
    }

    fn result(&self, status: LpStatus) -> LpResult {
        let x: Vec<f64> = self.x[..self.n].to_vec();
        LpResult {
            status,
            objective: if status == LpStatus::Optimal { self.objective() } else { f64::NAN },
            x,
            iterations: self.iterations,
            basis: Some(Basis {
                status: self.status.clone(),
            }),
        }
    }

    fn iterate(&mut self) -> Result<LpResult, LpError> {
        let opts = &self.sx.options;
        let tol = opts.feas_tol;
        let mut stall = 0usize;
        let mut bland = false;
        let mut verified = false;

        loop {
            if self.iterations >= opts.max_iterations {
                return Ok(self.result(LpStatus::IterationLimit));
            }
            if self.iterations % 64 == 0 {
                if let Some(dl) = opts.deadline {
                    if Instant::now() >= dl {
                        return Ok(self.result(LpStatus::TimeLimit));
                    }
                }
            }
            if self.lu.num_updates() >= opts.refactor_interval {
                self.refactor()?;
            }

            // Phase selection and basic costs.
            let mut phase_one = false;
            for p in 0..self.m {
                let j = self.basic[p];
                let v = self.x[j];
                let c = if v < self.lb[j] - tol {
                    phase_one = true;
                    -1.0
                } else if v > self.ub[j] + tol {
                    phase_one = true;
                    1.0
                } else {
                    0.0
                };
                self.posbuf[p] = c;
            }
            if !phase_one {
                for p in 0..self.m {
                    let j = self.basic[p];
                    self.posbuf[p] = if j < self.n { self.sx.cost[j] } else { 0.0 };
                }
            }
            let mut d = std::mem::take(&mut self.posbuf);
            let mut y = std::mem::take(&mut self.y);
            self.lu.btran(&mut d, &mut y);
            self.posbuf = d;

            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None; // (var, d_j, score)
            for j in 0..self.n + self.m {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let cj = if phase_one || j >= self.n { 0.0 } else { self.sx.cost[j] };
                let dj = if j < self.n {
                    let mut s = cj;
                    for (r, a) in self.sx.csc.col(j) {
                        s -= y[r] * a;
                    }
                    s
                } else {
                    cj + y[j - self.n]
                };
                let eligible = match st {
                    VarStatus::AtLower => dj < -opts.opt_tol,
                    VarStatus::AtUpper => dj > opts.opt_tol,
                    VarStatus::Free => dj.abs() > opts.opt_tol,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, dj, 0.0));
                    break;
                }
                let score = dj.abs() / self.sx.col_scale[j];
                if entering.map_or(true, |(_, _, s)| score > s) {
                    entering = Some((j, dj, score));
                }
            }
            self.y = y;

            let (q, dq) = match entering {
                Some((q, dq, _)) => (q, dq),
                None => {
                    if !verified && self.lu.num_updates() > 0 {
                        // Confirm on a fresh factorization before declaring the outcome.
                        self.refactor()?;
                        verified = true;
                        continue;
                    }
                    if phase_one {
                        return Ok(self.result(LpStatus::Infeasible));
                    }
                    return Ok(self.result(LpStatus::Optimal));
                }
            };
            verified = false;
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };

            // FTRAN of the entering column.
            for v in self.rowbuf.iter_mut() {
                *v = 0.0;
            }
            if q < self.n {
                for (r, a) in self.sx.csc.col(q) {
                    self.rowbuf[r] = a;
                }
            } else {
                self.rowbuf[q - self.n] = -1.0;
            }
            let mut rb = std::mem::take(&mut self.rowbuf);
            let mut alpha = std::mem::take(&mut self.alpha);
            self.lu.ftran(&mut rb, &mut alpha);
            self.rowbuf = rb;

            // Ratio test.
            let flip = self.ub[q] - self.lb[q];
            let mut leave: Option<(usize, f64, f64)> = None; // (pos, theta, target)
            if bland {
                let mut best_theta = f64::INFINITY;
                for p in 0..self.m {
                    if alpha[p].abs() <= opts.pivot_tol {
                        continue;
                    }
                    let rate = -dir * alpha[p];
                    if let Some((target, _)) = self.target(p, rate) {
                        let j = self.basic[p];
                        let theta = ((target - self.x[j]) / rate).max(0.0);
                        let better = match leave {
                            None => true,
                            Some((bp, _, _)) => {
                                theta < best_theta - 1e-12
                                    || (theta <= best_theta + 1e-12 && j < self.basic[bp])
                            }
                        };
                        if better {
                            best_theta = best_theta.min(theta);
                            leave = Some((p, theta, target));
                        }
                    }
                }
                if let Some((_, theta, _)) = leave {
                    if flip <= theta {
                        leave = None;
                    }
                }
            } else {
                let mut theta_max = f64::INFINITY;
                for p in 0..self.m {
                    if alpha[p].abs() <= opts.pivot_tol {
                        continue;
                    }
                    let rate = -dir * alpha[p];
                    if let Some((target, _)) = self.target(p, rate) {
                        let j = self.basic[p];
                        let relaxed = if rate > 0.0 { target + tol } else { target - tol };
                        let t = (relaxed - self.x[j]) / rate;
                        theta_max = theta_max.min(t);
                    }
                }
                if flip <= theta_max {
                    leave = None;
                } else if theta_max.is_finite() {
                    let mut best_abs = 0.0;
                    for p in 0..self.m {
                        if alpha[p].abs() <= opts.pivot_tol {
                            continue;
                        }
                        let rate = -dir * alpha[p];
                        if let Some((target, _)) = self.target(p, rate) {
                            let j = self.basic[p];
                            let t = (target - self.x[j]) / rate;
                            if t <= theta_max && alpha[p].abs() > best_abs {
                                best_abs = alpha[p].abs();
                                leave = Some((p, t.max(0.0), target));
                            }
                        }
                    }
                }
            }

            let theta = match leave {
                Some((_, t, _)) => t,
                None if flip.is_finite() => flip,
                None => {
                    self.alpha = alpha;
                    if phase_one {
                        return Err(LpError::NumericalFailure(
                            "unbounded ray while minimizing infeasibility".into(),
                        ));
                    }
                    return Ok(self.result(LpStatus::Unbounded));
                }
            };

            // Update values.
            if theta != 0.0 {
                self.x[q] += dir * theta;
                for p in 0..self.m {
                    if alpha[p] != 0.0 {
                        let j = self.basic[p];
                        self.x[j] -= dir * alpha[p] * theta;
                    }
                }
            }
            match leave {
                Some((p, _, target)) => {
                    let out = self.basic[p];
                    self.x[out] = target;
                    self.status[out] = if target == self.lb[out] {
                        VarStatus::AtLower
                    } else {
                        VarStatus::AtUpper
                    };
                    self.pos[out] = NOT_BASIC;
                    self.basic[p] = q;
                    self.pos[q] = p;
                    self.status[q] = VarStatus::Basic;
                    self.lu.push_eta(p, &alpha);
                }
                None => {
                    if dir > 0.0 {
                        self.status[q] = VarStatus::AtUpper;
                        self.x[q] = self.ub[q];
                    } else {
                        self.status[q] = VarStatus::AtLower;
                        self.x[q] = self.lb[q];
                    }
                }
            }
            self.alpha = alpha;
            self.iterations += 1;

            if theta <= 1e-12 {
                stall += 1;
                if stall > opts.bland_after {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    /// Reduced cost of nonbasic `j` given simplex multipliers `y`.
    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = self.dual_cost[j];
            for (r, a) in self.sx.csc.col(j) {
                s -= y[r] * a;
            }
            s
        } else {
            self.dual_cost[j] + y[j - self.n]
        }
    }

    fn multipliers(&mut self) {
        for p in 0..self.m {
            self.posbuf[p] = self.dual_cost[self.basic[p]];
        }
        let mut d = std::mem::take(&mut self.posbuf);
        let mut y = std::mem::take(&mut self.y);
        self.lu.btran(&mut d, &mut y);
        self.posbuf = d;
        self.y = y;
    }

    fn dual_feasible(&self, j: usize, dj: f64) -> bool {
        let tol = self.sx.options.opt_tol.max(1e-7);
        match self.status[j] {
            VarStatus::Basic => true,
            _ if self.lb[j] == self.ub[j] => true,
            VarStatus::AtLower => dj >= -tol,
            VarStatus::AtUpper => dj <= tol,
            VarStatus::Free => dj.abs() <= tol,
        }
    }

    /// Dual simplex from a dual feasible basis. `None` hands over to the
    /// primal method from the current basis.
    fn dual_iterate(&mut self) -> Result<Option<LpResult>, LpError> {
        let opts = self.sx.options.clone();
        let tol = opts.feas_tol;
        let total = self.n + self.m;
        let max_dual = 20 * (self.m + self.n).max(100);
        let mut verified = false;
        let mut stall = 0usize;

        self.dual_cost = self.sx.cost.clone();
        self.dual_cost.resize(total, 0.0);
        self.multipliers();
        for j in 0..total {
            if self.status[j] != VarStatus::Basic {
                let y = std::mem::take(&mut self.y);
                let dj = self.reduced_cost(j, &y);
                self.y = y;
                if !self.dual_feasible(j, dj) {
                    return Ok(None);
                }
            }
        }
        // Shift nonbasic costs away from their bounds; the primal method
        // removes the shift afterwards.
        let mut perturbed = false;
        for j in 0..total {
            let eps = 1e-5 * (1.0 + self.dual_cost[j].abs()) * (1.0 + (j.wrapping_mul(2654435761) % 1000) as f64 / 1000.0);
            match self.status[j] {
                VarStatus::AtLower if self.lb[j] != self.ub[j] => self.dual_cost[j] += eps,
                VarStatus::AtUpper if self.lb[j] != self.ub[j] => self.dual_cost[j] -= eps,
                _ => continue,
            }
            perturbed = true;
        }

        let mut rho = vec![0.0; self.m];
        let mut unit = vec![0.0; self.m];
        let start = self.iterations;
        loop {
            if self.iterations - start >= max_dual || stall > 5000 {
                return Ok(None);
            }
            if self.iterations % 64 == 0 {
                if let Some(dl) = opts.deadline {
                    if Instant::now() >= dl {
                        return Ok(Some(self.result(LpStatus::TimeLimit)));
                    }
                }
            }
            if self.lu.num_updates() >= opts.refactor_interval {
                self.refactor()?;
            }

            // Leaving variable: largest bound violation among the basics.
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..self.m {
                let j = self.basic[p];
                let v = self.x[j];
                let viol = if v < self.lb[j] - tol {
                    self.lb[j] - v
                } else if v > self.ub[j] + tol {
                    v - self.ub[j]
                } else {
                    continue;
                };
                if leave.map_or(true, |(_, b)| viol > b) {
                    leave = Some((p, viol));
                }
            }
            let Some((p, _)) = leave else {
                if !verified && self.lu.num_updates() > 0 {
                    self.refactor()?;
                    verified = true;
                    continue;
                }
                self.multipliers();
                let y = std::mem::take(&mut self.y);
                let feasible = (0..total)
                    .all(|j| self.status[j] == VarStatus::Basic || self.dual_feasible(j, self.reduced_cost(j, &y)));
                self.y = y;
                if !feasible {
                    return Ok(None);
                }
                if perturbed {
                    return Ok(None);
                }
                return Ok(Some(self.result(LpStatus::Optimal)));
            };
            let out = self.basic[p];
            let (target, s) = if self.x[out] < self.lb[out] {
                (self.lb[out], 1.0)
            } else {
                (self.ub[out], -1.0)
            };

            self.multipliers();
            unit.iter_mut().for_each(|v| *v = 0.0);
            unit[p] = 1.0;
            self.lu.btran(&mut unit, &mut rho);

            // Harris ratio test over the pivot row.
            let piv_tol = opts.pivot_tol.max(1e-7);
            let dtol = opts.opt_tol.max(1e-9);
            let mut cands: Vec<(usize, f64, f64)> = Vec::new(); // (var, |d|, alpha)
            let mut bound = f64::INFINITY;
            let y = std::mem::take(&mut self.y);
            for j in 0..total {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let a = if j < self.n {
                    let mut t = 0.0;
                    for (r, v) in self.sx.csc.col(j) {
                        t += rho[r] * v;
                    }
                    t
                } else {
                    -rho[j - self.n]
                };
                if a.abs() <= piv_tol {
                    continue;
                }
                let sa = s * a;
                let eligible = match st {
                    VarStatus::AtLower => sa < 0.0,
                    VarStatus::AtUpper => sa > 0.0,
                    VarStatus::Free => true,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                let dj = self.reduced_cost(j, &y);
                let mag = if st == VarStatus::Free { 0.0 } else { dj.abs() };
                bound = bound.min((mag + dtol) / a.abs());
                cands.push((j, mag, a));
            }
            self.y = y;
            if cands.is_empty() {
                if !verified && self.lu.num_updates() > 0 {
                    self.refactor()?;
                    verified = true;
                    continue;
                }
                return Ok(Some(self.result(LpStatus::Infeasible)));
            }
            let mut enter: Option<(usize, f64, f64)> = None;
            for &(j, mag, a) in &cands {
                if mag / a.abs() <= bound && enter.map_or(true, |(_, _, ba)| a.abs() > ba) {
                    enter = Some((j, mag / a.abs(), a.abs()));
                }
            }
            let (q, step, _) = enter.expect("candidate within the Harris bound");
            verified = false;

            for v in self.rowbuf.iter_mut() {
                *v = 0.0;
            }
            if q < self.n {
                for (r, a) in self.sx.csc.col(q) {
                    self.rowbuf[r] = a;
                }
            } else {
                self.rowbuf[q - self.n] = -1.0;
            }
            let mut rb = std::mem::take(&mut self.rowbuf);
            let mut alpha = std::mem::take(&mut self.alpha);
            self.lu.ftran(&mut rb, &mut alpha);
            self.rowbuf = rb;
            if alpha[p].abs() <= opts.pivot_tol {
                self.alpha = alpha;
                self.refactor()?;
                stall += 1;
                continue;
            }

            let delta = (self.x[out] - target) / alpha[p];
            self.x[q] += delta;
            for r in 0..self.m {
                if alpha[r] != 0.0 {
                    let j = self.basic[r];
                    self.x[j] -= alpha[r] * delta;
                }
            }
            self.x[out] = target;
            self.status[out] = if s > 0.0 { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.pos[out] = NOT_BASIC;
            self.basic[p] = q;
            self.pos[q] = p;
            self.status[q] = VarStatus::Basic;
            self.lu.push_eta(p, &alpha);
            self.alpha = alpha;
            self.iterations += 1;
            if step <= 1e-12 {
                stall += 1;
            } else {
                stall = 0;
            }
        }
    }

    /// Bound that basic position `p` runs into when moving at `rate` per unit step.
    fn target(&self, p: usize, rate: f64) -> Option<(f64, ())> {
        let tol = self.sx.options.feas_tol;
        let j = self.basic[p];
        let v = self.x[j];
        let (lo, hi) = (self.lb[j], self.ub[j]);
        if rate < 0.0 {
            if v > hi + tol {
                Some((hi, ()))
            } else if v < lo - tol {
                None
            } else if lo.is_finite() {
                Some((lo, ()))
            } else {
                None
            }
        } else if v < lo - tol {
            Some((lo, ()))
        } else if v > hi + tol {
            None
        } else if hi.is_finite() {
            Some((hi, ()))
        } else {
            None
        }
    }
}

fn cold_status(lb: f64, ub: f64, cost: f64) -> VarStatus {
    match (lb.is_finite(), ub.is_finite()) {
        (true, true) => {
            if cost < 0.0 {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            }
        }
        (true, false) => VarStatus::AtLower,
        (false, true) => VarStatus::AtUpper,
        (false, false) => VarStatus::Free,
    }
}

/// Solves the continuous relaxation of `problem` from a cold start.
pub fn solve_relaxation(problem: &LinearProblem, options: SimplexOptions) -> Result<LpResult, LpError> {
    let sx = Simplex::new(problem, options)?;
    let lo: Vec<f64> = problem.vars.iter().map(|v| v.lower).collect();
    let hi: Vec<f64> = problem.vars.iter().map(|v| v.upper).collect();
    sx.solve(&lo, &hi, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions::default()
    }

    #[test]
    fn one_variable_lp() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 1.0, -1.0, false);
        p.add_row("cap", vec![(x, 1.0)], Sense::Le, 0.5);
        let r = solve_relaxation(&p, opts()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] - 0.5).abs() < 1e-12);
        assert!((r.objective + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_variables_give_sum_of_costs() {
        let mut p = LinearProblem::new();
        let a = p.add_var("a", 2.0, 2.0, 3.0, false);
        let b = p.add_var("b", -1.0, -1.0, 4.0, false);
        p.add_row("r", vec![(a, 1.0), (b, 1.0)], Sense::Le, 10.0);
        let r = solve_relaxation(&p, opts()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn classic_two_dimensional() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, -3.0, false);
        let y = p.add_var("y", 0.0, f64::INFINITY, -5.0, false);
        p.add_row("a", vec![(x, 1.0)], Sense::Le, 4.0);
        p.add_row("b", vec![(y, 2.0)], Sense::Le, 12.0);
        p.add_row("c", vec![(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        let r = solve_relaxation(&p, opts()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 36.0).abs() < 1e-9);
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 1.0, 1.0, false);
        p.add_row("r", vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_relaxation(&p, opts()).unwrap().status, LpStatus::Infeasible);

        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, -1.0, false);
        let y = p.add_var("y", 0.0, f64::INFINITY, 0.0, false);
        p.add_row("r", vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_relaxation(&p, opts()).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_warm_start() {
        let mut p = LinearProblem::new();
        let a = p.add_var("a", 0.0, 10.0, 1.0, false);
        let b = p.add_var("b", 0.0, 10.0, 2.0, false);
        let c = p.add_var("c", 0.0, 10.0, 0.5, false);
        p.add_row("sum", vec![(a, 1.0), (b, 1.0), (c, 1.0)], Sense::Eq, 7.0);
        p.add_row("mix", vec![(a, 1.0), (c, -1.0)], Sense::Ge, 1.0);
        let sx = Simplex::new(&p, opts()).unwrap();
        let lo = vec![0.0; 3];
        let hi = vec![10.0; 3];
        let r = sx.solve(&lo, &hi, None).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        // a = 4, c = 3
        assert!((r.objective - (4.0 + 1.5)).abs() < 1e-9);
        // Tighten c and resolve from the previous basis.
        let hi2 = vec![10.0, 10.0, 1.0];
        let r2 = sx.solve(&lo, &hi2, r.basis.as_ref()).unwrap();
        let cold = sx.solve(&lo, &hi2, None).unwrap();
        assert_eq!(r2.status, LpStatus::Optimal);
        assert!((r2.objective - cold.objective).abs() < 1e-9);
    }
}
