//! Best-bound branch-and-bound over the sparse simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::LpError;
use crate::problem::LinearProblem;
use crate::simplex::{Basis, LpStatus, Simplex, SimplexOptions};

#[derive(Debug, Clone)]
pub struct BranchOptions {
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub int_tol: f64,
    /// Integer variables whose up-branch (`x >= ceil`) is explored first.
    pub prefer_up: Vec<bool>,
    /// Fractional variables of higher priority are branched on first.
    pub priority: Vec<u8>,
    pub simplex: SimplexOptions,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            time_limit: None,
            node_limit: 1_000_000,
            abs_gap: 1e-6,
            rel_gap: 0.0,
            int_tol: 1e-6,
            prefer_up: Vec::new(),
            priority: Vec::new(),
            simplex: SimplexOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: MilpStatus,
    /// Best integer-feasible point found, if any.
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    /// Global lower bound on the optimum.
    pub bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    /// Global lower bound recorded after each processed node.
    pub bound_history: Vec<f64>,
}

impl MilpResult {
    pub fn gap(&self) -> f64 {
        if self.x.is_none() {
            return f64::INFINITY;
        }
        (self.objective - self.bound).max(0.0)
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    changes: Vec<(usize, f64, f64)>,
    basis: Option<Arc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the one explored next.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Minimizes `problem` honoring integrality flags.
///
/// `initial`, when given and feasible, seeds the incumbent.
pub fn branch_and_bound(
    problem: &LinearProblem,
    options: &BranchOptions,
    initial: Option<&[f64]>,
) -> Result<MilpResult, LpError> {
    let start = Instant::now();
    let deadline = options.time_limit.map(|d| start + d);
    let mut sopts = options.simplex.clone();
    sopts.deadline = deadline;
    let sx = Simplex::new(problem, sopts)?;
    let n = problem.num_vars();
    let base_lo: Vec<f64> = problem.vars.iter().map(|v| v.lower).collect();
    let base_hi: Vec<f64> = problem.vars.iter().map(|v| v.upper).collect();
    let integer: Vec<bool> = problem.vars.iter().map(|v| v.integer).collect();

    let mut incumbent: Option<Vec<f64>> = None;
    let mut best = f64::INFINITY;
    if let Some(x0) = initial {
        if x0.len() == n && problem.max_violation(x0, options.int_tol) <= 1e-6 {
            best = problem.objective(x0);
            incumbent = Some(x0.to_vec());
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        changes: Vec::new(),
        basis: None,
    });

    let mut nodes = 0usize;
    let mut lp_iterations = 0usize;
    let mut history = Vec::new();
    let mut global = f64::NEG_INFINITY;
    let mut status = None;
    let mut lo = base_lo.clone();
    let mut hi = base_hi.clone();

    // Child of the previous node, explored before returning to best-bound order.
    let mut plunge: Option<Node> = None;
    loop {
        let (node, from_heap) = match plunge.take() {
            Some(n) => (n, false),
            None => match heap.pop() {
                Some(n) => (n, true),
                None => break,
            },
        };
        let prune_at = best - options.abs_gap.max(options.rel_gap * best.abs());
        if incumbent.is_some() && node.bound >= prune_at {
            if !from_heap {
                continue;
            }
            // Best-bound order: every remaining node is at least as bad.
            global = global.max(node.bound.min(best));
            heap.clear();
            break;
        }
        if from_heap {
            global = global.max(node.bound);
        }
        if let Some(dl) = deadline {
            if Instant::now() >= dl {
                heap.push(node);
                status = Some(MilpStatus::TimeLimit);
                break;
            }
        }
        if nodes >= options.node_limit {
            heap.push(node);
            status = Some(MilpStatus::NodeLimit);
            break;
        }
        nodes += 1;

        lo.copy_from_slice(&base_lo);
        hi.copy_from_slice(&base_hi);
        for &(j, l, h) in &node.changes {
            lo[j] = l;
            hi[j] = h;
        }
        let res = sx.solve(&lo, &hi, node.basis.as_deref())?;
        lp_iterations += res.iterations;
        match res.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                history.push(current_bound(&heap, global, best, incumbent.is_some()));
                continue;
            }
            LpStatus::Unbounded => {
                if incumbent.is_none() && node.depth == 0 {
                    return Ok(MilpResult {
                        status: MilpStatus::Unbounded,
                        x: None,
                        objective: f64::NEG_INFINITY,
                        bound: f64::NEG_INFINITY,
                        nodes,
                        lp_iterations,
                        bound_history: history,
                    });
                }
                continue;
            }
            LpStatus::TimeLimit => {
                heap.push(node);
                status = Some(MilpStatus::TimeLimit);
                break;
            }
            LpStatus::IterationLimit => {
                return Err(LpError::NumericalFailure(format!(
                    "simplex iteration limit at node {nodes}"
                )));
            }
        }
        let lp_obj = res.objective.max(node.bound);
        if incumbent.is_some() && lp_obj >= best - options.abs_gap.max(options.rel_gap * best.abs()) {
            history.push(current_bound(&heap, global, best, true));
            continue;
        }

        // Highest priority, then most fractional, then lowest index.
        let mut branch: Option<(usize, u8, f64)> = None;
        for j in 0..n {
            if !integer[j] {
                continue;
            }
            let v = res.x[j];
            let f = v - v.floor();
            let dist = f.min(1.0 - f);
            if dist <= options.int_tol {
                continue;
            }
            let prio = options.priority.get(j).copied().unwrap_or(0);
            let better = match branch {
                None => true,
                Some((_, bp, bd)) => prio > bp || (prio == bp && dist > bd + 1e-12),
            };
            if better {
                branch = Some((j, prio, dist));
            }
        }
        match branch {
            None => {
                let mut x = res.x.clone();
                for j in 0..n {
                    if integer[j] {
                        x[j] = x[j].round();
                    }
                }
                let obj = problem.objective(&x);
                if obj < best {
                    debug!("node {nodes}: incumbent {obj:.6}");
                    best = obj;
                    incumbent = Some(x);
                }
            }
            Some((j, _, _)) => {
                let v = res.x[j];
                let basis = res.basis.map(Arc::new);
                let mut down = node.changes.clone();
                down.push((j, lo[j], v.floor()));
                let mut up = node.changes;
                up.push((j, v.ceil(), hi[j]));
                let up_first = options.prefer_up.get(j).copied().unwrap_or(false);
                let [first, second] = if up_first { [up, down] } else { [down, up] };
                seq += 1;
                heap.push(Node {
                    bound: lp_obj,
                    depth: node.depth + 1,
                    seq,
                    changes: second,
                    basis: basis.clone(),
                });
                seq += 1;
                plunge = Some(Node {
                    bound: lp_obj,
                    depth: node.depth + 1,
                    seq,
                    changes: first,
                    basis,
                });
            }
        }
        history.push(current_bound(&heap, global, best, incumbent.is_some()));
        if plunge.is_some() {
            continue;
        }
        if let Some(top) = heap.peek() {
            let g = top.bound.min(best);
            if incumbent.is_some() && best - g <= options.abs_gap.max(options.rel_gap * best.abs()) {
                global = global.max(g);
                heap.clear();
                break;
            }
        }
    }

    let open_bound = heap.peek().map(|n| n.bound).unwrap_or(f64::INFINITY);
    let bound = if incumbent.is_some() {
        global.max(open_bound.min(best)).min(best)
    } else {
        global.max(open_bound.min(global.max(open_bound)))
    };
    let status = match status {
        Some(s) => s,
        None if incumbent.is_some() => MilpStatus::Optimal,
        None => MilpStatus::Infeasible,
    };
    Ok(MilpResult {
        status,
        objective: if incumbent.is_some() { best } else { f64::INFINITY },
        x: incumbent,
        bound,
        nodes,
        lp_iterations,
        bound_history: history,
    })
}

fn current_bound(heap: &BinaryHeap<Node>, global: f64, best: f64, has_incumbent: bool) -> f64 {
    let open = heap.peek().map(|n| n.bound).unwrap_or(f64::INFINITY);
    let b = global.max(open);
    if has_incumbent {
        b.min(best).max(global)
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;

    #[test]
    fn knapsack() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, binaries
        let mut p = LinearProblem::new();
        let a = p.add_binary("a", -5.0);
        let b = p.add_binary("b", -4.0);
        let c = p.add_binary("c", -3.0);
        p.add_row("r1", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 5.0);
        p.add_row("r2", vec![(a, 4.0), (b, 1.0), (c, 2.0)], Sense::Le, 11.0);
        p.add_row("r3", vec![(a, 3.0), (b, 4.0), (c, 2.0)], Sense::Le, 8.0);
        let r = branch_and_bound(&p, &BranchOptions::default(), None).unwrap();
        assert_eq!(r.status, MilpStatus::Optimal);
        // Enumerate.
        let mut best = f64::INFINITY;
        for mask in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|i| ((mask >> i) & 1) as f64).collect();
            if p.max_violation(&x, 1e-9) <= 1e-9 {
                best = best.min(p.objective(&x));
            }
        }
        assert!((r.objective - best).abs() < 1e-9);
        assert!(r.bound <= r.objective + 1e-6);
    }

    #[test]
    fn general_integers_and_infeasibility() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 10.0, -1.0, true);
        let y = p.add_var("y", 0.0, 10.0, -1.0, true);
        p.add_row("r", vec![(x, 2.0), (y, 2.0)], Sense::Le, 7.0);
        let r = branch_and_bound(&p, &BranchOptions::default(), None).unwrap();
        assert_eq!(r.status, MilpStatus::Optimal);
        assert!((r.objective + 3.0).abs() < 1e-9);

        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 10.0, 1.0, true);
        p.add_row("lo", vec![(x, 2.0)], Sense::Ge, 3.0);
        p.add_row("hi", vec![(x, 2.0)], Sense::Le, 3.9);
        let r = branch_and_bound(&p, &BranchOptions::default(), None).unwrap();
        assert_eq!(r.status, MilpStatus::Infeasible);
    }
}
