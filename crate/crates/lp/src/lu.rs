//! Sparse LU factorization of simplex bases with product-form updates.
//!
//! The basis is eliminated row-wise with Markowitz pivot selection (column
//! singletons first, then row singletons, then a bounded Markowitz search
//! under threshold pivoting). Subsequent basis changes are appended as eta
//! columns until the caller refactorizes.

const DROP_TOL: f64 = 1e-14;
const SINGULAR_TOL: f64 = 1e-11;
const THRESHOLD: f64 = 0.1;

/// Basis positions that could not be pivoted, paired with the rows left over.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct Eta {
    pos: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactors {
    m: usize,
    // Elimination step k: rows i updated with row_i -= mult * row_{piv_row[k]}.
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // Upper factor rows, stored per step with column positions pivoted later.
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    etas: Vec<Eta>,
}

impl LuFactors {
    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Factorizes the `m x m` matrix whose column `p` holds `cols[p]` as `(row, value)`.
    pub fn factorize(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                if v.abs() > DROP_TOL {
                    rows[r].push((p, v));
                    col_rows[p].push(r);
                }
            }
        }
        let mut col_count: Vec<usize> = col_rows.iter().map(|c| c.len()).collect();
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];

        let mut f = LuFactors {
            m,
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };

        let mut col_singletons: Vec<usize> = (0..m).filter(|&c| col_count[c] == 1).collect();
        let mut row_singletons: Vec<usize> = (0..m).filter(|&r| rows[r].len() == 1).collect();
        let mut work = vec![0.0f64; m];
        let mut mark = vec![false; m];
        let mut deficient: Vec<usize> = Vec::new();

        for _step in 0..m {
            let mut choice: Option<(usize, usize)> = None;

            while let Some(c) = col_singletons.pop() {
                if !col_active[c] || col_count[c] != 1 {
                    continue;
                }
                let r = col_rows[c]
                    .iter()
                    .copied()
                    .find(|&r| row_active[r] && rows[r].iter().any(|&(cc, _)| cc == c));
                if let Some(r) = r {
                    let v = entry(&rows[r], c);
                    if v.abs() > SINGULAR_TOL {
                        choice = Some((r, c));
                        break;
                    }
                }
            }
            if choice.is_none() {
                while let Some(r) = row_singletons.pop() {
                    if !row_active[r] || rows[r].len() != 1 {
                        continue;
                    }
                    let (c, v) = rows[r][0];
                    if col_active[c] && v.abs() > SINGULAR_TOL {
                        // Threshold check against the column maximum.
                        let cmax = col_max(&rows, &col_rows[c], &row_active, c);
                        if v.abs() >= THRESHOLD * cmax {
                            choice = Some((r, c));
                            break;
                        }
                    }
                }
            }
            if choice.is_none() {
                choice = markowitz(&rows, &col_rows, &col_count, &row_active, &col_active);
            }
            let (pr, pc) = match choice {
                Some(c) => c,
                None => {
                    // Remaining active columns are numerically empty.
                    for c in 0..m {
                        if col_active[c] {
                            deficient.push(c);
                        }
                    }
                    break;
                }
            };

            let pivot = entry(&rows[pr], pc);
            // Scatter pivot row.
            let prow = std::mem::take(&mut rows[pr]);
            row_active[pr] = false;
            col_active[pc] = false;
            for &(c, v) in &prow {
                work[c] = v;
                mark[c] = true;
                col_count[c] -= 1;
                if col_active[c] && col_count[c] == 1 {
                    col_singletons.push(c);
                }
            }

            // Eliminate the pivot column from the remaining active rows.
            let targets: Vec<usize> = col_rows[pc]
                .iter()
                .copied()
                .filter(|&r| row_active[r])
                .collect();
            for r in targets {
                let pos = match rows[r].iter().position(|&(c, _)| c == pc) {
                    Some(p) => p,
                    None => continue,
                };
                let a = rows[r][pos].1;
                rows[r].swap_remove(pos);
                let mult = a / pivot;
                f.l_idx.push(r);
                f.l_val.push(mult);
                // Update existing entries.
                let mut seen = Vec::new();
                let mut k = 0;
                while k < rows[r].len() {
                    let c = rows[r][k].0;
                    if mark[c] {
                        rows[r][k].1 -= mult * work[c];
                        seen.push(c);
                        if rows[r][k].1.abs() <= DROP_TOL {
                            rows[r].swap_remove(k);
                            col_count[c] -= 1;
                            if col_active[c] && col_count[c] == 1 {
                                col_singletons.push(c);
                            }
                            continue;
                        }
                    }
                    k += 1;
                }
                for &c in &seen {
                    mark[c] = false;
                }
                // Fill-in.
                for &(c, v) in &prow {
                    if c == pc || !mark[c] {
                        continue;
                    }
                    let nv = -mult * v;
                    if nv.abs() > DROP_TOL {
                        rows[r].push((c, nv));
                        col_rows[c].push(r);
                        col_count[c] += 1;
                    }
                }
                for &c in &seen {
                    mark[c] = true;
                }
                if rows[r].len() == 1 {
                    row_singletons.push(r);
                }
            }
            for &(c, _) in &prow {
                mark[c] = false;
                work[c] = 0.0;
            }
            f.l_start.push(f.l_idx.len());

            for &(c, v) in &prow {
                if c != pc {
                    f.u_idx.push(c);
                    f.u_val.push(v);
                }
            }
            f.u_start.push(f.u_idx.len());
            f.piv_row.push(pr);
            f.piv_col.push(pc);
            f.piv_val.push(pivot);
        }

        if !deficient.is_empty() {
            let rows_left: Vec<usize> = (0..m).filter(|&r| row_active[r]).collect();
            return Err(Singular {
                positions: deficient,
                rows: rows_left,
            });
        }
        Ok(f)
    }

    /// Solves `B x = b`. `b` is indexed by row and is overwritten; the result is indexed by basis position.
    pub fn ftran(&self, b: &mut [f64], out: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let br = b[self.piv_row[k]];
            if br != 0.0 {
                for p in self.l_start[k]..self.l_start[k + 1] {
                    b[self.l_idx[p]] -= self.l_val[p] * br;
                }
            }
        }
        for k in (0..m).rev() {
            let mut v = b[self.piv_row[k]];
            for p in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[p] * out[self.u_idx[p]];
            }
            out[self.piv_col[k]] = v / self.piv_val[k];
        }
        for eta in &self.etas {
            let xp = out[eta.pos] / eta.pivot;
            if xp != 0.0 {
                for &(i, a) in &eta.others {
                    out[i] -= a * xp;
                }
            }
            out[eta.pos] = xp;
        }
    }

    /// Solves `B^T y = d`. `d` is indexed by basis position and is overwritten; the result is indexed by row.
    pub fn btran(&self, d: &mut [f64], out: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = d[eta.pos];
            for &(i, a) in &eta.others {
                s -= a * d[i];
            }
            d[eta.pos] = s / eta.pivot;
        }
        for k in 0..m {
            let z = d[self.piv_col[k]] / self.piv_val[k];
            out[self.piv_row[k]] = z;
            if z != 0.0 {
                for p in self.u_start[k]..self.u_start[k + 1] {
                    d[self.u_idx[p]] -= self.u_val[p] * z;
                }
            }
        }
        for k in (0..m).rev() {
            let mut s = 0.0;
            for p in self.l_start[k]..self.l_start[k + 1] {
                s += self.l_val[p] * out[self.l_idx[p]];
            }
            if s != 0.0 {
                out[self.piv_row[k]] -= s;
            }
        }
    }

    /// Records the replacement of basis position `pos` by a column whose FTRAN image is `alpha`.
    pub fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            others,
        });
    }
}

fn entry(row: &[(usize, f64)], c: usize) -> f64 {
    row.iter().find(|&&(cc, _)| cc == c).map(|&(_, v)| v).unwrap_or(0.0)
}

fn col_max(rows: &[Vec<(usize, f64)>], col_rows: &[usize], row_active: &[bool], c: usize) -> f64 {
    col_rows
        .iter()
        .filter(|&&r| row_active[r])
        .map(|&r| entry(&rows[r], c).abs())
        .fold(0.0, f64::max)
}

fn markowitz(
    rows: &[Vec<(usize, f64)>],
    col_rows: &[Vec<usize>],
    col_count: &[usize],
    row_active: &[bool],
    col_active: &[bool],
) -> Option<(usize, usize)> {
    // Inspect up to a handful of the sparsest active columns.
    let mut cands: Vec<(usize, usize)> = col_active
        .iter()
        .enumerate()
        .filter(|&(c, &a)| a && col_count[c] > 0)
        .map(|(c, _)| (col_count[c], c))
        .collect();
    if cands.is_empty() {
        return None;
    }
    cands.sort_unstable();
    let mut best: Option<(usize, f64, usize, usize)> = None;
    for &(cnt, c) in cands.iter().take(4) {
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(cnt);
        let mut seen_rows = Vec::new();
        for &r in &col_rows[c] {
            if !row_active[r] || seen_rows.contains(&r) {
                continue;
            }
            seen_rows.push(r);
            let v = entry(&rows[r], c);
            if v != 0.0 {
                entries.push((r, v));
            }
        }
        let cmax = entries.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        if cmax <= SINGULAR_TOL {
            continue;
        }
        for &(r, v) in &entries {
            if v.abs() < THRESHOLD * cmax {
                continue;
            }
            let cost = (rows[r].len() - 1) * (cnt - 1);
            let better = match best {
                None => true,
                Some((bc, bv, _, _)) => cost < bc || (cost == bc && v.abs() > bv),
            };
            if better {
                best = Some((cost, v.abs(), r, c));
            }
        }
    }
    if best.is_none() {
        // Fall back to a full scan for any usable entry.
        for &(_, c) in &cands {
            let mut bestc: Option<(f64, usize)> = None;
            for &r in &col_rows[c] {
                if !row_active[r] {
                    continue;
                }
                let v = entry(&rows[r], c).abs();
                if v > SINGULAR_TOL && bestc.map_or(true, |(bv, _)| v > bv) {
                    bestc = Some((v, r));
                }
            }
            if let Some((_, r)) = bestc {
                return Some((r, c));
            }
        }
        return None;
    }
    best.map(|(_, _, r, c)| (r, c))
}
