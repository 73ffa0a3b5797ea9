//! Reduction to an interior-point friendly form.
//!
//! Rows that touch only free variables are eliminated by Gauss-Jordan
//! reduction (inconsistent ones yield an infeasibility certificate,
//! redundant ones are dropped), unused free variables are removed, and
//! every remaining row is scaled to unit max-norm.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{Column, SdpProblem};

/// Problem data in the layout the interior-point method works on.
#[derive(Clone, Debug)]
pub(crate) struct Std {
    pub m: usize,
    pub nf: usize,
    pub nl: usize,
    pub blocks: Vec<usize>,
    pub rows_free: Vec<Vec<(usize, f64)>>,
    pub rows_lp: Vec<Vec<(usize, f64)>>,
    /// `(block, p, q, coef)` with `p <= q`, contributing `coef * X[p][q]`.
    pub rows_psd: Vec<Vec<(usize, usize, usize, f64)>>,
    pub b: Vec<f64>,
    pub c_free: Vec<f64>,
    pub c_lp: Vec<f64>,
    /// Symmetric matrices with `<C, X> = sum coef * X[p][q]`.
    pub c_psd: Vec<DMatrix<f64>>,
}

pub(crate) enum Outcome {
    Reduced(Reduction),
    /// Farkas certificate on the original rows, scaled to `b'y = 1`.
    Infeasible(Vec<f64>),
    /// Free column with objective weight but no constraint: improving ray.
    Unbounded(Vec<f64>),
}

pub(crate) struct Reduction {
    pub std: Std,
    /// Original row index of each kept row and the factor it was scaled by.
    kept_rows: Vec<(usize, f64)>,
    /// Original free index of each kept free column.
    kept_free: Vec<usize>,
    /// Pivot substitutions `x[p] = rhs - sum coef * x[j]` over non-pivot `j`.
    pivots: Vec<(usize, f64, Vec<(usize, f64)>)>,
    /// Original indices of the eliminated free-only rows.
    free_rows: Vec<usize>,
    /// Original free-only row coefficients (dense over free columns).
    free_rows_dense: DMatrix<f64>,
    n_rows: usize,
    n_free: usize,
    c_free_orig: Vec<f64>,
    /// Per original row, its free entries (for dual recovery).
    row_free_entries: Vec<Vec<(usize, f64)>>,
}

const PIVOT_TOL: f64 = 1e-11;

pub(crate) fn presolve(p: &SdpProblem) -> Outcome {
    let n_rows = p.rows.len();
    // merge duplicate entries
    let mut merged: Vec<BTreeMap<Column, f64>> = Vec::with_capacity(n_rows);
    for row in &p.rows {
        let mut m = BTreeMap::new();
        for &(c, v) in &row.entries {
            *m.entry(c).or_insert(0.0) += v;
        }
        m.retain(|_, v| *v != 0.0);
        merged.push(m);
    }
    let mut c_free_orig = vec![0.0; p.n_free];
    for &(c, v) in &p.objective {
        if let Column::Free(i) = c {
            c_free_orig[i] += v;
        }
    }
    let row_free_entries: Vec<Vec<(usize, f64)>> = merged
        .iter()
        .map(|m| {
            m.iter()
                .filter_map(|(c, v)| match c {
                    Column::Free(i) => Some((*i, *v)),
                    _ => None,
                })
                .collect()
        })
        .collect();

    let is_free_only: Vec<bool> = merged
        .iter()
        .map(|m| m.keys().all(|c| matches!(c, Column::Free(_))))
        .collect();
    let free_rows: Vec<usize> = (0..n_rows).filter(|&i| is_free_only[i]).collect();
    let nfr = free_rows.len();
    let nf = p.n_free;

    // Gauss-Jordan on [E | e | I]
    let width = nf + 1 + nfr;
    let mut t = DMatrix::<f64>::zeros(nfr, width);
    let mut free_rows_dense = DMatrix::<f64>::zeros(nfr, nf);
    for (k, &r) in free_rows.iter().enumerate() {
        let scale = merged[r].values().fold(p.rows[r].rhs.abs(), |a, v| a.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for &(j, v) in &row_free_entries[r] {
            t[(k, j)] = v / scale;
            free_rows_dense[(k, j)] = v;
        }
        t[(k, nf)] = p.rows[r].rhs / scale;
        t[(k, nf + 1 + k)] = 1.0 / scale;
    }
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut prow = 0;
    for col in 0..nf {
        if prow == nfr {
            break;
        }
        let (best, val) = (prow..nfr)
            .map(|i| (i, t[(i, col)].abs()))
            .fold((prow, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if val <= PIVOT_TOL {
            continue;
        }
        t.swap_rows(prow, best);
        let pv = t[(prow, col)];
        for j in 0..width {
            t[(prow, j)] /= pv;
        }
        for i in 0..nfr {
            if i != prow {
                let f = t[(i, col)];
                if f != 0.0 {
                    for j in 0..width {
                        let d = f * t[(prow, j)];
                        t[(i, j)] -= d;
                    }
                }
            }
        }
        pivot_cols.push(col);
        prow += 1;
    }
    // rows prow.. are zero in the free part: check consistency
    for i in prow..nfr {
        let rhs = t[(i, nf)];
        let combo_scale = (0..nfr).fold(0.0f64, |a, k| a.max(t[(i, nf + 1 + k)].abs()));
        if rhs.abs() > 1e-9 * combo_scale.max(1.0) {
            let mut y = vec![0.0; n_rows];
            let mut by = 0.0;
            for (k, &r) in free_rows.iter().enumerate() {
                y[r] = t[(i, nf + 1 + k)];
                by += y[r] * p.rows[r].rhs;
            }
            for v in &mut y {
                *v /= by;
            }
            return Outcome::Infeasible(y);
        }
    }
    let is_pivot: Vec<bool> = {
        let mut v = vec![false; nf];
        for &c in &pivot_cols {
            v[c] = true;
        }
        v
    };
    let pivots: Vec<(usize, f64, Vec<(usize, f64)>)> = pivot_cols
        .iter()
        .enumerate()
        .map(|(i, &pc)| {
            let coefs = (0..nf)
                .filter(|&j| !is_pivot[j] && t[(i, j)].abs() > 1e-15)
                .map(|j| (j, t[(i, j)]))
                .collect();
            (pc, t[(i, nf)], coefs)
        })
        .collect();

    // substitute pivots into the conic rows and the objective
    let mut sub_rows: Vec<(usize, BTreeMap<usize, f64>, f64)> = Vec::new();
    for r in 0..n_rows {
        if is_free_only[r] {
            continue;
        }
        let mut fm: BTreeMap<usize, f64> = BTreeMap::new();
        let mut rhs = p.rows[r].rhs;
        for &(j, v) in &row_free_entries[r] {
            *fm.entry(j).or_insert(0.0) += v;
        }
        for (pc, prhs, coefs) in &pivots {
            if let Some(a) = fm.remove(pc) {
                rhs -= a * prhs;
                for &(j, cj) in coefs {
                    *fm.entry(j).or_insert(0.0) -= a * cj;
                }
            }
        }
        fm.retain(|_, v| v.abs() > 1e-15);
        sub_rows.push((r, fm, rhs));
    }
    let mut c_red = c_free_orig.clone();
    for (pc, _, coefs) in &pivots {
        let a = c_red[*pc];
        c_red[*pc] = 0.0;
        if a != 0.0 {
            for &(j, cj) in coefs {
                c_red[j] -= a * cj;
            }
        }
    }
    // surviving free columns
    let mut used = vec![false; nf];
    for (_, fm, _) in &sub_rows {
        for &j in fm.keys() {
            used[j] = true;
        }
    }
    for j in 0..nf {
        if !is_pivot[j] && !used[j] && c_red[j].abs() > 1e-14 {
            let mut ray = vec![0.0; nf];
            ray[j] = -c_red[j].signum();
            for (pc, _, coefs) in &pivots {
                ray[*pc] = -coefs
                    .iter()
                    .map(|&(jj, cj)| cj * ray[jj])
                    .sum::<f64>();
            }
            return Outcome::Unbounded(ray);
        }
    }
    let kept_free: Vec<usize> = (0..nf).filter(|&j| !is_pivot[j] && used[j]).collect();
    let mut new_index = vec![usize::MAX; nf];
    for (k, &j) in kept_free.iter().enumerate() {
        new_index[j] = k;
    }

    let mut std = Std {
        m: sub_rows.len(),
        nf: kept_free.len(),
        nl: p.n_nonneg,
        blocks: p.psd_sizes.clone(),
        rows_free: Vec::new(),
        rows_lp: Vec::new(),
        rows_psd: Vec::new(),
        b: Vec::new(),
        c_free: kept_free.iter().map(|&j| c_red[j]).collect(),
        c_lp: vec![0.0; p.n_nonneg],
        c_psd: p.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
    };
    for &(c, v) in &p.objective {
        match c {
            Column::NonNeg(i) => std.c_lp[i] += v,
            Column::Psd { block, row, col } => {
                if row == col {
                    std.c_psd[block][(row, row)] += v;
                } else {
                    std.c_psd[block][(row, col)] += 0.5 * v;
                    std.c_psd[block][(col, row)] += 0.5 * v;
                }
            }
            Column::Free(_) => {}
        }
    }
    let mut kept_rows = Vec::with_capacity(sub_rows.len());
    for (r, fm, rhs) in sub_rows {
        let mut rf: Vec<(usize, f64)> = fm.iter().map(|(&j, &v)| (new_index[j], v)).collect();
        let mut rl: Vec<(usize, f64)> = Vec::new();
        let mut rp: Vec<(usize, usize, usize, f64)> = Vec::new();
        for (c, &v) in &merged[r] {
            match *c {
                Column::NonNeg(i) => rl.push((i, v)),
                Column::Psd { block, row, col } => rp.push((block, row, col, v)),
                Column::Free(_) => {}
            }
        }
        let scale = rf
            .iter()
            .map(|e| e.1.abs())
            .chain(rl.iter().map(|e| e.1.abs()))
            .chain(rp.iter().map(|e| e.3.abs()))
            .fold(0.0, f64::max);
        let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        rf.iter_mut().for_each(|e| e.1 *= s);
        rl.iter_mut().for_each(|e| e.1 *= s);
        rp.iter_mut().for_each(|e| e.3 *= s);
        std.rows_free.push(rf);
        std.rows_lp.push(rl);
        std.rows_psd.push(rp);
        std.b.push(rhs * s);
        kept_rows.push((r, s));
    }
    Outcome::Reduced(Reduction {
        std,
        kept_rows,
        kept_free,
        pivots,
        free_rows,
        free_rows_dense,
        n_rows,
        n_free: nf,
        c_free_orig,
        row_free_entries,
    })
}

impl Reduction {
    /// Free variables of the original problem from the reduced ones.
    /// `homogeneous` drops right-hand sides (for rays).
    pub(crate) fn recover_free(&self, xf: &[f64], homogeneous: bool) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        for (k, &j) in self.kept_free.iter().enumerate() {
            x[j] = xf[k];
        }
        for (pc, rhs, coefs) in &self.pivots {
            let base = if homogeneous { 0.0 } else { *rhs };
            x[*pc] = base - coefs.iter().map(|&(j, c)| c * x[j]).sum::<f64>();
        }
        x
    }

    /// Dual multipliers on the original rows. With `homogeneous` the free
    /// objective is treated as zero (certificate recovery).
    pub(crate) fn recover_dual(&self, y_red: &[f64], homogeneous: bool) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for (k, &(r, s)) in self.kept_rows.iter().enumerate() {
            y[r] = y_red[k] * s;
        }
        if self.free_rows.is_empty() || self.pivots.is_empty() {
            return y;
        }
        // solve E_piv' y_E = c_piv - (contribution of kept rows)
        let np = self.pivots.len();
        let mut rhs = DVector::<f64>::zeros(np);
        for (i, (pc, _, _)) in self.pivots.iter().enumerate() {
            let mut k = if homogeneous { 0.0 } else { self.c_free_orig[*pc] };
            for &(r, _) in &self.kept_rows {
                for &(j, v) in &self.row_free_entries[r] {
                    if j == *pc {
                        k -= v * y[r];
                    }
                }
            }
            rhs[i] = k;
        }
        let nfr = self.free_rows.len();
        let mut et = DMatrix::<f64>::zeros(np, nfr);
        for (i, (pc, _, _)) in self.pivots.iter().enumerate() {
            for k in 0..nfr {
                et[(i, k)] = self.free_rows_dense[(k, *pc)];
            }
        }
        let svd = et.svd(true, true);
        if let Ok(sol) = svd.solve(&rhs, 1e-14) {
            for (k, &r) in self.free_rows.iter().enumerate() {
                y[r] = sol[k];
            }
        }
        y
    }
}
