//! Primal-dual interior-point method on the homogeneous self-dual
//! embedding with Nesterov-Todd scaling and Mehrotra predictor-corrector
//! steps.
//!
//! The Newton system is reduced to the saddle system
//! `[M A_f; A_f' 0]`, where `M = A_c H^-1 A_c'` is block diagonal over
//! groups of rows that share a cone block. Each group is factored densely;
//! the free variables are handled through the Schur complement
//! `A_f' M^-1 A_f`.

use nalgebra::{DMatrix, DVector};

use super::linalg::{psd_max_step, symmetrize, RegularizedCholesky};
use super::presolve::{presolve, Outcome, Std};
use super::{residuals, SdpError, SdpProblem, Solution, SolverSettings, Status};

/// Solves `problem` with the built-in interior-point method.
pub fn solve(problem: &SdpProblem, settings: &SolverSettings) -> Result<Solution, SdpError> {
    problem.validate()?;
    let mut sol = match presolve(problem) {
        Outcome::Infeasible(y) => {
            let mut s = Solution::zeros(problem, Status::Infeasible);
            s.y = y;
            s
        }
        Outcome::Unbounded(ray) => {
            let mut s = Solution::zeros(problem, Status::Unbounded);
            s.x_free = ray;
            s
        }
        Outcome::Reduced(red) => {
            let out = hsde(&red.std, settings);
            let mut s = Solution::zeros(problem, out.status);
            s.iterations = out.iterations;
            let (xs, ys, homogeneous) = match out.status {
                Status::Infeasible => {
                    let by: f64 = red.std.b.iter().zip(out.y.iter()).map(|(b, y)| b * y).sum();
                    (0.0, 1.0 / by, true)
                }
                Status::Unbounded => {
                    let cx = objective(&red.std, &out.xf, &out.xl, &out.xp);
                    (-1.0 / cx, 0.0, true)
                }
                _ => (1.0 / out.tau, 1.0 / out.tau, false),
            };
            let xf: Vec<f64> = out.xf.iter().map(|v| v * xs).collect();
            s.x_free = red.recover_free(&xf, homogeneous);
            s.x_nonneg = out.xl.iter().map(|v| v * xs).collect();
            s.x_psd = out.xp.iter().map(|m| m * xs).collect();
            let yr: Vec<f64> = out.y.iter().map(|v| v * ys).collect();
            s.y = red.recover_dual(&yr, homogeneous);
            s.s_nonneg = out.sl.iter().map(|v| v * ys).collect();
            s.s_psd = out.sp.iter().map(|m| m * ys).collect();
            s
        }
    };
    sol.primal_objective = problem
        .objective
        .iter()
        .map(|&(c, a)| a * sol.value(c))
        .sum();
    sol.dual_objective = problem.rows.iter().zip(&sol.y).map(|(r, y)| r.rhs * y).sum();
    sol.residuals = residuals(problem, &sol);
    Ok(sol)
}

struct HsdeOut {
    status: Status,
    xf: DVector<f64>,
    xl: DVector<f64>,
    xp: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    sl: DVector<f64>,
    sp: Vec<DMatrix<f64>>,
    tau: f64,
    iterations: usize,
}

fn objective(std: &Std, xf: &DVector<f64>, xl: &DVector<f64>, xp: &[DMatrix<f64>]) -> f64 {
    let mut v = 0.0;
    for j in 0..std.nf {
        v += std.c_free[j] * xf[j];
    }
    for j in 0..std.nl {
        v += std.c_lp[j] * xl[j];
    }
    for (k, x) in xp.iter().enumerate() {
        v += std.c_psd[k].dot(x);
    }
    v
}

/// Row groups that share a cone block, plus per-block row lists.
struct Structure {
    comps: Vec<Vec<usize>>,
    /// For each row: (component, local index).
    where_: Vec<(usize, usize)>,
    /// For each PSD block: rows touching it with their upper entries.
    psd_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// For each LP column: rows touching it.
    lp_rows: Vec<Vec<(usize, f64)>>,
    /// Per component: touched free columns.
    comp_free: Vec<Vec<usize>>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn structure(std: &Std) -> Structure {
    let m = std.m;
    let mut parent: Vec<usize> = (0..m).collect();
    let mut owner_lp: Vec<Option<usize>> = vec![None; std.nl];
    let mut owner_psd: Vec<Option<usize>> = vec![None; std.blocks.len()];
    let mut psd_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); std.blocks.len()];
    let mut lp_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); std.nl];
    for i in 0..m {
        for &(j, v) in &std.rows_lp[i] {
            lp_rows[j].push((i, v));
            match owner_lp[j] {
                None => owner_lp[j] = Some(i),
                Some(o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, i));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut per_block: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> =
            Default::default();
        for &(k, p, q, v) in &std.rows_psd[i] {
            per_block.entry(k).or_default().push((p, q, v));
        }
        for (k, entries) in per_block {
            psd_rows[k].push((i, entries));
            match owner_psd[k] {
                None => owner_psd[k] = Some(i),
                Some(o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, i));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut comp_of_root = vec![usize::MAX; m];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut where_ = vec![(0, 0); m];
    for i in 0..m {
        let r = find(&mut parent, i);
        if comp_of_root[r] == usize::MAX {
            comp_of_root[r] = comps.len();
            comps.push(Vec::new());
        }
        let c = comp_of_root[r];
        where_[i] = (c, comps[c].len());
        comps[c].push(i);
    }
    let comp_free = comps
        .iter()
        .map(|rows| {
            let mut cols: Vec<usize> = rows
                .iter()
                .flat_map(|&i| std.rows_free[i].iter().map(|e| e.0))
                .collect();
            cols.sort_unstable();
            cols.dedup();
            cols
        })
        .collect();
    Structure {
        comps,
        where_,
        psd_rows,
        lp_rows,
        comp_free,
    }
}

/// NT scaling of one PSD block: `X = R L R'`, `S = R^-T L R^-1`.
struct BlockScaling {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    lambda: DVector<f64>,
    /// `W = R R'`, so that `H^-1(Z) = W Z W`.
    w: DMatrix<f64>,
}

fn block_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<BlockScaling> {
    let lx = super::linalg::cholesky(x)?;
    let ls = super::linalg::cholesky(s)?;
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(false, true);
    let v_t = svd.v_t?;
    let sig = svd.singular_values;
    if sig.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let n = x.nrows();
    let mut r = lx * v_t.transpose();
    for j in 0..n {
        let f = 1.0 / sig[j].sqrt();
        for i in 0..n {
            r[(i, j)] *= f;
        }
    }
    let r_inv = r.clone().try_inverse()?;
    let w = &r * r.transpose();
    Some(BlockScaling {
        r,
        r_inv,
        lambda: sig,
        w,
    })
}

struct Kkt<'a> {
    std: &'a Std,
    st: &'a Structure,
    /// Unregularized group matrices.
    m_blocks: Vec<DMatrix<f64>>,
    m_chol: Vec<RegularizedCholesky>,
    s_chol: Option<RegularizedCholesky>,
}

impl<'a> Kkt<'a> {
    fn build(
        std: &'a Std,
        st: &'a Structure,
        hinv_lp: &DVector<f64>,
        scal: &[BlockScaling],
    ) -> Option<Self> {
        let nc = st.comps.len();
        let mut m_blocks: Vec<DMatrix<f64>> =
            st.comps.iter().map(|c| DMatrix::zeros(c.len(), c.len())).collect();
        for (j, rows) in st.lp_rows.iter().enumerate() {
            let h = hinv_lp[j];
            for &(i1, a1) in rows {
                let (c, l1) = st.where_[i1];
                for &(i2, a2) in rows {
                    let l2 = st.where_[i2].1;
                    m_blocks[c][(l1, l2)] += a1 * a2 * h;
                }
            }
        }
        for (k, rows) in st.psd_rows.iter().enumerate() {
            let w = &scal[k].w;
            for (ai, (i1, e1)) in rows.iter().enumerate() {
                let (c, l1) = st.where_[*i1];
                for (i2, e2) in rows.iter().skip(ai) {
                    let l2 = st.where_[*i2].1;
                    let mut v = 0.0;
                    for &(p, q, a) in e1 {
                        for &(r, t, b) in e2 {
                            v += a * b * (w[(p, r)] * w[(t, q)] + w[(p, t)] * w[(r, q)]);
                        }
                    }
                    m_blocks[c][(l1, l2)] += 0.5 * v;
                    if l1 != l2 {
                        m_blocks[c][(l2, l1)] += 0.5 * v;
                    }
                }
            }
        }
        for mb in &mut m_blocks {
            symmetrize(mb);
        }
        let mut m_chol = Vec::with_capacity(nc);
        for mb in &m_blocks {
            m_chol.push(RegularizedCholesky::new(mb)?);
        }
        let mut af_blocks = Vec::with_capacity(nc);
        for (c, rows) in st.comps.iter().enumerate() {
            let cols = &st.comp_free[c];
            let mut a = DMatrix::zeros(rows.len(), cols.len());
            for (l, &i) in rows.iter().enumerate() {
                for &(j, v) in &std.rows_free[i] {
                    let pos = cols.binary_search(&j).expect("column indexed");
                    a[(l, pos)] += v;
                }
            }
            af_blocks.push(a);
        }
        let s_chol = if std.nf > 0 {
            let mut s = DMatrix::<f64>::zeros(std.nf, std.nf);
            for c in 0..nc {
                let cols = &st.comp_free[c];
                if cols.is_empty() {
                    continue;
                }
                let x = m_chol[c].solve_mat(&af_blocks[c]);
                let local = af_blocks[c].transpose() * x;
                for (a, &ja) in cols.iter().enumerate() {
                    for (b, &jb) in cols.iter().enumerate() {
                        s[(ja, jb)] += local[(a, b)];
                    }
                }
            }
            symmetrize(&mut s);
            Some(RegularizedCholesky::new(&s)?)
        } else {
            None
        };
        Some(Kkt {
            std,
            st,
            m_blocks,
            m_chol,
            s_chol,
        })
    }

    fn m_solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.std.m);
        for (c, rows) in self.st.comps.iter().enumerate() {
            let local = DVector::from_iterator(rows.len(), rows.iter().map(|&i| r[i]));
            let sol = self.m_chol[c].solve(&local);
            for (l, &i) in rows.iter().enumerate() {
                out[i] = sol[l];
            }
        }
        out
    }

    fn m_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.std.m);
        for (c, rows) in self.st.comps.iter().enumerate() {
            let local = DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]));
            let prod = &self.m_blocks[c] * local;
            for (l, &i) in rows.iter().enumerate() {
                out[i] = prod[l];
            }
        }
        out
    }

    fn af_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.std.m);
        for (i, row) in self.std.rows_free.iter().enumerate() {
            out[i] = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
        out
    }

    fn aft_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.std.nf);
        for (i, row) in self.std.rows_free.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * y[i];
            }
        }
        out
    }

    fn solve_once(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.s_chol {
            None => (self.m_solve(r1), DVector::zeros(0)),
            Some(sc) => {
                let w = self.m_solve(r1);
                let rhs = self.aft_apply(&w) - r2;
                let dxf = sc.solve(&rhs);
                let dy = self.m_solve(&(r1 - self.af_apply(&dxf)));
                (dy, dxf)
            }
        }
    }

    /// Solves `[M A_f; A_f' 0] [dy; dxf] = [r1; r2]` with refinement.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dy, mut dxf) = self.solve_once(r1, r2);
        for _ in 0..3 {
            let e1 = r1 - self.m_apply(&dy) - self.af_apply(&dxf);
            let e2 = r2 - self.aft_apply(&dy);
            let norm = e1.amax().max(if e2.is_empty() { 0.0 } else { e2.amax() });
            let scale = r1.amax().max(if r2.is_empty() { 0.0 } else { r2.amax() }).max(1e-300);
            if norm <= 1e-14 * scale {
                break;
            }
            let (cy, cx) = self.solve_once(&e1, &e2);
            dy += cy;
            if !dxf.is_empty() {
                dxf += cx;
            }
        }
        (dy, dxf)
    }
}

#[derive(Clone)]
struct Point {
    xf: DVector<f64>,
    xl: DVector<f64>,
    xp: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    sl: DVector<f64>,
    sp: Vec<DMatrix<f64>>,
    tau: f64,
    kappa: f64,
}

struct Dir {
    xf: DVector<f64>,
    xl: DVector<f64>,
    xp: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    sl: DVector<f64>,
    sp: Vec<DMatrix<f64>>,
    tau: f64,
    kappa: f64,
}

fn a_cone(std: &Std, xl: &DVector<f64>, xp: &[DMatrix<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(std.m);
    for i in 0..std.m {
        let mut v = 0.0;
        for &(j, a) in &std.rows_lp[i] {
            v += a * xl[j];
        }
        for &(k, p, q, a) in &std.rows_psd[i] {
            v += a * xp[k][(p, q)];
        }
        out[i] = v;
    }
    out
}

fn at_cone(std: &Std, y: &DVector<f64>) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    let mut l = DVector::zeros(std.nl);
    let mut p: Vec<DMatrix<f64>> = std.blocks.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for i in 0..std.m {
        let yi = y[i];
        if yi == 0.0 {
            continue;
        }
        for &(j, a) in &std.rows_lp[i] {
            l[j] += a * yi;
        }
        for &(k, r, c, a) in &std.rows_psd[i] {
            if r == c {
                p[k][(r, r)] += a * yi;
            } else {
                p[k][(r, c)] += 0.5 * a * yi;
                p[k][(c, r)] += 0.5 * a * yi;
            }
        }
    }
    (l, p)
}

fn dot_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b)
}

fn jordan(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = a * b;
    p += b * a;
    p *= 0.5;
    p
}

fn hsde(std: &Std, settings: &SolverSettings) -> HsdeOut {
    let st = structure(std);
    let nu = (std.nl + std.blocks.iter().sum::<usize>()) as f64;
    let b = DVector::from_vec(std.b.clone());
    let cf = DVector::from_vec(std.c_free.clone());
    let cl = DVector::from_vec(std.c_lp.clone());
    let norm_b = 1.0 + b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let norm_c = 1.0
        + cf.iter()
            .chain(cl.iter())
            .chain(std.c_psd.iter().flat_map(|m| m.iter()))
            .fold(0.0f64, |a, v| a.max(v.abs()));

    let mut pt = Point {
        xf: DVector::zeros(std.nf),
        xl: DVector::from_element(std.nl, 1.0),
        xp: std.blocks.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        y: DVector::zeros(std.m),
        sl: DVector::from_element(std.nl, 1.0),
        sp: std.blocks.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        tau: 1.0,
        kappa: 1.0,
    };

    let out = |pt: &Point, status: Status, it: usize| HsdeOut {
        status,
        xf: pt.xf.clone(),
        xl: pt.xl.clone(),
        xp: pt.xp.clone(),
        y: pt.y.clone(),
        sl: pt.sl.clone(),
        sp: pt.sp.clone(),
        tau: pt.tau,
        iterations: it,
    };

    let mut status = Status::MaxIters;
    let mut it = 0;
    let mut stalls = 0;
    let mut best: Option<(f64, Point, usize)> = None;
    while it <= settings.max_iters {
        // residuals
        let ax = a_cone(std, &pt.xl, &pt.xp) + {
            let mut v = DVector::zeros(std.m);
            for (i, row) in std.rows_free.iter().enumerate() {
                v[i] = row.iter().map(|&(j, a)| a * pt.xf[j]).sum();
            }
            v
        };
        let r_p = &ax - &b * pt.tau;
        let (atl, atp) = at_cone(std, &pt.y);
        let mut atf = DVector::zeros(std.nf);
        for (i, row) in std.rows_free.iter().enumerate() {
            for &(j, a) in row {
                atf[j] += a * pt.y[i];
            }
        }
        let r_dl = &atl + &pt.sl - &cl * pt.tau;
        let r_dp: Vec<DMatrix<f64>> = (0..std.blocks.len())
            .map(|k| &atp[k] + &pt.sp[k] - &std.c_psd[k] * pt.tau)
            .collect();
        let r_f = &atf - &cf * pt.tau;
        let cx = objective(std, &pt.xf, &pt.xl, &pt.xp);
        let by = dot_vec(&b, &pt.y);
        let r_g = cx - by + pt.kappa;
        let xs = dot_vec(&pt.xl, &pt.sl) + pt.xp.iter().zip(&pt.sp).map(|(x, s)| x.dot(s)).sum::<f64>();
        let mu = (xs + pt.tau * pt.kappa) / (nu + 1.0);

        // termination
        let amax = |v: &DVector<f64>| if v.is_empty() { 0.0 } else { v.amax() };
        let d_inf = amax(&r_dl)
            .max(amax(&r_f))
            .max(r_dp.iter().map(|m| if m.is_empty() { 0.0 } else { m.amax() }).fold(0.0, f64::max));
        let pres = amax(&r_p) / pt.tau / norm_b;
        let dres = d_inf / pt.tau / norm_c;
        let pobj = cx / pt.tau;
        let dobj = by / pt.tau;
        let gap = (pobj - dobj).abs().max(xs / (pt.tau * pt.tau));
        let gap_rel = gap / (1.0 + pobj.abs().min(dobj.abs()));
        if pres <= settings.feas_tol && dres <= settings.feas_tol && gap_rel <= settings.gap_tol {
            status = Status::Optimal;
            break;
        }
        let merit = pres.max(dres).max(gap_rel);
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, pt.clone(), it));
        }
        if let Some((m, _, bit)) = &best {
            if *m <= settings.accept_tol && (merit > 100.0 * m || it > bit + 10) {
                break;
            }
        }
        if by > 0.0 {
            let cert = amax(&(&atl + &pt.sl))
                .max(amax(&atf))
                .max(
                    (0..std.blocks.len())
                        .map(|k| (&atp[k] + &pt.sp[k]).amax())
                        .fold(0.0, f64::max),
                );
            if cert / by <= settings.infeas_tol {
                status = Status::Infeasible;
                break;
            }
        }
        if cx < 0.0 && amax(&ax) / (-cx) <= settings.infeas_tol {
            status = Status::Unbounded;
            break;
        }
        if it == settings.max_iters {
            break;
        }
        if !mu.is_finite() || !pres.is_finite() || !dres.is_finite() {
            status = Status::NumericalFailure;
            break;
        }

        // scaling
        let hinv_lp = pt.xl.component_div(&pt.sl);
        let mut scal = Vec::with_capacity(std.blocks.len());
        for k in 0..std.blocks.len() {
            match block_scaling(&pt.xp[k], &pt.sp[k]) {
                Some(s) => scal.push(s),
                None => {
                    status = Status::NumericalFailure;
                    break;
                }
            }
        }
        if status == Status::NumericalFailure {
            break;
        }
        let kkt = match Kkt::build(std, &st, &hinv_lp, &scal) {
            Some(k) => k,
            None => {
                status = Status::NumericalFailure;
                break;
            }
        };

        // tau-direction pieces independent of the right-hand side
        let hinv_cl = hinv_lp.component_mul(&cl);
        let hinv_cp: Vec<DMatrix<f64>> = (0..std.blocks.len())
            .map(|k| &scal[k].w * &std.c_psd[k] * &scal[k].w)
            .collect();
        let q1 = &b + a_cone(std, &hinv_cl, &hinv_cp);
        let (dy2, dxf2) = kkt.solve(&q1, &cf);
        let (atl2, atp2) = at_cone(std, &dy2);
        let dxl2 = hinv_lp.component_mul(&(&atl2 - &cl));
        let dxp2: Vec<DMatrix<f64>> = (0..std.blocks.len())
            .map(|k| &scal[k].w * (&atp2[k] - &std.c_psd[k]) * &scal[k].w)
            .collect();
        let denom_tail = dot_vec(&b, &dy2) - objective(std, &dxf2, &dxl2, &dxp2);

        let direction = |eta: f64,
                         rxs_l: &DVector<f64>,
                         rxs_p: &[DMatrix<f64>],
                         r_tau: f64|
         -> Dir {
            // v = H^-1(eta r_d) + K(r_xs)
            let vl = hinv_lp.component_mul(&(&r_dl * eta)) + rxs_l.component_div(&pt.sl);
            let vp: Vec<DMatrix<f64>> = (0..std.blocks.len())
                .map(|k| {
                    let sc = &scal[k];
                    let n = sc.lambda.len();
                    let mut u = rxs_p[k].clone();
                    for i in 0..n {
                        for j in 0..n {
                            u[(i, j)] *= 2.0 / (sc.lambda[i] + sc.lambda[j]);
                        }
                    }
                    &sc.w * (&r_dp[k] * eta) * &sc.w + &sc.r * u * sc.r.transpose()
                })
                .collect();
            let p1 = -(&r_p * eta) - a_cone(std, &vl, &vp);
            let p2 = -(&r_f * eta);
            let (dy1, dxf1) = kkt.solve(&p1, &p2);
            let (atl1, atp1) = at_cone(std, &dy1);
            let dxl1 = hinv_lp.component_mul(&atl1) + &vl;
            let dxp1: Vec<DMatrix<f64>> = (0..std.blocks.len())
                .map(|k| &scal[k].w * &atp1[k] * &scal[k].w + &vp[k])
                .collect();
            let num = r_tau
                - pt.tau
                    * (-eta * r_g - objective(std, &dxf1, &dxl1, &dxp1) + dot_vec(&b, &dy1));
            let den = pt.kappa + pt.tau * denom_tail;
            let dtau = num / den;
            let dy = &dy1 + &dy2 * dtau;
            let dxf = if std.nf > 0 { &dxf1 + &dxf2 * dtau } else { DVector::zeros(0) };
            let dxl = &dxl1 + &dxl2 * dtau;
            let dxp: Vec<DMatrix<f64>> = (0..std.blocks.len())
                .map(|k| {
                    let mut m = &dxp1[k] + &dxp2[k] * dtau;
                    symmetrize(&mut m);
                    m
                })
                .collect();
            let dkappa = -eta * r_g - objective(std, &dxf, &dxl, &dxp) + dot_vec(&b, &dy);
            let (atl, atp) = at_cone(std, &dy);
            let dsl = -(&r_dl * eta) - atl + &cl * dtau;
            let dsp: Vec<DMatrix<f64>> = (0..std.blocks.len())
                .map(|k| {
                    let mut m = -(&r_dp[k] * eta) - &atp[k] + &std.c_psd[k] * dtau;
                    symmetrize(&mut m);
                    m
                })
                .collect();
            Dir {
                xf: dxf,
                xl: dxl,
                xp: dxp,
                y: dy,
                sl: dsl,
                sp: dsp,
                tau: dtau,
                kappa: dkappa,
            }
        };

        let scaled = |d: &Dir| -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let dx: Vec<DMatrix<f64>> = (0..std.blocks.len())
                .map(|k| &scal[k].r_inv * &d.xp[k] * scal[k].r_inv.transpose())
                .collect();
            let ds: Vec<DMatrix<f64>> = (0..std.blocks.len())
                .map(|k| scal[k].r.transpose() * &d.sp[k] * &scal[k].r)
                .collect();
            (dx, ds)
        };

        let max_step = |d: &Dir, dxs: &[DMatrix<f64>], dss: &[DMatrix<f64>]| -> f64 {
            let mut a = f64::INFINITY;
            for j in 0..std.nl {
                if d.xl[j] < 0.0 {
                    a = a.min(-pt.xl[j] / d.xl[j]);
                }
                if d.sl[j] < 0.0 {
                    a = a.min(-pt.sl[j] / d.sl[j]);
                }
            }
            for k in 0..std.blocks.len() {
                a = a.min(psd_max_step(&scal[k].lambda, &dxs[k]));
                a = a.min(psd_max_step(&scal[k].lambda, &dss[k]));
            }
            if d.tau < 0.0 {
                a = a.min(-pt.tau / d.tau);
            }
            if d.kappa < 0.0 {
                a = a.min(-pt.kappa / d.kappa);
            }
            a
        };

        // predictor
        let rxs_l_aff = -pt.xl.component_mul(&pt.sl);
        let rxs_p_aff: Vec<DMatrix<f64>> = scal
            .iter()
            .map(|s| -DMatrix::from_diagonal(&s.lambda.component_mul(&s.lambda)))
            .collect();
        let aff = direction(1.0, &rxs_l_aff, &rxs_p_aff, -pt.tau * pt.kappa);
        let (adx, ads) = scaled(&aff);
        let alpha_aff = max_step(&aff, &adx, &ads).min(1.0);
        let mu_aff = {
            let mut v = 0.0;
            for j in 0..std.nl {
                v += (pt.xl[j] + alpha_aff * aff.xl[j]) * (pt.sl[j] + alpha_aff * aff.sl[j]);
            }
            for k in 0..std.blocks.len() {
                let x = &pt.xp[k] + &aff.xp[k] * alpha_aff;
                let s = &pt.sp[k] + &aff.sp[k] * alpha_aff;
                v += x.dot(&s);
            }
            v += (pt.tau + alpha_aff * aff.tau) * (pt.kappa + alpha_aff * aff.kappa);
            v / (nu + 1.0)
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rxs_l = DVector::from_element(std.nl, sigma * mu)
            - pt.xl.component_mul(&pt.sl)
            - aff.xl.component_mul(&aff.sl);
        let rxs_p: Vec<DMatrix<f64>> = (0..std.blocks.len())
            .map(|k| {
                let n = std.blocks[k];
                let lam2 = scal[k].lambda.component_mul(&scal[k].lambda);
                DMatrix::identity(n, n) * (sigma * mu)
                    - DMatrix::from_diagonal(&lam2)
                    - jordan(&adx[k], &ads[k])
            })
            .collect();
        let r_tau = sigma * mu - pt.tau * pt.kappa - aff.tau * aff.kappa;
        let dir = direction(1.0 - sigma, &rxs_l, &rxs_p, r_tau);
        let (cdx, cds) = scaled(&dir);
        let amax_step = max_step(&dir, &cdx, &cds);
        let alpha = (settings.step * amax_step).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            status = Status::NumericalFailure;
            break;
        }
        if alpha < 1e-8 {
            stalls += 1;
            if stalls > 5 {
                break;
            }
        } else {
            stalls = 0;
        }

        if std.nf > 0 {
            pt.xf += &dir.xf * alpha;
        }
        pt.xl += &dir.xl * alpha;
        for k in 0..std.blocks.len() {
            pt.xp[k] += &dir.xp[k] * alpha;
            pt.sp[k] += &dir.sp[k] * alpha;
            symmetrize(&mut pt.xp[k]);
            symmetrize(&mut pt.sp[k]);
        }
        pt.y += &dir.y * alpha;
        pt.sl += &dir.sl * alpha;
        pt.tau += dir.tau * alpha;
        pt.kappa += dir.kappa * alpha;
        it += 1;
    }
    if status != Status::Optimal && status != Status::Infeasible && status != Status::Unbounded {
        if let Some((m, p, _)) = &best {
            if *m <= settings.accept_tol {
                return out(p, Status::Optimal, it);
            }
        }
    }
    out(&pt, status, it)
}
