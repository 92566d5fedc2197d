//! Optimization kernels: dense two-phase simplex LP, 1-D grid and golden
//! search, Nelder–Mead, and the water-filling QP on the simplex.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    NonNegative,
    Free,
    /// x ≥ l
    Lower(f64),
}

/// min cᵀx subject to `ineq` rows (a·x ≤ b), `eq` rows (a·x = b) and per-variable bounds.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub ineq: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub bounds: Vec<Bound>,
}

impl LpProblem {
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        Self { c, ineq: vec![], eq: vec![], bounds: vec![Bound::NonNegative; n] }
    }
    pub fn le(&mut self, a: Vec<f64>, b: f64) -> &mut Self {
        self.ineq.push((a, b));
        self
    }
    pub fn ge(&mut self, a: Vec<f64>, b: f64) -> &mut Self {
        self.ineq.push((a.into_iter().map(|v| -v).collect(), -b));
        self
    }
    pub fn equal(&mut self, a: Vec<f64>, b: f64) -> &mut Self {
        self.eq.push((a, b));
        self
    }
    pub fn bound(&mut self, j: usize, b: Bound) -> &mut Self {
        self.bounds[j] = b;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotRule {
    /// Smallest-index entering variable throughout.
    Bland,
    /// Most negative reduced cost, switching to Bland after a run of degenerate pivots.
    DantzigBlandFallback,
}

const PIV_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;

struct Tableau {
    m: usize,
    ncols: usize,
    // m constraint rows followed by the objective row; each row has ncols + 1 entries (rhs last)
    t: Vec<f64>,
    basis: Vec<usize>,
    blocked: Vec<bool>,
}

impl Tableau {
    fn w(&self) -> usize {
        self.ncols + 1
    }
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.w() + c]
    }
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * self.w() + self.ncols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.w();
        let p = self.t[pr * w + pc];
        for v in &mut self.t[pr * w..(pr + 1) * w] {
            *v /= p;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        let nz: Vec<usize> = (0..w).filter(|&c| prow[c] != 0.0).collect();
        for r in 0..=self.m {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[r * w..(r + 1) * w];
            for &c in &nz {
                row[c] -= f * prow[c];
            }
            row[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations on the current objective row.
    fn optimize(&mut self, rule: PivotRule, max_iters: usize, iters: &mut usize) -> LpStatus {
        let obj = self.m;
        let mut degenerate_run = 0usize;
        loop {
            if *iters >= max_iters {
                return LpStatus::IterationLimit;
            }
            let use_bland = rule == PivotRule::Bland || degenerate_run > 50;
            let mut enter = None;
            let mut best = -COST_TOL;
            for c in 0..self.ncols {
                if self.blocked[c] {
                    continue;
                }
                let rc = self.at(obj, c);
                if rc < best {
                    enter = Some(c);
                    if use_bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(pc) = enter else { return LpStatus::Optimal };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for r in 0..self.m {
                let a = self.at(r, pc);
                if a > PIV_TOL {
                    let q = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some(lr) => q < ratio - 1e-12 || (q <= ratio + 1e-12 && self.basis[r] < self.basis[lr]),
                    };
                    if better {
                        ratio = q;
                        leave = Some(r);
                    }
                }
            }
            let Some(pr) = leave else { return LpStatus::Unbounded };
            if ratio.abs() < 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(pr, pc);
            *iters += 1;
        }
    }
}

pub fn lp_solve(problem: &LpProblem, max_iters: usize) -> LpSolution {
    lp_solve_with(problem, max_iters, PivotRule::DantzigBlandFallback)
}

pub fn lp_solve_with(problem: &LpProblem, max_iters: usize, rule: PivotRule) -> LpSolution {
    let nvar = problem.c.len();
    let fail = |status| LpSolution { x: vec![f64::NAN; nvar], objective: f64::NAN, status, iterations: 0 };

    // map original variables to nonnegative standard-form columns
    let mut col_of = Vec::with_capacity(nvar); // (plus col, optional minus col, shift)
    let mut ns = 0usize;
    for b in &problem.bounds {
        match b {
            Bound::NonNegative => {
                col_of.push((ns, None, 0.0));
                ns += 1;
            }
            Bound::Lower(l) => {
                col_of.push((ns, None, *l));
                ns += 1;
            }
            Bound::Free => {
                col_of.push((ns, Some(ns + 1), 0.0));
                ns += 2;
            }
        }
    }
    let n_ineq = problem.ineq.len();
    let rows: Vec<(&Vec<f64>, f64, bool)> = problem
        .ineq
        .iter()
        .map(|(a, b)| (a, *b, true))
        .chain(problem.eq.iter().map(|(a, b)| (a, *b, false)))
        .collect();
    let m = rows.len();
    if rows.iter().any(|(a, _, _)| a.len() != nvar) || problem.bounds.len() != nvar {
        return fail(LpStatus::Infeasible);
    }

    // structural + slack columns
    let n_struct = ns + n_ineq;
    let mut dense = vec![0.0; m * n_struct];
    let mut rhs = vec![0.0; m];
    for (r, (a, b, is_ineq)) in rows.iter().enumerate() {
        let mut shift = 0.0;
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let (p, mcol, l) = col_of[j];
            dense[r * n_struct + p] += aj;
            if let Some(mc) = mcol {
                dense[r * n_struct + mc] -= aj;
            }
            shift += aj * l;
        }
        if *is_ineq {
            dense[r * n_struct + ns + r] = 1.0;
        }
        rhs[r] = b - shift;
        if rhs[r] < 0.0 {
            rhs[r] = -rhs[r];
            for v in &mut dense[r * n_struct..(r + 1) * n_struct] {
                *v = -*v;
            }
        }
    }

    // crash basis: columns that are positive unit vectors (single nonzero in the column)
    let mut nnz_count = vec![0usize; n_struct];
    let mut nz_row = vec![usize::MAX; n_struct];
    for r in 0..m {
        for c in 0..n_struct {
            if dense[r * n_struct + c] != 0.0 {
                nnz_count[c] += 1;
                nz_row[c] = r;
            }
        }
    }
    let mut basis = vec![usize::MAX; m];
    for c in 0..n_struct {
        if nnz_count[c] == 1 {
            let r = nz_row[c];
            if basis[r] == usize::MAX && dense[r * n_struct + c] > 0.0 {
                basis[r] = c;
            }
        }
    }
    let art_rows: Vec<usize> = (0..m).filter(|&r| basis[r] == usize::MAX).collect();
    let ncols = n_struct + art_rows.len();
    let w = ncols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for r in 0..m {
        t[r * w..r * w + n_struct].copy_from_slice(&dense[r * n_struct..(r + 1) * n_struct]);
        t[r * w + ncols] = rhs[r];
    }
    for (k, &r) in art_rows.iter().enumerate() {
        t[r * w + n_struct + k] = 1.0;
        basis[r] = n_struct + k;
    }
    // normalize crash rows so the basic column has coefficient 1
    for r in 0..m {
        let c = basis[r];
        let p = t[r * w + c];
        if p != 1.0 {
            for v in &mut t[r * w..(r + 1) * w] {
                *v /= p;
            }
        }
    }
    let mut tab = Tableau { m, ncols, t, basis, blocked: vec![false; ncols] };
    let mut iters = 0usize;

    if !art_rows.is_empty() {
        // phase 1: minimize the sum of artificials
        for &r in &art_rows {
            for c in 0..=ncols {
                let v = tab.t[r * w + c];
                tab.t[m * w + c] -= v;
            }
        }
        for k in 0..art_rows.len() {
            tab.t[m * w + n_struct + k] = 0.0;
        }
        let st = tab.optimize(rule, max_iters, &mut iters);
        if st == LpStatus::IterationLimit {
            return LpSolution { iterations: iters, ..fail(st) };
        }
        let infeas = -tab.rhs(m);
        let scale = 1.0 + rhs.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if infeas > 1e-8 * scale {
            return LpSolution { iterations: iters, ..fail(LpStatus::Infeasible) };
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if tab.basis[r] >= n_struct {
                if let Some(c) = (0..n_struct).find(|&c| tab.at(r, c).abs() > 1e-7) {
                    tab.pivot(r, c);
                }
            }
        }
        for c in n_struct..ncols {
            tab.blocked[c] = true;
        }
    }

    // phase 2 objective row
    let mut cost = vec![0.0; ncols];
    for (j, &cj) in problem.c.iter().enumerate() {
        let (p, mcol, _) = col_of[j];
        cost[p] += cj;
        if let Some(mc) = mcol {
            cost[mc] -= cj;
        }
    }
    for c in 0..=ncols {
        tab.t[m * w + c] = if c < ncols { cost[c] } else { 0.0 };
    }
    for r in 0..m {
        let cb = cost[tab.basis[r]];
        if cb != 0.0 {
            for c in 0..=ncols {
                let v = tab.t[r * w + c];
                tab.t[m * w + c] -= cb * v;
            }
        }
    }
    let st = tab.optimize(rule, max_iters, &mut iters);

    let mut y = vec![0.0; ncols];
    for r in 0..m {
        y[tab.basis[r]] = tab.rhs(r);
    }
    let x: Vec<f64> = col_of
        .iter()
        .map(|&(p, mcol, l)| l + y[p] - mcol.map_or(0.0, |mc| y[mc]))
        .collect();
    let objective = problem.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpSolution { x, objective, status: st, iterations: iters }
}

/// Argmin over the inclusive grid lo, lo+step, …; ties go to the smallest point.
pub fn grid_search_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    assert!(lo < hi && step > 0.0, "grid_search_1d needs lo < hi and step > 0");
    let k = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut best = (lo, f(lo));
    for i in 1..=k {
        let t = lo + i as f64 * step;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Golden-section search on [a, b]; returns the midpoint of the final bracket.
pub fn golden_refine(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    assert!(b > a && tol > 0.0, "golden_refine needs b > a and tol > 0");
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Nelder–Mead with standard coefficients; stops when the simplex diameter
/// falls below `tol` or after `max_iters` iterations.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, f64)> {
    let k = x0.len();
    if k == 0 || scale.len() != k {
        return Err(Error::Domain("nelder_mead needs matching nonempty x0 and scale".into()));
    }
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Domain("nelder_mead start point has non-finite value".into()));
    }
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..k {
        let mut p = x0.to_vec();
        p[i] += scale[i];
        vals.push(f(&p));
        pts.push(p);
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iters {
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diam = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam < tol {
            break;
        }
        let mut cen = vec![0.0; k];
        for p in &pts[..k] {
            for (c, v) in cen.iter_mut().zip(p) {
                *c += v / k as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { cen.iter().zip(&pts[k]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(alpha);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(gamma);
            let fe = f(&xe);
            if fe < fr {
                pts[k] = xe;
                vals[k] = fe;
            } else {
                pts[k] = xr;
                vals[k] = fr;
            }
        } else if fr < vals[k - 1] {
            pts[k] = xr;
            vals[k] = fr;
        } else {
            let (xc, fc) = if fr < vals[k] {
                let x = along(rho);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(-rho);
                let v = f(&x);
                (x, v)
            };
            if fc < vals[k].min(fr) {
                pts[k] = xc;
                vals[k] = fc;
            } else {
                for i in 1..=k {
                    let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + sigma * (x - b)).collect();
                    vals[i] = f(&p);
                    pts[i] = p;
                }
            }
        }
    }
    let best = (0..=k).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Ok((pts[best].clone(), vals[best]))
}

/// Minimizer of α Σ s_j w_j² − θᵀw over the probability simplex and the
/// multiplier λ of Σw = 1: w_j = max(0, (θ_j + λ)/(2α s_j)).
pub fn water_filling_simplex(theta: &[f64], sig2: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    assert!(alpha > 0.0 && sig2.iter().all(|s| *s > 0.0) && theta.len() == sig2.len() && !theta.is_empty());
    let weights = |lam: f64| -> Vec<f64> {
        theta.iter().zip(sig2).map(|(t, s)| ((t + lam) / (2.0 * alpha * s)).max(0.0)).collect()
    };
    let tmax = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tmin = theta.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sig2.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (-tmax, -tmin + 2.0 * alpha * smax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if weights(mid).iter().sum::<f64>() < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    // exact solve on the identified active set
    let lam0 = 0.5 * (lo + hi);
    let active: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] + lam0 > 0.0).collect();
    let inv: f64 = active.iter().map(|&j| 1.0 / (2.0 * alpha * sig2[j])).sum();
    let tw: f64 = active.iter().map(|&j| theta[j] / (2.0 * alpha * sig2[j])).sum();
    let lam = if inv > 0.0 { (1.0 - tw) / inv } else { lam0 };
    let mut w = weights(lam);
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 || active.iter().any(|&j| w[j] <= 0.0) {
        w = weights(lam0);
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        return (w, lam0);
    }
    w.iter_mut().for_each(|v| *v /= s);
    (w, lam)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(a: &[Vec<f64>], iters: usize) -> f64 {
    let k = a.len();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lam = 0.0;
    for _ in 0..iters {
        let w: Vec<f64> = (0..k).map(|i| (0..k).map(|j| a[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lam
}
