//! The three data-driven pipelines: SAA, ETO and IEO, for every problem family.

use std::fmt;

use crate::error::check_dim;
use crate::models::{affine, cube_corners, Dataset, Family};
use crate::optim::{
    golden_refine, grid_search_1d, lp_solve, nelder_mead, power_iteration, project_simplex, Bound, LpProblem,
    LpStatus,
};
use crate::problems::{
    ctx_gaussian_policy, ctx_uniform_policy, nv_constrained_oracle, nv_cost_unchecked, nv_oracle_decision,
    portfolio_oracle_decision, ContextualSpec, Decision, NewsvendorSpec, PortfolioSpec,
};
use crate::stats::norm_quantile;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Saa,
    Eto,
    Ieo,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Saa, Method::Eto, Method::Ieo];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Saa => "SAA",
            Method::Eto => "ETO",
            Method::Ieo => "IEO",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SAA" => Some(Method::Saa),
            "ETO" => Some(Method::Eto),
            "IEO" => Some(Method::Ieo),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Newsvendor(NewsvendorSpec),
    Contextual(ContextualSpec),
    Portfolio(PortfolioSpec),
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub method: Method,
    pub decision: Decision,
    pub theta: Option<Vec<f64>>,
    /// In-sample empirical cost of the decision.
    pub objective: f64,
    pub diagnostics: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Constrained IEO: search θ over the fixed interval [2,4] instead of θ̂_ETO ± 1.
    pub literal_grid: bool,
    pub grid_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { literal_grid: false, grid_step: 0.01 }
    }
}

const LP_ITERS: usize = 200_000;

pub fn fit(method: Method, problem: &Problem, family: &Family, data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    match method {
        Method::Saa => saa(problem, data),
        Method::Eto => eto(problem, family, data),
        Method::Ieo => ieo_with(problem, family, data, opts),
    }
}

/// Average in-sample cost of a decision (policy coefficients for contextual problems).
pub fn empirical_cost(problem: &Problem, w: &[f64], data: &Dataset) -> Result<f64> {
    let n = data.n() as f64;
    match problem {
        Problem::Newsvendor(s) => {
            check_dim(s.p(), w.len())?;
            check_dim(s.p(), data.dz())?;
            Ok((0..data.n()).map(|i| nv_cost_unchecked(s, w, data.z(i))).sum::<f64>() / n)
        }
        Problem::Contextual(s) => {
            check_dim(s.feature_dim + 1, w.len())?;
            check_dim(s.feature_dim, data.dx())?;
            Ok((0..data.n())
                .map(|i| {
                    let d = affine(w, data.x(i)) - data.z(i)[0];
                    if d > 0.0 { s.h * d } else { -s.b * d }
                })
                .sum::<f64>()
                / n)
        }
        Problem::Portfolio(s) => {
            check_dim(s.assets, data.dz())?;
            let k = s.assets;
            if w.len() == k + 1 {
                Ok((0..data.n())
                    .map(|i| {
                        let r: f64 = w[..k].iter().zip(data.z(i)).map(|(a, b)| a * b).sum();
                        s.alpha * (r - w[k]).powi(2) - r
                    })
                    .sum::<f64>()
                    / n)
            } else {
                check_dim(k, w.len())?;
                let (mean, cov) = moments(data);
                Ok(profiled_portfolio_cost(s.alpha, w, &mean, &cov))
            }
        }
    }
}

/// Sample mean and (1/n) covariance of the responses.
pub fn moments(data: &Dataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, k) = (data.n(), data.dz());
    let mut mean = vec![0.0; k];
    for i in 0..n {
        for (m, z) in mean.iter_mut().zip(data.z(i)) {
            *m += z / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..n {
        let z = data.z(i);
        for a in 0..k {
            for b in 0..k {
                cov[a][b] += (z[a] - mean[a]) * (z[b] - mean[b]) / n as f64;
            }
        }
    }
    (mean, cov)
}

/// Empirical portfolio objective with the auxiliary coordinate at its optimum: α wᵀSw − wᵀz̄.
pub fn profiled_portfolio_cost(alpha: f64, w: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let k = w.len();
    let mut q = 0.0;
    for a in 0..k {
        for b in 0..k {
            q += w[a] * cov[a][b] * w[b];
        }
    }
    alpha * q - w.iter().zip(mean).map(|(a, b)| a * b).sum::<f64>()
}

fn result(method: Method, problem: &Problem, w: Vec<f64>, theta: Option<Vec<f64>>, data: &Dataset, diag: String) -> Result<FitResult> {
    let objective = empirical_cost(problem, &w, data)?;
    Ok(FitResult { method, decision: w.into(), theta, objective, diagnostics: diag })
}

// ---------------------------------------------------------------- SAA

pub fn saa(problem: &Problem, data: &Dataset) -> Result<FitResult> {
    match problem {
        Problem::Newsvendor(s) => {
            check_dim(s.p(), data.dz())?;
            let fr = empirical_fractile(s, data);
            match s.capacity {
                Some(c) if fr.iter().sum::<f64>() > c || fr.iter().any(|w| *w < 0.0) => {
                    let (w, diag) = constrained_saa_lp(s, c, data)?;
                    result(Method::Saa, problem, w, None, data, diag)
                }
                _ => result(Method::Saa, problem, fr, None, data, "order statistic".into()),
            }
        }
        Problem::Contextual(_) => Err(Error::Unsupported("SAA is not defined for the contextual problem".into())),
        Problem::Portfolio(s) => {
            check_dim(s.assets, data.dz())?;
            let (mean, cov) = moments(data);
            let w = portfolio_pgd(s.alpha, &mean, &cov, 10_000);
            let aux = w.iter().zip(&mean).map(|(a, b)| a * b).sum();
            let mut full = w;
            full.push(aux);
            result(Method::Saa, problem, full, None, data, "projected gradient".into())
        }
    }
}

/// Per-product empirical b/(b+h) order statistic (smallest minimizer).
pub fn empirical_fractile(s: &NewsvendorSpec, data: &Dataset) -> Vec<f64> {
    let n = data.n();
    (0..s.p())
        .map(|j| {
            let mut col = data.column(j);
            col.sort_by(f64::total_cmp);
            let k = ((n as f64) * s.fractile(j) - 1e-9).ceil().max(1.0) as usize;
            col[k.min(n) - 1]
        })
        .collect()
}

/// Constrained newsvendor SAA: min (1/n)Σ hu + bv, w − u + v = z, Σw ≤ C, w ≥ 0.
pub fn constrained_saa_lp(s: &NewsvendorSpec, cap: f64, data: &Dataset) -> Result<(Vec<f64>, String)> {
    let (n, p) = (data.n(), s.p());
    let nv = p + 2 * n * p;
    let u = |i: usize, j: usize| p + i * p + j;
    let v = |i: usize, j: usize| p + n * p + i * p + j;
    let mut c = vec![0.0; nv];
    for i in 0..n {
        for j in 0..p {
            c[u(i, j)] = s.h[j] / n as f64;
            c[v(i, j)] = s.b[j] / n as f64;
        }
    }
    let mut lp = LpProblem::new(c);
    for i in 0..n {
        for j in 0..p {
            let mut a = vec![0.0; nv];
            a[j] = 1.0;
            a[u(i, j)] = -1.0;
            a[v(i, j)] = 1.0;
            lp.equal(a, data.z(i)[j]);
        }
    }
    let mut cap_row = vec![0.0; nv];
    cap_row[..p].iter_mut().for_each(|x| *x = 1.0);
    lp.le(cap_row, cap);
    let sol = lp_solve(&lp, LP_ITERS);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("constrained SAA LP: {:?} after {} pivots", sol.status, sol.iterations)));
    }
    let w: Vec<f64> = sol.x[..p].iter().map(|x| x.max(0.0)).collect();
    Ok((w, format!("LP optimal, {} pivots", sol.iterations)))
}

/// Projected gradient for min α wᵀSw − wᵀm over the simplex.
pub fn portfolio_pgd(alpha: f64, mean: &[f64], cov: &[Vec<f64>], iters: usize) -> Vec<f64> {
    let k = mean.len();
    let lmax = power_iteration(cov, 200);
    if lmax * alpha < 1e-14 {
        // linear objective: best vertex (first on ties)
        let j = (0..k).fold(0, |b, j| if mean[j] > mean[b] { j } else { b });
        let mut w = vec![0.0; k];
        w[j] = 1.0;
        return w;
    }
    let step = 1.0 / (2.0 * alpha * lmax);
    let mut w = vec![1.0 / k as f64; k];
    for _ in 0..iters {
        let g: Vec<f64> = (0..k).map(|a| 2.0 * alpha * (0..k).map(|b| cov[a][b] * w[b]).sum::<f64>() - mean[a]).collect();
        let y: Vec<f64> = w.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
        let next = project_simplex(&y);
        let moved = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if moved < 1e-15 {
            break;
        }
    }
    w
}

// ---------------------------------------------------------------- ETO

pub fn eto(problem: &Problem, family: &Family, data: &Dataset) -> Result<FitResult> {
    let theta = family.mle(data)?;
    let w = oracle(problem, family, &theta)?;
    result(Method::Eto, problem, w, Some(theta), data, "mle + oracle".into())
}

/// Oracle decision ω_θ of `family` for `problem` (policy coefficients for contextual).
pub fn oracle(problem: &Problem, family: &Family, theta: &[f64]) -> Result<Vec<f64>> {
    match (problem, family) {
        (Problem::Newsvendor(s), Family::ScaledMean(f)) => match s.capacity {
            None => Ok(nv_oracle_decision(&f.sigmas, theta[0], s)?.w),
            Some(_) => Ok(nv_constrained_oracle(&f.sigmas, theta[0], s, 1e-10)?.decision.w),
        },
        (Problem::Contextual(s), Family::LinearGaussian(f)) => ctx_gaussian_policy(theta, f.sigma, s),
        (Problem::Contextual(s), Family::LinearUniform(_)) => Ok(ctx_uniform_policy(theta, s)),
        (Problem::Portfolio(s), Family::MeanVec(f)) => {
            let sig2: Vec<f64> = f.sigmas.iter().map(|v| v * v).collect();
            Ok(portfolio_oracle_decision(theta, &sig2, s)?.w)
        }
        _ => Err(Error::Unsupported(format!("family {family:?} does not fit problem {problem:?}"))),
    }
}

// ---------------------------------------------------------------- IEO

pub fn ieo(problem: &Problem, family: &Family, data: &Dataset) -> Result<FitResult> {
    ieo_with(problem, family, data, &FitOptions::default())
}

pub fn ieo_with(problem: &Problem, family: &Family, data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    match (problem, family) {
        (Problem::Newsvendor(s), Family::ScaledMean(f)) => match s.capacity {
            None => {
                let theta = ieo_scaled_breakpoints(s, &f.sigmas, data)?;
                let w = nv_oracle_decision(&f.sigmas, theta, s)?.w;
                result(Method::Ieo, problem, w, Some(vec![theta]), data, "weighted-quantile breakpoint".into())
            }
            Some(_) => {
                let center = family.mle(data)?[0];
                let (lo, hi) = if opts.literal_grid { (2.0, 4.0) } else { (center - 1.0, center + 1.0) };
                let cost = |t: f64| -> f64 {
                    match nv_constrained_oracle(&f.sigmas, t, s, 1e-10) {
                        Ok(o) => (0..data.n()).map(|i| nv_cost_unchecked(s, &o.decision.w, data.z(i))).sum::<f64>(),
                        Err(_) => f64::INFINITY,
                    }
                };
                let (tg, fg) = grid_search_1d(&cost, lo, hi, opts.grid_step);
                let a = (tg - opts.grid_step).max(lo);
                let b = (tg + opts.grid_step).min(hi);
                let tr = golden_refine(&cost, a, b, 1e-8);
                let theta = if cost(tr) < fg - 1e-12 { tr } else { tg };
                let w = nv_constrained_oracle(&f.sigmas, theta, s, 1e-10)?.decision.w;
                result(Method::Ieo, problem, w, Some(vec![theta]), data, format!("grid [{lo:.3},{hi:.3}] + golden"))
            }
        },
        (Problem::Contextual(s), Family::LinearGaussian(f)) => {
            let beta = quantile_regression(s, data, None)?;
            let mut theta = beta.clone();
            theta[0] -= f.sigma * norm_quantile(s.fractile())?;
            result(Method::Ieo, problem, beta, Some(theta), data, "quantile-regression LP".into())
        }
        (Problem::Contextual(s), Family::LinearUniform(_)) => {
            let k = s.fractile();
            let beta = quantile_regression(s, data, Some(1e-9 * k))?;
            let theta: Vec<f64> = beta.iter().map(|b| b / k).collect();
            result(Method::Ieo, problem, beta, Some(theta), data, "LP in policy coefficients, support rows".into())
        }
        (Problem::Portfolio(s), Family::MeanVec(f)) => {
            let sig2: Vec<f64> = f.sigmas.iter().map(|v| v * v).collect();
            let (mean, cov) = moments(data);
            let obj = |th: &[f64]| -> f64 {
                match portfolio_oracle_decision(th, &sig2, s) {
                    Ok(d) => profiled_portfolio_cost(s.alpha, &d.w[..s.assets], &mean, &cov),
                    Err(_) => f64::INFINITY,
                }
            };
            let start = family.mle(data)?;
            let mut best: (Vec<f64>, f64) = (start.clone(), obj(&start));
            let mut starts = vec![start.clone()];
            for j in 0..s.assets {
                for d in [-3.0, -1.0, 1.0, 3.0] {
                    let mut x = start.clone();
                    x[j] += d;
                    starts.push(x);
                }
            }
            for x0 in starts {
                let scale = vec![1.0; s.assets];
                let (mut x, mut fx) = nelder_mead(&obj, &x0, &scale, 1e-10, 5000)?;
                // restart from the incumbent to escape premature collapse
                let (x2, f2) = nelder_mead(&obj, &x, &vec![0.1; s.assets], 1e-12, 5000)?;
                if f2 < fx {
                    x = x2;
                    fx = f2;
                }
                if fx < best.1 {
                    best = (x, fx);
                }
            }
            // a common shift of θ keeps the weights and moves only the auxiliary
            // coordinate; place it at its empirical optimum wᵀz̄
            let mut theta = best.0;
            let w0 = portfolio_oracle_decision(&theta, &sig2, s)?.w;
            let shift: f64 = (0..s.assets).map(|j| w0[j] * (mean[j] - theta[j])).sum();
            theta.iter_mut().for_each(|t| *t += shift);
            let w = portfolio_oracle_decision(&theta, &sig2, s)?.w;
            result(Method::Ieo, problem, w, Some(theta), data, "Nelder-Mead multistart".into())
        }
        _ => Err(Error::Unsupported(format!("family {family:?} does not fit problem {problem:?}"))),
    }
}

/// Exact IEO for the unconstrained scaled-mean newsvendor. The empirical
/// cost is piecewise linear in θ with kinks t_ij = (z_ij − σ_j q_j)/j; its
/// right-derivative is Σ j(h_j+b_j)·1{t_ij ≤ θ} − Σ j b_j, so the smallest
/// minimizer is the first kink where that sum turns nonnegative.
pub fn ieo_scaled_breakpoints(s: &NewsvendorSpec, sigmas: &[f64], data: &Dataset) -> Result<f64> {
    check_dim(s.p(), sigmas.len())?;
    check_dim(s.p(), data.dz())?;
    let mut kinks: Vec<(f64, f64)> = Vec::with_capacity(data.n() * s.p());
    let mut target = 0.0;
    for j in 0..s.p() {
        let jj = (j + 1) as f64;
        let c = sigmas[j] * norm_quantile(s.fractile(j))?;
        target += jj * s.b[j] * data.n() as f64;
        for i in 0..data.n() {
            kinks.push(((data.z(i)[j] - c) / jj, jj * (s.h[j] + s.b[j])));
        }
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (t, wgt) in &kinks {
        acc += wgt;
        if acc >= target * (1.0 - 1e-12) {
            return Ok(*t);
        }
    }
    Ok(kinks.last().map(|k| k.0).unwrap_or(0.0))
}

/// The Appendix LP for unconstrained scalar-θ IEO: min (1/n)Σ h u + b v with
/// jθ + σ_j q_j − u_ij + v_ij = z_ij. Kept for cross-checking the breakpoint solver.
pub fn ieo_scaled_lp(s: &NewsvendorSpec, sigmas: &[f64], data: &Dataset) -> Result<f64> {
    let (n, p) = (data.n(), s.p());
    let nv = 1 + 2 * n * p;
    let mut c = vec![0.0; nv];
    for i in 0..n {
        for j in 0..p {
            c[1 + i * p + j] = s.h[j] / n as f64;
            c[1 + n * p + i * p + j] = s.b[j] / n as f64;
        }
    }
    let mut lp = LpProblem::new(c);
    lp.bound(0, Bound::Free);
    for i in 0..n {
        for j in 0..p {
            let mut a = vec![0.0; nv];
            a[0] = (j + 1) as f64;
            a[1 + i * p + j] = -1.0;
            a[1 + n * p + i * p + j] = 1.0;
            lp.equal(a, data.z(i)[j] - sigmas[j] * norm_quantile(s.fractile(j))?);
        }
    }
    let sol = lp_solve(&lp, LP_ITERS);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("IEO LP: {:?}", sol.status)));
    }
    Ok(sol.x[0])
}

/// min (1/n) Σ h(βᵀa_i − z_i)⁺ + b(z_i − βᵀa_i)⁺ over β, a_i = (1, x_i);
/// with `corner_floor`, also βᵀ(1,c) ≥ floor at every corner c of [0,1]^d.
pub fn quantile_regression(s: &ContextualSpec, data: &Dataset, corner_floor: Option<f64>) -> Result<Vec<f64>> {
    check_dim(s.feature_dim, data.dx())?;
    let (n, k) = (data.n(), s.feature_dim + 1);
    let nv = k + 2 * n;
    let mut c = vec![0.0; nv];
    for i in 0..n {
        c[k + i] = s.h / n as f64;
        c[k + n + i] = s.b / n as f64;
    }
    let mut lp = LpProblem::new(c);
    for j in 0..k {
        lp.bound(j, Bound::Free);
    }
    for i in 0..n {
        let mut a = vec![0.0; nv];
        a[0] = 1.0;
        a[1..k].copy_from_slice(data.x(i));
        a[k + i] = -1.0;
        a[k + n + i] = 1.0;
        lp.equal(a, data.z(i)[0]);
    }
    if let Some(floor) = corner_floor {
        for corner in cube_corners(s.feature_dim) {
            let mut a = vec![0.0; nv];
            a[0] = 1.0;
            a[1..k].copy_from_slice(&corner);
            lp.ge(a, floor);
        }
    }
    let sol = lp_solve(&lp, LP_ITERS);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("quantile regression LP: {:?} after {} pivots", sol.status, sol.iterations)));
    }
    Ok(sol.x[..k].to_vec())
}
