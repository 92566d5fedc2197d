//! Limiting regret laws, misspecification gaps, matrix-lemma checkers and an
//! empirical first-order dominance test.

use std::fmt;

use crate::estimators::{oracle, Method, Problem};
use crate::linalg::{min_eigenvalue, pinv, range_projector, spd_inverse, sqrt_psd, symmetrize, Mat, Vector};
use crate::models::{feature_moment, Family};
use crate::optim::{golden_refine, nelder_mead};
use crate::problems::{
    nv_constrained_oracle, ContextualSpec, GroundTruth, NewsvendorSpec, PortfolioSpec,
};
use crate::stats::{norm_cdf, norm_pdf, norm_quantile, RngStream};
use crate::{Error, Result};

pub const PINV_TOL: f64 = 1e-10;

/// Every matrix the limit laws are assembled from. Decisions live in the
/// problem's natural space: order quantities, risky weights, or affine policy
/// coefficients for the contextual problem.
#[derive(Clone, Debug)]
pub struct CovModel {
    /// ∇²v₀(ω*) — for constrained problems the Lagrangian Hessian (constraints are linear here).
    pub h_omega: Mat,
    pub h_theta: Mat,
    pub sigma_grad: Mat,
    pub fisher: Mat,
    /// ∇_θ ω at θ₀, p×q.
    pub jac: Mat,
    /// Active constraint gradients, one per row (0×p when nothing binds).
    pub a: Mat,
    pub phi: Mat,
}

impl CovModel {
    pub fn constrained(&self) -> bool {
        self.a.nrows() > 0
    }
}

/// Φ = I − Aᵀ(AAᵀ)⁻¹A.
pub fn tangent_projector(a: &Mat, p: usize) -> Result<Mat> {
    if a.nrows() == 0 {
        return Ok(Mat::identity(p, p));
    }
    let g = spd_inverse(&(a * a.transpose()), "AAᵀ")?;
    Ok(symmetrize(&(Mat::identity(p, p) - a.transpose() * g * a)))
}

fn fd_jacobian(f: impl Fn(&[f64]) -> Result<Vec<f64>>, theta: &[f64]) -> Result<Mat> {
    let p = f(theta)?.len();
    let q = theta.len();
    let mut j = Mat::zeros(p, q);
    for k in 0..q {
        let h = 1e-5 * (1.0 + theta[k].abs());
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += h;
        tm[k] -= h;
        let (fp, fm) = (f(&tp)?, f(&tm)?);
        for r in 0..p {
            j[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Tight-tolerance oracle used for differentiation.
fn precise_oracle(problem: &Problem, family: &Family, theta: &[f64]) -> Result<Vec<f64>> {
    match (problem, family) {
        (Problem::Newsvendor(s), Family::ScaledMean(f)) if s.capacity.is_some() => {
            Ok(nv_constrained_oracle(&f.sigmas, theta[0], s, 1e-15)?.decision.w)
        }
        (Problem::Portfolio(s), _) => Ok(oracle(problem, family, theta)?[..s.assets].to_vec()),
        _ => oracle(problem, family, theta),
    }
}

/// Ground truth equal to the family at θ₀.
pub fn truth_of(problem: &Problem, family: &Family, theta0: &[f64]) -> Result<GroundTruth> {
    match (problem, family) {
        (Problem::Newsvendor(s), Family::ScaledMean(f)) => {
            let mu = (1..=s.p()).map(|j| j as f64 * theta0[0]).collect();
            GroundTruth::newsvendor(s.clone(), mu, f.sigmas.clone())
        }
        (Problem::Contextual(s), Family::LinearGaussian(f)) => GroundTruth::contextual(s.clone(), theta0.to_vec(), f.sigma),
        (Problem::Portfolio(s), Family::MeanVec(f)) => {
            GroundTruth::portfolio(s.clone(), theta0.to_vec(), f.sigmas.iter().map(|v| v * v).collect())
        }
        _ => Err(Error::Unsupported(format!("no Gaussian ground truth for {family:?} on {problem:?}"))),
    }
}

/// Asymptotic matrices for the well-specified model P_θ₀.
pub fn compute_cov_model(problem: &Problem, family: &Family, theta0: &[f64]) -> Result<CovModel> {
    let fisher = family.fisher_info(theta0)?;
    let jac = fd_jacobian(|t| precise_oracle(problem, family, t), theta0)?;
    let (h_omega, sigma_grad, a) = match (problem, family) {
        (Problem::Newsvendor(s), Family::ScaledMean(f)) => newsvendor_blocks(s, &f.sigmas, theta0[0])?,
        (Problem::Contextual(s), Family::LinearGaussian(f)) => contextual_blocks(s, f.sigma)?,
        (Problem::Portfolio(s), Family::MeanVec(f)) => {
            let sig2: Vec<f64> = f.sigmas.iter().map(|v| v * v).collect();
            portfolio_blocks(s, theta0, &sig2)?
        }
        _ => return Err(Error::Unsupported(format!("covariance model for {family:?} on {problem:?}"))),
    };
    let p = h_omega.nrows();
    let phi = tangent_projector(&a, p)?;
    let h_theta = symmetrize(&(jac.transpose() * &h_omega * &jac));
    Ok(CovModel { h_omega, h_theta, sigma_grad, fisher, jac, a, phi })
}

fn newsvendor_blocks(s: &NewsvendorSpec, sigmas: &[f64], theta0: f64) -> Result<(Mat, Mat, Mat)> {
    let p = s.p();
    let mu: Vec<f64> = (1..=p).map(|j| j as f64 * theta0).collect();
    let (w, binding) = match s.capacity {
        None => (crate::problems::nv_normal_fractile(s, &mu, sigmas)?, false),
        Some(_) => {
            let o = crate::problems::nv_constrained_normal(s, &mu, sigmas, 1e-15)?;
            (o.decision.w, o.binding)
        }
    };
    let mut h = Mat::zeros(p, p);
    let mut g = Mat::zeros(p, p);
    for j in 0..p {
        let d = (w[j] - mu[j]) / sigmas[j];
        h[(j, j)] = (s.h[j] + s.b[j]) * norm_pdf(d) / sigmas[j];
        // subgradient h·1{z<ω} − b·1{z>ω}: variance (h+b)²F(1−F)
        let f = norm_cdf(d);
        g[(j, j)] = (s.h[j] + s.b[j]).powi(2) * f * (1.0 - f);
    }
    let a = if binding { Mat::from_element(1, p, 1.0) } else { Mat::zeros(0, p) };
    Ok((h, g, a))
}

fn contextual_blocks(s: &ContextualSpec, sigma: f64) -> Result<(Mat, Mat, Mat)> {
    let m = feature_moment(s.feature_dim);
    let q = norm_quantile(s.fractile())?;
    let h = &m * ((s.h + s.b) * norm_pdf(q) / sigma);
    let g = &m * (s.h * s.b);
    Ok((h, g, Mat::zeros(0, s.feature_dim + 1)))
}

fn portfolio_blocks(s: &PortfolioSpec, theta0: &[f64], sig2: &[f64]) -> Result<(Mat, Mat, Mat)> {
    let k = s.assets;
    let w = crate::problems::portfolio_oracle_decision(theta0, sig2, s)?.w;
    let h = Mat::from_diagonal(&Vector::from_iterator(k, sig2.iter().map(|v| 2.0 * s.alpha * v)));
    let g = portfolio_grad_cov(s.alpha, &w[..k], sig2);
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; k]];
    for j in 0..k {
        if w[j] <= 1e-12 {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            rows.push(e);
        }
    }
    let a = Mat::from_fn(rows.len(), k, |r, c| rows[r][c]);
    Ok((h, g, a))
}

/// Var[2α(wᵀy)y − z] with y = z − μ ~ N(0, D): by Isserlis,
/// 4α²((wᵀDw)D + DwwᵀD) + D (the E[(wᵀy)y] = Dw mean removes one rank-one term).
pub fn portfolio_grad_cov(alpha: f64, w: &[f64], sig2: &[f64]) -> Mat {
    let k = w.len();
    let d = Mat::from_diagonal(&Vector::from_column_slice(sig2));
    let dw = Vector::from_iterator(k, (0..k).map(|j| sig2[j] * w[j]));
    let s2: f64 = (0..k).map(|j| w[j] * w[j] * sig2[j]).sum();
    &d * (4.0 * alpha * alpha * s2 + 1.0) + &dw * dw.transpose() * (4.0 * alpha * alpha)
}

/// The same covariance by plain Monte Carlo.
pub fn portfolio_grad_cov_mc(alpha: f64, w: &[f64], mu: &[f64], sig2: &[f64], draws: usize, rng: &mut RngStream) -> Mat {
    let k = w.len();
    let mut mean = Vector::zeros(k);
    let mut second = Mat::zeros(k, k);
    for _ in 0..draws {
        let y: Vec<f64> = sig2.iter().map(|v| v.sqrt() * rng.std_normal()).collect();
        let s: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        let g = Vector::from_iterator(k, (0..k).map(|j| 2.0 * alpha * s * y[j] - (mu[j] + y[j])));
        mean += &g;
        second += &g * g.transpose();
    }
    let m = draws as f64;
    mean /= m;
    second / m - &mean * mean.transpose()
}

/// Numerical ∇²_θ v₀(ω_θ) by central second differences (step 1e−4).
pub fn hessian_theta_fd(truth: &GroundTruth, problem: &Problem, family: &Family, theta0: &[f64]) -> Result<Mat> {
    let v = |t: &[f64]| -> Result<f64> { truth.value(&precise_oracle(problem, family, t)?) };
    let q = theta0.len();
    let mut hm = Mat::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            let (ha, hb) = (1e-4 * (1.0 + theta0[a].abs()), 1e-4 * (1.0 + theta0[b].abs()));
            let at = |da: f64, db: f64| -> Result<f64> {
                let mut t = theta0.to_vec();
                t[a] += da;
                t[b] += db;
                v(&t)
            };
            hm[(a, b)] = (at(ha, hb)? - at(ha, -hb)? - at(-ha, hb)? + at(-ha, -hb)?) / (4.0 * ha * hb);
        }
    }
    Ok(symmetrize(&hm))
}

// ------------------------------------------------------------ limit laws

/// G = ½NᵀHN with N ~ N(0, Σ).
#[derive(Clone, Debug)]
pub struct LimitLaw {
    pub h: Mat,
    pub sigma: Mat,
    root: Mat,
}

impl LimitLaw {
    pub fn new(h: Mat, sigma: Mat) -> Result<Self> {
        let sigma = symmetrize(&sigma);
        let lmax = sigma.amax().max(1.0);
        let lmin = min_eigenvalue(&sigma);
        if lmin < -1e-9 * lmax {
            return Err(Error::Domain(format!("limit covariance not PSD (min eigenvalue {lmin:.3e})")));
        }
        let root = sqrt_psd(&sigma)?;
        Ok(Self { h: symmetrize(&h), sigma, root })
    }

    /// ½ tr(HΣ)
    pub fn mean(&self) -> f64 {
        0.5 * (&self.h * &self.sigma).trace()
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let xi = Vector::from_iterator(self.root.ncols(), (0..self.root.ncols()).map(|_| rng.std_normal()));
        let n = &self.root * xi;
        0.5 * (n.transpose() * &self.h * &n)[(0, 0)]
    }

    pub fn samples(&self, rng: &mut RngStream, m: usize) -> Vec<f64> {
        (0..m).map(|_| self.sample(rng)).collect()
    }
}

fn inverse_or_pinv(m: &Mat, what: &str, allow_pinv: bool) -> Result<Mat> {
    match spd_inverse(m, what) {
        Ok(x) => Ok(x),
        Err(e) if !allow_pinv => Err(e),
        Err(_) => Ok(pinv(m, PINV_TOL)),
    }
}

/// Limit law of n·regret for a method. With `constrained` the SAA law uses
/// the tangent-space projection and every inverse falls back to the pseudoinverse.
pub fn limit_law(cov: &CovModel, method: Method, constrained: bool) -> Result<LimitLaw> {
    match method {
        Method::Eto => {
            let inv = spd_inverse(&cov.fisher, "Fisher information")?;
            LimitLaw::new(cov.h_theta.clone(), inv)
        }
        Method::Ieo => {
            let hinv = inverse_or_pinv(&cov.h_theta, "∇²_θ v₀", constrained)?;
            let mid = cov.jac.transpose() * &cov.sigma_grad * &cov.jac;
            LimitLaw::new(cov.h_theta.clone(), &hinv * mid * &hinv)
        }
        Method::Saa if !constrained => {
            let hinv = spd_inverse(&cov.h_omega, "∇²_ω v₀")?;
            LimitLaw::new(cov.h_omega.clone(), &hinv * &cov.sigma_grad * &hinv)
        }
        Method::Saa => {
            let h = symmetrize(&(&cov.phi * &cov.h_omega * &cov.phi));
            let proj = &cov.phi * pinv(&h, PINV_TOL) * &cov.phi;
            LimitLaw::new(h, &proj * &cov.sigma_grad * &proj)
        }
    }
}

/// IEO asymptotic covariance of θ̂.
pub fn ieo_theta_cov(cov: &CovModel) -> Mat {
    let hinv = pinv(&cov.h_theta, PINV_TOL);
    &hinv * cov.jac.transpose() * &cov.sigma_grad * &cov.jac * &hinv
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Most negative eigenvalue (or DKW slack) seen.
    pub worst: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {} ({} / {} trials failed, worst slack {:.6e})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.failures,
            self.trials,
            self.worst
        )
    }
}

/// Minimum eigenvalue of I⁻¹-vs-IEO covariance difference (restricted to range(H_θ)).
pub fn check_cramer_rao(cov: &CovModel) -> Result<CheckReport> {
    let s_ieo = ieo_theta_cov(cov);
    let iinv = spd_inverse(&cov.fisher, "Fisher information")?;
    let p = range_projector(&cov.h_theta, PINV_TOL);
    let diff = symmetrize(&(&p * (s_ieo - iinv) * &p));
    let worst = min_eigenvalue(&diff);
    Ok(CheckReport { name: "cramer-rao".into(), trials: 1, failures: usize::from(worst < -1e-7), worst })
}

// ------------------------------------------------------------ matrix lemmas

fn gaussian_mat(rng: &mut RngStream, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.std_normal())
}

fn random_spd(rng: &mut RngStream, p: usize) -> Mat {
    let b = gaussian_mat(rng, p, p);
    &b * b.transpose() + Mat::identity(p, p) * 0.1
}

fn random_psd(rng: &mut RngStream, p: usize) -> Mat {
    let r = 1 + (rng.next_u64() % p as u64) as usize;
    let b = gaussian_mat(rng, p, r);
    &b * b.transpose()
}

fn random_projection(rng: &mut RngStream, p: usize, rank: usize) -> Mat {
    if rank == 0 {
        return Mat::zeros(p, p);
    }
    let b = gaussian_mat(rng, p, rank);
    range_projector(&(&b * b.transpose()), 1e-12)
}

/// M_λ = Q₃(Q₃ᵀQ₁Q₃ + λI)⁻¹Q₃ᵀ
pub fn ridge_map(q1: &Mat, q3: &Mat, lambda: f64) -> Result<Mat> {
    let inner = q3.transpose() * q1 * q3 + Mat::identity(q3.ncols(), q3.ncols()) * lambda;
    let inv = inner
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Q₃ᵀQ₁Q₃ + λI".into()))?;
    Ok(q3 * inv * q3.transpose())
}

/// min eig of Q₁⁻¹Q₂Q₁⁻¹ − M_λQ₂M_λ for one instance.
pub fn lemma2_slack(q1: &Mat, q2: &Mat, q3: &Mat, lambda: f64) -> Result<f64> {
    let q1i = q1.clone().try_inverse().ok_or_else(|| Error::Singular("Q₁".into()))?;
    let m = ridge_map(q1, q3, lambda)?;
    Ok(min_eigenvalue(&symmetrize(&(&q1i * q2 * &q1i - &m * q2 * &m))))
}

/// Projected version: Q₀(Q₀Q₁Q₀)†Q₂(Q₀Q₁Q₀)†Q₀ − Q₀M_λQ₂M_λQ₀ with M_λ built from Q₀Q₁Q₀.
pub fn lemma3_slack(q0: &Mat, q1: &Mat, q2: &Mat, q3: &Mat, lambda: f64) -> Result<f64> {
    let k = symmetrize(&(q0 * q1 * q0));
    let kp = pinv(&k, PINV_TOL);
    let m = ridge_map(&k, q3, lambda)?;
    let lhs = q0 * &m * q2 * &m * q0;
    let rhs = q0 * &kp * q2 * &kp * q0;
    Ok(min_eigenvalue(&symmetrize(&(rhs - lhs))))
}

fn report(name: &str, slacks: Vec<f64>) -> CheckReport {
    let failures = slacks.iter().filter(|s| **s < -1e-8).count();
    let worst = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    CheckReport { name: name.into(), trials: slacks.len(), failures, worst }
}

/// Randomized check of the ridge-map inequality with generic PSD Q₂ (the
/// statement as published): SPD Q₁, PSD Q₂ of random rank, Gaussian Q₃.
pub fn check_lemma2(rng: &mut RngStream, p: usize, q: usize, lambda: f64, trials: usize) -> Result<CheckReport> {
    let mut s = Vec::with_capacity(trials);
    for _ in 0..trials {
        let q1 = random_spd(rng, p);
        let q2 = random_psd(rng, p);
        let q3 = gaussian_mat(rng, p, q);
        s.push(lemma2_slack(&q1, &q2, &q3, lambda)?);
    }
    Ok(report(&format!("lemma2 λ={lambda}"), s))
}

/// The special case Q₂ = Q₁, which is what the dominance argument uses:
/// M_λQ₁M_λ ⪯ Q₁⁻¹.
pub fn check_lemma2_sandwich(rng: &mut RngStream, p: usize, q: usize, lambda: f64, trials: usize) -> Result<CheckReport> {
    let mut s = Vec::with_capacity(trials);
    for _ in 0..trials {
        let q1 = random_spd(rng, p);
        let q3 = gaussian_mat(rng, p, q);
        s.push(lemma2_slack(&q1, &q1, &q3, lambda)?);
    }
    Ok(report(&format!("lemma2 Q2=Q1 λ={lambda}"), s))
}

/// Published projected statement with Q₃ = Q₀B so that Q₃ᵀQ₀Q₁Q₀Q₃ ≻ 0.
pub fn check_lemma3(rng: &mut RngStream, p: usize, q: usize, lambda: f64, trials: usize) -> Result<CheckReport> {
    let mut s = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (q0, q1, q3) = lemma3_instance(rng, p, q);
        let q2 = random_psd(rng, p);
        s.push(lemma3_slack(&q0, &q1, &q2, &q3, lambda)?);
    }
    Ok(report(&format!("lemma3 λ={lambda}"), s))
}

pub fn check_lemma3_sandwich(rng: &mut RngStream, p: usize, q: usize, lambda: f64, trials: usize) -> Result<CheckReport> {
    let mut s = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (q0, q1, q3) = lemma3_instance(rng, p, q);
        let q2 = &q0 * &q1 * &q0;
        s.push(lemma3_slack(&q0, &q1, &q2, &q3, lambda)?);
    }
    Ok(report(&format!("lemma3 Q2=Q0Q1Q0 λ={lambda}"), s))
}

fn lemma3_instance(rng: &mut RngStream, p: usize, q: usize) -> (Mat, Mat, Mat) {
    // rank(Q₀) ≥ q keeps Q₃ᵀQ₀Q₁Q₀Q₃ invertible
    let rank = q + (rng.next_u64() % (p - q + 1) as u64) as usize;
    let q0 = random_projection(rng, p, rank);
    let q1 = random_spd(rng, p);
    let q3 = &q0 * gaussian_mat(rng, p, q);
    (q0, q1, q3)
}

// ------------------------------------------------------------ dominance

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdVerdict {
    /// X ⪯_st Y
    XDominated,
    /// Y ⪯_st X
    YDominated,
    Indistinguishable,
    Violated,
}

impl fmt::Display for SdVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdVerdict::XDominated => "X_dominated",
            SdVerdict::YDominated => "Y_dominated",
            SdVerdict::Indistinguishable => "indistinguishable",
            SdVerdict::Violated => "violated",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdResult {
    pub verdict: SdVerdict,
    pub min_delta: f64,
    pub max_delta: f64,
    pub delta: f64,
}

fn ecdf(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|v| *v <= t) as f64 / sorted.len() as f64
}

pub fn dkw_band(m: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * m as f64)).sqrt()
}

/// Empirical first-order dominance test on Δ(t) = F̂_X(t) − F̂_Y(t) over a merged-quantile grid;
/// X ⪯_st Y means F_X ≥ F_Y everywhere, i.e. Δ ≥ 0.
pub fn sd_test(xs: &[f64], ys: &[f64], grid_size: usize, alpha: f64) -> Result<SdResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Domain("sd_test needs nonempty samples".into()));
    }
    let mut x = xs.to_vec();
    let mut y = ys.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = x.iter().chain(&y).cloned().collect();
    merged.sort_by(f64::total_cmp);
    let g = grid_size.max(1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 1..=g {
        let idx = ((k as f64 / (g + 1) as f64) * (merged.len() - 1) as f64).round() as usize;
        let t = merged[idx];
        let d = ecdf(&x, t) - ecdf(&y, t);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let delta = dkw_band(x.len(), alpha) + dkw_band(y.len(), alpha);
    let verdict = match (lo >= -delta, hi <= delta) {
        (true, true) => SdVerdict::Indistinguishable,
        (true, false) => SdVerdict::XDominated,
        (false, true) => SdVerdict::YDominated,
        (false, false) => SdVerdict::Violated,
    };
    Ok(SdResult { verdict, min_delta: lo, max_delta: hi, delta })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    d
}

/// Draw Y₁ ~ N(0,Q₁), Y₂ ~ N(0,Q₂) and test Y₁ᵀQ₃Y₁ ⪯_st Y₂ᵀQ₃Y₂.
pub fn check_lemma1_sd(rng: &mut RngStream, q1: &Mat, q2: &Mat, q3: &Mat, m: usize, alpha: f64) -> Result<SdResult> {
    if min_eigenvalue(&symmetrize(&(q2 - q1))) < -1e-10 {
        return Err(Error::Domain("Gaussian dominance check needs Q1 ⪯ Q2".into()));
    }
    let (r1, r2) = (sqrt_psd(q1)?, sqrt_psd(q2)?);
    let p = q1.nrows();
    let draw = |rng: &mut RngStream, r: &Mat| -> Vec<f64> {
        (0..m)
            .map(|_| {
                let y = r * Vector::from_iterator(p, (0..p).map(|_| rng.std_normal()));
                (y.transpose() * q3 * &y)[(0, 0)]
            })
            .collect()
    };
    let a = draw(rng, &r1);
    let b = draw(rng, &r2);
    sd_test(&a, &b, 512, alpha)
}

/// Repeated randomized Lemma-1 trials; a trial fails when dominance is violated or reversed.
pub fn check_lemma1_trials(rng: &mut RngStream, p: usize, trials: usize, m: usize, alpha: f64) -> Result<CheckReport> {
    let mut slacks = Vec::with_capacity(trials);
    let mut failures = 0;
    for _ in 0..trials {
        let q1 = random_psd(rng, p);
        let q2 = &q1 + random_psd(rng, p);
        let q3 = random_psd(rng, p);
        let r = check_lemma1_sd(rng, &q1, &q2, &q3, m, alpha)?;
        if matches!(r.verdict, SdVerdict::Violated | SdVerdict::YDominated) {
            failures += 1;
        }
        slacks.push(r.min_delta + r.delta);
    }
    let worst = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CheckReport { name: "lemma1 dominance".into(), trials, failures, worst })
}

// ------------------------------------------------------------ misspecification

#[derive(Clone, Debug, PartialEq)]
pub struct MisspecLimits {
    pub theta_star: Vec<f64>,
    pub theta_kl: Vec<f64>,
    pub kappa_ieo: f64,
    pub kappa_eto: f64,
}

/// Population limits of ETO (θ_KL) and IEO (θ*) regrets when `family` need not contain `truth`.
pub fn misspec_limits(problem: &Problem, family: &Family, truth: &GroundTruth) -> Result<MisspecLimits> {
    let regret_at = |t: &[f64]| -> Result<f64> { truth.regret(&oracle(problem, family, t)?) };
    let theta_kl: Vec<f64> = match (family, truth) {
        (Family::ScaledMean(f), GroundTruth::Newsvendor { mu, .. }) => {
            // argmax E log p_θ = weighted least squares of the true means
            let (mut num, mut den) = (0.0, 0.0);
            for (j, (s, m)) in f.sigmas.iter().zip(mu).enumerate() {
                let jj = (j + 1) as f64;
                num += jj * m / (s * s);
                den += jj * jj / (s * s);
            }
            vec![num / den]
        }
        (Family::LinearGaussian(_), GroundTruth::Contextual { theta, .. }) => theta.clone(),
        (Family::MeanVec(_), GroundTruth::Portfolio { theta, .. }) => theta.clone(),
        _ => return Err(Error::Unsupported(format!("misspecification limits for {family:?}"))),
    };
    let kappa_eto = regret_at(&theta_kl)?;
    let (theta_star, kappa_ieo) = if theta_kl.len() == 1 {
        let f = |t: f64| regret_at(&[t]).unwrap_or(f64::INFINITY);
        let mut half = 2.0;
        let mut found = None;
        for _ in 0..6 {
            let (a, b) = (theta_kl[0] - half, theta_kl[0] + half);
            let t = golden_refine(&f, a, b, 1e-10);
            let edge = 1e-6 * half;
            if t - a > edge && b - t > edge {
                found = Some(t);
                break;
            }
            half *= 2.0;
        }
        let t = found.ok_or_else(|| Error::Solver("population IEO objective has no interior minimum".into()))?;
        (vec![t], f(t))
    } else {
        let f = |t: &[f64]| regret_at(t).unwrap_or(f64::INFINITY);
        let mut best = (theta_kl.clone(), kappa_eto);
        for s in [1.0, 0.3, 3.0] {
            let scale = vec![s; theta_kl.len()];
            let (x, fx) = nelder_mead(&f, &best.0.clone(), &scale, 1e-10, 10_000)?;
            if fx < best.1 {
                best = (x, fx);
            }
        }
        best
    };
    if kappa_ieo > kappa_eto + 1e-8 || kappa_ieo < -1e-8 {
        return Err(Error::Verification(format!("κ ordering broken: κ_ETO={kappa_eto}, κ_IEO={kappa_ieo}")));
    }
    Ok(MisspecLimits { theta_star, theta_kl, kappa_ieo, kappa_eto })
}
