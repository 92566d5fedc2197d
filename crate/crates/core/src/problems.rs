//! Cost functions, ground-truth expected costs, oracle decisions and regret.

use crate::error::check_dim;
use crate::models::affine;
use crate::optim::water_filling_simplex;
use crate::stats::{norm_cdf, norm_pdf, norm_quantile, norm_sf};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NewsvendorSpec {
    pub h: Vec<f64>,
    pub b: Vec<f64>,
    pub capacity: Option<f64>,
}

impl NewsvendorSpec {
    pub fn uniform_costs(p: usize, h: f64, b: f64, capacity: Option<f64>) -> Result<Self> {
        let s = Self { h: vec![h; p], b: vec![b; p], capacity };
        s.validate()?;
        Ok(s)
    }

    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.h.len(), self.b.len())?;
        if self.h.is_empty() || self.h.iter().chain(&self.b).any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("newsvendor costs must be positive".into()));
        }
        if let Some(c) = self.capacity {
            if !(c > 0.0) {
                return Err(Error::Domain("capacity must be positive".into()));
            }
        }
        Ok(())
    }

    /// Critical ratio b_j/(b_j+h_j).
    pub fn fractile(&self, j: usize) -> f64 {
        self.b[j] / (self.b[j] + self.h[j])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextualSpec {
    pub h: f64,
    pub b: f64,
    pub feature_dim: usize,
}

impl ContextualSpec {
    pub fn fractile(&self) -> f64 {
        self.b / (self.b + self.h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioSpec {
    pub assets: usize,
    pub alpha: f64,
}

/// A decision vector: order quantities, affine policy coefficients, or
/// portfolio weights followed by the auxiliary coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub w: Vec<f64>,
}

impl From<Vec<f64>> for Decision {
    fn from(w: Vec<f64>) -> Self {
        Self { w }
    }
}

pub fn nv_cost(spec: &NewsvendorSpec, w: &[f64], z: &[f64]) -> Result<f64> {
    check_dim(spec.p(), w.len())?;
    check_dim(spec.p(), z.len())?;
    Ok(nv_cost_unchecked(spec, w, z))
}

#[inline]
pub(crate) fn nv_cost_unchecked(spec: &NewsvendorSpec, w: &[f64], z: &[f64]) -> f64 {
    let mut c = 0.0;
    for j in 0..w.len() {
        let d = w[j] - z[j];
        c += if d > 0.0 { spec.h[j] * d } else { -spec.b[j] * d };
    }
    c
}

/// Expected single-product cost under N(μ, σ²):
/// σ[(h+b)(φ(d)+dΦ(d)) − b d], d = (w−μ)/σ.
pub fn nv_expected_cost_1d(h: f64, b: f64, w: f64, mu: f64, sigma: f64) -> f64 {
    let d = (w - mu) / sigma;
    sigma * ((h + b) * (norm_pdf(d) + d * norm_cdf(d)) - b * d)
}

pub fn nv_expected_cost(spec: &NewsvendorSpec, w: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    check_dim(spec.p(), w.len())?;
    check_dim(spec.p(), mu.len())?;
    check_dim(spec.p(), sigma.len())?;
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    Ok((0..spec.p()).map(|j| nv_expected_cost_1d(spec.h[j], spec.b[j], w[j], mu[j], sigma[j])).sum())
}

/// Unconstrained fractile decision for independent normal marginals.
pub fn nv_normal_fractile(spec: &NewsvendorSpec, mu: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    (0..spec.p()).map(|j| Ok(mu[j] + sigma[j] * norm_quantile(spec.fractile(j))?)).collect()
}

/// Oracle decision of the scaled-mean family: w_j = jθ + σ_j Φ⁻¹(b_j/(b_j+h_j)).
pub fn nv_oracle_decision(sigmas: &[f64], theta: f64, spec: &NewsvendorSpec) -> Result<Decision> {
    check_dim(spec.p(), sigmas.len())?;
    if spec.capacity.is_some() {
        return Err(Error::Domain("use the constrained oracle when a capacity is present".into()));
    }
    let mu = scaled_means(spec.p(), theta);
    Ok(nv_normal_fractile(spec, &mu, sigmas)?.into())
}

pub fn scaled_means(p: usize, theta: f64) -> Vec<f64> {
    (1..=p).map(|j| j as f64 * theta).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedOracle {
    pub decision: Decision,
    /// r ∈ [−b, 0]; the capacity multiplier is −r.
    pub r: f64,
    pub binding: bool,
}

/// Capacity-constrained oracle for independent normal marginals by bisection
/// on r ∈ [−b, 0] with w_j = F_j⁻¹((r+b_j)/(h_j+b_j)) clipped at 0. With equal
/// costs all products share one level, so the search runs on its z-score instead.
pub fn nv_constrained_normal(
    spec: &NewsvendorSpec,
    mu: &[f64],
    sigma: &[f64],
    eps: f64,
) -> Result<ConstrainedOracle> {
    check_dim(spec.p(), mu.len())?;
    check_dim(spec.p(), sigma.len())?;
    if !(eps > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let cap = spec.capacity.ok_or_else(|| Error::Domain("constrained oracle needs a capacity".into()))?;
    let at = |r: f64| -> Vec<f64> {
        (0..spec.p())
            .map(|j| {
                let level = (r + spec.b[j]) / (spec.h[j] + spec.b[j]);
                let f0 = norm_cdf(-mu[j] / sigma[j]);
                if level <= f0 || level <= 0.0 {
                    0.0
                } else if level >= 1.0 {
                    f64::INFINITY
                } else {
                    mu[j] + sigma[j] * norm_quantile(level).unwrap_or(0.0)
                }
            })
            .collect()
    };
    let free = at(0.0);
    if free.iter().sum::<f64>() <= cap {
        return Ok(ConstrainedOracle { decision: free.into(), r: 0.0, binding: false });
    }
    let uniform = (1..spec.p()).all(|j| spec.h[j] == spec.h[0] && spec.b[j] == spec.b[0]);
    if uniform {
        // common z-score: w_j = max(μ_j + σ_j z, 0); resolves levels far below double precision in r
        let (h, b) = (spec.h[0], spec.b[0]);
        let at_z = |z: f64| -> Vec<f64> { mu.iter().zip(sigma).map(|(m, s)| (m + s * z).max(0.0)).collect() };
        let mut lo = mu.iter().zip(sigma).map(|(m, s)| -m / s).fold(f64::INFINITY, f64::min).min(0.0) - 1.0;
        let mut hi = norm_quantile(spec.fractile(0))?;
        for _ in 0..500 {
            if hi - lo <= eps {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let s: f64 = at_z(mid).iter().sum();
            if s > cap {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r = (h + b) * norm_cdf(lo) - b;
        return Ok(ConstrainedOracle { decision: at_z(lo).into(), r, binding: true });
    }
    let bmax = spec.b.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (-bmax, 0.0);
    for _ in 0..500 {
        if hi - lo <= eps {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let w = at(mid);
        let s: f64 = w.iter().sum();
        if (s - cap).abs() <= 1e-13 * cap.abs().max(1.0) {
            return Ok(ConstrainedOracle { decision: w.into(), r: mid, binding: true });
        }
        if s > cap {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // end on the feasible side
    let r = lo;
    Ok(ConstrainedOracle { decision: at(r).into(), r, binding: true })
}

/// Algorithm-1 oracle for the scaled-mean family.
pub fn nv_constrained_oracle(sigmas: &[f64], theta: f64, spec: &NewsvendorSpec, eps: f64) -> Result<ConstrainedOracle> {
    check_dim(spec.p(), sigmas.len())?;
    nv_constrained_normal(spec, &scaled_means(spec.p(), theta), sigmas, eps)
}

/// Gaussian contextual oracle: w(x) = (1,xᵀ)θ + σΦ⁻¹(b/(b+h)).
pub fn ctx_oracle_decision(theta: &[f64], sigma: f64, x: &[f64], spec: &ContextualSpec) -> Result<f64> {
    check_dim(spec.feature_dim + 1, theta.len())?;
    check_dim(spec.feature_dim, x.len())?;
    Ok(affine(theta, x) + sigma * norm_quantile(spec.fractile())?)
}

/// Affine policy coefficients of the Gaussian oracle.
pub fn ctx_gaussian_policy(theta: &[f64], sigma: f64, spec: &ContextualSpec) -> Result<Vec<f64>> {
    let mut beta = theta.to_vec();
    beta[0] += sigma * norm_quantile(spec.fractile())?;
    Ok(beta)
}

/// Uniform(0, u) fractile: w = u·b/(b+h).
pub fn ctx_uniform_oracle(theta: &[f64], x: &[f64], spec: &ContextualSpec) -> Result<f64> {
    check_dim(spec.feature_dim + 1, theta.len())?;
    let u = affine(theta, x);
    if !(u > 0.0) {
        return Err(Error::Domain(format!("uniform upper bound {u} must be positive")));
    }
    Ok(spec.fractile() * u)
}

pub fn ctx_uniform_policy(theta: &[f64], spec: &ContextualSpec) -> Vec<f64> {
    theta.iter().map(|t| t * spec.fractile()).collect()
}

/// c(ω, z) = α(ωᵀ(z,−1))² − ωᵀ(z,0), ω = (risky weights, auxiliary).
pub fn portfolio_cost(spec: &PortfolioSpec, w: &[f64], z: &[f64]) -> Result<f64> {
    check_dim(spec.assets + 1, w.len())?;
    check_dim(spec.assets, z.len())?;
    let ret: f64 = w[..spec.assets].iter().zip(z).map(|(a, b)| a * b).sum();
    Ok(spec.alpha * (ret - w[spec.assets]).powi(2) - ret)
}

/// E c with the auxiliary coordinate at its optimum: αΣ(w_jσ_j)² − Σw_jθ_j.
pub fn portfolio_true_expected_cost(spec: &PortfolioSpec, w: &[f64], theta: &[f64], sig2: &[f64]) -> Result<f64> {
    check_dim(spec.assets, w.len())?;
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-6 || w.iter().any(|v| *v < -1e-6) {
        return Err(Error::Domain(format!("weights off the simplex (sum {s})")));
    }
    Ok(w.iter().zip(sig2).zip(theta).map(|((w, s), t)| spec.alpha * w * w * s - w * t).sum())
}

/// Oracle portfolio at means θ and (assumed) variances: water-filling weights plus auxiliary Σw_jθ_j.
pub fn portfolio_oracle_decision(theta: &[f64], sig2: &[f64], spec: &PortfolioSpec) -> Result<Decision> {
    check_dim(spec.assets, theta.len())?;
    check_dim(spec.assets, sig2.len())?;
    let (mut w, _) = water_filling_simplex(theta, sig2, spec.alpha);
    let aux = w.iter().zip(theta).map(|(a, b)| a * b).sum();
    w.push(aux);
    Ok(w.into())
}

/// Ground truth of a problem instance with cached optimum.
#[derive(Clone, Debug)]
pub enum GroundTruth {
    Newsvendor { spec: NewsvendorSpec, mu: Vec<f64>, sigma: Vec<f64>, w_star: Vec<f64>, v_star: f64 },
    Contextual { spec: ContextualSpec, theta: Vec<f64>, sigma: f64, policy_star: Vec<f64> },
    Portfolio { spec: PortfolioSpec, theta: Vec<f64>, sig2: Vec<f64>, w_star: Vec<f64>, v_star: f64 },
}

/// Midpoint grid per axis for contextual regret quadrature.
pub const CTX_GRID: usize = 101;

impl GroundTruth {
    pub fn newsvendor(spec: NewsvendorSpec, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let w_star = match spec.capacity {
            None => nv_normal_fractile(&spec, &mu, &sigma)?,
            Some(_) => nv_constrained_normal(&spec, &mu, &sigma, 1e-12)?.decision.w,
        };
        let v_star = nv_expected_cost(&spec, &w_star, &mu, &sigma)?;
        Ok(Self::Newsvendor { spec, mu, sigma, w_star, v_star })
    }

    pub fn contextual(spec: ContextualSpec, theta: Vec<f64>, sigma: f64) -> Result<Self> {
        let policy_star = ctx_gaussian_policy(&theta, sigma, &spec)?;
        Ok(Self::Contextual { spec, theta, sigma, policy_star })
    }

    pub fn portfolio(spec: PortfolioSpec, theta: Vec<f64>, sig2: Vec<f64>) -> Result<Self> {
        let d = portfolio_oracle_decision(&theta, &sig2, &spec)?;
        let w_star = d.w[..spec.assets].to_vec();
        let v_star = portfolio_true_expected_cost(&spec, &w_star, &theta, &sig2)?;
        Ok(Self::Portfolio { spec, theta, sig2, w_star, v_star })
    }

    /// Expected cost v₀ of a decision (contextual: average over x ∈ [0,1]^d).
    pub fn value(&self, w: &[f64]) -> Result<f64> {
        match self {
            GroundTruth::Newsvendor { spec, mu, sigma, .. } => nv_expected_cost(spec, w, mu, sigma),
            GroundTruth::Contextual { spec, theta, sigma, .. } => {
                check_dim(spec.feature_dim + 1, w.len())?;
                Ok(ctx_average(spec.feature_dim, |x| {
                    nv_expected_cost_1d(spec.h, spec.b, affine(w, x), affine(theta, x), *sigma)
                }))
            }
            GroundTruth::Portfolio { spec, theta, sig2, .. } => {
                let k = spec.assets;
                if w.len() != k && w.len() != k + 1 {
                    return Err(Error::Dim { expected: k + 1, got: w.len() });
                }
                portfolio_true_expected_cost(spec, &w[..k], theta, sig2)
            }
        }
    }

    pub fn optimal_value(&self) -> f64 {
        match self {
            GroundTruth::Newsvendor { v_star, .. } | GroundTruth::Portfolio { v_star, .. } => *v_star,
            GroundTruth::Contextual { policy_star, .. } => self.value(policy_star).unwrap_or(f64::NAN),
        }
    }

    pub fn optimal_decision(&self) -> Vec<f64> {
        match self {
            GroundTruth::Newsvendor { w_star, .. } | GroundTruth::Portfolio { w_star, .. } => w_star.clone(),
            GroundTruth::Contextual { policy_star, .. } => policy_star.clone(),
        }
    }

    /// R(ω) = v₀(ω) − v₀(ω*), clamped at 0 within 1e−9.
    pub fn regret(&self, w: &[f64]) -> Result<f64> {
        let r = match self {
            GroundTruth::Contextual { spec, theta, sigma, policy_star } => {
                check_dim(spec.feature_dim + 1, w.len())?;
                // pointwise gaps are nonnegative; integrate them directly
                ctx_average(spec.feature_dim, |x| {
                    let m = affine(theta, x);
                    nv_expected_cost_1d(spec.h, spec.b, affine(w, x), m, *sigma)
                        - nv_expected_cost_1d(spec.h, spec.b, affine(policy_star, x), m, *sigma)
                })
            }
            _ => self.value(w)? - self.optimal_value(),
        };
        if r < -1e-9 {
            return Err(Error::Verification(format!("negative regret {r:.3e}")));
        }
        Ok(r.max(0.0))
    }
}

/// Average of g over [0,1]^d by a midpoint tensor grid with CTX_GRID points per axis.
pub fn ctx_average(d: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
    let k = CTX_GRID;
    let total = k.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for t in 0..d {
            x[t] = ((rem % k) as f64 + 0.5) / k as f64;
            rem /= k;
        }
        acc += g(&x);
    }
    acc / total as f64
}

/// Probability the product's demand falls below w (used by KKT checks).
pub fn normal_cdf_at(w: f64, mu: f64, sigma: f64) -> f64 {
    norm_cdf((w - mu) / sigma)
}

/// P(z > w)
pub fn normal_sf_at(w: f64, mu: f64, sigma: f64) -> f64 {
    norm_sf((w - mu) / sigma)
}
