//! Parametric families P_θ: sampling, log-likelihood, MLE and Fisher information.

use nalgebra::{DMatrix, DVector};

use crate::error::check_dim;
use crate::linalg::Mat;
use crate::optim::{lp_solve, Bound, LpProblem, LpStatus};
use crate::stats::RngStream;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Product j (1-based) ~ N(j·θ, σ_j²).
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMeanGaussian {
    pub sigmas: Vec<f64>,
}

/// z | x ~ N((1,xᵀ)θ, σ²).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussian {
    pub feature_dim: usize,
    pub sigma: f64,
}

/// Independent assets, asset j ~ N(θ_j, σ_j²).
#[derive(Clone, Debug, PartialEq)]
pub struct MeanVecGaussian {
    pub sigmas: Vec<f64>,
}

/// z | x ~ Uniform(0, (1,xᵀ)θ).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearUniform {
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    ScaledMean(ScaledMeanGaussian),
    LinearGaussian(LinearGaussian),
    MeanVec(MeanVecGaussian),
    LinearUniform(LinearUniform),
}

/// Feature law for contextual families. Only the unit cube is used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureLaw {
    UnitCube(usize),
}

/// n i.i.d. records stored row-major: `z` has `n·dz` entries, `x` has `n·dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    dz: usize,
    dx: usize,
    z: Vec<f64>,
    x: Vec<f64>,
}

impl Dataset {
    pub fn new(dz: usize, dx: usize, z: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if dz == 0 || z.is_empty() || z.len() % dz != 0 {
            return Err(Error::Domain("dataset needs at least one record".into()));
        }
        let n = z.len() / dz;
        check_dim(n * dx, x.len())?;
        Ok(Self { n, dz, dx, z, x })
    }

    /// Plain (featureless) dataset from records.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dz = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut z = Vec::with_capacity(rows.len() * dz);
        for r in rows {
            check_dim(dz, r.len())?;
            z.extend_from_slice(r);
        }
        Self::new(dz, 0, z, vec![])
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dz(&self) -> usize {
        self.dz
    }
    pub fn dx(&self) -> usize {
        self.dx
    }
    pub fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.dz..(i + 1) * self.dz]
    }
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dx..(i + 1) * self.dx]
    }
    /// Column j of the responses.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.z[i * self.dz + j]).collect()
    }
    pub fn has_features(&self) -> bool {
        self.dx > 0
    }
}

/// (1, xᵀ)θ
pub fn affine(theta: &[f64], x: &[f64]) -> f64 {
    theta[0] + theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>()
}

impl Family {
    pub fn param_dim(&self) -> usize {
        match self {
            Family::ScaledMean(_) => 1,
            Family::LinearGaussian(f) => f.feature_dim + 1,
            Family::MeanVec(f) => f.sigmas.len(),
            Family::LinearUniform(f) => f.feature_dim + 1,
        }
    }

    pub fn response_dim(&self) -> usize {
        match self {
            Family::ScaledMean(f) => f.sigmas.len(),
            Family::MeanVec(f) => f.sigmas.len(),
            _ => 1,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Family::LinearGaussian(f) => f.feature_dim,
            Family::LinearUniform(f) => f.feature_dim,
            _ => 0,
        }
    }

    fn validate(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.param_dim(), theta.len())?;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        let bad_sigma = match self {
            Family::ScaledMean(f) => f.sigmas.iter().any(|s| !(*s > 0.0)),
            Family::MeanVec(f) => f.sigmas.iter().any(|s| !(*s > 0.0)),
            Family::LinearGaussian(f) => !(f.sigma > 0.0),
            Family::LinearUniform(_) => false,
        };
        if bad_sigma {
            return Err(Error::Domain("standard deviations must be positive".into()));
        }
        if let Family::LinearUniform(f) = self {
            if !uniform_support_positive(theta, f.feature_dim) {
                return Err(Error::Domain("uniform upper bound must be positive on [0,1]^d".into()));
            }
        }
        Ok(())
    }

    pub fn sample_dataset(
        &self,
        theta: &[f64],
        n: usize,
        rng: &mut RngStream,
        features: Option<FeatureLaw>,
    ) -> Result<Dataset> {
        self.validate(theta)?;
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        let dx = self.feature_dim();
        let dz = self.response_dim();
        if dx > 0 && features.is_none() {
            return Err(Error::Domain("contextual family needs a feature law".into()));
        }
        let mut z = Vec::with_capacity(n * dz);
        let mut x = Vec::with_capacity(n * dx);
        for _ in 0..n {
            if let Some(FeatureLaw::UnitCube(d)) = features {
                check_dim(dx, d)?;
                for _ in 0..d {
                    x.push(rng.unit());
                }
            }
            let xi = &x[x.len() - dx..];
            match self {
                Family::ScaledMean(f) => {
                    for (j, s) in f.sigmas.iter().enumerate() {
                        z.push((j + 1) as f64 * theta[0] + s * rng.std_normal());
                    }
                }
                Family::MeanVec(f) => {
                    for (t, s) in theta.iter().zip(&f.sigmas) {
                        z.push(t + s * rng.std_normal());
                    }
                }
                Family::LinearGaussian(f) => z.push(affine(theta, xi) + f.sigma * rng.std_normal()),
                Family::LinearUniform(_) => {
                    let u = affine(theta, xi);
                    z.push(u * rng.unit());
                }
            }
        }
        Dataset::new(dz, dx, z, x)
    }

    /// Full log-likelihood (normalizing constants kept). The uniform family
    /// returns −∞ when some z_i exceeds its upper bound.
    pub fn loglik(&self, theta: &[f64], data: &Dataset) -> Result<f64> {
        check_dim(self.param_dim(), theta.len())?;
        check_dim(self.response_dim(), data.dz())?;
        check_dim(self.feature_dim(), data.dx())?;
        let n = data.n();
        let ll = match self {
            Family::ScaledMean(f) => {
                let mut s = 0.0;
                for i in 0..n {
                    for (j, (zij, sj)) in data.z(i).iter().zip(&f.sigmas).enumerate() {
                        let r = (zij - (j + 1) as f64 * theta[0]) / sj;
                        s -= 0.5 * (LN_2PI + r * r) + sj.ln();
                    }
                }
                s
            }
            Family::MeanVec(f) => {
                let mut s = 0.0;
                for i in 0..n {
                    for ((zij, sj), t) in data.z(i).iter().zip(&f.sigmas).zip(theta) {
                        let r = (zij - t) / sj;
                        s -= 0.5 * (LN_2PI + r * r) + sj.ln();
                    }
                }
                s
            }
            Family::LinearGaussian(f) => {
                let mut s = 0.0;
                for i in 0..n {
                    let r = (data.z(i)[0] - affine(theta, data.x(i))) / f.sigma;
                    s -= 0.5 * (LN_2PI + r * r) + f.sigma.ln();
                }
                s
            }
            Family::LinearUniform(_) => {
                let mut s = 0.0;
                for i in 0..n {
                    let u = affine(theta, data.x(i));
                    let zi = data.z(i)[0];
                    if !(u > 0.0) || zi > u {
                        return Ok(f64::NEG_INFINITY);
                    }
                    s -= u.ln();
                }
                s
            }
        };
        Ok(ll)
    }

    pub fn mle(&self, data: &Dataset) -> Result<Vec<f64>> {
        check_dim(self.response_dim(), data.dz())?;
        check_dim(self.feature_dim(), data.dx())?;
        match self {
            Family::ScaledMean(f) => {
                // d/dθ loglik = Σ_j (j/σ_j²) Σ_i (z_ij − jθ) = 0
                let mut num = 0.0;
                let mut den = 0.0;
                for (j, s) in f.sigmas.iter().enumerate() {
                    let jj = (j + 1) as f64;
                    let w = jj / (s * s);
                    let col_sum: f64 = (0..data.n()).map(|i| data.z(i)[j]).sum();
                    num += w * col_sum;
                    den += w * jj * data.n() as f64;
                }
                Ok(vec![num / den])
            }
            Family::MeanVec(f) => {
                let n = data.n() as f64;
                Ok((0..f.sigmas.len()).map(|j| data.column(j).iter().sum::<f64>() / n).collect())
            }
            Family::LinearGaussian(_) => least_squares(data),
            Family::LinearUniform(f) => uniform_mle(self, f.feature_dim, data),
        }
    }

    /// Per-sample Fisher information at θ.
    pub fn fisher_info(&self, theta: &[f64]) -> Result<Mat> {
        self.validate(theta)?;
        match self {
            Family::ScaledMean(f) => {
                let v: f64 = f.sigmas.iter().enumerate().map(|(j, s)| ((j + 1) as f64).powi(2) / (s * s)).sum();
                Ok(Mat::from_element(1, 1, v))
            }
            Family::MeanVec(f) => {
                Ok(Mat::from_diagonal(&DVector::from_iterator(f.sigmas.len(), f.sigmas.iter().map(|s| 1.0 / (s * s)))))
            }
            Family::LinearGaussian(f) => Ok(feature_moment(f.feature_dim) / (f.sigma * f.sigma)),
            Family::LinearUniform(_) => {
                Err(Error::Unsupported("uniform family has no differentiable density in θ".into()))
            }
        }
    }
}

/// E_x[(1,xᵀ)ᵀ(1,xᵀ)] for x ~ Uniform([0,1]^d), by tensor Gauss–Legendre
/// quadrature (3 nodes per axis integrate the quadratic integrand exactly).
pub fn feature_moment(d: usize) -> Mat {
    let s = (0.6f64).sqrt();
    let nodes = [0.5 * (1.0 - s), 0.5, 0.5 * (1.0 + s)];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let k = d + 1;
    let mut m = Mat::zeros(k, k);
    let total = 3usize.pow(d as u32);
    let mut a = vec![1.0; k];
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for t in 0..d {
            let c = rem % 3;
            rem /= 3;
            a[t + 1] = nodes[c];
            w *= weights[c];
        }
        for r in 0..k {
            for c in 0..k {
                m[(r, c)] += w * a[r] * a[c];
            }
        }
    }
    m
}

/// Corners of [0,1]^d.
pub fn cube_corners(d: usize) -> Vec<Vec<f64>> {
    (0..(1usize << d))
        .map(|mask| (0..d).map(|t| if mask >> t & 1 == 1 { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn uniform_support_positive(theta: &[f64], d: usize) -> bool {
    cube_corners(d).iter().all(|c| affine(theta, c) > 0.0)
}

fn design(data: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.n();
    let k = data.dx() + 1;
    let x = DMatrix::from_fn(n, k, |i, c| if c == 0 { 1.0 } else { data.x(i)[c - 1] });
    let z = DVector::from_fn(n, |i, _| data.z(i)[0]);
    (x, z)
}

/// Least squares via normal equations; ridge 1e−10 fallback on rank deficiency.
pub fn least_squares(data: &Dataset) -> Result<Vec<f64>> {
    let (x, z) = design(data);
    let xtx = x.transpose() * &x;
    let xtz = x.transpose() * z;
    if let Some(ch) = xtx.clone().cholesky() {
        let sol = ch.solve(&xtz);
        // guard against numerically rank-deficient designs slipping through
        if sol.iter().all(|v| v.is_finite()) && min_pivot_ok(&xtx) {
            return Ok(sol.iter().copied().collect());
        }
    }
    let k = xtx.nrows();
    let ridge = &xtx + DMatrix::identity(k, k) * 1e-10;
    let sol = ridge
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("normal equations rank deficient (k={k})")))?
        .solve(&xtz);
    Ok(sol.iter().copied().collect())
}

fn min_pivot_ok(a: &Mat) -> bool {
    let lmin = crate::linalg::min_eigenvalue(a);
    lmin > 1e-12 * a.amax().max(1e-300)
}

fn uniform_mle(family: &Family, d: usize, data: &Dataset) -> Result<Vec<f64>> {
    let n = data.n();
    // lift the intercept until every observation sits inside its support,
    // with a few ulps of slack so rounding cannot push a point back out
    let zmax = (0..n).map(|i| data.z(i)[0].abs()).fold(1.0f64, f64::max);
    let lift_in = |th: &mut Vec<f64>| {
        let gap = (0..n).map(|i| data.z(i)[0] - affine(th, data.x(i))).fold(f64::NEG_INFINITY, f64::max);
        if gap > 0.0 {
            th[0] += gap + 8.0 * f64::EPSILON * zmax;
        }
    };
    let mut base = least_squares(data)?;
    lift_in(&mut base);
    let corner_min = cube_corners(d).iter().map(|c| affine(&base, c)).fold(f64::INFINITY, f64::min);
    if corner_min <= 1e-9 {
        base[0] += 1e-6 - corner_min;
    }
    let objective = |th: &[f64]| -> f64 {
        if !uniform_support_positive(th, d) {
            return f64::INFINITY;
        }
        match family.loglik(th, data) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    // −loglik = Σ log aᵢᵀθ is concave on the feasible polyhedron, so successive
    // linearization descends monotonically to a vertex
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| std::iter::once(1.0).chain(data.x(i).iter().copied()).collect())
        .collect();
    let corners: Vec<Vec<f64>> =
        cube_corners(d).into_iter().map(|c| std::iter::once(1.0).chain(c).collect()).collect();
    let mut theta = base;
    let mut f = objective(&theta);
    if !f.is_finite() {
        return Err(Error::Solver("uniform MLE found no feasible start".into()));
    }
    for _ in 0..200 {
        let mut g = vec![0.0; d + 1];
        for r in &rows {
            let s = dot(r, &theta);
            for (gj, rj) in g.iter_mut().zip(r) {
                *gj += rj / s;
            }
        }
        let mut lp = LpProblem::new(g);
        for j in 0..=d {
            lp.bound(j, Bound::Free);
        }
        for (i, r) in rows.iter().enumerate() {
            lp.ge(r.clone(), data.z(i)[0]);
        }
        for c in &corners {
            lp.ge(c.clone(), 1e-9);
        }
        let sol = lp_solve(&lp, 10_000);
        if sol.status != LpStatus::Optimal {
            break;
        }
        let mut next = sol.x;
        lift_in(&mut next);
        let fn_ = objective(&next);
        if !(fn_ < f - 1e-12 * f.abs().max(1.0)) {
            break;
        }
        theta = next;
        f = fn_;
    }
    Ok(theta)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
