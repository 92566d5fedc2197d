//! Monte Carlo experiment engine: replications over (n, rep), exact regret,
//! summaries, γ-sweeps and limit-law comparisons.

use std::fmt;

use rayon::prelude::*;

use crate::asymptotics::{compute_cov_model, ks_distance, limit_law};
use crate::estimators::{fit, FitOptions, Method, Problem};
use crate::models::{FeatureLaw, Family, LinearGaussian, LinearUniform, MeanVecGaussian, ScaledMeanGaussian};
use crate::problems::{ContextualSpec, GroundTruth, NewsvendorSpec, PortfolioSpec};
use crate::stats::{replication_stream, RngStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemId {
    Newsvendor,
    ConstrainedNewsvendor,
    ContextualNewsvendor,
    Portfolio,
}

impl ProblemId {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemId::Newsvendor => "newsvendor",
            ProblemId::ConstrainedNewsvendor => "constrained_newsvendor",
            ProblemId::ContextualNewsvendor => "contextual_newsvendor",
            ProblemId::Portfolio => "portfolio",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Newsvendor, Self::ConstrainedNewsvendor, Self::ContextualNewsvendor, Self::Portfolio]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

/// Which family the estimators assume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Setting {
    Well,
    Misspecified,
    /// N(jθ, γ + (1−γ)·max{6−j,1}); unconstrained newsvendor only.
    Gamma(f64),
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Well => f.write_str("well"),
            Setting::Misspecified => f.write_str("misspecified"),
            Setting::Gamma(g) => write!(f, "gamma={g}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemId,
    pub setting: Setting,
    /// Products (newsvendor) or assets (portfolio).
    pub p: usize,
    pub h: f64,
    pub b: f64,
    pub capacity: f64,
    pub alpha: f64,
    /// Ground-truth parameter; empty = problem default.
    pub theta0: Vec<f64>,
    /// Ground-truth noise standard deviation (newsvendor, contextual).
    pub sigma: f64,
    pub methods: Vec<Method>,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub c1: Vec<f64>,
    pub gammas: Vec<f64>,
    pub workers: usize,
    pub literal_grid: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemId::Newsvendor,
            setting: Setting::Well,
            p: 5,
            h: 1.0,
            b: 5.0,
            capacity: 40.0,
            alpha: 0.7,
            theta0: Vec::new(),
            sigma: 1.0,
            methods: Method::ALL.to_vec(),
            n_list: vec![10, 20, 30, 40, 50],
            replications: 50,
            master_seed: 0,
            c1: vec![0.5, 1.0, 1.5],
            gammas: Vec::new(),
            workers: 1,
            literal_grid: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.replications == 0 {
            errs.push("replications must be at least 1".to_string());
        }
        if self.n_list.is_empty() {
            errs.push("n_list must be nonempty".to_string());
        }
        if self.n_list.iter().any(|n| *n == 0) || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            errs.push("n_list must be strictly increasing positive integers".to_string());
        }
        if self.methods.is_empty() {
            errs.push("methods must be nonempty".to_string());
        }
        if self.problem == ProblemId::ContextualNewsvendor && self.methods.contains(&Method::Saa) {
            errs.push("SAA is not available for the contextual newsvendor".to_string());
        }
        if !(self.h > 0.0 && self.b > 0.0) {
            errs.push("h and b must be positive".to_string());
        }
        if !(self.alpha > 0.0) {
            errs.push("alpha must be positive".to_string());
        }
        if !(self.sigma > 0.0) {
            errs.push("sigma must be positive".to_string());
        }
        if self.p == 0 {
            errs.push("p must be at least 1".to_string());
        }
        if self.workers == 0 {
            errs.push("workers must be at least 1".to_string());
        }
        if let Setting::Gamma(g) = self.setting {
            if !(0.0..=1.0).contains(&g) {
                errs.push(format!("gamma {g} outside [0,1]"));
            }
            if self.problem != ProblemId::Newsvendor {
                errs.push("gamma setting applies to the unconstrained newsvendor only".to_string());
            }
        }
        for g in &self.gammas {
            if !(0.0..=1.0).contains(g) {
                errs.push(format!("gamma {g} outside [0,1]"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("\n")))
        }
    }

    pub fn with_setting(&self, setting: Setting) -> Self {
        Self { setting, ..self.clone() }
    }
}

/// Everything a replication needs, resolved from the config.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    pub truth_family: Family,
    pub truth_theta: Vec<f64>,
    pub assumed: Family,
    pub truth: GroundTruth,
    pub features: Option<FeatureLaw>,
}

fn wrong_variances(p: usize, gamma: f64) -> Vec<f64> {
    (1..=p).map(|j| (gamma + (1.0 - gamma) * (6.0 - j as f64).max(1.0)).sqrt()).collect()
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    cfg.validate()?;
    let default_theta = |d: Vec<f64>| if cfg.theta0.is_empty() { d } else { cfg.theta0.clone() };
    match cfg.problem {
        ProblemId::Newsvendor | ProblemId::ConstrainedNewsvendor => {
            let constrained = cfg.problem == ProblemId::ConstrainedNewsvendor;
            let spec = NewsvendorSpec::uniform_costs(cfg.p, cfg.h, cfg.b, constrained.then_some(cfg.capacity))?;
            let theta = default_theta(vec![3.0]);
            if theta.len() != 1 {
                return Err(Error::Config("newsvendor theta0 is a scalar".into()));
            }
            let sig = vec![cfg.sigma; cfg.p];
            let assumed_sig = match (cfg.setting, constrained) {
                (Setting::Well, _) => sig.clone(),
                (Setting::Misspecified, false) => wrong_variances(cfg.p, 0.0),
                (Setting::Misspecified, true) => (1..=cfg.p).map(|j| (1.0 + 0.9 * j as f64).sqrt()).collect(),
                (Setting::Gamma(g), _) => wrong_variances(cfg.p, g),
            };
            let mu = (1..=cfg.p).map(|j| j as f64 * theta[0]).collect();
            Ok(Instance {
                truth: GroundTruth::newsvendor(spec.clone(), mu, sig.clone())?,
                problem: Problem::Newsvendor(spec),
                truth_family: Family::ScaledMean(ScaledMeanGaussian { sigmas: sig }),
                truth_theta: theta,
                assumed: Family::ScaledMean(ScaledMeanGaussian { sigmas: assumed_sig }),
                features: None,
            })
        }
        ProblemId::ContextualNewsvendor => {
            let spec = ContextualSpec { h: cfg.h, b: cfg.b, feature_dim: 2 };
            let theta = default_theta(vec![2.0, 0.5, 0.5]);
            if theta.len() != 3 {
                return Err(Error::Config("contextual theta0 needs 3 entries".into()));
            }
            let truth_family = Family::LinearGaussian(LinearGaussian { feature_dim: 2, sigma: cfg.sigma });
            let assumed = match cfg.setting {
                Setting::Well => truth_family.clone(),
                Setting::Misspecified => Family::LinearUniform(LinearUniform { feature_dim: 2 }),
                Setting::Gamma(_) => return Err(Error::Config("gamma setting not defined for contextual".into())),
            };
            Ok(Instance {
                truth: GroundTruth::contextual(spec.clone(), theta.clone(), cfg.sigma)?,
                problem: Problem::Contextual(spec),
                truth_family,
                truth_theta: theta,
                assumed,
                features: Some(FeatureLaw::UnitCube(2)),
            })
        }
        ProblemId::Portfolio => {
            let m = cfg.p;
            let spec = PortfolioSpec { assets: m, alpha: cfg.alpha };
            let theta = default_theta((1..=m).map(|j| 9.0 + 3.0 * j as f64).collect());
            if theta.len() != m {
                return Err(Error::Config(format!("portfolio theta0 needs {m} entries")));
            }
            let sig2: Vec<f64> = (1..=m).map(|j| 3.0 * j as f64).collect();
            let assumed2: Vec<f64> = match cfg.setting {
                Setting::Well => sig2.clone(),
                Setting::Misspecified => (1..=m).map(|j| 3.0 * (m - j + 1) as f64).collect(),
                Setting::Gamma(_) => return Err(Error::Config("gamma setting not defined for portfolio".into())),
            };
            let sd = |v: &[f64]| v.iter().map(|x| x.sqrt()).collect::<Vec<_>>();
            Ok(Instance {
                truth: GroundTruth::portfolio(spec.clone(), theta.clone(), sig2.clone())?,
                problem: Problem::Portfolio(spec),
                truth_family: Family::MeanVec(MeanVecGaussian { sigmas: sd(&sig2) }),
                truth_theta: theta,
                assumed: Family::MeanVec(MeanVecGaussian { sigmas: sd(&assumed2) }),
                features: None,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretRow {
    pub problem: ProblemId,
    pub setting: Setting,
    pub method: Method,
    pub n: usize,
    pub rep: usize,
    pub regret: f64,
    pub n_regret: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegretTable {
    pub rows: Vec<RegretRow>,
}

impl RegretTable {
    /// Regrets (not scaled) of one method at one n, in replication order.
    pub fn regrets(&self, method: Method, n: usize) -> Vec<f64> {
        let mut v: Vec<(usize, f64)> =
            self.rows.iter().filter(|r| r.method == method && r.n == n).map(|r| (r.rep, r.regret)).collect();
        v.sort_by_key(|x| x.0);
        v.into_iter().map(|x| x.1).collect()
    }

    pub fn scaled(&self, method: Method, n: usize) -> Vec<f64> {
        self.regrets(method, n).into_iter().map(|r| r * n as f64).collect()
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn ns(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| (a.n, a.rep, a.method).cmp(&(b.n, b.rep, b.method)));
    }
}

/// One replication: sample, fit every method on the same data, score exactly.
fn replicate(cfg: &ExperimentConfig, inst: &Instance, n: usize, rep: usize) -> Result<Vec<RegretRow>> {
    let mut rng = RngStream::new(cfg.master_seed, replication_stream(n, rep));
    let data = inst.truth_family.sample_dataset(&inst.truth_theta, n, &mut rng, inst.features)?;
    let opts = FitOptions { literal_grid: cfg.literal_grid, ..FitOptions::default() };
    cfg.methods
        .iter()
        .map(|&m| {
            let fitted = fit(m, &inst.problem, &inst.assumed, &data, &opts)
                .map_err(|e| annotate(e, &format!("{m} at n={n}, rep={rep}")))?;
            let regret = inst.truth.regret(&fitted.decision.w).map_err(|e| annotate(e, &format!("{m} regret at n={n}, rep={rep}")))?;
            Ok(RegretRow { problem: cfg.problem, setting: cfg.setting, method: m, n, rep, regret, n_regret: regret * n as f64 })
        })
        .collect()
}

fn annotate(e: Error, ctx: &str) -> Error {
    match e {
        Error::Solver(s) => Error::Solver(format!("{ctx}: {s}")),
        Error::Domain(s) => Error::Domain(format!("{ctx}: {s}")),
        Error::Verification(s) => Error::Verification(format!("{ctx}: {s}")),
        Error::Singular(s) => Error::Singular(format!("{ctx}: {s}")),
        other => other,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RegretTable> {
    let inst = build_instance(cfg)?;
    let cells: Vec<(usize, usize)> =
        cfg.n_list.iter().flat_map(|&n| (0..cfg.replications).map(move |r| (n, r))).collect();
    let results: Vec<Result<Vec<RegretRow>>> =
        pool(cfg.workers)?.install(|| cells.par_iter().map(|&(n, r)| replicate(cfg, &inst, n, r)).collect());
    let mut table = RegretTable::default();
    for r in results {
        // first failure in (n, rep) order aborts the run
        table.rows.extend(r?);
    }
    table.sort();
    Ok(table)
}

// ------------------------------------------------------------ summaries

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    /// Raw moments of n·regret.
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// P(n·regret > C1), one per threshold.
    pub tails: Vec<f64>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

fn sorted_mean(sorted: &[f64], k: i32) -> f64 {
    sorted.iter().map(|x| x.powi(k)).sum::<f64>() / sorted.len() as f64
}

pub fn summarize(table: &RegretTable, c1: &[f64]) -> Result<Vec<SummaryRow>> {
    if table.rows.is_empty() {
        return Err(Error::Domain("cannot summarize an empty table".into()));
    }
    let mut out = Vec::new();
    for m in table.methods() {
        for n in table.ns() {
            // sorting first makes every statistic independent of row order
            let mut r: Vec<f64> = table.rows.iter().filter(|x| x.method == m && x.n == n).map(|x| x.regret).collect();
            if r.is_empty() {
                continue;
            }
            r.sort_by(f64::total_cmp);
            let mut s: Vec<f64> = table.rows.iter().filter(|x| x.method == m && x.n == n).map(|x| x.n_regret).collect();
            s.sort_by(f64::total_cmp);
            let tails = c1.iter().map(|c| s.iter().filter(|v| **v > *c).count() as f64 / s.len() as f64).collect();
            out.push(SummaryRow {
                method: m,
                n,
                mean: sorted_mean(&r, 1),
                q25: quantile_sorted(&r, 0.25),
                q50: quantile_sorted(&r, 0.5),
                q75: quantile_sorted(&r, 0.75),
                m1: sorted_mean(&s, 1),
                m2: sorted_mean(&s, 2),
                m3: sorted_mean(&s, 3),
                tails,
            });
        }
    }
    Ok(out)
}

/// Bootstrap standard error of stat(a) − stat(b) resampling replication indices jointly.
pub fn paired_bootstrap_se(a: &[f64], b: &[f64], stat: impl Fn(&[f64]) -> f64, resamples: usize, rng: &mut RngStream) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let n = a.len();
    let mut diffs = Vec::with_capacity(resamples);
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    for _ in 0..resamples {
        for i in 0..n {
            let k = (rng.next_u64() % n as u64) as usize;
            ra[i] = a[k];
            rb[i] = b[k];
        }
        diffs.push(stat(&ra) - stat(&rb));
    }
    let m = diffs.iter().sum::<f64>() / resamples as f64;
    (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (resamples - 1).max(1) as f64).sqrt()
}

// ------------------------------------------------------------ γ-sweep

pub fn gamma_sweep(base: &ExperimentConfig, gammas: &[f64]) -> Result<Vec<(f64, RegretTable)>> {
    gammas
        .iter()
        .map(|&g| {
            let cfg = base.with_setting(Setting::Gamma(g));
            Ok((g, run_experiment(&cfg)?))
        })
        .collect()
}

/// Per γ: each method's score (mean over n of its per-n median regret) and the
/// three pairwise ordering indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub score_saa: f64,
    pub score_eto: f64,
    pub score_ieo: f64,
    pub eto_lt_ieo: bool,
    pub ieo_lt_saa: bool,
    pub eto_lt_saa: bool,
}

pub fn sweep_rows(sweep: &[(f64, RegretTable)]) -> Vec<SweepRow> {
    sweep
        .iter()
        .map(|(g, t)| {
            let score = |m: Method| {
                let ns = t.ns();
                ns.iter().map(|&n| median(&t.regrets(m, n))).sum::<f64>() / ns.len() as f64
            };
            let (s, e, i) = (score(Method::Saa), score(Method::Eto), score(Method::Ieo));
            SweepRow { gamma: *g, score_saa: s, score_eto: e, score_ieo: i, eto_lt_ieo: e < i, ieo_lt_saa: i < s, eto_lt_saa: e < s }
        })
        .collect()
}

/// Each pairwise indicator changes value at most once along γ (rows sorted by γ).
pub fn crossover_monotone(rows: &[SweepRow]) -> bool {
    let mut r = rows.to_vec();
    r.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let flips = |f: &dyn Fn(&SweepRow) -> bool| r.windows(2).filter(|w| f(&w[0]) != f(&w[1])).count();
    flips(&|x| x.eto_lt_ieo) <= 1 && flips(&|x| x.ieo_lt_saa) <= 1 && flips(&|x| x.eto_lt_saa) <= 1
}

// ------------------------------------------------------------ limit comparison

#[derive(Clone, Debug, PartialEq)]
pub struct LimitComparison {
    pub method: Method,
    pub ks: f64,
    pub empirical_mean: f64,
    pub limit_mean: f64,
}

/// KS distance between n·regret at `n_large` and draws from the matching limit law
/// (evaluated at the ground truth, so only meaningful when well-specified).
pub fn limit_comparison(cfg: &ExperimentConfig, n_large: usize, m_samples: usize) -> Result<Vec<LimitComparison>> {
    if n_large < 2000 {
        return Err(Error::Config("limit comparison needs n_large ≥ 2000".into()));
    }
    let run_cfg = ExperimentConfig { n_list: vec![n_large], ..cfg.clone() };
    let inst = build_instance(&run_cfg)?;
    let table = run_experiment(&run_cfg)?;
    let cov = compute_cov_model(&inst.problem, &inst.truth_family, &inst.truth_theta)?;
    let constrained = cov.constrained();
    let mut rng = RngStream::new(cfg.master_seed, 0x11_3117).derive(n_large as u64);
    cfg.methods
        .iter()
        .map(|&m| {
            let law = limit_law(&cov, m, constrained)?;
            let draws = law.samples(&mut rng, m_samples);
            let emp = table.scaled(m, n_large);
            Ok(LimitComparison {
                method: m,
                ks: ks_distance(&emp, &draws),
                empirical_mean: emp.iter().sum::<f64>() / emp.len() as f64,
                limit_mean: law.mean(),
            })
        })
        .collect()
}
