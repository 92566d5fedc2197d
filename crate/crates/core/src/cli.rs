//! Command-line front end: INI config parsing, subcommand dispatch, CSV/SVG/manifest output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::asymptotics::{
    check_cramer_rao, check_lemma1_trials, check_lemma2, check_lemma2_sandwich, check_lemma3, check_lemma3_sandwich,
    compute_cov_model, limit_law, misspec_limits, sd_test, CheckReport, CovModel, SdVerdict,
};
use crate::estimators::{Method, Problem};
use crate::harness::{
    build_instance, crossover_monotone, gamma_sweep, limit_comparison, run_experiment, summarize, sweep_rows,
    ExperimentConfig, ProblemId, RegretTable, Setting, SummaryRow,
};
use crate::linalg::Mat;
use crate::models::{Family, LinearGaussian, MeanVecGaussian, ScaledMeanGaussian};
use crate::problems::{ContextualSpec, NewsvendorSpec, PortfolioSpec};
use crate::stats::RngStream;
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything a config file can set.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// Limit-law draws written by `asymptotics` and used by `limits`.
    pub limit_samples: usize,
    pub n_large: usize,
    pub log_y: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { experiment: ExperimentConfig::default(), limit_samples: 100_000, n_large: 4000, log_y: false }
    }
}

// ------------------------------------------------------------ config parsing

const EXPERIMENT_KEYS: &[&str] = &[
    "problem", "setting", "p", "h", "b", "capacity", "alpha", "theta0", "sigma", "methods", "n_list", "replications",
    "seed", "c1", "gammas", "workers", "literal_grid",
];
const ASYMPTOTIC_KEYS: &[&str] = &["limit_samples", "n_large"];
const OUTPUT_KEYS: &[&str] = &["log_y"];

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse '{s}'")))
        .collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

fn parse_setting(v: &str) -> std::result::Result<Setting, String> {
    match v {
        "well" => Ok(Setting::Well),
        "misspecified" => Ok(Setting::Misspecified),
        _ => match v.strip_prefix("gamma=") {
            Some(g) => g.trim().parse().map(Setting::Gamma).map_err(|_| format!("bad gamma '{g}'")),
            None => Err(format!("unknown setting '{v}' (well, misspecified, gamma=<γ>)")),
        },
    }
}

/// Parse INI-style text. Every offending line is reported.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut errs: Vec<String> = Vec::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut section = String::new();
    let mut problem_set = false;
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if ["experiment", "asymptotics", "output"].contains(&name.trim()) => {
                    section = name.trim().to_string()
                }
                _ => errs.push(format!("line {ln}: unknown section '{line}'")),
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errs.push(format!("line {ln}: expected 'key = value'"));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim());
        let allowed = match section.as_str() {
            "experiment" => EXPERIMENT_KEYS,
            "asymptotics" => ASYMPTOTIC_KEYS,
            "output" => OUTPUT_KEYS,
            _ => {
                errs.push(format!("line {ln}: key '{k}' outside of a section"));
                continue;
            }
        };
        if !allowed.contains(&k.as_str()) {
            errs.push(format!("line {ln}: unknown key '{k}' in [{section}]"));
            continue;
        }
        if let Some(prev) = seen.insert((section.clone(), k.clone()), ln) {
            errs.push(format!("line {ln}: duplicate key '{k}' (first set on line {prev})"));
            continue;
        }
        let e = &mut cfg.experiment;
        let res: std::result::Result<(), String> = (|| {
            match k.as_str() {
                "problem" => {
                    e.problem = ProblemId::parse(v).ok_or_else(|| format!("unknown problem '{v}'"))?;
                    problem_set = true;
                }
                "setting" => e.setting = parse_setting(v)?,
                "p" => e.p = v.parse().map_err(|_| format!("p must be a positive integer, got '{v}'"))?,
                "h" => e.h = v.parse().map_err(|_| format!("bad number '{v}'"))?,
                "b" => e.b = v.parse().map_err(|_| format!("bad number '{v}'"))?,
                "capacity" => e.capacity = v.parse().map_err(|_| format!("bad number '{v}'"))?,
                "alpha" => e.alpha = v.parse().map_err(|_| format!("bad number '{v}'"))?,
                "sigma" => e.sigma = v.parse().map_err(|_| format!("bad number '{v}'"))?,
                "theta0" => e.theta0 = parse_list(v)?,
                "methods" => {
                    e.methods = v
                        .split(',')
                        .map(|s| Method::parse(s).ok_or_else(|| format!("unknown method '{}'", s.trim())))
                        .collect::<std::result::Result<_, _>>()?
                }
                "n_list" => e.n_list = parse_list(v)?,
                "replications" => e.replications = v.parse().map_err(|_| format!("bad count '{v}'"))?,
                "seed" => e.master_seed = v.parse().map_err(|_| format!("seed must be an unsigned 64-bit integer, got '{v}'"))?,
                "c1" => e.c1 = parse_list(v)?,
                "gammas" => e.gammas = parse_list(v)?,
                "workers" => e.workers = v.parse().map_err(|_| format!("bad count '{v}'"))?,
                "literal_grid" => e.literal_grid = parse_bool(v)?,
                "limit_samples" => cfg.limit_samples = v.parse().map_err(|_| format!("bad count '{v}'"))?,
                "n_large" => cfg.n_large = v.parse().map_err(|_| format!("bad count '{v}'"))?,
                "log_y" => cfg.log_y = parse_bool(v)?,
                _ => unreachable!(),
            }
            Ok(())
        })();
        if let Err(m) = res {
            errs.push(format!("line {ln}: {k}: {m}"));
        }
    }
    if !problem_set {
        errs.push("missing required key 'problem' in [experiment]".into());
    }
    if errs.is_empty() {
        if let Err(Error::Config(m)) = cfg.experiment.validate() {
            errs.extend(m.lines().map(|l| format!("constraint: {l}")));
        }
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs.join("\n")))
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Resolved config echoed back in the same INI format (round-trips through the parser).
pub fn config_to_ini(cfg: &RunConfig) -> String {
    let e = &cfg.experiment;
    let mut s = String::from("[experiment]\n");
    let _ = writeln!(s, "problem = {}", e.problem.name());
    let _ = writeln!(s, "setting = {}", e.setting);
    let _ = writeln!(s, "p = {}", e.p);
    let _ = writeln!(s, "h = {:?}", e.h);
    let _ = writeln!(s, "b = {:?}", e.b);
    let _ = writeln!(s, "capacity = {:?}", e.capacity);
    let _ = writeln!(s, "alpha = {:?}", e.alpha);
    if !e.theta0.is_empty() {
        let _ = writeln!(s, "theta0 = {}", e.theta0.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
    }
    let _ = writeln!(s, "sigma = {:?}", e.sigma);
    let _ = writeln!(s, "methods = {}", join(&e.methods));
    let _ = writeln!(s, "n_list = {}", join(&e.n_list));
    let _ = writeln!(s, "replications = {}", e.replications);
    let _ = writeln!(s, "seed = {}", e.master_seed);
    let _ = writeln!(s, "c1 = {}", e.c1.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
    if !e.gammas.is_empty() {
        let _ = writeln!(s, "gammas = {}", e.gammas.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
    }
    let _ = writeln!(s, "literal_grid = {}", e.literal_grid);
    let _ = writeln!(s, "\n[asymptotics]\nlimit_samples = {}\nn_large = {}", cfg.limit_samples, cfg.n_large);
    let _ = writeln!(s, "\n[output]\nlog_y = {}", cfg.log_y);
    s
}

// ------------------------------------------------------------ file output

/// 17 significant digits: round-trips every f64.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects files for one command and writes the manifest last.
struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        write_atomic(&p, content.as_bytes())?;
        let digest = Sha256::digest(content.as_bytes());
        self.files.insert(name.to_string(), digest.iter().map(|b| format!("{b:02x}")).collect());
        Ok(p)
    }

    fn finish(self, command: &str, cfg: &RunConfig) -> Result<()> {
        let manifest = serde_json::json!({
            "tool": "stochcmp",
            "version": VERSION,
            "command": command,
            "master_seed": cfg.experiment.master_seed,
            "config": config_to_ini(cfg),
            "outputs": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Domain(e.to_string()))? + "\n";
        write_atomic(&self.dir.join("manifest.json"), text.as_bytes())
    }
}

pub fn regret_csv(t: &RegretTable) -> String {
    let mut s = String::from("problem,setting,method,n,rep,regret,n_regret\n");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.problem.name(),
            r.setting,
            r.method,
            r.n,
            r.rep,
            fmt_num(r.regret),
            fmt_num(r.n_regret)
        );
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow], c1: &[f64]) -> String {
    let mut s = String::from("method,n,mean,q25,q50,q75,m1,m2,m3");
    for c in c1 {
        let _ = write!(s, ",tail_{c}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.n,
            fmt_num(r.mean),
            fmt_num(r.q25),
            fmt_num(r.q50),
            fmt_num(r.q75),
            fmt_num(r.m1),
            fmt_num(r.m2),
            fmt_num(r.m3)
        );
        for t in &r.tails {
            let _ = write!(s, ",{}", fmt_num(*t));
        }
        s.push('\n');
    }
    s
}

// ------------------------------------------------------------ SVG

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub name: String,
    /// (x, lower, upper)
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart with optional shaded bands, axes, ticks and legend.
pub fn render_svg(series: &[Series], bands: &[Band], opts: &ChartOptions) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::Domain("svg needs at least one nonempty series".into()));
    }
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .chain(bands.iter().flat_map(|b| b.points.iter().flat_map(|p| [p.1, p.2])));
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).chain(bands.iter().flat_map(|b| b.points.iter().map(|p| p.0)));
    let ys: Vec<f64> = ys.collect();
    let xs: Vec<f64> = xs.collect();
    if ys.iter().chain(&xs).any(|v| !v.is_finite()) {
        return Err(Error::Domain("svg values must be finite".into()));
    }
    if opts.log_y && ys.iter().any(|v| *v <= 0.0) {
        return Err(Error::Domain("log-scale axis needs positive values".into()));
    }
    let ty = |v: f64| if opts.log_y { v.log10() } else { v };
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(*v), a.1.max(*v)));
    let (mut y0, mut y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(ty(*v)), a.1.max(ty(*v))));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (w, h, ml, mr, mt, mb) = (720.0, 440.0, 70.0, 150.0, 40.0, 50.0);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| mt + (1.0 - (ty(y) - y0) / (y1 - y0)) * (h - mt - mb);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, (ml + w - mr) / 2.0, xml_escape(&opts.title));
    // axes
    let _ = writeln!(s, r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - mb, w - mr, h - mb);
    let _ = writeln!(s, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#, h - mb);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let label_y = if opts.log_y { 10f64.powf(fy) } else { fy };
        let yy = mt + (1.0 - k as f64 / 4.0) * (h - mt - mb);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.4}</text>"#, px(fx), h - mb + 16.0, fx);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#, ml - 6.0, yy + 4.0, label_y);
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{yy:.2}" x2="{}" y2="{yy:.2}" stroke="#dddddd"/>"##, w - mr);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, (ml + w - mr) / 2.0, h - 12.0, xml_escape(&opts.x_label));
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, (mt + h - mb) / 2.0, (mt + h - mb) / 2.0, xml_escape(&opts.y_label));
    for (i, b) in bands.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<String> = b.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.2))).collect();
        pts.extend(b.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))));
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"><title>{}</title></polygon>"#, pts.join(" "), xml_escape(&b.name));
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        for p in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(p.0), py(p.1));
        }
        let ly = mt + 10.0 + 20.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - mr + 10.0, w - mr + 34.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, w - mr + 40.0, ly + 4.0, xml_escape(&ser.name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg_lines(series: &[Series], bands: &[Band], opts: &ChartOptions, path: &Path) -> Result<()> {
    let svg = render_svg(series, bands, opts)?;
    write_atomic(path, svg.as_bytes())
}

fn median_chart(summary: &[SummaryRow], methods: &[Method]) -> (Vec<Series>, Vec<Band>) {
    let mut series = Vec::new();
    let mut bands = Vec::new();
    for m in methods {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.method == *m).collect();
        series.push(Series { name: format!("{m} median"), points: rows.iter().map(|r| (r.n as f64, r.q50)).collect() });
        bands.push(Band { name: format!("{m} 25–75%"), points: rows.iter().map(|r| (r.n as f64, r.q25, r.q75)).collect() });
    }
    (series, bands)
}

// ------------------------------------------------------------ commands

fn chart_opts(cfg: &RunConfig, title: String) -> ChartOptions {
    ChartOptions { title, x_label: "n".into(), y_label: "regret".into(), log_y: cfg.log_y }
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<RegretTable> {
    let e = &cfg.experiment;
    let table = run_experiment(e)?;
    let summary = summarize(&table, &e.c1)?;
    let mut o = Outputs::new(out)?;
    o.write("regret.csv", &regret_csv(&table))?;
    o.write("summary.csv", &summary_csv(&summary, &e.c1))?;
    let (series, bands) = median_chart(&summary, &e.methods);
    let title = format!("{} ({})", e.problem.name(), e.setting);
    if let Ok(svg) = render_svg(&series, &bands, &chart_opts(cfg, title)) {
        o.write("regret.svg", &svg)?;
    }
    o.finish("simulate", cfg)?;
    Ok(table)
}

fn matrix_rows(s: &mut String, name: &str, m: &Mat) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let _ = writeln!(s, "{name},{r},{c},{}", fmt_num(m[(r, c)]));
        }
    }
}

pub fn covmodel_csv(c: &CovModel) -> String {
    let mut s = String::from("matrix,row,col,value\n");
    matrix_rows(&mut s, "H_omega", &c.h_omega);
    matrix_rows(&mut s, "H_theta", &c.h_theta);
    matrix_rows(&mut s, "Sigma_grad", &c.sigma_grad);
    matrix_rows(&mut s, "FisherI", &c.fisher);
    matrix_rows(&mut s, "J", &c.jac);
    matrix_rows(&mut s, "A", &c.a);
    matrix_rows(&mut s, "Phi", &c.phi);
    s
}

pub fn cmd_asymptotics(cfg: &RunConfig, out: &Path) -> Result<CovModel> {
    let e = &cfg.experiment;
    let inst = build_instance(e)?;
    let cov = compute_cov_model(&inst.problem, &inst.truth_family, &inst.truth_theta)?;
    let mut o = Outputs::new(out)?;
    o.write("covmodel.csv", &covmodel_csv(&cov))?;
    let constrained = cov.constrained();
    let mut rng = RngStream::new(e.master_seed, 0xA5_7317);
    let mut s = String::from("method,draw,value\n");
    let mut means = String::from("method,limit_mean\n");
    for m in &e.methods {
        let law = limit_law(&cov, *m, constrained)?;
        let _ = writeln!(means, "{m},{}", fmt_num(law.mean()));
        for (i, v) in law.samples(&mut rng, cfg.limit_samples).into_iter().enumerate() {
            let _ = writeln!(s, "{m},{i},{}", fmt_num(v));
        }
    }
    o.write("limitlaw_samples.csv", &s)?;
    o.write("limitlaw_means.csv", &means)?;
    match misspec_limits(&inst.problem, &inst.assumed, &inst.truth) {
        Ok(ml) => {
            let f = |v: &[f64]| v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";");
            let text = format!(
                "theta_star,theta_kl,kappa_ieo,kappa_eto\n{},{},{},{}\n",
                f(&ml.theta_star),
                f(&ml.theta_kl),
                fmt_num(ml.kappa_ieo),
                fmt_num(ml.kappa_eto)
            );
            o.write("misspec_limits.csv", &text)?;
        }
        Err(Error::Unsupported(m)) => eprintln!("misspec_limits skipped: {m}"),
        Err(err) => return Err(err),
    }
    o.finish("asymptotics", cfg)?;
    Ok(cov)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdcheckArgs {
    pub trials: usize,
    pub p: usize,
    pub q: usize,
    pub lemma1_trials: usize,
    pub m: usize,
    pub alpha: f64,
}

impl Default for SdcheckArgs {
    fn default() -> Self {
        Self { trials: 1000, p: 4, q: 2, lemma1_trials: 100, m: 100_000, alpha: 0.01 }
    }
}

/// Cramér–Rao on the four problem families at the reference ground truths.
pub fn cramer_rao_suite() -> Result<Vec<CheckReport>> {
    let nv = |cap| Problem::Newsvendor(NewsvendorSpec::uniform_costs(5, 1.0, 5.0, cap).unwrap());
    let smg = Family::ScaledMean(ScaledMeanGaussian { sigmas: vec![1.0; 5] });
    let cases: Vec<(&str, Problem, Family, Vec<f64>)> = vec![
        ("newsvendor", nv(None), smg.clone(), vec![3.0]),
        ("constrained_newsvendor", nv(Some(40.0)), smg, vec![3.0]),
        (
            "contextual_newsvendor",
            Problem::Contextual(ContextualSpec { h: 1.0, b: 5.0, feature_dim: 2 }),
            Family::LinearGaussian(LinearGaussian { feature_dim: 2, sigma: 1.0 }),
            vec![2.0, 0.5, 0.5],
        ),
        (
            "portfolio",
            Problem::Portfolio(PortfolioSpec { assets: 2, alpha: 0.7 }),
            Family::MeanVec(MeanVecGaussian { sigmas: vec![3f64.sqrt(), 6f64.sqrt()] }),
            vec![12.0, 15.0],
        ),
    ];
    cases
        .into_iter()
        .map(|(name, p, f, t)| {
            let mut r = check_cramer_rao(&compute_cov_model(&p, &f, &t)?)?;
            r.name = format!("cramer-rao {name}");
            Ok(r)
        })
        .collect()
}

/// Runs every verifier; returns the report text and whether all literal checks passed.
pub fn run_sdcheck(args: &SdcheckArgs, seed: u64) -> Result<(String, bool)> {
    if args.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if args.q > args.p || args.q == 0 {
        return Err(Error::Config("need 1 ≤ q ≤ p".into()));
    }
    let mut rep = String::new();
    let _ = writeln!(rep, "stochcmp {VERSION} sdcheck seed={seed} trials={} p={} q={}", args.trials, args.p, args.q);
    let mut ok = true;
    let mut line = |r: &CheckReport, counts: bool, ok: &mut bool| {
        let _ = writeln!(rep, "{r}");
        if counts && !r.passed() {
            *ok = false;
        }
    };
    let root = RngStream::new(seed, 0x5D);
    for (i, lambda) in [0.0, 0.1].into_iter().enumerate() {
        let salt = i as u64 * 16;
        line(&check_lemma2(&mut root.derive(salt + 1), args.p, args.q, lambda, args.trials)?, true, &mut ok);
        line(&check_lemma3(&mut root.derive(salt + 2), args.p, args.q, lambda, args.trials)?, true, &mut ok);
        line(&check_lemma2_sandwich(&mut root.derive(salt + 3), args.p, args.q, lambda, args.trials)?, true, &mut ok);
        line(&check_lemma3_sandwich(&mut root.derive(salt + 4), args.p, args.q, lambda, args.trials)?, true, &mut ok);
    }
    if args.lemma1_trials > 0 {
        let r = check_lemma1_trials(&mut root.derive(100), 3, args.lemma1_trials, args.m, args.alpha)?;
        line(&r, true, &mut ok);
    }
    for r in cramer_rao_suite()? {
        line(&r, true, &mut ok);
    }
    // dominance among the p=2 limit laws
    let p2 = Problem::Newsvendor(NewsvendorSpec::uniform_costs(2, 1.0, 5.0, None)?);
    let fam = Family::ScaledMean(ScaledMeanGaussian { sigmas: vec![1.0, 1.0] });
    let cov = compute_cov_model(&p2, &fam, &[3.0])?;
    let mut rng = root.derive(200);
    let draws: Vec<Vec<f64>> = [Method::Eto, Method::Ieo, Method::Saa]
        .iter()
        .map(|m| Ok(limit_law(&cov, *m, false)?.samples(&mut rng, args.m)))
        .collect::<Result<_>>()?;
    for (a, b, na, nb) in [(0, 1, "ETO", "IEO"), (1, 2, "IEO", "SAA"), (0, 2, "ETO", "SAA")] {
        let r = sd_test(&draws[a], &draws[b], 512, args.alpha)?;
        let pass = r.verdict == SdVerdict::XDominated;
        let _ = writeln!(
            rep,
            "{:<28} {} (verdict {}, min Δ {:.4e}, max Δ {:.4e}, δ {:.4e})",
            format!("limit law {na} ⪯ {nb}"),
            if pass { "PASS" } else { "FAIL" },
            r.verdict,
            r.min_delta,
            r.max_delta,
            r.delta
        );
        ok &= pass;
    }
    let _ = writeln!(rep, "overall: {}", if ok { "PASS" } else { "FAIL" });
    Ok((rep, ok))
}

pub fn cmd_sdcheck(args: &SdcheckArgs, seed: u64, out: &Path) -> Result<bool> {
    let (rep, ok) = run_sdcheck(args, seed)?;
    fs::create_dir_all(out)?;
    write_atomic(&out.join("sdcheck.txt"), rep.as_bytes())?;
    print!("{rep}");
    Ok(ok)
}

fn ranking(row: &crate::harness::SweepRow) -> String {
    let mut v = [("SAA", row.score_saa), ("ETO", row.score_eto), ("IEO", row.score_ieo)];
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v.iter().map(|x| x.0).collect::<Vec<_>>().join("<")
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<crate::harness::SweepRow>> {
    let e = &cfg.experiment;
    if e.gammas.is_empty() {
        return Err(Error::Config("sweep needs a nonempty 'gammas' list".into()));
    }
    let sweep = gamma_sweep(e, &e.gammas)?;
    let mut o = Outputs::new(out)?;
    for (g, t) in &sweep {
        o.write(&format!("summary_gamma_{g}.csv"), &summary_csv(&summarize(t, &e.c1)?, &e.c1))?;
    }
    let rows = sweep_rows(&sweep);
    let reference = rows.iter().max_by(|a, b| a.gamma.total_cmp(&b.gamma)).map(ranking).unwrap_or_default();
    let mut s = String::from("gamma,score_saa,score_eto,score_ieo,eto_lt_ieo,ieo_lt_saa,eto_lt_saa,ranking,flip_vs_max_gamma\n");
    for r in &rows {
        let rk = ranking(r);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(r.gamma),
            fmt_num(r.score_saa),
            fmt_num(r.score_eto),
            fmt_num(r.score_ieo),
            u8::from(r.eto_lt_ieo),
            u8::from(r.ieo_lt_saa),
            u8::from(r.eto_lt_saa),
            rk,
            u8::from(rk != reference)
        );
    }
    let _ = writeln!(s, "# monotone_crossover={}", crossover_monotone(&rows));
    o.write("sweep.csv", &s)?;
    let series: Vec<Series> = [Method::Saa, Method::Eto, Method::Ieo]
        .iter()
        .map(|m| Series {
            name: m.to_string(),
            points: rows
                .iter()
                .map(|r| (r.gamma, match m {
                    Method::Saa => r.score_saa,
                    Method::Eto => r.score_eto,
                    Method::Ieo => r.score_ieo,
                }))
                .collect(),
        })
        .collect();
    let opts = ChartOptions { title: "median regret vs γ".into(), x_label: "γ".into(), y_label: "mean of per-n median regret".into(), log_y: cfg.log_y };
    if let Ok(svg) = render_svg(&series, &[], &opts) {
        o.write("sweep.svg", &svg)?;
    }
    o.finish("sweep", cfg)?;
    Ok(rows)
}

pub fn cmd_limits(cfg: &RunConfig, out: &Path) -> Result<Vec<crate::harness::LimitComparison>> {
    let res = limit_comparison(&cfg.experiment, cfg.n_large, cfg.limit_samples)?;
    let mut o = Outputs::new(out)?;
    let mut s = String::from("method,n,ks,empirical_mean,limit_mean\n");
    for r in &res {
        let _ = writeln!(s, "{},{},{},{},{}", r.method, cfg.n_large, fmt_num(r.ks), fmt_num(r.empirical_mean), fmt_num(r.limit_mean));
    }
    o.write("limits.csv", &s)?;
    o.finish("limits", cfg)?;
    Ok(res)
}

// ------------------------------------------------------------ entry point

#[derive(Parser, Debug)]
#[command(name = "stochcmp", version, about = "Compare SAA, ETO and IEO pipelines and check their asymptotic theory")]
pub struct Cli {
    /// INI config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (outputs do not depend on it)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regret distributions over replications
    Simulate,
    /// Covariance model, limit-law draws and misspecification limits
    Asymptotics,
    /// Matrix-lemma, Cramér–Rao and dominance verifiers
    Sdcheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        p: usize,
        #[arg(long, default_value_t = 2)]
        q: usize,
        #[arg(long, default_value_t = 100)]
        lemma1_trials: usize,
        #[arg(long, default_value_t = 100_000)]
        m: usize,
    },
    /// γ-interpolated misspecification sweep
    Sweep,
    /// KS distance between n·regret and the limit laws
    Limits,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Unsupported(_) | Error::Dim { .. } => EXIT_CONFIG,
        Error::Solver(_) | Error::Singular(_) | Error::Domain(_) => EXIT_SOLVER,
        Error::Verification(_) => EXIT_VERIFY,
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => return Err(Error::Config("--config is required for this command".into())),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.master_seed = s;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        cfg.experiment.workers = w;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate => cmd_simulate(&load(cli)?, &cli.out).map(|_| EXIT_OK),
        Command::Asymptotics => cmd_asymptotics(&load(cli)?, &cli.out).map(|_| EXIT_OK),
        Command::Sweep => cmd_sweep(&load(cli)?, &cli.out).map(|_| EXIT_OK),
        Command::Limits => cmd_limits(&load(cli)?, &cli.out).map(|_| EXIT_OK),
        Command::Sdcheck { trials, p, q, lemma1_trials, m } => {
            let seed = match (&cli.seed, &cli.config) {
                (Some(s), _) => *s,
                (None, Some(_)) => load(cli)?.experiment.master_seed,
                (None, None) => 0,
            };
            let args = SdcheckArgs { trials: *trials, p: *p, q: *q, lemma1_trials: *lemma1_trials, m: *m, ..Default::default() };
            cmd_sdcheck(&args, seed, &cli.out).map(|ok| if ok { EXIT_OK } else { EXIT_VERIFY })
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[experiment]\nproblem = newsvendor\nn_list = 10, 20\nreplications = 3\n").unwrap();
        let e = &c.experiment;
        assert_eq!((e.h, e.b, e.p, e.capacity, e.alpha), (1.0, 5.0, 5, 40.0, 0.7));
        assert!(e.gammas.is_empty());
        assert_eq!(e.n_list, vec![10, 20]);
    }

    #[test]
    fn rejects_bad_gamma_and_duplicates() {
        let e = parse_config_str("[experiment]\nproblem = newsvendor\ngammas = 0, 1.5\n").unwrap_err();
        assert!(e.to_string().contains("1.5"));
        let d = parse_config_str("[experiment]\nproblem = newsvendor\np = 2\np = 3\n").unwrap_err().to_string();
        assert!(d.contains("line 4") && d.contains("line 3"), "{d}");
    }

    #[test]
    fn reports_every_bad_line() {
        let text = "[experiment]\nproblem = nope\nfoo = 1\nh = abc\n[weird]\nreplications = 0\n";
        let msg = parse_config_str(text).unwrap_err().to_string();
        for ln in ["line 2", "line 3", "line 4", "line 5"] {
            assert!(msg.contains(ln), "{ln} missing in {msg}");
        }
    }

    #[test]
    fn ini_round_trip() {
        let text = "[experiment]\nproblem = portfolio\np = 2\nsetting = misspecified\nn_list = 10, 50\nc1 = 0.5, 1.25\ntheta0 = 12, 15\ngammas = 0.1\n[asymptotics]\nlimit_samples = 17\n[output]\nlog_y = true\n";
        let a = parse_config_str(text).unwrap();
        let b = parse_config_str(&config_to_ini(&a)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789e10, 0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    fn well_formed(svg: &str) -> bool {
        // balanced tags and quotes: enough to catch broken emission
        let mut stack: Vec<String> = Vec::new();
        let mut rest = svg;
        while let Some(i) = rest.find('<') {
            let j = match rest[i..].find('>') {
                Some(j) => i + j,
                None => return false,
            };
            let tag = &rest[i + 1..j];
            if tag.matches('"').count() % 2 != 0 {
                return false;
            }
            if tag.starts_with('?') || tag.ends_with('/') {
            } else if let Some(name) = tag.strip_prefix('/') {
                if stack.pop().as_deref() != Some(name.trim()) {
                    return false;
                }
            } else {
                stack.push(tag.split_whitespace().next().unwrap_or("").to_string());
            }
            rest = &rest[j + 1..];
        }
        stack.is_empty()
    }

    #[test]
    fn svg_emission() {
        let s = vec![Series { name: "a & b".into(), points: vec![(1.0, 2.0), (2.0, 3.0)] }];
        let opts = ChartOptions { title: "t".into(), x_label: "x".into(), y_label: "y".into(), log_y: false };
        let svg = render_svg(&s, &[], &opts).unwrap();
        assert!(well_formed(&svg) && svg.contains("a &amp; b"));
        let bands = vec![Band { name: "b".into(), points: vec![(1.0, 1.0, 3.0), (2.0, 2.0, 4.0)] }];
        assert!(well_formed(&render_svg(&s, &bands, &opts).unwrap()));
        assert!(render_svg(&[], &[], &opts).is_err());
        let log = ChartOptions { log_y: true, ..opts };
        let neg = vec![Series { name: "n".into(), points: vec![(1.0, 0.0)] }];
        assert!(render_svg(&neg, &[], &log).is_err());
        assert!(well_formed(&render_svg(&s, &[], &log).unwrap()));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Solver("x".into())), 2);
        assert_eq!(exit_code(&Error::Verification("x".into())), 3);
        assert_eq!(run(["stochcmp", "sdcheck", "--trials", "0", "--out", "/nonexistent/never"]), 1);
        assert_eq!(run(["stochcmp", "bogus"]), 1);
        assert_eq!(run(["stochcmp", "simulate"]), 1);
    }

    #[test]
    fn sdcheck_deterministic() {
        let args = SdcheckArgs { trials: 20, lemma1_trials: 2, m: 2000, ..Default::default() };
        let (a, _) = run_sdcheck(&args, 9).unwrap();
        let (b, _) = run_sdcheck(&args, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("cramer-rao portfolio") && a.contains("lemma2 Q2=Q1"));
    }
}
