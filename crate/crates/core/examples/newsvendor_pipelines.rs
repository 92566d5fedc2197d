//! Fit SAA, ETO and IEO on one newsvendor sample and compare true regret.
//!
//!     cargo run --example newsvendor_pipelines -- [n] [seed]

use stochcmp::estimators::{fit, FitOptions, Method, Problem};
use stochcmp::models::{Family, ScaledMeanGaussian};
use stochcmp::problems::{GroundTruth, NewsvendorSpec};
use stochcmp::stats::RngStream;

fn main() -> stochcmp::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let p = 5;
    let spec = NewsvendorSpec::uniform_costs(p, 1.0, 5.0, None)?;
    let truth_sig = vec![1.0; p];
    let mu: Vec<f64> = (1..=p).map(|j| 3.0 * j as f64).collect();
    let truth = GroundTruth::newsvendor(spec.clone(), mu, truth_sig.clone())?;
    let data = Family::ScaledMean(ScaledMeanGaussian { sigmas: truth_sig.clone() }).sample_dataset(
        &[3.0],
        n,
        &mut RngStream::new(seed, 0),
        None,
    )?;

    let problem = Problem::Newsvendor(spec);
    // a well-specified model and one with the wrong variances
    let wrong: Vec<f64> = (1..=p).map(|j| ((6 - j).max(1) as f64).sqrt()).collect();
    for (label, family) in [
        ("well-specified", Family::ScaledMean(ScaledMeanGaussian { sigmas: truth_sig })),
        ("wrong variances", Family::ScaledMean(ScaledMeanGaussian { sigmas: wrong })),
    ] {
        println!("{label}, n = {n}");
        for m in Method::ALL {
            let r = fit(m, &problem, &family, &data, &FitOptions::default())?;
            let theta = r.theta.as_ref().map(|t| format!("{:.4}", t[0])).unwrap_or_else(|| "-".into());
            println!("  {m}: θ̂ = {theta:>7}  regret = {:.5}", truth.regret(&r.decision.w)?);
        }
    }
    Ok(())
}
