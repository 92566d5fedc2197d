//! Limiting regret laws G = ½NᵀHN for the p = 2 newsvendor, compared with
//! simulated n·regret at a large n.

use stochcmp::asymptotics::{compute_cov_model, ks_distance, limit_law};
use stochcmp::estimators::{Method, Problem};
use stochcmp::harness::{run_experiment, ExperimentConfig};
use stochcmp::models::{Family, ScaledMeanGaussian};
use stochcmp::problems::NewsvendorSpec;
use stochcmp::stats::RngStream;

fn main() -> stochcmp::Result<()> {
    let problem = Problem::Newsvendor(NewsvendorSpec::uniform_costs(2, 1.0, 5.0, None)?);
    let family = Family::ScaledMean(ScaledMeanGaussian { sigmas: vec![1.0, 1.0] });
    let cov = compute_cov_model(&problem, &family, &[3.0])?;
    println!("H_θ = {:.5}, Σ_grad diag = {:.4?}", cov.h_theta[(0, 0)], cov.sigma_grad.diagonal().as_slice());

    let n = 2000;
    let cfg = ExperimentConfig { p: 2, n_list: vec![n], replications: 400, ..Default::default() };
    let table = run_experiment(&cfg)?;
    let mut rng = RngStream::new(5, 5);
    for m in Method::ALL {
        let law = limit_law(&cov, m, false)?;
        let draws = law.samples(&mut rng, 50_000);
        let emp = table.scaled(m, n);
        let mean = emp.iter().sum::<f64>() / emp.len() as f64;
        println!("{m}: E[G] = {:.4}, mean n·R = {mean:.4}, KS = {:.4}", law.mean(), ks_distance(&emp, &draws));
    }
    Ok(())
}
