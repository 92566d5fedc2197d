//! Capacity-constrained newsvendor: the bisection oracle, then the three
//! pipelines' median regret over a few replications.

use stochcmp::estimators::Method;
use stochcmp::harness::{median, run_experiment, ExperimentConfig, ProblemId};
use stochcmp::problems::{nv_constrained_oracle, NewsvendorSpec};
use stochcmp::stats::norm_cdf;

fn main() -> stochcmp::Result<()> {
    let spec = NewsvendorSpec::uniform_costs(5, 1.0, 5.0, Some(40.0))?;
    let o = nv_constrained_oracle(&[1.0; 5], 3.0, &spec, 1e-12)?;
    let w = &o.decision.w;
    println!("oracle at θ = 3: w = {w:.4?}, Σw = {:.6}, multiplier {:.4}", w.iter().sum::<f64>(), -o.r);
    // every stocked product sits at the same critical fractile
    let levels: Vec<f64> = w.iter().enumerate().map(|(j, v)| norm_cdf(v - 3.0 * (j + 1) as f64)).collect();
    println!("fractiles: {levels:.6?}");

    let cfg = ExperimentConfig { problem: ProblemId::ConstrainedNewsvendor, replications: 30, ..Default::default() };
    let t = run_experiment(&cfg)?;
    for n in t.ns() {
        let row: Vec<String> = Method::ALL.iter().map(|m| format!("{m} {:.4}", median(&t.regrets(*m, n)))).collect();
        println!("n = {n:>3}: {}", row.join("  "));
    }
    Ok(())
}
