//! Interpolate the assumed variances between wrong (γ = 0) and right (γ = 1)
//! and watch the pipeline ranking flip.

use stochcmp::harness::{crossover_monotone, gamma_sweep, sweep_rows, ExperimentConfig};

fn main() -> stochcmp::Result<()> {
    let base = ExperimentConfig { replications: 30, ..Default::default() };
    let gammas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let rows = sweep_rows(&gamma_sweep(&base, &gammas)?);
    println!("   γ      SAA      ETO      IEO");
    for r in &rows {
        println!("{:>4.1} {:>8.4} {:>8.4} {:>8.4}", r.gamma, r.score_saa, r.score_eto, r.score_ieo);
    }
    println!("single crossover: {}", crossover_monotone(&rows));
    Ok(())
}
