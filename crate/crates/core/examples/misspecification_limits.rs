//! Where ETO and IEO converge when the model is wrong, and the regret they keep.

use stochcmp::asymptotics::misspec_limits;
use stochcmp::harness::{build_instance, ExperimentConfig, Setting};

fn main() -> stochcmp::Result<()> {
    for p in [1, 3, 5] {
        let cfg = ExperimentConfig { p, setting: Setting::Misspecified, ..Default::default() };
        let inst = build_instance(&cfg)?;
        let l = misspec_limits(&inst.problem, &inst.assumed, &inst.truth)?;
        println!(
            "p = {p}: θ_KL = {:.4}, θ* = {:.4}, κ_ETO = {:.5}, κ_IEO = {:.5}",
            l.theta_kl[0], l.theta_star[0], l.kappa_eto, l.kappa_ieo
        );
    }
    Ok(())
}
