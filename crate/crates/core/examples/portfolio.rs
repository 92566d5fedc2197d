//! Mean-variance portfolio on the simplex: oracle weights, then pipeline regret
//! for a correct and a wrong variance model.

use stochcmp::estimators::{fit, FitOptions, Method, Problem};
use stochcmp::models::{Family, MeanVecGaussian};
use stochcmp::problems::{portfolio_oracle_decision, GroundTruth, PortfolioSpec};
use stochcmp::stats::RngStream;

fn main() -> stochcmp::Result<()> {
    let spec = PortfolioSpec { assets: 3, alpha: 0.7 };
    let theta = vec![12.0, 15.0, 18.0];
    let sig2 = vec![3.0, 6.0, 9.0];
    let d = portfolio_oracle_decision(&theta, &sig2, &spec)?;
    println!("oracle weights {:.4?}, auxiliary {:.4}", &d.w[..3], d.w[3]);

    let truth = GroundTruth::portfolio(spec.clone(), theta.clone(), sig2.clone())?;
    let sd = |v: &[f64]| v.iter().map(|x| x.sqrt()).collect::<Vec<_>>();
    let truth_family = Family::MeanVec(MeanVecGaussian { sigmas: sd(&sig2) });
    let wrong = Family::MeanVec(MeanVecGaussian { sigmas: sd(&[9.0, 6.0, 3.0]) });
    let problem = Problem::Portfolio(spec);
    let data = truth_family.sample_dataset(&theta, 50, &mut RngStream::new(9, 0), None)?;
    for (label, fam) in [("well-specified", &truth_family), ("reversed variances", &wrong)] {
        print!("{label:>18}:");
        for m in Method::ALL {
            let r = fit(m, &problem, fam, &data, &FitOptions::default())?;
            print!("  {m} {:.5}", truth.regret(&r.decision.w)?);
        }
        println!();
    }
    Ok(())
}
