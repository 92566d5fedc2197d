//! Contextual newsvendor with features on the unit square: ETO (least squares)
//! against IEO (quantile regression), under a Gaussian and a uniform model.

use stochcmp::estimators::{eto, ieo, Problem};
use stochcmp::models::{Family, FeatureLaw, LinearGaussian, LinearUniform};
use stochcmp::problems::{ContextualSpec, GroundTruth};
use stochcmp::stats::RngStream;

fn main() -> stochcmp::Result<()> {
    let spec = ContextualSpec { h: 1.0, b: 5.0, feature_dim: 2 };
    let theta0 = vec![2.0, 0.5, 0.5];
    let truth_family = Family::LinearGaussian(LinearGaussian { feature_dim: 2, sigma: 1.0 });
    let truth = GroundTruth::contextual(spec.clone(), theta0.clone(), 1.0)?;
    let problem = Problem::Contextual(spec);
    let uniform = Family::LinearUniform(LinearUniform { feature_dim: 2 });

    for n in [100, 400, 1600] {
        let data = truth_family.sample_dataset(&theta0, n, &mut RngStream::new(3, n as u64), Some(FeatureLaw::UnitCube(2)))?;
        let mut line = format!("n = {n:>4}");
        for (label, fam) in [("gauss", &truth_family), ("uniform", &uniform)] {
            let e = eto(&problem, fam, &data)?;
            let i = ieo(&problem, fam, &data)?;
            line += &format!(
                "  [{label}] ETO {:.4} IEO {:.4}",
                truth.regret(&e.decision.w)?,
                truth.regret(&i.decision.w)?
            );
        }
        println!("{line}");
    }
    Ok(())
}
