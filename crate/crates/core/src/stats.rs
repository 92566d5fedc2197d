//! Seeded random streams and standard-normal primitives.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream id for replication `rep` at sample size `n`.
pub fn replication_stream(n: usize, rep: usize) -> u64 {
    mix64(((n as u64) << 32) ^ rep as u64)
}

/// A deterministic random stream identified by `(master_seed, stream_id)`.
///
/// The generator is ChaCha8 keyed with `mix64(master) ^ mix64(id)`; two
/// streams with the same pair replay identically.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let key = mix64(master_seed) ^ mix64(stream_id);
        Self { master_seed, stream_id, rng: ChaCha8Rng::seed_from_u64(key) }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream; useful when one replication needs independent sub-streams.
    pub fn derive(&self, salt: u64) -> Self {
        Self::new(self.master_seed, mix64(self.stream_id ^ mix64(salt)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn std_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self, mu: f64, sigma: f64) -> Result<f64> {
        sample_normal(self, mu, sigma)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        sample_uniform(self, lo, hi)
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large x.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile probability {p} outside (0,1)")));
    }
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // erfc_inv is already close; a couple of Newton steps polish it
    for _ in 0..3 {
        let d = norm_pdf(x);
        if d < 1e-300 {
            break;
        }
        let err = if p < 0.5 { norm_cdf(x) - p } else { (1.0 - p) - norm_sf(x) };
        let step = err / d;
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}

/// E[(Z − d)⁺] for Z ~ N(0,1).
pub fn normal_loss(d: f64) -> f64 {
    (norm_pdf(d) - d * norm_sf(d)).max(0.0)
}

pub fn sample_normal(rng: &mut RngStream, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(mu + sigma * rng.std_normal())
}

pub fn sample_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::Domain(format!("uniform bounds need lo < hi, got [{lo}, {hi})")));
    }
    let u = lo + (hi - lo) * rng.unit();
    // guard the rounding edge so the half-open contract holds
    Ok(if u >= hi { lo } else { u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Φ(x) = ½ + φ(x) Σ_k x^{2k+1}/(2k+1)!!, all terms positive for x > 0.
    fn cdf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= x * x / (2.0 * k + 1.0);
            sum += term;
            k += 1.0;
            if k > 2000.0 {
                break;
            }
        }
        0.5 + norm_pdf(x) * sum
    }

    #[test]
    fn pdf_values() {
        assert!((norm_pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert!((norm_pdf(1.0) - 0.241_970_724_5).abs() < 1e-9);
        assert_eq!(norm_pdf(1.7), norm_pdf(-1.7));
    }

    #[test]
    fn cdf_against_series_oracle() {
        let mut x = -8.0;
        while x <= 8.0 {
            let err = (norm_cdf(x) - cdf_series(x)).abs();
            assert!(err <= 1e-12, "x={x} err={err}");
            x += 0.05;
        }
        assert_eq!(norm_cdf(0.0), 0.5);
    }

    #[test]
    fn fractile_five_sixths() {
        // bisection oracle on the series cdf
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if cdf_series(mid) < 5.0 / 6.0 { lo = mid } else { hi = mid }
        }
        let q = norm_quantile(5.0 / 6.0).unwrap();
        assert!((q - lo).abs() < 1e-12);
        assert!((q - 0.967_421_6).abs() < 1e-6);
        assert!((norm_cdf(0.967_421_6) - 5.0 / 6.0).abs() < 1e-6);
        assert_eq!(norm_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_domain() {
        assert!(norm_quantile(0.0).is_err());
        assert!(norm_quantile(1.0).is_err());
        assert!(norm_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_precision_grid() {
        for &p in &[1e-8, 1e-6, 1e-3, 0.02, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-8] {
            let x = norm_quantile(p).unwrap();
            assert!((norm_cdf(x) - p).abs() <= 1e-12, "p={p}");
        }
        assert!((norm_quantile(norm_cdf(1.3)).unwrap() - 1.3).abs() < 1e-9);
    }

    #[test]
    fn loss_values() {
        assert!((normal_loss(0.0) - 0.398_942_3).abs() < 1e-7);
        assert!(normal_loss(8.0) <= 1e-12);
        for &d in &[-3.0, -0.4, 0.0, 1.1, 2.5] {
            // L(d) − L̄(d) = −d with L̄(d) = E[(d−Z)⁺] = L(−d)
            assert!((normal_loss(d) - normal_loss(-d) + d).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_convex_and_decreasing() {
        let h = 1e-3;
        let mut d = -6.0;
        while d < 6.0 {
            let second = normal_loss(d + h) - 2.0 * normal_loss(d) + normal_loss(d - h);
            assert!(second >= -1e-8);
            assert!(normal_loss(d + h) < normal_loss(d));
            d += 0.01;
        }
    }

    #[test]
    fn stream_determinism_and_independence() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let va: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..64).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
        assert_eq!(a.master_seed(), 7);
        assert_eq!(a.stream_id(), 3);
    }

    #[test]
    fn normal_sampling() {
        let mut r = RngStream::new(1, 1);
        assert!(sample_normal(&mut r, 0.0, 0.0).is_err());
        for _ in 0..1000 {
            let z = r.normal(3.0, 1e-4).unwrap();
            assert!((2.99..=3.01).contains(&z));
        }
        let m = 1_000_000;
        let mut below = 0usize;
        let mut sum = 0.0;
        for _ in 0..m {
            let z = r.std_normal();
            sum += z;
            if z <= 0.9674 {
                below += 1;
            }
        }
        assert!((sum / m as f64).abs() < 5.0 / 1e3);
        assert!((below as f64 / m as f64 - 5.0 / 6.0).abs() < 0.002);
        let x1 = RngStream::new(9, 9).normal(0.0, 1.0).unwrap();
        let x2 = RngStream::new(9, 9).normal(0.0, 1.0).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn uniform_sampling() {
        let mut r = RngStream::new(2, 0);
        assert!(r.uniform(1.0, 1.0).is_err());
        let m = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..m {
            let u = r.uniform(0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / m as f64 - 0.5).abs() < 0.002);
    }

    proptest! {
        #[test]
        fn cdf_quantile_round_trip(x in -6.0f64..6.0) {
            let back = norm_quantile(norm_cdf(x)).unwrap();
            prop_assert!((back - x).abs() <= 1e-8);
        }

        #[test]
        fn cdf_symmetry(x in -10.0f64..10.0) {
            prop_assert!((norm_cdf(x) - (1.0 - norm_cdf(-x))).abs() < 1e-15);
        }

        #[test]
        fn replay(master in any::<u64>(), id in any::<u64>()) {
            let mut a = RngStream::new(master, id);
            let mut b = a.clone();
            let _ = b.next_u64();
            let mut c = RngStream::new(master, id);
            let first = a.next_u64();
            prop_assert_eq!(first, c.next_u64());
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
