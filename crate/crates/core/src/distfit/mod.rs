//! Parametric velocity families: Gaussian, GEV (with Gumbel as its `k = 0`
//! member), lognormal and logistic.
//!
//! GEV shape follows the convention `t(x) = (1 + k (x - mu)/sigma)^(-1/k)`:
//! `k < 0` bounds the support from above at `mu - sigma/k`, `k > 0` bounds it
//! from below at the same point.

mod fit;
pub mod gev;
mod simplex;

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

pub use fit::{fit, fit_mle, rank_models, rank_models_with, FitFailure, FitMethod, FitResult, Ranking, MIN_FIT_SAMPLES};
pub use simplex::{minimize, Minimum, SimplexOptions};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Gev,
    Gumbel,
    Lognormal,
    Logistic,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Gaussian,
        Family::Gev,
        Family::Gumbel,
        Family::Lognormal,
        Family::Logistic,
    ];

    pub fn n_params(self) -> usize {
        match self {
            Family::Gev => 3,
            _ => 2,
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Family::Gaussian | Family::Logistic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Gev => "gev",
            Family::Gumbel => "gumbel",
            Family::Lognormal => "lognormal",
            Family::Logistic => "logistic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "gev" => Ok(Family::Gev),
            "gumbel" => Ok(Family::Gumbel),
            "lognormal" => Ok(Family::Lognormal),
            "logistic" => Ok(Family::Logistic),
            other => Err(format!("unknown family `{other}`")),
        }
    }
}

/// Location, scale and (GEV only) shape. For the lognormal, `mu` and `sigma`
/// live on the log-km/hr axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub mu: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

impl Params {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma, k: None }
    }

    pub fn gev(mu: f64, sigma: f64, k: f64) -> Self {
        Self { mu, sigma, k: Some(k) }
    }
}

/// A family with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dist {
    family: Family,
    params: Params,
}

impl Dist {
    pub fn new(family: Family, params: Params) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidParams { family, reason };
        if !params.mu.is_finite() {
            return Err(invalid(format!("location must be finite, got {}", params.mu)));
        }
        if !(params.sigma.is_finite() && params.sigma > 0.0) {
            return Err(invalid(format!("scale must be positive, got {}", params.sigma)));
        }
        match (family, params.k) {
            (Family::Gev, Some(k)) if k.is_finite() => {}
            (Family::Gev, Some(k)) => return Err(invalid(format!("shape must be finite, got {k}"))),
            (Family::Gev, None) => return Err(invalid("shape k is required".into())),
            (_, Some(_)) => return Err(invalid("shape k only applies to gev".into())),
            (_, None) => {}
        }
        Ok(Self { family, params })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Gaussian, Params::new(mu, sigma))
    }

    pub fn gev(mu: f64, sigma: f64, k: f64) -> Result<Self> {
        Self::new(Family::Gev, Params::gev(mu, sigma, k))
    }

    pub fn gumbel(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Gumbel, Params::new(mu, sigma))
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal, Params::new(mu, sigma))
    }

    pub fn logistic(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Logistic, Params::new(mu, sigma))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> Params {
        self.params
    }

    fn shape(&self) -> f64 {
        self.params.k.unwrap_or(0.0)
    }

    /// GEV with negligible shape is evaluated as Gumbel.
    fn effective_family(&self) -> Family {
        match self.family {
            Family::Gev if gev::uses_gumbel_branch(self.shape()) => Family::Gumbel,
            f => f,
        }
    }

    /// Closed support interval; infinite ends where unbounded.
    pub fn support(&self) -> (f64, f64) {
        let Params { mu, sigma, .. } = self.params;
        match self.effective_family() {
            Family::Lognormal => (0.0, f64::INFINITY),
            Family::Gev => {
                let k = self.shape();
                let end = mu - sigma / k;
                if k > 0.0 {
                    (end, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, end)
                }
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let Params { mu, sigma, .. } = self.params;
        match self.effective_family() {
            Family::Gaussian => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
            }
            Family::Lognormal => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                let z = (lx - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI - lx
            }
            Family::Logistic => {
                let z = ((x - mu) / sigma).abs();
                -z - 2.0 * (-z).exp().ln_1p() - sigma.ln()
            }
            Family::Gumbel => gev::ln_pdf_gumbel_branch(x, mu, sigma),
            Family::Gev => gev::ln_pdf_general_branch(x, mu, sigma, self.shape()),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let Params { mu, sigma, .. } = self.params;
        match self.effective_family() {
            Family::Gaussian => std_normal_cdf((x - mu) / sigma),
            Family::Lognormal => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Family::Logistic => 1.0 / (1.0 + (-(x - mu) / sigma).exp()),
            Family::Gumbel => (-(-(x - mu) / sigma).exp()).exp(),
            Family::Gev => match gev::ln_t_general((x - mu) / sigma, self.shape()) {
                Some(ln_t) => (-ln_t.exp()).exp(),
                None if self.shape() > 0.0 => 0.0,
                None => 1.0,
            },
        }
    }

    /// Survival function `1 - cdf(x)`, computed without cancellation in the
    /// upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let Params { mu, sigma, .. } = self.params;
        match self.effective_family() {
            Family::Gaussian => std_normal_cdf(-(x - mu) / sigma),
            Family::Lognormal => {
                if x <= 0.0 {
                    1.0
                } else {
                    std_normal_cdf(-(x.ln() - mu) / sigma)
                }
            }
            Family::Logistic => 1.0 / (1.0 + ((x - mu) / sigma).exp()),
            Family::Gumbel => -(-(-(x - mu) / sigma).exp()).exp_m1(),
            Family::Gev => match gev::ln_t_general((x - mu) / sigma, self.shape()) {
                Some(ln_t) => -(-ln_t.exp()).exp_m1(),
                None if self.shape() > 0.0 => 1.0,
                None => 0.0,
            },
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityDomain(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        let Params { mu, sigma, .. } = self.params;
        match self.effective_family() {
            Family::Gaussian => mu + sigma * std_normal_quantile(p),
            Family::Lognormal => (mu + sigma * std_normal_quantile(p)).exp(),
            Family::Logistic => mu + sigma * (p.ln() - (-p).ln_1p()),
            Family::Gumbel => mu - sigma * (-p.ln()).ln(),
            Family::Gev => {
                let k = self.shape();
                let ln_t = (-p.ln()).ln();
                mu + sigma * (-k * ln_t).exp_m1() / k
            }
        }
    }

    /// Inverse-transform draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_unchecked(u)
    }
}

pub fn pdf(family: Family, params: Params, x: f64) -> Result<f64> {
    Ok(Dist::new(family, params)?.pdf(x))
}

pub fn cdf(family: Family, params: Params, x: f64) -> Result<f64> {
    Ok(Dist::new(family, params)?.cdf(x))
}

pub fn quantile(family: Family, params: Params, p: f64) -> Result<f64> {
    Dist::new(family, params)?.quantile(p)
}

pub fn sample(family: Family, params: Params, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(Dist::new(family, params)?.sample(n, seed))
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile: `erfc_inv` start plus Newton steps on the
/// lower tail. Upper-tail probabilities are reflected (`1 - p` is exact for
/// `p >= 0.5`).
pub fn std_normal_quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -std_normal_quantile(1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let dens = std_normal_pdf(z);
        if dens <= 0.0 {
            break;
        }
        // Newton on ln Φ keeps relative precision deep in the tail.
        let cdf = std_normal_cdf(z);
        let step = (cdf.ln() - p.ln()) * cdf / dens;
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_gaussian() -> Dist {
        Dist::gaussian(76.9, 13.8).unwrap()
    }

    fn table1_gev() -> Dist {
        Dist::gev(71.1, 12.5, -0.125).unwrap()
    }

    #[test]
    fn gaussian_peak() {
        let d = table1_gaussian();
        assert!((d.pdf(76.9) - 1.0 / (13.8 * (2.0 * PI).sqrt())).abs() < 1e-15);
        assert!((d.pdf(76.9) - 0.028_908_86).abs() < 1e-8);
        assert_eq!(d.cdf(76.9), 0.5);
    }

    #[test]
    fn gev_at_location() {
        let d = table1_gev();
        assert!((d.pdf(71.1) - (-1.0f64).exp() / 12.5).abs() < 1e-15);
        assert!((d.pdf(71.1) - 0.029430).abs() < 5e-7);
        assert!((d.cdf(71.1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gev_support_is_upper_bounded_for_negative_shape() {
        let d = table1_gev();
        let (lo, hi) = d.support();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert!((hi - 171.1).abs() < 1e-12);
        assert_eq!(d.pdf(171.2), 0.0);
        assert_eq!(d.cdf(171.2), 1.0);
        assert_eq!(d.sf(171.2), 0.0);
        let frechet = Dist::gev(0.0, 1.0, 0.5).unwrap();
        assert_eq!(frechet.support().0, -2.0);
        assert_eq!(frechet.pdf(-2.5), 0.0);
        assert_eq!(frechet.cdf(-2.5), 0.0);
    }

    #[test]
    fn logistic_values() {
        let d = Dist::logistic(0.0, 7.95).unwrap();
        assert!((d.pdf(0.0) - 1.0 / (4.0 * 7.95)).abs() < 1e-15);
        assert!((d.pdf(0.0) - 0.031447).abs() < 5e-7);
        assert!((d.cdf(9.0) - 0.7565).abs() < 5e-4);
        assert_eq!(d.cdf(0.0), 0.5);
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
        // sech² form
        let x = 3.3f64;
        let sech = 1.0 / (x / (2.0 * 7.95)).cosh();
        assert!((d.pdf(x) - sech * sech / (4.0 * 7.95)).abs() < 1e-15);
    }

    #[test]
    fn gumbel_at_location() {
        let d = Dist::gumbel(5.0, 2.0).unwrap();
        assert!((d.cdf(5.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_975_quantile() {
        let q = table1_gaussian().quantile(0.975).unwrap();
        assert!((q - (76.9 + 1.959_963_984_540_054 * 13.8)).abs() < 1e-9);
    }

    #[test]
    fn quantile_domain() {
        let d = table1_gaussian();
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(d.quantile(p), Err(Error::ProbabilityDomain(_))));
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Dist::gaussian(0.0, 0.0).is_err());
        assert!(Dist::gaussian(f64::NAN, 1.0).is_err());
        assert!(Dist::new(Family::Gev, Params::new(0.0, 1.0)).is_err());
        assert!(Dist::new(Family::Logistic, Params::gev(0.0, 1.0, 0.1)).is_err());
        assert!(pdf(Family::Gumbel, Params::new(0.0, -1.0), 0.0).is_err());
    }

    #[test]
    fn sample_deterministic_and_empty() {
        let d = table1_gev();
        assert!(d.sample(0, 1).is_empty());
        assert_eq!(d.sample(100, 42), d.sample(100, 42));
        assert_ne!(d.sample(100, 42), d.sample(100, 43));
        assert!(d.sample(10_000, 7).iter().all(|&x| x < 171.1));
    }

    #[test]
    fn lognormal_support() {
        let d = Dist::lognormal(4.3, 0.2).unwrap();
        assert_eq!(d.pdf(-1.0), 0.0);
        assert_eq!(d.cdf(0.0), 0.0);
        assert!(d.sample(1000, 3).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn normal_quantile_tails() {
        for p in [1e-300, 1e-20, 1e-8, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-12] {
            let z = std_normal_quantile(p);
            let back = std_normal_cdf(z);
            assert!(((back - p) / p).abs() < 1e-10, "p={p} z={z} back={back}");
        }
    }
}
