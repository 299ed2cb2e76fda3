//! Maximum-likelihood (and optional CDF least-squares) fitting, plus RMSE
//! ranking across families.

use serde::{Deserialize, Serialize};

use super::simplex::{minimize, SimplexOptions};
use super::{Dist, Family, Params};
use crate::empirical::{rmse_cdf, EmpiricalCdf};
use crate::error::{Error, Result};

/// Minimum sample count for the iteratively fitted families.
pub const MIN_FIT_SAMPLES: usize = 8;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[default]
    MaximumLikelihood,
    /// Minimize the CDF RMSE directly, starting from the MLE. For sensitivity
    /// checks only.
    CdfLeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    #[serde(flatten)]
    pub params: Params,
    pub log_likelihood: f64,
    pub rmse: f64,
    pub n: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn dist(&self) -> Result<Dist> {
        Dist::new(self.family, self.params)
    }
}

pub fn fit_mle(samples: &[f64], family: Family) -> Result<FitResult> {
    fit(samples, family, FitMethod::MaximumLikelihood)
}

pub fn fit(samples: &[f64], family: Family, method: FitMethod) -> Result<FitResult> {
    let n = samples.len();
    let needed = match family {
        Family::Gaussian | Family::Lognormal => 2,
        _ => MIN_FIT_SAMPLES,
    };
    if n < needed {
        return Err(Error::TooFewSamples { needed, got: n });
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::SampleDomain { family, reason: format!("finite samples, got {bad}") });
    }
    if family == Family::Lognormal {
        if let Some(bad) = samples.iter().find(|&&x| x <= 0.0) {
            return Err(Error::SampleDomain { family, reason: format!("positive samples, got {bad}") });
        }
    }

    let (mean, sd) = mean_sd(samples);
    if !(sd > 0.0) {
        return Err(Error::SampleDomain { family, reason: "samples with nonzero spread".into() });
    }

    let (params, converged) = match family {
        Family::Gaussian => (Params::new(mean, sd), true),
        Family::Lognormal => {
            let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
            let (m, s) = mean_sd(&logs);
            if !(s > 0.0) {
                return Err(Error::SampleDomain { family, reason: "samples with nonzero spread".into() });
            }
            (Params::new(m, s), true)
        }
        Family::Logistic => {
            let s0 = sd * 3f64.sqrt() / std::f64::consts::PI;
            let start = Params::new(mean, s0);
            let (p, converged) = simplex_mle(samples, family, start, s0);
            (polish_logistic(samples, p), converged)
        }
        Family::Gumbel => {
            let s0 = sd * 6f64.sqrt() / std::f64::consts::PI;
            let start = Params::new(mean - EULER_GAMMA * s0, s0);
            simplex_mle(samples, family, start, s0)
        }
        Family::Gev => {
            let s0 = sd * 6f64.sqrt() / std::f64::consts::PI;
            let start = Params::gev(mean - EULER_GAMMA * s0, s0, 0.0);
            simplex_mle(samples, family, start, s0)
        }
    };

    let ecdf = EmpiricalCdf::new(samples)?;
    let (params, converged) = match method {
        FitMethod::MaximumLikelihood => (params, converged),
        FitMethod::CdfLeastSquares => least_squares(&ecdf, family, params),
    };
    let dist = Dist::new(family, params)?;
    Ok(FitResult {
        family,
        params,
        log_likelihood: log_likelihood(&dist, samples),
        rmse: rmse_cdf(|x| dist.cdf(x), &ecdf),
        n,
        converged,
    })
}

pub(crate) fn log_likelihood(dist: &Dist, samples: &[f64]) -> f64 {
    samples.iter().map(|&x| dist.ln_pdf(x)).sum()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// Search coordinates: (mu, ln sigma[, k]).
fn to_coords(p: &Params) -> Vec<f64> {
    let mut v = vec![p.mu, p.sigma.ln()];
    if let Some(k) = p.k {
        v.push(k);
    }
    v
}

fn from_coords(family: Family, c: &[f64]) -> Params {
    match family {
        Family::Gev => Params::gev(c[0], c[1].exp(), c[2]),
        _ => Params::new(c[0], c[1].exp()),
    }
}

fn steps(family: Family, scale: f64) -> Vec<f64> {
    let mut s = vec![0.1 * scale, 0.1];
    if family == Family::Gev {
        s.push(0.05);
    }
    s
}

fn simplex_mle(samples: &[f64], family: Family, start: Params, scale: f64) -> (Params, bool) {
    let nll = |c: &[f64]| match Dist::new(family, from_coords(family, c)) {
        Ok(d) => -log_likelihood(&d, samples),
        Err(_) => f64::INFINITY,
    };
    let m = minimize(nll, &to_coords(&start), &steps(family, scale), &SimplexOptions::default());
    (from_coords(family, &m.x), m.converged && m.value.is_finite())
}

/// Newton steps on the logistic log-likelihood from the simplex optimum.
/// The simplex stops at its coordinate tolerance; the analytic score and
/// Hessian take the estimate the rest of the way. A step is kept unless it
/// lowers the likelihood by more than summation noise.
fn polish_logistic(samples: &[f64], start: Params) -> Params {
    let ll = |p: Params| Dist::new(Family::Logistic, p).map_or(f64::NEG_INFINITY, |d| log_likelihood(&d, samples));
    let mut p = start;
    let mut best = ll(p);
    for _ in 0..8 {
        let s = p.sigma;
        let (mut gm, mut gs, mut hmm, mut hms, mut hss) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &x in samples {
            let z = (x - p.mu) / s;
            let t = (0.5 * z).tanh();
            let q = 1.0 - t * t;
            gm += t;
            gs += z * t - 1.0;
            hmm -= 0.5 * q;
            hms -= 0.5 * z * q + t;
            hss += 1.0 - 2.0 * z * t - 0.5 * z * z * q;
        }
        let (gm, gs) = (gm / s, gs / s);
        let (hmm, hms, hss) = (hmm / (s * s), hms / (s * s), hss / (s * s));
        let det = hmm * hss - hms * hms;
        // Only a negative-definite Hessian gives an ascent direction.
        if !(hmm < 0.0 && det > 0.0) {
            break;
        }
        let dm = -(hss * gm - hms * gs) / det;
        let ds = -(hmm * gs - hms * gm) / det;
        let next = Params::new(p.mu + dm, s + ds);
        if !(next.sigma > 0.0) {
            break;
        }
        let value = ll(next);
        if !(value >= best - 1e-12 * best.abs()) {
            break;
        }
        p = next;
        best = best.max(value);
        if dm.abs() <= 1e-15 * s && ds.abs() <= 1e-15 * s {
            break;
        }
    }
    p
}

fn least_squares(ecdf: &EmpiricalCdf, family: Family, start: Params) -> (Params, bool) {
    let objective = |c: &[f64]| match Dist::new(family, from_coords(family, c)) {
        Ok(d) => rmse_cdf(|x| d.cdf(x), ecdf),
        Err(_) => f64::INFINITY,
    };
    let scale = if family == Family::Lognormal { 1.0 } else { start.sigma };
    let m = minimize(objective, &to_coords(&start), &steps(family, scale), &SimplexOptions::default());
    (from_coords(family, &m.x), m.converged && m.value.is_finite())
}

#[derive(Debug)]
pub struct FitFailure {
    pub family: Family,
    pub error: Error,
}

/// Fits sorted by RMSE (ties: fewer parameters, then family order), with
/// per-family failures kept aside instead of aborting the ranking.
#[derive(Debug, Default)]
pub struct Ranking {
    pub fits: Vec<FitResult>,
    pub failures: Vec<FitFailure>,
}

pub fn rank_models(samples: &[f64], families: &[Family]) -> Ranking {
    rank_models_with(samples, families, FitMethod::MaximumLikelihood)
}

pub fn rank_models_with(samples: &[f64], families: &[Family], method: FitMethod) -> Ranking {
    let mut ranking = Ranking::default();
    for &family in families {
        match fit(samples, family, method) {
            Ok(r) => ranking.fits.push(r),
            Err(error) => ranking.failures.push(FitFailure { family, error }),
        }
    }
    ranking.fits.sort_by(|a, b| {
        a.rmse
            .total_cmp(&b.rmse)
            .then(a.family.n_params().cmp(&b.family.n_params()))
            .then(a.family.cmp(&b.family))
    });
    ranking
}
