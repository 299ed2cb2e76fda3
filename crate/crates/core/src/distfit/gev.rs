//! The two branches of the GEV density, exposed separately so the `k -> 0`
//! switch can be checked against the general formula.

/// Below this `|k|` the Gumbel branch is used.
pub const GUMBEL_SWITCH: f64 = 1e-8;

/// Points closer than this (standardized units) to a finite support endpoint
/// count as outside the support.
pub const ENDPOINT_GUARD: f64 = 1e-12;

pub fn uses_gumbel_branch(k: f64) -> bool {
    k.abs() < GUMBEL_SWITCH
}

/// `ln t(z)` for the `k != 0` branch, `t = (1 + k z)^(-1/k)`, or `None`
/// outside the support.
pub fn ln_t_general(z: f64, k: f64) -> Option<f64> {
    let kz = k * z;
    let s = 1.0 + kz;
    if s <= 0.0 || s / k.abs() <= ENDPOINT_GUARD {
        return None;
    }
    Some(-kz.ln_1p() / k)
}

pub fn ln_pdf_general_branch(x: f64, mu: f64, sigma: f64, k: f64) -> f64 {
    match ln_t_general((x - mu) / sigma, k) {
        Some(ln_t) => (k + 1.0) * ln_t - ln_t.exp() - sigma.ln(),
        None => f64::NEG_INFINITY,
    }
}

pub fn ln_pdf_gumbel_branch(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -z - (-z).exp() - sigma.ln()
}

/// `(1/sigma) t^(k+1) e^(-t)` through the general branch, whatever `k` is.
pub fn pdf_general_branch(x: f64, mu: f64, sigma: f64, k: f64) -> f64 {
    ln_pdf_general_branch(x, mu, sigma, k).exp()
}

pub fn pdf_gumbel_branch(x: f64, mu: f64, sigma: f64) -> f64 {
    ln_pdf_gumbel_branch(x, mu, sigma).exp()
}
