//! Relative velocity between consecutive same-lane vehicles: sample
//! construction, fitted difference laws, the equal-scale Gumbel difference
//! (which is logistic), and a numerical cross-correlation for everything else.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distfit::{self, gev, Dist, Family, FitResult, Params, MIN_FIT_SAMPLES};
use crate::error::{Error, Result};
use crate::ingest::VelocitySample;

/// Fitted location below this fraction of the scale counts as centered.
pub const SYMMETRY_FRACTION: f64 = 0.05;

/// Minimum tabulation size for [`difference_numeric`].
pub const MIN_GRID_POINTS: usize = 256;

/// Largest probability mass a difference grid may leave outside its range.
pub const MAX_TAIL_MASS: f64 = 1e-4;

const TAIL_PROB: f64 = 1e-14;
const QUAD_INTERVALS: usize = 4096;

/// Law of the signed velocity difference Δv (km/hr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RelVelRepr", into = "RelVelRepr")]
pub enum RelVelModel {
    Closed { dist: Dist, symmetric: bool },
    Grid(GridDensity),
}

impl RelVelModel {
    /// Closed-form model; flagged symmetric when the family is symmetric and
    /// centered at exactly zero.
    pub fn closed(dist: Dist) -> Self {
        let symmetric = dist.family().is_symmetric() && dist.params().mu == 0.0;
        RelVelModel::Closed { dist, symmetric }
    }

    pub fn logistic(mu: f64, sigma: f64) -> Result<Self> {
        Ok(Self::closed(Dist::logistic(mu, sigma)?))
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Ok(Self::closed(Dist::gaussian(mu, sigma)?))
    }

    /// Whether `pdf(x) == pdf(-x)` is assumed downstream.
    pub fn is_symmetric(&self) -> bool {
        match self {
            RelVelModel::Closed { symmetric, .. } => *symmetric,
            RelVelModel::Grid(g) => g.symmetric,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            RelVelModel::Closed { dist, .. } => dist.pdf(x),
            RelVelModel::Grid(g) => g.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            RelVelModel::Closed { dist, .. } => dist.cdf(x),
            RelVelModel::Grid(g) => g.cdf(x),
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        match self {
            RelVelModel::Closed { dist, .. } => dist.sf(x),
            RelVelModel::Grid(g) => 1.0 - g.cdf(x),
        }
    }

    /// Inverse CDF for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            RelVelModel::Closed { dist, .. } => dist.quantile_unchecked(p),
            RelVelModel::Grid(g) => g.quantile(p),
        }
    }

    pub fn label(&self) -> String {
        match self {
            RelVelModel::Closed { dist, .. } => {
                let p = dist.params();
                format!("{}({},{})", dist.family(), p.mu, p.sigma)
            }
            RelVelModel::Grid(g) => format!("grid({}pts)", g.xs.len()),
        }
    }
}

/// Tabulated density, linear between nodes and zero outside. The CDF is the
/// exact integral of that piecewise-linear density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    xs: Vec<f64>,
    density: Vec<f64>,
    cum: Vec<f64>,
    symmetric: bool,
}

impl GridDensity {
    /// Builds a grid model, renormalizing so the density integrates to one.
    pub fn new(xs: Vec<f64>, density: Vec<f64>, symmetric: bool) -> Result<Self> {
        if xs.len() < 2 || xs.len() != density.len() {
            return Err(Error::InvalidGrid(format!(
                "need matching x/density columns with at least 2 points (got {} and {})",
                xs.len(),
                density.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("x must be finite and strictly increasing".into()));
        }
        if density.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::InvalidGrid("density must be finite and nonnegative".into()));
        }
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        for i in 1..xs.len() {
            let area = 0.5 * (density[i] + density[i - 1]) * (xs[i] - xs[i - 1]);
            cum.push(cum[i - 1] + area);
        }
        let total = *cum.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::InvalidGrid("density has zero mass".into()));
        }
        let density = density.into_iter().map(|f| f / total).collect();
        let cum = cum.into_iter().map(|c| c / total).collect();
        Ok(Self { xs, density, cum, symmetric })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.density.iter().copied())
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn cell(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.bounds();
        if !(x >= lo && x <= hi) {
            return None;
        }
        Some(self.xs.partition_point(|&v| v <= x).saturating_sub(1).min(self.xs.len() - 2))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.cell(x) {
            None => 0.0,
            Some(i) => {
                let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
                self.density[i] + w * (self.density[i + 1] - self.density[i])
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.xs[0] {
            return 0.0;
        }
        match self.cell(x) {
            None => 1.0,
            Some(i) => {
                let fx = self.pdf(x);
                (self.cum[i] + 0.5 * (self.density[i] + fx) * (x - self.xs[i])).min(1.0)
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.xs.len();
        let i = self.cum.partition_point(|&c| c <= p).clamp(1, n - 1) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let f0 = self.density[i];
        let slope = (self.density[i + 1] - f0) / h;
        let r = (p - self.cum[i]).max(0.0);
        // Root of slope/2 u^2 + f0 u = r, in the cancellation-free form.
        let disc = (f0 * f0 + 2.0 * slope * r).max(0.0);
        let denom = f0 + disc.sqrt();
        let u = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.xs[i] + u.clamp(0.0, h)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Closed,
    Grid,
}

#[derive(Serialize, Deserialize)]
struct RelVelRepr {
    kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<[f64; 2]>>,
    symmetric: bool,
}

impl From<RelVelModel> for RelVelRepr {
    fn from(m: RelVelModel) -> Self {
        match m {
            RelVelModel::Closed { dist, symmetric } => {
                let p = dist.params();
                RelVelRepr {
                    kind: ModelKind::Closed,
                    family: Some(dist.family()),
                    mu: Some(p.mu),
                    sigma: Some(p.sigma),
                    k: p.k,
                    grid: None,
                    symmetric,
                }
            }
            RelVelModel::Grid(g) => RelVelRepr {
                kind: ModelKind::Grid,
                family: None,
                mu: None,
                sigma: None,
                k: None,
                grid: Some(g.points().map(|(x, f)| [x, f]).collect()),
                symmetric: g.symmetric,
            },
        }
    }
}

impl TryFrom<RelVelRepr> for RelVelModel {
    type Error = String;

    fn try_from(r: RelVelRepr) -> std::result::Result<Self, String> {
        match r.kind {
            ModelKind::Closed => {
                let (family, mu, sigma) = match (r.family, r.mu, r.sigma) {
                    (Some(f), Some(m), Some(s)) => (f, m, s),
                    _ => return Err("closed model needs family, mu and sigma".into()),
                };
                let dist = Dist::new(family, Params { mu, sigma, k: r.k }).map_err(|e| e.to_string())?;
                Ok(RelVelModel::Closed { dist, symmetric: r.symmetric })
            }
            ModelKind::Grid => {
                let grid = r.grid.ok_or("grid model needs `grid`")?;
                let (xs, fs) = grid.into_iter().map(|[x, f]| (x, f)).unzip();
                GridDensity::new(xs, fs, r.symmetric)
                    .map(RelVelModel::Grid)
                    .map_err(|e| e.to_string())
            }
        }
    }
}

/// `v[i+1] - v[i]` for time-adjacent vehicles in the same lane. Lanes are
/// visited in lane-id order.
pub fn consecutive_differences(samples: &[VelocitySample]) -> Vec<f64> {
    let mut lanes: BTreeMap<&str, Vec<&VelocitySample>> = BTreeMap::new();
    for s in samples {
        lanes.entry(s.lane_id.as_str()).or_default().push(s);
    }
    let mut out = Vec::with_capacity(samples.len());
    for (_, mut lane) in lanes {
        lane.sort_by(|a, b| a.time.total_cmp(&b.time));
        out.extend(lane.windows(2).map(|w| w[1].velocity - w[0].velocity));
    }
    out
}

fn gumbel_like(p: &Params) -> bool {
    p.k.is_none_or(gev::uses_gumbel_branch)
}

/// X_a - X_b for independent equal-scale Gumbels is logistic with location
/// `mu_a - mu_b` and the common scale.
pub fn gumbel_difference_model(a: Params, b: Params) -> Result<RelVelModel> {
    for p in [&a, &b] {
        if !gumbel_like(p) {
            return Err(Error::InvalidParams {
                family: Family::Gumbel,
                reason: format!("shape {:?} is not zero", p.k),
            });
        }
        Dist::gumbel(p.mu, p.sigma)?;
    }
    if ((a.sigma - b.sigma) / a.sigma.max(b.sigma)).abs() > 1e-9 {
        return Err(Error::UnequalScales { a: a.sigma, b: b.sigma });
    }
    RelVelModel::logistic(a.mu - b.mu, a.sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelVelFit {
    pub model: RelVelModel,
    pub fit: FitResult,
}

/// Fits a logistic or Gaussian law to signed differences.
pub fn fit_relvel(differences: &[f64], family: Family) -> Result<RelVelFit> {
    if !matches!(family, Family::Logistic | Family::Gaussian) {
        return Err(Error::UnsupportedFamily { family, context: "relative velocity" });
    }
    if differences.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_FIT_SAMPLES, got: differences.len() });
    }
    let fit = distfit::fit_mle(differences, family)?;
    let dist = fit.dist()?;
    let symmetric = fit.params.mu.abs() < SYMMETRY_FRACTION * fit.params.sigma;
    Ok(RelVelFit { model: RelVelModel::Closed { dist, symmetric }, fit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn nodes(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.n_points - 1) as f64;
        (0..self.n_points).map(|i| self.lo + step * i as f64).collect()
    }
}

fn nominal_scale(d: &Dist) -> f64 {
    match d.family() {
        Family::Lognormal => {
            (d.quantile_unchecked(0.75) - d.quantile_unchecked(0.25)) / 1.348_979_500_392_163_4
        }
        _ => d.params().sigma,
    }
}

/// Composite Simpson over `[lo, hi]` with an even number of intervals.
fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, intervals: usize) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let h = (hi - lo) / intervals as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + h * i as f64);
    }
    acc * h / 3.0
}

/// Density of `X_a - X_b` for independent `X_a`, `X_b`, by numerical
/// cross-correlation `g(z) = ∫ f_a(z + y) f_b(y) dy` on a uniform grid.
pub fn difference_numeric(a: &Dist, b: &Dist, grid: GridSpec) -> Result<RelVelModel> {
    if grid.n_points < MIN_GRID_POINTS {
        return Err(Error::InvalidGrid(format!(
            "need at least {MIN_GRID_POINTS} points, got {}",
            grid.n_points
        )));
    }
    if !(grid.lo.is_finite() && grid.hi.is_finite() && grid.hi > grid.lo) {
        return Err(Error::InvalidGrid(format!("bad bounds [{}, {}]", grid.lo, grid.hi)));
    }

    let (a_lo, a_hi) = (a.quantile_unchecked(TAIL_PROB), a.quantile_unchecked(1.0 - TAIL_PROB));
    let (b_lo, b_hi) = (b.quantile_unchecked(TAIL_PROB), b.quantile_unchecked(1.0 - TAIL_PROB));

    let below = simpson(|y| b.pdf(y) * a.cdf(grid.lo + y), b_lo, b_hi, QUAD_INTERVALS);
    let above = simpson(|y| b.pdf(y) * a.sf(grid.hi + y), b_lo, b_hi, QUAD_INTERVALS);
    let tail_mass = below + above;
    if tail_mass > MAX_TAIL_MASS {
        let center = a.quantile_unchecked(0.5) - b.quantile_unchecked(0.5);
        let half = 8.0 * (nominal_scale(a) + nominal_scale(b));
        return Err(Error::GridTooNarrow {
            lo: grid.lo,
            hi: grid.hi,
            tail_mass,
            suggested_lo: center - half,
            suggested_hi: center + half,
        });
    }

    let xs = grid.nodes();
    let density: Vec<f64> = xs
        .iter()
        .map(|&z| {
            let lo = b_lo.max(a_lo - z);
            let hi = b_hi.min(a_hi - z);
            simpson(|y| a.pdf(z + y) * b.pdf(y), lo, hi, QUAD_INTERVALS)
        })
        .collect();
    let symmetric = a == b;
    Ok(RelVelModel::Grid(GridDensity::new(xs, density, symmetric)?))
}
