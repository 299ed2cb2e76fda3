//! Seeded Monte Carlo checks for the closed forms and a synthetic dual-loop
//! trace generator.
//!
//! Draw streams are split into fixed-size chunks. Chunk `c` uses the ChaCha8
//! stream `c` under the master seed, so results do not depend on how chunks
//! are scheduled across threads.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::link_duration;
use crate::distfit::{Dist, Family, Params};
use crate::empirical::EmpiricalCdf;
use crate::error::{Error, Result};
use crate::ingest::{write_trace, SensorGeometry, VehicleTransit};
use crate::relvel::RelVelModel;
use crate::units::kmh_to_mps;

pub const DEFAULT_CHUNK_SIZE: usize = 1 << 16;

/// Largest number of `[x, F]` pairs written to a report's `ecdf_grid`.
pub const REPORT_GRID_POINTS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_draws: usize,
    pub seed: u64,
    pub chunk_size: usize,
}

impl SimConfig {
    pub fn new(n_draws: usize, seed: u64) -> Self {
        Self { n_draws, seed, chunk_size: DEFAULT_CHUNK_SIZE }
    }
}

/// Anything that can be sampled by inverse transform.
pub trait InverseCdf: Sync {
    fn inverse_cdf(&self, p: f64) -> f64;
}

impl InverseCdf for Dist {
    fn inverse_cdf(&self, p: f64) -> f64 {
        self.quantile_unchecked(p)
    }
}

impl InverseCdf for RelVelModel {
    fn inverse_cdf(&self, p: f64) -> f64 {
        self.quantile(p)
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// `n_draws` values of `draw`, chunked and run in parallel. Identical output
/// for any thread count.
pub fn chunked_draws<F>(cfg: &SimConfig, draw: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    if cfg.chunk_size == 0 {
        return Err(Error::Config("chunk_size must be at least 1".into()));
    }
    let n_chunks = cfg.n_draws.div_ceil(cfg.chunk_size);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(cfg.seed, c);
            let len = cfg.chunk_size.min(cfg.n_draws - c * cfg.chunk_size);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Kolmogorov–Smirnov distance between an ECDF and a reference CDF. Ties
/// are handled by comparing against both one-sided limits of the step.
pub fn ks_distance<F: Fn(f64) -> f64>(ecdf: &EmpiricalCdf, cdf: F) -> f64 {
    let xs = ecdf.sorted_values();
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n: usize,
    pub seed: u64,
    /// `None` when no draws were made.
    pub ecdf: Option<EmpiricalCdf>,
    pub ks_distance: Option<f64>,
}

impl SimReport {
    fn from_draws(draws: &[f64], seed: u64) -> Result<Self> {
        let ecdf = if draws.is_empty() { None } else { Some(EmpiricalCdf::new(draws)?) };
        Ok(Self { n: draws.len(), seed, ecdf, ks_distance: None })
    }

    /// Attaches the sup-norm distance to `cdf`. Stays `None` for an empty
    /// report.
    pub fn compare<F: Fn(f64) -> f64>(mut self, cdf: F) -> Self {
        self.ks_distance = self.ecdf.as_ref().map(|e| ks_distance(e, cdf));
        self
    }

    /// Up to [`REPORT_GRID_POINTS`] evenly spaced order statistics with their
    /// ECDF values.
    pub fn ecdf_grid(&self) -> Vec<[f64; 2]> {
        let Some(e) = &self.ecdf else { return Vec::new() };
        let xs = e.sorted_values();
        let m = REPORT_GRID_POINTS.min(xs.len());
        let mut grid: Vec<[f64; 2]> = Vec::with_capacity(m);
        for j in 0..m {
            let idx = if m == 1 { xs.len() - 1 } else { j * (xs.len() - 1) / (m - 1) };
            let x = xs[idx];
            if grid.last().is_some_and(|g| g[0] == x) {
                continue;
            }
            grid.push([x, e.eval(x)]);
        }
        grid
    }

    pub fn to_json(&self) -> SimReportJson {
        SimReportJson {
            n: self.n,
            seed: self.seed,
            ks_distance: self.ks_distance,
            ecdf_grid: self.ecdf_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReportJson {
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_distance: Option<f64>,
    pub ecdf_grid: Vec<[f64; 2]>,
}

/// Monte Carlo law of `X_a - X_b` for independent draws.
pub fn mc_relvel(a: &Dist, b: &Dist, cfg: &SimConfig) -> Result<SimReport> {
    let draws = chunked_draws(cfg, |rng| {
        let ua: f64 = rng.sample(Open01);
        let ub: f64 = rng.sample(Open01);
        a.inverse_cdf(ua) - b.inverse_cdf(ub)
    })?;
    SimReport::from_draws(&draws, cfg.seed)
}

/// Raw `t_c = 2R/|Δv|` draws, in draw order.
pub fn duration_draws<M: InverseCdf + ?Sized>(model: &M, range_m: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    if !(range_m.is_finite() && range_m > 0.0) {
        return Err(Error::Config(format!("communication range must be positive, got {range_m}")));
    }
    chunked_draws(cfg, |rng| {
        let u: f64 = rng.sample(Open01);
        link_duration(range_m, model.inverse_cdf(u))
    })
}

pub fn mc_duration<M: InverseCdf + ?Sized>(model: &M, range_m: f64, cfg: &SimConfig) -> Result<SimReport> {
    SimReport::from_draws(&duration_draws(model, range_m, cfg)?, cfg.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    FreeFlow,
    Transition,
    Congested,
}

/// One stretch of synthetic traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub label: RegimeLabel,
    pub velocity_family: Family,
    pub velocity_params: Params,
    /// Vehicles per hour, per lane.
    pub flow_rate: f64,
    /// Mixing weight of the previous vehicle's speed, in [0, 1).
    pub consec_correlation: f64,
    /// Seconds.
    pub duration: f64,
}

/// Placeholder correlation for generated fleets; not an empirical value.
pub const DEFAULT_CORRELATION: f64 = 0.5;

impl RegimeSpec {
    pub fn new(label: RegimeLabel, dist: Dist, flow_rate: f64, duration: f64) -> Self {
        Self {
            label,
            velocity_family: dist.family(),
            velocity_params: dist.params(),
            flow_rate,
            consec_correlation: DEFAULT_CORRELATION,
            duration,
        }
    }

    pub fn with_correlation(mut self, rho: f64) -> Self {
        self.consec_correlation = rho;
        self
    }

    /// A 24-hour day of one-hour regimes: free flow overnight, a morning
    /// jam, and an afternoon breakdown with transition hours at 15:00 and
    /// 17:00 around a 16:00 jam.
    pub fn day_profile() -> Vec<RegimeSpec> {
        use RegimeLabel::*;
        let free = |mu: f64, flow: f64| (FreeFlow, Dist::gaussian(mu, 9.0), flow);
        let jam = |mu: f64, flow: f64| (Congested, Dist::gaussian(mu, 8.0), flow);
        let transition = |flow: f64| (Transition, Dist::gev(71.1, 12.5, -0.125), flow);
        let hours = [
            free(108.0, 300.0),
            free(108.0, 250.0),
            free(109.0, 200.0),
            free(109.0, 200.0),
            free(107.0, 300.0),
            free(105.0, 600.0),
            free(100.0, 1200.0),
            jam(35.0, 1500.0),
            jam(30.0, 1500.0),
            jam(40.0, 1400.0),
            free(95.0, 1200.0),
            free(100.0, 1100.0),
            free(100.0, 1100.0),
            free(98.0, 1200.0),
            free(95.0, 1400.0),
            transition(1600.0),
            jam(35.0, 1500.0),
            transition(1600.0),
            jam(40.0, 1500.0),
            free(95.0, 1200.0),
            free(102.0, 900.0),
            free(105.0, 700.0),
            free(107.0, 500.0),
            free(108.0, 400.0),
        ];
        hours
            .into_iter()
            .map(|(label, dist, flow)| RegimeSpec::new(label, dist.expect("preset params are valid"), flow, 3600.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLayout {
    pub station_id: String,
    pub lanes: u32,
}

impl Default for SynthLayout {
    fn default() -> Self {
        Self { station_id: "S1".into(), lanes: 1 }
    }
}

/// A generated vehicle with its exact (pre-quantization) kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVehicle {
    pub time: f64,
    pub velocity: f64,
    pub transit: VehicleTransit,
}

pub const MIN_HEADWAY_S: f64 = 0.5;
pub const MIN_SPEED_KMH: f64 = 1.0;
const MAX_BELOW_MIN_SPEED: f64 = 1e-3;

fn validate(regimes: &[RegimeSpec], layout: &SynthLayout) -> Result<Vec<Dist>> {
    if regimes.is_empty() {
        return Err(Error::Config("at least one regime is required".into()));
    }
    if layout.lanes == 0 {
        return Err(Error::Config("at least one lane is required".into()));
    }
    regimes
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let dist = Dist::new(r.velocity_family, r.velocity_params)?;
            if !(r.duration.is_finite() && r.duration > 0.0) {
                return Err(Error::Config(format!("regime {i}: duration must be positive")));
            }
            if !(r.flow_rate.is_finite() && r.flow_rate > 0.0) {
                return Err(Error::Config(format!("regime {i}: flow_rate must be positive")));
            }
            if !(0.0..1.0).contains(&r.consec_correlation) {
                return Err(Error::Config(format!("regime {i}: correlation must be in [0, 1)")));
            }
            let below = dist.cdf(MIN_SPEED_KMH);
            if below > MAX_BELOW_MIN_SPEED {
                return Err(Error::Config(format!(
                    "regime {i}: P(v <= {MIN_SPEED_KMH} km/hr) = {below:.3e} exceeds {MAX_BELOW_MIN_SPEED:e}"
                )));
            }
            Ok(dist)
        })
        .collect()
}

/// Generates vehicles lane by lane: exponential headways at `flow_rate`
/// (floored at [`MIN_HEADWAY_S`]), AR(1)-style speed mixing, and ticks
/// rounded at the geometry's clock. Output is ordered by upstream tick.
pub fn synth_vehicles(
    regimes: &[RegimeSpec],
    geometry: &SensorGeometry,
    layout: &SynthLayout,
    seed: u64,
) -> Result<Vec<SynthVehicle>> {
    let dists = validate(regimes, layout)?;
    let mut out = Vec::new();
    let mut start = 0.0;
    for (ri, (regime, dist)) in regimes.iter().zip(&dists).enumerate() {
        let end = start + regime.duration;
        let mean_headway = 3600.0 / regime.flow_rate;
        let rho = regime.consec_correlation;
        for lane in 0..layout.lanes {
            let mut rng = chunk_rng(seed, ri * layout.lanes as usize + lane as usize);
            let lane_id = (lane + 1).to_string();
            let fresh = |rng: &mut ChaCha8Rng| loop {
                let v = dist.draw(rng);
                if v > MIN_SPEED_KMH {
                    break v;
                }
            };
            let mut t = start;
            let mut prev: Option<f64> = None;
            loop {
                let u: f64 = rng.sample(Open01);
                t += (-mean_headway * u.ln()).max(MIN_HEADWAY_S);
                if t >= end {
                    break;
                }
                let draw = fresh(&mut rng);
                let v = match prev {
                    Some(p) => rho * p + (1.0 - rho) * draw,
                    None => draw,
                };
                prev = Some(v);
                let up = (t * geometry.tick_rate).round() as u64;
                let traversal = geometry.loop_spacing / kmh_to_mps(v);
                let dt = ((traversal * geometry.tick_rate).round() as u64).max(1);
                let transit = VehicleTransit::new(layout.station_id.clone(), lane_id.clone(), up, up + dt)
                    .expect("dt >= 1 keeps transits forward");
                out.push(SynthVehicle { time: t, velocity: v, transit });
            }
        }
        start = end;
    }
    out.sort_by_key(|v| v.transit.upstream_tick);
    Ok(out)
}

/// Trace CSV bytes for one station with `layout.lanes` lanes.
pub fn synth_trace_with(
    regimes: &[RegimeSpec],
    geometry: &SensorGeometry,
    layout: &SynthLayout,
    seed: u64,
) -> Result<Vec<u8>> {
    let vehicles = synth_vehicles(regimes, geometry, layout, seed)?;
    let transits: Vec<VehicleTransit> = vehicles.into_iter().map(|v| v.transit).collect();
    let mut buf = Vec::new();
    write_trace(&transits, &mut buf)?;
    Ok(buf)
}

/// Single-lane trace at station `S1`.
pub fn synth_trace(regimes: &[RegimeSpec], geometry: &SensorGeometry, seed: u64) -> Result<Vec<u8>> {
    synth_trace_with(regimes, geometry, &SynthLayout::default(), seed)
}
