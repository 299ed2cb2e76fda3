//! `linkstat`: batch pipeline from dual-loop traces to connectivity-duration
//! curves. Every command writes plot-ready CSV/JSON and a run manifest.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linkstat::distfit::{Dist, Family, FitMethod, Params};
use serde::Serialize;

use output::Format;

#[derive(Debug, Clone, Parser)]
#[command(name = "linkstat", version, about = "Traffic velocity distributions and VANET link lifetimes")]
pub struct Cli {
    /// Master seed for anything random.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Serialization of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Trace CSV -> per-vehicle velocities and hourly means.
    Ingest(IngestArgs),
    /// Fit velocity families in one hour window and rank them by CDF RMSE.
    Fit(FitArgs),
    /// Fit relative-velocity laws to consecutive same-lane differences.
    Relvel(RelvelArgs),
    /// Connectivity-duration curves and threshold probabilities.
    Connectivity(ConnectivityArgs),
    /// Monte Carlo checks and synthetic traces.
    #[command(subcommand)]
    Simulate(SimCommand),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeometryArgs {
    /// Center-to-center loop distance, meters.
    #[arg(long, default_value_t = 6.096)]
    pub loop_spacing_m: f64,
    #[arg(long, default_value_t = 1.8288)]
    pub loop_length_m: f64,
    /// Timestamp ticks per second.
    #[arg(long, default_value_t = 60.0)]
    pub tick_rate: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    pub trace: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Keep only this lane.
    #[arg(long)]
    pub lane: Option<String>,
    /// Report rejected rows but carry on.
    #[arg(long)]
    pub skip_bad_rows: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Mle,
    Lsq,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mle => FitMethod::MaximumLikelihood,
            MethodArg::Lsq => FitMethod::CdfLeastSquares,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// Hour window (floor(time/3600)); all samples when omitted.
    #[arg(long)]
    pub window_hour: Option<u64>,
    #[arg(long)]
    pub lane: Option<String>,
    /// Points in the model-vs-empirical curve.
    #[arg(long, default_value_t = 200)]
    pub curve_points: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// velocities.csv or velocities.json from `ingest`.
    pub velocities: PathBuf,
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_delimiter = ',', default_value = "gaussian,gev,lognormal")]
    pub families: Vec<Family>,
    #[arg(long, value_enum, default_value_t = MethodArg::Mle)]
    pub method: MethodArg,
    /// Print the RMSE ranking.
    #[arg(long)]
    pub rank: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RelvelArgs {
    pub velocities: PathBuf,
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_delimiter = ',', default_value = "logistic,gaussian")]
    pub families: Vec<Family>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelSource {
    /// relvel.json from `relvel`, or a single model JSON object.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Inline closed-form model, e.g. `logistic:0,7.95`.
    #[arg(long = "inline", value_parser = parse_dist)]
    #[serde(serialize_with = "serialize_dists")]
    pub inline: Vec<Dist>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConnectivityArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long, default_value_t = 100.0)]
    pub range_m: f64,
    #[arg(long = "threshold-s", num_args = 1.., default_values_t = [80.0])]
    pub thresholds: Vec<f64>,
    /// Duration grid `lo:hi:n` in seconds, linear.
    #[arg(long, default_value = "1:600:600", value_parser = parse_grid)]
    pub grid: (f64, f64, usize),
}

#[derive(Debug, Clone, Subcommand)]
pub enum SimCommand {
    /// Difference of independent draws from two families.
    Relvel(SimRelvelArgs),
    /// Link durations drawn through a relative-velocity model.
    Duration(SimDurationArgs),
    /// Synthetic trace CSV.
    Trace(SimTraceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DrawArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = linkstat::simulate::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimRelvelArgs {
    /// Minuend family, e.g. `gumbel:71.1,12.5`.
    #[arg(long, value_parser = parse_dist)]
    #[serde(serialize_with = "serialize_dist")]
    pub a: Dist,
    #[arg(long, value_parser = parse_dist)]
    #[serde(serialize_with = "serialize_dist")]
    pub b: Dist,
    #[command(flatten)]
    pub draws: DrawArgs,
    /// Compare against the numerically tabulated difference density.
    #[arg(long)]
    pub numeric_reference: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimDurationArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long, default_value_t = 100.0)]
    pub range_m: f64,
    #[command(flatten)]
    pub draws: DrawArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimTraceArgs {
    /// JSON array of regime specs; the built-in 24-hour day when omitted.
    #[arg(long)]
    pub regimes: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub lanes: u32,
    #[arg(long, default_value = "S1")]
    pub station: String,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn parse_dist(s: &str) -> Result<Dist, String> {
    let (family, rest) = s.split_once(':').ok_or("expected `family:mu,sigma[,k]`")?;
    let family: Family = family.parse()?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    let params = match (family, nums.as_slice()) {
        (Family::Gev, [mu, sigma, k]) => Params::gev(*mu, *sigma, *k),
        (Family::Gev, _) => return Err("gev needs mu,sigma,k".into()),
        (_, [mu, sigma]) => Params::new(*mu, *sigma),
        _ => return Err(format!("{family} needs mu,sigma")),
    };
    Dist::new(family, params).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err("expected lo:hi:n".into());
    };
    let lo: f64 = lo.parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("hi: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("n: {e}"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
        return Err("need 0 < lo < hi and n >= 2".into());
    }
    Ok((lo, hi, n))
}

fn dist_spec(d: &Dist) -> String {
    let p = d.params();
    match p.k {
        Some(k) => format!("{}:{},{},{}", d.family(), p.mu, p.sigma, k),
        None => format!("{}:{},{}", d.family(), p.mu, p.sigma),
    }
}

fn serialize_dist<S: serde::Serializer>(d: &Dist, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&dist_spec(d))
}

fn serialize_dists<S: serde::Serializer>(ds: &[Dist], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ds.iter().map(dist_spec))
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match commands::run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
