use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::Parser;
use linkstat::connectivity::{ConnectivitySetup, DurationDistribution};
use linkstat::distfit::{Dist, Family, FitMethod, MIN_FIT_SAMPLES};
use linkstat::empirical::{hourly_means, EmpiricalCdf};
use linkstat::ingest::{compute_velocities, parse_trace, SensorGeometry, VelocitySample};
use linkstat::relvel::{consecutive_differences, difference_numeric, fit_relvel, gumbel_difference_model, GridSpec, RelVelModel};
use linkstat::simulate::{mc_duration, mc_relvel, synth_trace_with, RegimeSpec, SimConfig, SynthLayout};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{Cell, Outputs, RunManifest, Table};
use crate::{
    Cli, Command, ConnectivityArgs, FitArgs, GeometryArgs, IngestArgs, ModelSource, RelvelArgs, SelectArgs, SimCommand,
    SimDurationArgs, SimRelvelArgs, SimTraceArgs,
};

const SECONDS_PER_HOUR: f64 = 3600.0;
/// Grid nodes for the tabulated reference in `simulate relvel --numeric-reference`.
const NUMERIC_REFERENCE_POINTS: usize = 4097;

/// Runs one parsed command line. `argv` is the raw command line (without the
/// program name) and is recorded verbatim in the manifest.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let ctx = RunContext { seed: cli.seed, out_dir: cli.out_dir.clone(), argv };
    let mut out = Outputs::new(&cli.out_dir, cli.format)?;
    let (name, inputs, params) = match &cli.command {
        Command::Ingest(a) => ("ingest", ingest(a, &mut out)?, serde_json::to_value(a)?),
        Command::Fit(a) => ("fit", fit(a, &mut out)?, serde_json::to_value(a)?),
        Command::Relvel(a) => ("relvel", relvel(a, &mut out)?, serde_json::to_value(a)?),
        Command::Connectivity(a) => ("connectivity", connectivity(a, &mut out)?, serde_json::to_value(a)?),
        Command::Simulate(SimCommand::Relvel(a)) => {
            ("simulate-relvel", sim_relvel(a, ctx.seed, &mut out)?, serde_json::to_value(a)?)
        }
        Command::Simulate(SimCommand::Duration(a)) => {
            ("simulate-duration", sim_duration(a, ctx.seed, &mut out)?, serde_json::to_value(a)?)
        }
        Command::Simulate(SimCommand::Trace(a)) => {
            ("simulate-trace", sim_trace(a, ctx.seed, &mut out)?, serde_json::to_value(a)?)
        }
        Command::Replay(a) => return replay(&a.manifest, &ctx),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        args: ctx.argv,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        params,
        seed: ctx.seed,
        out_dir: ctx.out_dir.display().to_string(),
        outputs: Vec::new(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let written = out.finish(manifest)?;
    for f in written {
        eprintln!("wrote {}", cli.out_dir.join(f).display());
    }
    Ok(())
}

struct RunContext {
    seed: u64,
    out_dir: PathBuf,
    argv: Vec<String>,
}

fn replay(manifest_path: &Path, ctx: &RunContext) -> Result<()> {
    let text = fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let mut argv = manifest.args.clone();
    // An explicit --out-dir on the replay line redirects the outputs; the
    // appended flag wins over any earlier one.
    if ctx.argv.iter().any(|a| a == "--out-dir" || a.starts_with("--out-dir=")) {
        argv.push("--out-dir".into());
        argv.push(ctx.out_dir.display().to_string());
    }
    let cli = Cli::try_parse_from(std::iter::once("linkstat".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| anyhow!("manifest arguments no longer parse: {e}"))?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("a manifest cannot replay another manifest");
    }
    run(cli, argv)
}

fn geometry(g: &GeometryArgs) -> Result<SensorGeometry> {
    Ok(SensorGeometry::new(g.loop_spacing_m, g.loop_length_m, g.tick_rate)?)
}

fn ingest(a: &IngestArgs, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let geometry = geometry(&a.geometry)?;
    let file = fs::File::open(&a.trace).with_context(|| format!("opening {}", a.trace.display()))?;
    let parsed = parse_trace(file).with_context(|| format!("reading {}", a.trace.display()))?;
    for r in &parsed.rejected {
        eprintln!("{}: {r}", a.trace.display());
    }
    if !parsed.rejected.is_empty() && !a.skip_bad_rows {
        bail!("{} rejected rows (use --skip-bad-rows to continue without them)", parsed.rejected.len());
    }
    let mut samples = compute_velocities(&parsed.transits, &geometry)?;
    if let Some(lane) = &a.lane {
        samples.retain(|s| &s.lane_id == lane);
    }
    ensure!(!samples.is_empty(), "no samples in {}", a.trace.display());

    let mut velocities = Table::new(["time", "lane", "velocity_kmh"]);
    for s in &samples {
        velocities.push(vec![Cell::Num(s.time), Cell::Text(s.lane_id.clone()), Cell::Num(s.velocity)]);
    }
    out.table("velocities", &velocities)?;

    let mut hourly = Table::new(["hour", "mean_kmh", "count"]);
    for h in hourly_means(&samples).hours {
        hourly.push(vec![Cell::Int(h.hour.into()), Cell::Num(h.mean_kmh), Cell::Int(h.count as u64)]);
    }
    out.table("hourly_means", &hourly)?;
    Ok(vec![a.trace.clone()])
}

#[derive(Deserialize)]
struct VelocityRow {
    time: f64,
    lane: String,
    velocity_kmh: f64,
}

fn read_velocities(path: &Path) -> Result<Vec<VelocitySample>> {
    let rows: Vec<VelocityRow> = if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        reader.deserialize().collect::<Result<_, _>>().with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(rows.into_iter().map(|r| VelocitySample { time: r.time, lane_id: r.lane, velocity: r.velocity_kmh }).collect())
}

fn select(samples: Vec<VelocitySample>, sel: &SelectArgs) -> Vec<VelocitySample> {
    samples
        .into_iter()
        .filter(|s| sel.lane.as_ref().is_none_or(|l| &s.lane_id == l))
        .filter(|s| sel.window_hour.is_none_or(|h| (s.time / SECONDS_PER_HOUR).floor() == h as f64))
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
}

fn dedup_families(families: &[Family]) -> Vec<Family> {
    let mut seen = BTreeSet::new();
    families.iter().copied().filter(|f| seen.insert(f.name())).collect()
}

fn fit(a: &FitArgs, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let samples = select(read_velocities(&a.velocities)?, &a.select);
    let values: Vec<f64> = samples.iter().map(|s| s.velocity).collect();
    ensure!(
        values.len() >= MIN_FIT_SAMPLES,
        "need at least {MIN_FIT_SAMPLES} samples in the selected window, got {}",
        values.len()
    );
    let families = dedup_families(&a.families);
    let method: FitMethod = a.method.into();
    let ranking = linkstat::distfit::rank_models_with(&values, &families, method);
    let failures: Vec<_> =
        ranking.failures.iter().map(|f| json!({"family": f.family, "error": f.error.to_string()})).collect();
    for f in &ranking.failures {
        eprintln!("{} fit failed: {}", f.family, f.error);
    }
    ensure!(!ranking.fits.is_empty(), "every requested family failed to fit");

    out.json(
        "fit.json",
        &json!({
            "window_hour": a.select.window_hour,
            "lane": a.select.lane,
            "n": values.len(),
            "method": a.method,
            "ranking": ranking.fits,
            "failures": failures,
        }),
    )?;

    let ecdf = EmpiricalCdf::new(&values)?;
    let dists: Vec<(Family, Dist)> = families
        .iter()
        .filter_map(|fam| ranking.fits.iter().find(|r| r.family == *fam))
        .map(|r| Ok((r.family, r.dist()?)))
        .collect::<Result<_>>()?;
    let mut columns = vec!["x".to_string(), "F_empirical".to_string()];
    columns.extend(dists.iter().map(|(f, _)| format!("F_{f}")));
    let mut curve = Table::new(columns);
    for x in linspace(ecdf.min(), ecdf.max(), a.select.curve_points) {
        let mut row = vec![Cell::Num(x), Cell::Num(ecdf.eval(x))];
        row.extend(dists.iter().map(|(_, d)| Cell::Num(d.cdf(x))));
        curve.push(row);
    }
    out.table("fit_curve", &curve)?;

    if a.rank {
        for (i, r) in ranking.fits.iter().enumerate() {
            println!("{}. {} rmse={} loglik={}", i + 1, r.family, r.rmse, r.log_likelihood);
        }
    }
    Ok(vec![a.velocities.clone()])
}

fn relvel(a: &RelvelArgs, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let samples = select(read_velocities(&a.velocities)?, &a.select);
    let diffs = consecutive_differences(&samples);
    ensure!(
        diffs.len() >= MIN_FIT_SAMPLES,
        "need at least {MIN_FIT_SAMPLES} consecutive same-lane differences, got {}",
        diffs.len()
    );
    let families = dedup_families(&a.families);
    let fits = families.iter().map(|&f| fit_relvel(&diffs, f).with_context(|| format!("{f} fit"))).collect::<Result<Vec<_>>>()?;

    let models: Vec<_> = fits.iter().map(|f| json!({"model": f.model, "fit": f.fit})).collect();
    out.json(
        "relvel.json",
        &json!({
            "window_hour": a.select.window_hour,
            "lane": a.select.lane,
            "n_differences": diffs.len(),
            "models": models,
        }),
    )?;

    let ecdf = EmpiricalCdf::new(&diffs)?;
    let mut columns = vec!["dv".to_string(), "F_empirical".to_string()];
    columns.extend(fits.iter().map(|f| format!("F_{}", f.fit.family)));
    let mut curve = Table::new(columns);
    for x in linspace(ecdf.min(), ecdf.max(), a.select.curve_points) {
        let mut row = vec![Cell::Num(x), Cell::Num(ecdf.eval(x))];
        row.extend(fits.iter().map(|f| Cell::Num(f.model.cdf(x))));
        curve.push(row);
    }
    out.table("relvel_curve", &curve)?;
    for f in &fits {
        println!("{} rmse={} symmetric={}", f.model.label(), f.fit.rmse, f.model.is_symmetric());
    }
    Ok(vec![a.velocities.clone()])
}

/// Reads models from `relvel.json` files, bare model objects or arrays of
/// either, followed by inline closed forms.
fn load_models(src: &ModelSource) -> Result<(Vec<RelVelModel>, Vec<PathBuf>)> {
    fn from_value(v: serde_json::Value, out: &mut Vec<RelVelModel>) -> Result<()> {
        match v {
            serde_json::Value::Array(items) => items.into_iter().try_for_each(|i| from_value(i, out)),
            serde_json::Value::Object(mut obj) => {
                if let Some(models) = obj.remove("models") {
                    from_value(models, out)
                } else if let Some(model) = obj.remove("model") {
                    from_value(model, out)
                } else {
                    out.push(serde_json::from_value(serde_json::Value::Object(obj))?);
                    Ok(())
                }
            }
            other => bail!("expected a model object, got {other}"),
        }
    }
    let mut models = Vec::new();
    for path in &src.models {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        from_value(value, &mut models).with_context(|| format!("loading models from {}", path.display()))?;
    }
    models.extend(src.inline.iter().map(|d| RelVelModel::closed(*d)));
    ensure!(!models.is_empty(), "no relative-velocity model given (use --model or --inline)");
    Ok((models, src.models.clone()))
}

fn model_stem(model: &RelVelModel) -> String {
    match model {
        RelVelModel::Closed { dist, .. } => dist.family().name().to_string(),
        RelVelModel::Grid(_) => "grid".to_string(),
    }
}

fn connectivity(a: &ConnectivityArgs, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let (models, inputs) = load_models(&a.source)?;
    let setup = ConnectivitySetup::new(a.range_m)?;
    let (lo, hi, n) = a.grid;
    let grid = linspace(lo, hi, n);
    let mut used = BTreeSet::new();
    let mut summaries = Vec::new();
    for (i, model) in models.into_iter().enumerate() {
        let mut stem = format!("duration_curve_{}", model_stem(&model));
        if !used.insert(stem.clone()) {
            stem = format!("{stem}_{i}");
            used.insert(stem.clone());
        }
        let dd = DurationDistribution::new(setup, model);
        let mut table = Table::new(["t_seconds", "pdf_per_second", "cdf"]);
        for p in dd.curve(&grid)? {
            table.push(vec![Cell::Num(p.t), Cell::Num(p.pdf), Cell::Num(p.cdf)]);
        }
        out.table(&stem, &table)?;
        let summary = dd.summary(&a.thresholds);
        for t in &summary.thresholds {
            println!("{} R={} P(T > {}) = {}", dd.model().label(), a.range_m, t.t, t.p_longer);
        }
        summaries.push(summary);
    }
    out.json("connectivity.json", &summaries)?;
    Ok(inputs)
}

fn sim_config(d: &crate::DrawArgs, seed: u64) -> SimConfig {
    SimConfig { n_draws: d.draws, seed, chunk_size: d.chunk_size }
}

fn numeric_reference(a: &Dist, b: &Dist) -> Result<RelVelModel> {
    let center = a.quantile(0.5)? - b.quantile(0.5)?;
    let half = 8.0 * (a.params().sigma + b.params().sigma);
    let spec = GridSpec { lo: center - half, hi: center + half, n_points: NUMERIC_REFERENCE_POINTS };
    match difference_numeric(a, b, spec) {
        Err(linkstat::Error::GridTooNarrow { suggested_lo, suggested_hi, .. }) => difference_numeric(
            a,
            b,
            GridSpec { lo: suggested_lo, hi: suggested_hi, n_points: NUMERIC_REFERENCE_POINTS },
        )
        .map_err(Into::into),
        other => other.map_err(Into::into),
    }
}

fn sim_relvel(a: &SimRelvelArgs, seed: u64, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let cfg = sim_config(&a.draws, seed);
    let mut report = mc_relvel(&a.a, &a.b, &cfg)?;
    let gumbels = a.a.family() == Family::Gumbel && a.b.family() == Family::Gumbel;
    let reference = if a.numeric_reference {
        Some(numeric_reference(&a.a, &a.b)?)
    } else if gumbels {
        // Unequal scales have no closed form; report draws only.
        gumbel_difference_model(a.a.params(), a.b.params()).ok()
    } else {
        None
    };
    let label = reference.as_ref().map(RelVelModel::label);
    if let Some(model) = &reference {
        report = report.compare(|x| model.cdf(x));
    }
    let json = report.to_json();
    if let Some(d) = json.ks_distance {
        println!("KS distance to {} over {} draws: {d}", label.as_deref().unwrap_or("reference"), json.n);
    }
    out.json("sim_relvel.json", &json!({"reference": label, "report": json}))?;
    Ok(Vec::new())
}

fn sim_duration(a: &SimDurationArgs, seed: u64, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let (mut models, inputs) = load_models(&a.source)?;
    ensure!(models.len() == 1, "simulate duration takes exactly one model, got {}", models.len());
    let model = models.remove(0);
    let cfg = sim_config(&a.draws, seed);
    let dd = DurationDistribution::new(ConnectivitySetup::new(a.range_m)?, model);
    let report = mc_duration(dd.model(), a.range_m, &cfg)?.compare(|t| dd.cdf(t));
    let json = report.to_json();
    if let Some(d) = json.ks_distance {
        println!("KS distance to analytic duration CDF over {} draws: {d}", json.n);
    }
    out.json("sim_duration.json", &json!({"model": dd.model(), "R_meters": a.range_m, "report": json}))?;
    Ok(inputs)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RegimeFile {
    List(Vec<RegimeSpec>),
    Wrapped { regimes: Vec<RegimeSpec> },
}

fn sim_trace(a: &SimTraceArgs, seed: u64, out: &mut Outputs) -> Result<Vec<PathBuf>> {
    let (regimes, inputs) = match &a.regimes {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: RegimeFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let regimes = match file {
                RegimeFile::List(r) | RegimeFile::Wrapped { regimes: r } => r,
            };
            (regimes, vec![path.clone()])
        }
        None => (RegimeSpec::day_profile(), Vec::new()),
    };
    let layout = SynthLayout { station_id: a.station.clone(), lanes: a.lanes };
    let bytes = synth_trace_with(&regimes, &geometry(&a.geometry)?, &layout, seed)?;
    out.bytes("trace.csv", &bytes)?;
    Ok(inputs)
}
