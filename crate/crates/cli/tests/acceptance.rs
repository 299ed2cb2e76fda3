//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Built with `harness = false` so the lines are
//! always shown.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use linkstat::connectivity::{ConnectivitySetup, DurationDistribution};
use linkstat::distfit::{fit_mle, gev, rank_models, Dist, Family};
use linkstat::ingest::{compute_velocity, SensorGeometry, VehicleTransit};
use linkstat::relvel::RelVelModel;
use linkstat::simulate::{duration_draws, mc_relvel, SimConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Adaptive Simpson with Richardson correction.
fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Integral over [lo, hi] split into unit-scale panels so no peak is missed.
fn integrate_panels<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panel: f64) -> f64 {
    let n = ((hi - lo) / panel).ceil() as usize;
    let w = (hi - lo) / n as f64;
    (0..n).map(|i| integrate(&f, lo + w * i as f64, lo + w * (i + 1) as f64, 1e-14)).sum()
}

/// Sup distance between the step ECDF of `xs` and `cdf`, both sides of each jump.
fn sup_distance<F: Fn(f64) -> f64>(mut xs: Vec<f64>, cdf: F) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn logistic_cdf(x: f64, mu: f64, s: f64) -> f64 {
    1.0 / (1.0 + (-(x - mu) / s).exp())
}

fn within_budget(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn normalization() -> Outcome {
    let start = Instant::now();
    let gaussian = Dist::gaussian(76.9, 13.8).unwrap();
    let gev_d = Dist::gev(71.1, 12.5, -0.125).unwrap();
    let logistic = Dist::logistic(0.0, 7.95).unwrap();
    let cases = [
        // Tails beyond 40 scale units carry far less than 1e-15.
        ("gaussian", integrate_panels(|x| gaussian.pdf(x), 76.9 - 40.0 * 13.8, 76.9 + 40.0 * 13.8, 13.8)),
        // Upper endpoint mu - sigma/k; the lower tail decays double-exponentially.
        ("gev", integrate_panels(|x| gev_d.pdf(x), 71.1 - 10.0 * 12.5, 71.1 + 12.5 / 0.125, 12.5)),
        ("logistic", integrate_panels(|x| logistic.pdf(x), -45.0 * 7.95, 45.0 * 7.95, 7.95)),
    ];
    let elapsed = start.elapsed();
    let worst = cases.iter().map(|(_, m)| (m - 1.0).abs()).fold(0.0, f64::max);
    let detail = cases.iter().map(|(n, m)| format!("{n}={m:.15}")).collect::<Vec<_>>().join(" ");
    outcome(worst <= 1e-6 && within_budget(elapsed, 1), format!("{detail} max|1-I|={worst:.2e} in {elapsed:.2?}"))
}

fn gumbel_limit_agreement() -> Outcome {
    let start = Instant::now();
    let (mu, sigma, k) = (71.1, 12.5, 1e-10);
    let mut worst: f64 = 0.0;
    let mut at = mu;
    for i in 0..100 {
        let x = mu - 5.0 * sigma + 10.0 * sigma * i as f64 / 99.0;
        let general = gev::pdf_general_branch(x, mu, sigma, k);
        let gumbel = gev::pdf_gumbel_branch(x, mu, sigma);
        let rel = (general - gumbel).abs() / gumbel;
        if rel > worst {
            worst = rel;
            at = x;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && within_budget(elapsed, 1),
        format!("max relative gap {worst:.3e} at x={at:.2} (limit 1e-9) in {elapsed:.2?}"),
    )
}

fn gumbel_difference() -> Outcome {
    let start = Instant::now();
    let a = Dist::gumbel(71.1, 12.5).unwrap();
    let b = Dist::gumbel(60.0, 12.5).unwrap();
    let report = mc_relvel(&a, &b, &SimConfig::new(1_000_000, 7)).unwrap();
    let xs = report.ecdf.as_ref().unwrap().sorted_values().to_vec();
    let d = sup_distance(xs, |x| logistic_cdf(x, 11.1, 12.5));
    let elapsed = start.elapsed();
    outcome(d <= 0.005 && within_budget(elapsed, 10), format!("KS={d:.5} over 1e6 pairs in {elapsed:.2?}"))
}

fn duration_transform() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (model, seed) in [(RelVelModel::logistic(0.0, 7.95).unwrap(), 11), (RelVelModel::gaussian(0.0, 13.42).unwrap(), 13)] {
        let draws = duration_draws(&model, 100.0, &SimConfig::new(1_000_000, seed)).unwrap();
        let dd = DurationDistribution::new(ConnectivitySetup::new(100.0).unwrap(), model);
        let d = sup_distance(draws, |t| dd.cdf(t));
        pass &= d <= 0.005;
        parts.push(format!("{}: sup={d:.5}", dd.model().label()));
    }
    let elapsed = start.elapsed();
    outcome(pass && within_budget(elapsed, 20), format!("{} in {elapsed:.2?}", parts.join(", ")))
}

fn endpoint_reproduction() -> Outcome {
    let setup = ConnectivitySetup::new(100.0).unwrap();
    let p = |m: RelVelModel| DurationDistribution::new(setup, m).prob_connected_longer(80.0);
    let logistic = p(RelVelModel::logistic(0.0, 7.95).unwrap());
    let gaussian = p(RelVelModel::gaussian(0.0, 13.42).unwrap());
    let pass = (logistic - 0.528).abs() <= 0.025 && (gaussian - 0.478).abs() <= 0.025 && logistic > gaussian;
    outcome(pass, format!("P(T>80s) logistic={logistic:.4} (0.528±0.025), gaussian={gaussian:.4} (0.478±0.025)"))
}

fn ranking_reproduction() -> Outcome {
    let start = Instant::now();
    let truth = Dist::gev(71.1, 12.5, -0.125).unwrap();
    let wins = (0..100u64)
        .filter(|&seed| {
            let xs = truth.sample(10_000, 1000 + seed);
            let r = rank_models(&xs, &[Family::Gev, Family::Gaussian]);
            let rmse = |f: Family| r.fits.iter().find(|x| x.family == f).map_or(f64::INFINITY, |x| x.rmse);
            rmse(Family::Gev) < rmse(Family::Gaussian)
        })
        .count();
    let elapsed = start.elapsed();
    outcome(wins >= 95 && within_budget(elapsed, 60), format!("GEV beat Gaussian in {wins}/100 runs in {elapsed:.2?}"))
}

fn fit_recovery() -> Outcome {
    let start = Instant::now();
    let gev_truth = Dist::gev(71.1, 12.5, -0.125).unwrap();
    let gauss_truth = Dist::gaussian(76.9, 13.8).unwrap();
    let mut gev_ok = 0;
    let mut gauss_ok = 0;
    for seed in 0..100u64 {
        let g = fit_mle(&gev_truth.sample(10_000, 5000 + seed), Family::Gev).unwrap().params;
        let k = g.k.unwrap();
        if (g.mu - 71.1).abs() <= 0.5 && (g.sigma - 12.5).abs() <= 0.5 && (k + 0.125).abs() <= 0.05 {
            gev_ok += 1;
        }
        let n = fit_mle(&gauss_truth.sample(10_000, 9000 + seed), Family::Gaussian).unwrap().params;
        if (n.mu - 76.9).abs() <= 0.5 && (n.sigma - 13.8).abs() <= 0.4 {
            gauss_ok += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(gev_ok >= 95 && gauss_ok >= 95, format!("GEV {gev_ok}/100, Gaussian {gauss_ok}/100 within tolerance in {elapsed:.2?}"))
}

fn kinematics() -> Outcome {
    let transit = VehicleTransit::new("S1", "1", 1000, 1015).unwrap();
    let v = compute_velocity(&transit, &SensorGeometry::bhl()).unwrap().velocity;
    outcome(v == 87.7824, format!("15 ticks -> {v:?} km/hr (expected 87.7824 exactly)"))
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_linkstat");
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/pipeline.sh");
    let work = tempfile::tempdir().unwrap();
    let status = Command::new("sh")
        .arg(&script)
        .arg("run")
        .env("LINKSTAT", bin)
        .current_dir(work.path())
        .output()
        .unwrap();
    if !status.status.success() {
        return outcome(false, format!("pipeline script failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let run = work.path().join("run");
    let first = snapshot(&run);

    // Keep only the manifests, wipe the run, then rebuild it from them alone.
    let stages = ["trace/simulate-trace", "ingest/ingest", "fit/fit", "relvel/relvel", "connectivity/connectivity"];
    let saved = work.path().join("manifests");
    fs::create_dir(&saved).unwrap();
    for (i, stage) in stages.iter().enumerate() {
        fs::copy(run.join(format!("{stage}.manifest.json")), saved.join(format!("{i}.json"))).unwrap();
    }
    fs::remove_dir_all(&run).unwrap();
    for (i, stage) in stages.iter().enumerate() {
        let out = Command::new(bin)
            .arg("replay")
            .arg(saved.join(format!("{i}.json")))
            .current_dir(work.path())
            .output()
            .unwrap();
        if !out.status.success() {
            return outcome(false, format!("replay of {stage} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let second = snapshot(&run);
    let elapsed = start.elapsed();
    let differing: Vec<_> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && within_budget(elapsed, 60),
        if differing.is_empty() {
            format!("{} files reproduced bit-identically from manifests in {elapsed:.2?}", first.len())
        } else {
            format!("outputs differ after replay: {}", differing.join(", "))
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("density normalization", normalization),
        ("GEV branch agreement at |k|=1e-10", gumbel_limit_agreement),
        ("Gumbel difference is logistic", gumbel_difference),
        ("duration transform vs Monte Carlo", duration_transform),
        ("P(T>80s) endpoints", endpoint_reproduction),
        ("GEV outranks Gaussian on GEV data", ranking_reproduction),
        ("MLE parameter recovery", fit_recovery),
        ("dual-loop kinematics", kinematics),
        ("end-to-end pipeline and replay", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
