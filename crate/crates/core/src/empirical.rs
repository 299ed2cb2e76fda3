//! Empirical CDFs, hourly mean-velocity series and the CDF RMSE used to rank
//! fitted models.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::VelocitySample;

/// Step-function ECDF, `F(x) = #{samples <= x} / n`. Ties are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::NoSamples);
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("non-finite sample {bad}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v <= x);
        below as f64 / self.sorted.len() as f64
    }

    /// Plotting positions `(i - 0.5) / n` paired with the order statistics.
    pub fn plotting_positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(move |(i, &x)| (x, (i as f64 + 0.5) / n))
    }

    /// `x,F` CSV on the supplied grid.
    pub fn curve_csv(&self, grid: &[f64]) -> String {
        let mut out = String::from("x,F\n");
        for &x in grid {
            let _ = writeln!(out, "{},{}", x, self.eval(x));
        }
        out
    }
}

pub fn ecdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyMean {
    pub hour: u32,
    pub mean_kmh: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub hours: Vec<HourlyMean>,
}

/// Per-hour arithmetic mean of velocities, hour = `floor(time / 3600)`.
/// Hours without samples are left out.
pub fn hourly_means(samples: &[VelocitySample]) -> HourlySeries {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for s in samples {
        let hour = (s.time / 3600.0).floor().max(0.0) as u32;
        let e = acc.entry(hour).or_insert((0.0, 0));
        e.0 += s.velocity;
        e.1 += 1;
    }
    HourlySeries {
        hours: acc
            .into_iter()
            .map(|(hour, (sum, count))| HourlyMean { hour, mean_kmh: sum / count as f64, count })
            .collect(),
    }
}

/// Root-mean-square distance between a model CDF and the plotting positions
/// `(i - 0.5)/n`, evaluated at the sorted samples.
pub fn rmse_cdf<F: Fn(f64) -> f64>(model_cdf: F, ecdf: &EmpiricalCdf) -> f64 {
    let n = ecdf.len() as f64;
    let sum_sq: f64 = ecdf
        .plotting_positions()
        .map(|(x, p)| {
            let r = model_cdf(x) - p;
            r * r
        })
        .sum();
    (sum_sq / n).sqrt()
}
