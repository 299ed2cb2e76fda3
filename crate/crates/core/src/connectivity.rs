//! Connectivity duration `t_c = 2R / |Δv|` between two same-direction
//! vehicles, and its law given a relative-velocity model.
//!
//! Units: `R` in meters, `t` in seconds, Δv on the model's km/hr axis. The
//! critical speed `2R/t` is converted to km/hr once, and the Jacobian carries
//! the same factor so densities come out per second.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relvel::RelVelModel;
use crate::units::mps_to_kmh;

/// |Δv| below this (km/hr) is censored when mapping to a duration.
pub const MIN_REL_SPEED_KMH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectivitySetup {
    pub range_m: f64,
}

impl ConnectivitySetup {
    pub fn new(range_m: f64) -> Result<Self> {
        if !(range_m.is_finite() && range_m > 0.0) {
            return Err(Error::Config(format!("communication range must be positive, got {range_m}")));
        }
        Ok(Self { range_m })
    }
}

/// Duration of a link for one relative speed, in seconds. Speeds under
/// [`MIN_REL_SPEED_KMH`] are clamped, which caps the duration instead of
/// dividing by zero.
pub fn link_duration(range_m: f64, rel_speed_kmh: f64) -> f64 {
    mps_to_kmh(2.0 * range_m) / rel_speed_kmh.abs().max(MIN_REL_SPEED_KMH)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationDistribution {
    setup: ConnectivitySetup,
    model: RelVelModel,
}

impl DurationDistribution {
    pub fn new(setup: ConnectivitySetup, model: RelVelModel) -> Self {
        Self { setup, model }
    }

    pub fn range_m(&self) -> f64 {
        self.setup.range_m
    }

    pub fn model(&self) -> &RelVelModel {
        &self.model
    }

    /// Relative speed (km/hr) at which the link lasts exactly `t` seconds.
    pub fn critical_speed_kmh(&self, t: f64) -> f64 {
        mps_to_kmh(2.0 * self.setup.range_m / t)
    }

    /// Density of `t_c` in 1/s. Zero for `t <= 0`.
    pub fn pdf(&self, t: f64) -> f64 {
        if !(t > 0.0) || !t.is_finite() {
            return 0.0;
        }
        let x = self.critical_speed_kmh(t);
        let jacobian = mps_to_kmh(2.0 * self.setup.range_m / (t * t));
        let f = if self.model.is_symmetric() {
            2.0 * self.model.pdf(x)
        } else {
            self.model.pdf(x) + self.model.pdf(-x)
        };
        f * jacobian
    }

    /// `P(t_c <= t) = P(|Δv| >= 2R/t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        let x = self.critical_speed_kmh(t);
        let p = if self.model.is_symmetric() {
            2.0 * self.model.sf(x)
        } else {
            self.model.cdf(-x) + self.model.sf(x)
        };
        p.clamp(0.0, 1.0)
    }

    pub fn prob_connected_longer(&self, t: f64) -> f64 {
        1.0 - self.cdf(t)
    }

    pub fn curve(&self, t_grid: &[f64]) -> Result<Vec<DurationPoint>> {
        if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidGrid("durations must be positive and finite".into()));
        }
        if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("durations must be strictly increasing".into()));
        }
        Ok(t_grid
            .iter()
            .map(|&t| DurationPoint { t, pdf: self.pdf(t), cdf: self.cdf(t) })
            .collect())
    }

    pub fn summary(&self, thresholds: &[f64]) -> DurationSummary {
        DurationSummary {
            range_meters: self.setup.range_m,
            model: self.model.clone(),
            thresholds: thresholds
                .iter()
                .map(|&t| Threshold { t, p_longer: self.prob_connected_longer(t) })
                .collect(),
        }
    }
}

pub fn duration_pdf(d: &DurationDistribution, t: f64) -> f64 {
    d.pdf(t)
}

pub fn duration_cdf(d: &DurationDistribution, t: f64) -> f64 {
    d.cdf(t)
}

pub fn prob_connected_longer(d: &DurationDistribution, t: f64) -> f64 {
    d.prob_connected_longer(t)
}

pub fn emit_duration_curve(d: &DurationDistribution, t_grid: &[f64]) -> Result<Vec<DurationPoint>> {
    d.curve(t_grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationPoint {
    pub t: f64,
    pub pdf: f64,
    pub cdf: f64,
}

pub const CURVE_HEADER: &str = "t_seconds,pdf_per_second,cdf";

pub fn curve_csv(points: &[DurationPoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.t, p.pdf, p.cdf);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub t: f64,
    pub p_longer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    #[serde(rename = "R_meters")]
    pub range_meters: f64,
    pub model: RelVelModel,
    pub thresholds: Vec<Threshold>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_100m() -> DurationDistribution {
        DurationDistribution::new(
            ConnectivitySetup::new(100.0).unwrap(),
            RelVelModel::logistic(0.0, 7.95).unwrap(),
        )
    }

    #[test]
    fn critical_speed_at_80s() {
        assert!((logistic_100m().critical_speed_kmh(80.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn pdf_at_80s() {
        let d = logistic_100m();
        // (4R/t^2) * 3.6 * f_v(9), f_v per km/hr
        let f_v = RelVelModel::logistic(0.0, 7.95).unwrap().pdf(9.0);
        assert!((f_v - 0.02319).abs() < 5e-6);
        let expected = 400.0 / 6400.0 * 3.6 * f_v;
        assert!((d.pdf(80.0) - expected).abs() < 1e-15);
        assert!((d.pdf(80.0) - 0.005217).abs() < 1e-6);
    }

    #[test]
    fn heaviside_and_limits() {
        let d = logistic_100m();
        for t in [0.0, -1.0, -80.0] {
            assert_eq!(d.pdf(t), 0.0);
            assert_eq!(d.cdf(t), 0.0);
        }
        assert!(d.cdf(1e-6) < 1e-12);
        assert!(d.cdf(1e12) > 1.0 - 1e-9);
        assert_eq!(d.cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn asymmetric_model_uses_both_branches() {
        let m = RelVelModel::logistic(2.0, 5.0).unwrap();
        assert!(!m.is_symmetric());
        let d = DurationDistribution::new(ConnectivitySetup::new(50.0).unwrap(), m.clone());
        let x = d.critical_speed_kmh(30.0);
        assert!((d.cdf(30.0) - (m.cdf(-x) + 1.0 - m.cdf(x))).abs() < 1e-15);
    }

    #[test]
    fn range_validation() {
        assert!(ConnectivitySetup::new(0.0).is_err());
        assert!(ConnectivitySetup::new(f64::INFINITY).is_err());
    }

    #[test]
    fn curve_rejects_bad_grids() {
        let d = logistic_100m();
        assert!(d.curve(&[0.0, 1.0]).is_err());
        assert!(d.curve(&[2.0, 1.0]).is_err());
        let pts = d.curve(&[80.0]).unwrap();
        assert_eq!(pts[0].cdf, d.cdf(80.0));
        assert!(curve_csv(&pts).starts_with("t_seconds,pdf_per_second,cdf\n80,"));
    }

    #[test]
    fn summary_json_keys() {
        let v = serde_json::to_value(logistic_100m().summary(&[80.0])).unwrap();
        assert_eq!(v["R_meters"], 100.0);
        assert_eq!(v["model"]["family"], "logistic");
        assert!(v["thresholds"][0]["p_longer"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn link_duration_scaling() {
        assert_eq!(link_duration(100.0, 9.0), 80.0);
        assert_eq!(link_duration(100.0, -9.0), 80.0);
        assert_eq!(link_duration(200.0, 9.0), 160.0);
        assert!(link_duration(100.0, 0.0).is_finite());
    }
}
