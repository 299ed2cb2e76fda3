//! Dual-loop transit records: parsing, velocity computation and windowing.
//!
//! Trace files are UTF-8 CSV with the header
//! `station_id,lane_id,upstream_tick,downstream_tick`. Ticks are integers at
//! the geometry's `tick_rate`. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::KMH_PER_MPS;

pub const TRACE_HEADER: [&str; 4] = ["station_id", "lane_id", "upstream_tick", "downstream_tick"];

const FEET: f64 = 0.3048;

/// Physical layout of one dual-loop station and the resolution of its clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    /// Center-to-center distance between the upstream and downstream loop, meters.
    pub loop_spacing: f64,
    /// Length of a single loop along the lane, meters.
    pub loop_length: f64,
    /// Timestamp clock ticks per second.
    pub tick_rate: f64,
}

impl SensorGeometry {
    pub fn new(loop_spacing: f64, loop_length: f64, tick_rate: f64) -> Result<Self> {
        for (name, v) in [
            ("loop_spacing", loop_spacing),
            ("loop_length", loop_length),
            ("tick_rate", tick_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { loop_spacing, loop_length, tick_rate })
    }

    /// Berkeley Highway Laboratory stations: 6 ft loops, centers 20 ft apart,
    /// 1/60 s timestamps.
    pub fn bhl() -> Self {
        Self { loop_spacing: 20.0 * FEET, loop_length: 6.0 * FEET, tick_rate: 60.0 }
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::bhl()
    }
}

/// One matched upstream/downstream detection of a vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleTransit {
    pub station_id: String,
    pub lane_id: String,
    pub upstream_tick: u64,
    pub downstream_tick: u64,
}

impl VehicleTransit {
    pub fn new(
        station_id: impl Into<String>,
        lane_id: impl Into<String>,
        upstream_tick: u64,
        downstream_tick: u64,
    ) -> Result<Self, RowErrorKind> {
        if downstream_tick <= upstream_tick {
            return Err(RowErrorKind::NonForwardTransit { upstream_tick, downstream_tick });
        }
        Ok(Self {
            station_id: station_id.into(),
            lane_id: lane_id.into(),
            upstream_tick,
            downstream_tick,
        })
    }

    pub fn tick_delta(&self) -> u64 {
        self.downstream_tick - self.upstream_tick
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    /// Seconds since trace start (upstream arrival).
    pub time: f64,
    pub lane_id: String,
    /// km/hr
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowErrorKind {
    ColumnCount(usize),
    EmptyField(&'static str),
    BadTick { column: &'static str, value: String },
    NonForwardTransit { upstream_tick: u64, downstream_tick: u64 },
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowErrorKind::ColumnCount(n) => write!(f, "expected 4 columns, found {n}"),
            RowErrorKind::EmptyField(col) => write!(f, "empty {col}"),
            RowErrorKind::BadTick { column, value } => {
                write!(f, "{column} `{value}` is not a non-negative integer")
            }
            RowErrorKind::NonForwardTransit { upstream_tick, downstream_tick } => write!(
                f,
                "non-forward transit: downstream tick {downstream_tick} <= upstream tick {upstream_tick}"
            ),
        }
    }
}

/// A rejected data row, with its 1-based line number in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

impl std::error::Error for RowError {}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTrace {
    /// Accepted records in file order.
    pub transits: Vec<VehicleTransit>,
    pub rejected: Vec<RowError>,
}

/// Parses a trace CSV. Malformed rows are collected in `rejected` rather than
/// aborting; only a bad header or an unreadable stream is a hard error. An
/// empty input (or one with only comments) yields an empty trace.
pub fn parse_trace<R: Read>(source: R) -> Result<ParsedTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut out = ParsedTrace::default();
    let mut seen_header = false;
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if !seen_header {
            if record.iter().ne(TRACE_HEADER.iter().copied()) {
                return Err(Error::TraceHeader(record.iter().collect::<Vec<_>>().join(",")));
            }
            seen_header = true;
            continue;
        }
        match parse_row(&record) {
            Ok(t) => out.transits.push(t),
            Err(kind) => out.rejected.push(RowError { line, kind }),
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord) -> Result<VehicleTransit, RowErrorKind> {
    if record.len() != 4 {
        return Err(RowErrorKind::ColumnCount(record.len()));
    }
    let station = &record[0];
    let lane = &record[1];
    if station.is_empty() {
        return Err(RowErrorKind::EmptyField("station_id"));
    }
    if lane.is_empty() {
        return Err(RowErrorKind::EmptyField("lane_id"));
    }
    let tick = |column: &'static str, value: &str| {
        value
            .parse::<u64>()
            .map_err(|_| RowErrorKind::BadTick { column, value: value.to_string() })
    };
    let up = tick("upstream_tick", &record[2])?;
    let down = tick("downstream_tick", &record[3])?;
    VehicleTransit::new(station, lane, up, down)
}

pub fn write_trace<W: Write>(transits: &[VehicleTransit], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRACE_HEADER)?;
    for t in transits {
        w.write_record([
            t.station_id.as_str(),
            t.lane_id.as_str(),
            &t.upstream_tick.to_string(),
            &t.downstream_tick.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Speed over the loop spacing in km/hr, timestamped at the upstream tick.
pub fn compute_velocity(transit: &VehicleTransit, geometry: &SensorGeometry) -> Result<VelocitySample> {
    let dt = transit.tick_delta();
    if dt == 0 || transit.downstream_tick < transit.upstream_tick {
        return Err(Error::Config(format!(
            "non-forward transit {} -> {}",
            transit.upstream_tick, transit.downstream_tick
        )));
    }
    Ok(VelocitySample {
        time: transit.upstream_tick as f64 / geometry.tick_rate,
        lane_id: transit.lane_id.clone(),
        velocity: speed_kmh(geometry.loop_spacing, geometry.tick_rate, dt as f64),
    })
}

/// `spacing * tick_rate * 3.6 / dt` evaluated with an error-free product and
/// one correction step on the quotient, so the result is the correctly
/// rounded value of the exact expression in the common case.
fn speed_kmh(spacing: f64, tick_rate: f64, dt_ticks: f64) -> f64 {
    let k = tick_rate * KMH_PER_MPS;
    let p = spacing * k;
    let p_err = spacing.mul_add(k, -p);
    let q = p / dt_ticks;
    let rem = (-q).mul_add(dt_ticks, p) + p_err;
    q + rem / dt_ticks
}

pub fn compute_velocities(transits: &[VehicleTransit], geometry: &SensorGeometry) -> Result<Vec<VelocitySample>> {
    transits.iter().map(|t| compute_velocity(t, geometry)).collect()
}

/// Partitions samples by `floor(time / window)`. Windows come back in
/// ascending index order; empty windows are omitted; within a window the
/// input order is kept.
pub fn window_samples(samples: &[VelocitySample], window: f64) -> Result<Vec<(u64, Vec<VelocitySample>)>> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::Config(format!("window must be positive, got {window}")));
    }
    let mut buckets: BTreeMap<u64, Vec<VelocitySample>> = BTreeMap::new();
    for s in samples {
        let idx = (s.time / window).floor().max(0.0) as u64;
        buckets.entry(idx).or_default().push(s.clone());
    }
    Ok(buckets.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(time: f64) -> VelocitySample {
        VelocitySample { time, lane_id: "1".into(), velocity: 80.0 }
    }

    #[test]
    fn parses_single_row() {
        let src = "station_id,lane_id,upstream_tick,downstream_tick\nS1,3,7200,7215\n";
        let parsed = parse_trace(src.as_bytes()).unwrap();
        assert!(parsed.rejected.is_empty());
        assert_eq!(parsed.transits, vec![VehicleTransit::new("S1", "3", 7200, 7215).unwrap()]);
    }

    #[test]
    fn rejects_non_forward_with_line_number() {
        let src = "# comment\nstation_id,lane_id,upstream_tick,downstream_tick\nS1,3,7200,7215\nS1,3,7300,7300\nS1,3,x,1\nS1,3\n";
        let parsed = parse_trace(src.as_bytes()).unwrap();
        assert_eq!(parsed.transits.len(), 1);
        assert_eq!(parsed.rejected.len(), 3);
        assert_eq!(parsed.rejected[0].line, 4);
        assert!(parsed.rejected[0].to_string().contains("non-forward transit"));
        assert!(matches!(parsed.rejected[1].kind, RowErrorKind::BadTick { column: "upstream_tick", .. }));
        assert_eq!(parsed.rejected[2].kind, RowErrorKind::ColumnCount(2));
    }

    #[test]
    fn empty_input_is_empty_trace() {
        assert_eq!(parse_trace("".as_bytes()).unwrap(), ParsedTrace::default());
        assert_eq!(parse_trace("# nothing\n".as_bytes()).unwrap(), ParsedTrace::default());
    }

    #[test]
    fn missing_header_is_error() {
        assert!(matches!(parse_trace("S1,3,1,2\n".as_bytes()), Err(Error::TraceHeader(_))));
    }

    #[test]
    fn velocity_from_fifteen_ticks() {
        let t = VehicleTransit::new("S1", "1", 0, 15).unwrap();
        let v = compute_velocity(&t, &SensorGeometry::bhl()).unwrap();
        assert_eq!(v.velocity, 87.7824);
        assert_eq!(v.time, 0.0);
    }

    #[test]
    fn velocity_unit_time_and_halving() {
        let g = SensorGeometry::bhl();
        let one_s = compute_velocity(&VehicleTransit::new("S", "1", 120, 180).unwrap(), &g).unwrap();
        assert_eq!(one_s.velocity, 21.9456);
        assert_eq!(one_s.time, 2.0);
        let half = compute_velocity(&VehicleTransit::new("S", "1", 120, 150).unwrap(), &g).unwrap();
        assert_eq!(half.velocity, 2.0 * one_s.velocity);
    }

    #[test]
    fn geometry_rejects_nonpositive() {
        assert!(SensorGeometry::new(0.0, 1.0, 60.0).is_err());
        assert!(SensorGeometry::new(6.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn windows_split_on_boundary() {
        let w = window_samples(&[sample(10.0), sample(3700.0)], 3600.0).unwrap();
        assert_eq!(w.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 1]);
        let single = window_samples(&[sample(0.0), sample(3599.9)], 3600.0).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].1.len(), 2);
        assert!(window_samples(&[], 0.0).is_err());
    }
}
