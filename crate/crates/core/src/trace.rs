//! Piecewise-constant exogenous time series (generation, outside temperature).
//!
//! A [`StepTrace`] holds `(t, value)` breakpoints; each value applies on the
//! right-open interval up to the next breakpoint, and the last value holds
//! forever.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has no breakpoints")]
    Empty,
    #[error("trace breakpoints must be strictly ascending (t = {prev} followed by t = {next})")]
    NotAscending { prev: f64, next: f64 },
    #[error("trace must start at or before t = 0 (first breakpoint at t = {0})")]
    StartsLate(f64),
    #[error("non-finite value in trace at t = {0}")]
    NonFinite(f64),
    #[error("query at t = {t} precedes trace start {start}")]
    QueryBeforeTraceStart { t: f64, start: f64 },
    #[error("resolution must be positive")]
    BadResolution,
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace csv line {line}: {msg}")]
    Parse { line: u64, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace<S> {
    points: Vec<(S, S)>,
}

impl<S: Scalar> StepTrace<S> {
    pub fn new(points: Vec<(S, S)>) -> Result<Self, TraceError> {
        let first = points.first().ok_or(TraceError::Empty)?;
        if first.0 > S::zero() {
            return Err(TraceError::StartsLate(first.0.to_f64_lossy()));
        }
        for &(t, v) in &points {
            if !t.is_finite() || !v.is_finite() {
                return Err(TraceError::NonFinite(t.to_f64_lossy()));
            }
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(TraceError::NotAscending {
                    prev: w[0].0.to_f64_lossy(),
                    next: w[1].0.to_f64_lossy(),
                });
            }
        }
        Ok(Self { points })
    }

    /// A trace holding `value` from `t = 0` on.
    pub fn constant(value: S) -> Self {
        Self {
            points: vec![(S::zero(), value)],
        }
    }

    pub fn points(&self) -> &[(S, S)] {
        &self.points
    }

    pub fn start(&self) -> S {
        self.points[0].0
    }

    pub fn value_at(&self, t: S) -> Result<S, TraceError> {
        if t < self.start() {
            return Err(TraceError::QueryBeforeTraceStart {
                t: t.to_f64_lossy(),
                start: self.start().to_f64_lossy(),
            });
        }
        let idx = self.points.partition_point(|&(bt, _)| bt <= t);
        Ok(self.points[idx - 1].1)
    }

    /// Smallest breakpoint strictly after `t`, or `+inf`.
    pub fn next_breakpoint_after(&self, t: S) -> S {
        let idx = self.points.partition_point(|&(bt, _)| bt <= t);
        self.points.get(idx).map(|&(bt, _)| bt).unwrap_or_else(S::infinity)
    }

    pub fn min_value(&self) -> S {
        self.points.iter().map(|&(_, v)| v).fold(S::infinity(), S::min)
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self {
            points: self.points.iter().map(|&(t, v)| (t, v * factor)).collect(),
        }
    }

    /// Pointwise sum over `t >= max(a.start, b.start)` with merged breakpoints.
    pub fn sum(&self, other: &Self) -> Self {
        let start = self.start().max(other.start());
        let mut times: Vec<S> = self
            .points
            .iter()
            .chain(other.points.iter())
            .map(|&(t, _)| t)
            .filter(|&t| t > start)
            .collect();
        times.push(start);
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        times.dedup();
        let points = times
            .into_iter()
            .map(|t| {
                // Both traces are defined at every merged time by construction.
                let v = self.value_at(t).unwrap() + other.value_at(t).unwrap();
                (t, v)
            })
            .collect();
        Self { points }
    }

    /// Converts a sampled, linearly interpolated series into a step trace with
    /// bins of width `resolution` starting at the first sample. Each bin takes
    /// the interpolated value at its midpoint.
    pub fn resample(samples: &[(S, S)], resolution: S) -> Result<Self, TraceError> {
        if !(resolution > S::zero()) {
            return Err(TraceError::BadResolution);
        }
        let raw = Self::new(samples.to_vec())?;
        let pts = raw.points();
        let (t0, t_end) = (pts[0].0, pts[pts.len() - 1].0);
        let interp = |t: S| -> S {
            let idx = pts.partition_point(|&(bt, _)| bt <= t);
            if idx == 0 {
                return pts[0].1;
            }
            if idx == pts.len() {
                return pts[pts.len() - 1].1;
            }
            let (ta, va) = pts[idx - 1];
            let (tb, vb) = pts[idx];
            va + (vb - va) * (t - ta) / (tb - ta)
        };
        let half = resolution / S::lit(2.0);
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let t = t0 + resolution * S::from_usize(k).unwrap();
            if k > 0 && t >= t_end {
                break;
            }
            out.push((t, interp(t + half)));
            k += 1;
        }
        Self::new(out)
    }

    /// Reads a `time_h,value` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "time_h" || &headers[1] != "value" {
            return Err(TraceError::Parse {
                line: 1,
                msg: format!(
                    "expected header `time_h,value`, found `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| -> Result<S, TraceError> {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<f64>().map(S::lit).map_err(|e| TraceError::Parse {
                    line,
                    msg: format!("`{raw}`: {e}"),
                })
            };
            points.push((field(0)?, field(1)?));
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time_h", "value"])?;
        for &(t, v) in &self.points {
            wtr.write_record([t.to_string(), v.to_string()])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Hourly shape of the bundled synthetic wind trace, as multiples of the
/// trough. Trough at hour 6, peak at hour 10 of exactly twice the trough.
pub const SYNTHETIC_WIND_SHAPE: [f64; 24] = [
    1.50, 1.40, 1.30, 1.20, 1.10, 1.05, 1.00, 1.25, 1.50, 1.75, 2.00, 1.90, //
    1.80, 1.70, 1.60, 1.50, 1.45, 1.40, 1.35, 1.30, 1.40, 1.50, 1.55, 1.50,
];

/// Synthetic (not measured) 24 h hourly wind generation trace.
pub fn synthetic_wind<S: Scalar>(trough: S) -> StepTrace<S> {
    let points = SYNTHETIC_WIND_SHAPE
        .iter()
        .enumerate()
        .map(|(h, &m)| (S::from_usize(h).unwrap(), trough * S::lit(m)))
        .collect();
    StepTrace { points }
}
