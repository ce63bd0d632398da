//! Simulation output: one record per significant moment plus a horizon-level
//! summary. Everything in a record holds on `[t_i, t_{i+1})` except `s`, `r`,
//! `o` and SOC, which evolve linearly.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::scheduler::AdmissionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Horizon,
    Release,
    Completion,
    PhaseChange,
    DeadlineOnset,
    SocFloor,
    SocCeiling,
    /// Discharge re-enabled after recovering from the floor.
    SocReconnect,
    TraceBreakpoint,
    Overrun,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::Horizon,
        EventKind::Release,
        EventKind::Completion,
        EventKind::PhaseChange,
        EventKind::DeadlineOnset,
        EventKind::SocFloor,
        EventKind::SocCeiling,
        EventKind::SocReconnect,
        EventKind::TraceBreakpoint,
        EventKind::Overrun,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Horizon => "horizon",
            EventKind::Release => "release",
            EventKind::Completion => "completion",
            EventKind::PhaseChange => "phase_change",
            EventKind::DeadlineOnset => "deadline_onset",
            EventKind::SocFloor => "soc_floor",
            EventKind::SocCeiling => "soc_ceiling",
            EventKind::SocReconnect => "soc_reconnect",
            EventKind::TraceBreakpoint => "trace_breakpoint",
            EventKind::Overrun => "overrun",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSnapshot<S> {
    pub id: u32,
    pub s: S,
    pub r: S,
    pub o: S,
    pub phase: usize,
    /// Effective instance index, `None` before the first release.
    pub instance: Option<u64>,
    /// Power of the current phase, kW.
    pub power: S,
    pub priority: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineMiss<S> {
    pub load: u32,
    pub instance: u64,
    pub t: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord<S> {
    pub t: S,
    pub kinds: Vec<EventKind>,
    /// Executing load ids.
    pub op_set: Vec<u32>,
    pub non_defer: Vec<u32>,
    pub loads: Vec<LoadSnapshot<S>>,
    pub eg: S,
    /// Total power of the executing set.
    pub demand: S,
    pub headroom: S,
    pub battery_power: S,
    pub soc: S,
    pub deficiency: S,
    pub curtailed: S,
    /// Deadline misses detected at this instant.
    pub misses: Vec<DeadlineMiss<S>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admission: Option<AdmissionResult<S>>,
}

impl<S: Scalar> TimelineRecord<S> {
    pub fn non_defer_demand(&self) -> S {
        self.loads
            .iter()
            .filter(|l| self.non_defer.contains(&l.id))
            .fold(S::zero(), |acc, l| acc + l.power)
    }

    pub fn load(&self, id: u32) -> Option<&LoadSnapshot<S>> {
        self.loads.iter().find(|l| l.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeficiencyInterval<S> {
    pub start: S,
    pub end: S,
    /// kW.
    pub peak: S,
    /// kWh.
    pub energy: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary<S> {
    pub feasible: bool,
    pub deficiency_intervals: Vec<DeficiencyInterval<S>>,
    pub deadline_misses: Vec<DeadlineMiss<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completion<S> {
    pub load: u32,
    pub instance: u64,
    pub release: S,
    pub time: S,
    /// Operation time `C` of the instance.
    pub operation_time: S,
    /// Execution time accumulated by the engine.
    pub executed: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverrunEvent<S> {
    pub load: u32,
    pub instance: u64,
    pub t: S,
    pub remaining: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline<S> {
    pub horizon: (S, S),
    pub load_ids: Vec<u32>,
    pub records: Vec<TimelineRecord<S>>,
    pub summary: Summary<S>,
    pub completions: Vec<Completion<S>>,
    pub overruns: Vec<OverrunEvent<S>>,
}

/// Width of the segment starting at record `i` (zero for the last record).
pub fn segment_width<S: Scalar>(records: &[TimelineRecord<S>], i: usize) -> S {
    records.get(i + 1).map_or(S::zero(), |next| next.t - records[i].t)
}

/// Groups maximal runs of positive values of `profile(record)` into intervals.
pub fn intervals_of<S: Scalar>(
    records: &[TimelineRecord<S>],
    profile: impl Fn(&TimelineRecord<S>) -> S,
) -> Vec<DeficiencyInterval<S>> {
    let mut out: Vec<DeficiencyInterval<S>> = Vec::new();
    let mut open = false;
    for (i, rec) in records.iter().enumerate() {
        let v = profile(rec);
        let width = segment_width(records, i);
        if v > S::event_eps() {
            let end = rec.t + width;
            match out.last_mut() {
                Some(iv) if open => {
                    iv.end = end;
                    iv.peak = iv.peak.max(v);
                    iv.energy = iv.energy + v * width;
                }
                _ => out.push(DeficiencyInterval {
                    start: rec.t,
                    end,
                    peak: v,
                    energy: v * width,
                }),
            }
            open = true;
        } else {
            open = false;
        }
    }
    out
}

pub fn summarize<S: Scalar>(records: &[TimelineRecord<S>]) -> Summary<S> {
    let deficiency_intervals = intervals_of(records, |r| r.deficiency);
    let deadline_misses: Vec<_> = records.iter().flat_map(|r| r.misses.iter().copied()).collect();
    Summary {
        feasible: deficiency_intervals.is_empty() && deadline_misses.is_empty(),
        deficiency_intervals,
        deadline_misses,
    }
}

/// `(t, kind)` pairs of every significant moment, in time order.
pub fn significant_moments<S: Scalar>(timeline: &Timeline<S>) -> Vec<(S, EventKind)> {
    let mut out: Vec<(S, EventKind)> = Vec::new();
    for rec in &timeline.records {
        for &k in &rec.kinds {
            if !out
                .iter()
                .rev()
                .take_while(|(t, _)| *t == rec.t)
                .any(|&(_, kk)| kk == k)
            {
                out.push((rec.t, k));
            }
        }
    }
    out
}

impl<S: Scalar> Timeline<S> {
    pub fn total_deficiency_energy(&self) -> S {
        self.summary
            .deficiency_intervals
            .iter()
            .fold(S::zero(), |acc, iv| acc + iv.energy)
    }

    pub fn final_soc(&self) -> S {
        self.records.last().map_or(S::zero(), |r| r.soc)
    }
}

#[derive(Debug, Error)]
pub enum TimelineIoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("timeline csv line {line}: {msg}")]
    Parse { line: u64, msg: String },
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

const FIXED_COLUMNS: [&str; 8] = [
    "t_h",
    "event_kind",
    "op_set",
    "demand_kw",
    "eg_kw",
    "battery_kw",
    "soc",
    "deficiency_kw",
];
const TRAILING_COLUMNS: [&str; 4] = ["nondefer", "headroom_kw", "curtailed_kw", "deadline_misses"];

impl<S: Scalar> Timeline<S> {
    /// Writes one row per record. Numbers use the shortest representation that
    /// parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TimelineIoError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        for id in &self.load_ids {
            header.extend([format!("s_{id}"), format!("r_{id}"), format!("o_{id}")]);
        }
        header.extend(TRAILING_COLUMNS.iter().map(|s| s.to_string()));
        wtr.write_record(&header)?;
        for rec in &self.records {
            let mut row = vec![
                rec.t.to_string(),
                join(&rec.kinds),
                join(&rec.op_set),
                rec.demand.to_string(),
                rec.eg.to_string(),
                rec.battery_power.to_string(),
                rec.soc.to_string(),
                rec.deficiency.to_string(),
            ];
            for l in &rec.loads {
                row.extend([l.s.to_string(), l.r.to_string(), l.o.to_string()]);
            }
            row.push(join(&rec.non_defer));
            row.push(rec.headroom.to_string());
            row.push(rec.curtailed.to_string());
            row.push(join(rec.misses.iter().map(|m| format!("{}:{}", m.load, m.instance))));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reconstructs a timeline from [`Timeline::write_csv`] output. Fields not
    /// present in the CSV (phase, instance, per-load power, admission detail,
    /// completions) are left empty; the summary is recomputed from the rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TimelineIoError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let bad = |line: u64, msg: String| TimelineIoError::Parse { line, msg };
        let ncols = header.len();
        if ncols < FIXED_COLUMNS.len() + TRAILING_COLUMNS.len()
            || !(ncols - FIXED_COLUMNS.len() - TRAILING_COLUMNS.len()).is_multiple_of(3)
            || header.iter().take(FIXED_COLUMNS.len()).ne(FIXED_COLUMNS)
        {
            return Err(bad(1, "unexpected header".into()));
        }
        let nloads = (ncols - FIXED_COLUMNS.len() - TRAILING_COLUMNS.len()) / 3;
        let mut load_ids = Vec::with_capacity(nloads);
        for k in 0..nloads {
            let col = &header[FIXED_COLUMNS.len() + 3 * k];
            let id = col
                .strip_prefix("s_")
                .and_then(|x| x.parse::<u32>().ok())
                .ok_or_else(|| bad(1, format!("bad per-load column `{col}`")))?;
            load_ids.push(id);
        }

        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let num = |i: usize| -> Result<S, TimelineIoError> {
                row[i]
                    .parse::<f64>()
                    .map(S::lit)
                    .map_err(|e| bad(line, format!("column {}: {e}", &header[i])))
            };
            let ids = |i: usize| -> Result<Vec<u32>, TimelineIoError> {
                row[i]
                    .split(';')
                    .filter(|x| !x.is_empty())
                    .map(|x| x.parse::<u32>().map_err(|e| bad(line, format!("id `{x}`: {e}"))))
                    .collect()
            };
            let kinds = row[1]
                .split(';')
                .filter(|x| !x.is_empty())
                .map(|x| x.parse::<EventKind>().map_err(|e| bad(line, e)))
                .collect::<Result<Vec<_>, _>>()?;
            let t = num(0)?;
            let mut loads = Vec::with_capacity(nloads);
            for (k, &id) in load_ids.iter().enumerate() {
                let base = FIXED_COLUMNS.len() + 3 * k;
                loads.push(LoadSnapshot {
                    id,
                    s: num(base)?,
                    r: num(base + 1)?,
                    o: num(base + 2)?,
                    phase: 0,
                    instance: None,
                    power: S::zero(),
                    priority: 0,
                });
            }
            let tail = FIXED_COLUMNS.len() + 3 * nloads;
            let misses = row[tail + 3]
                .split(';')
                .filter(|x| !x.is_empty())
                .map(|x| {
                    let (l, k) = x.split_once(':').ok_or_else(|| bad(line, format!("miss `{x}`")))?;
                    Ok(DeadlineMiss {
                        load: l.parse().map_err(|_| bad(line, format!("miss `{x}`")))?,
                        instance: k.parse().map_err(|_| bad(line, format!("miss `{x}`")))?,
                        t,
                    })
                })
                .collect::<Result<Vec<_>, TimelineIoError>>()?;
            records.push(TimelineRecord {
                t,
                kinds,
                op_set: ids(2)?,
                non_defer: ids(tail)?,
                loads,
                eg: num(4)?,
                demand: num(3)?,
                headroom: num(tail + 1)?,
                battery_power: num(5)?,
                soc: num(6)?,
                deficiency: num(7)?,
                curtailed: num(tail + 2)?,
                misses,
                admission: None,
            });
        }
        let horizon = match (records.first(), records.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (S::zero(), S::zero()),
        };
        let summary = summarize(&records);
        Ok(Timeline {
            horizon,
            load_ids,
            records,
            summary,
            completions: Vec::new(),
            overruns: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, deficiency: f64) -> TimelineRecord<f64> {
        TimelineRecord {
            t,
            kinds: vec![],
            op_set: vec![],
            non_defer: vec![],
            loads: vec![],
            eg: 0.0,
            demand: 0.0,
            headroom: 0.0,
            battery_power: 0.0,
            soc: 1.0,
            deficiency,
            curtailed: 0.0,
            misses: vec![],
            admission: None,
        }
    }

    #[test]
    fn intervals_merge_adjacent_segments() {
        let recs = vec![
            rec(0.0, 0.0),
            rec(1.0, 60.0),
            rec(1.5, 20.0),
            rec(2.0, 0.0),
            rec(3.0, 10.0),
        ];
        let s = summarize(&recs);
        assert!(!s.feasible);
        assert_eq!(
            s.deficiency_intervals,
            vec![
                DeficiencyInterval {
                    start: 1.0,
                    end: 2.0,
                    peak: 60.0,
                    energy: 40.0
                },
                DeficiencyInterval {
                    start: 3.0,
                    end: 3.0,
                    peak: 10.0,
                    energy: 0.0
                },
            ]
        );
    }

    #[test]
    fn event_kind_names_round_trip() {
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>().unwrap(), k);
        }
        assert!("nope".parse::<EventKind>().is_err());
    }
}
