//! TOML scenario files.
//!
//! ```toml
//! [meta]
//! power_unit = "kW"          # or "W"; applies to load powers, p_ac, g_out and generation traces
//! horizon_h = [0.0, 24.0]
//! tie_break = "reject"       # optional: "reject" | "index"
//!
//! [battery]
//! capacity_kwh = 180.0
//! max_power_kw = 90.0
//! initial_soc = 1.0          # optional, default 1.0
//! reconnect_soc = 0.25       # optional: discharge resumes here after hitting the 20% floor
//!
//! [generation]
//! traces = ["wind.csv", { constant = 100.0 }, { points = [[0.0, 10.0], [6.0, 20.0]] }]
//!
//! [temperature]              # required iff a thermostatic load is present
//! trace = "temperature.csv"
//!
//! [[load]]
//! id = 1
//! kind = "simple"            # simple | phased | composite | thermostatic
//! deadline_h = 2.0
//! period_h = 2.0
//! first_release_h = 0.0      # optional, default 0
//! priority = 1               # per-phase `priority` instead for composite loads
//! phases = [{ power = 80.0, duration_h = 0.5, preemptive = false }]
//! ```
//!
//! Trace file paths are relative to the scenario file. Unknown keys are
//! rejected, and load-level problems are reported with the line of their
//! `[[load]]` block.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::battery::{BatteryBank, DEFAULT_RECONNECT_SOC};
use crate::load_model::{LoadKind, LoadSpec, Phase, ThermalParams};
use crate::scalar::Scalar;
use crate::sim_engine::{Scenario, ScenarioError, TieBreak};
use crate::trace::{StepTrace, TraceError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: trace: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: ScenarioError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum PowerUnit {
    W,
    #[serde(rename = "kW")]
    KW,
}

impl PowerUnit {
    pub fn to_kw(self) -> f64 {
        match self {
            PowerUnit::W => 1e-3,
            PowerUnit::KW => 1.0,
        }
    }
}

impl fmt::Display for PowerUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerUnit::W => "W",
            PowerUnit::KW => "kW",
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    meta: RawMeta,
    battery: RawBattery,
    generation: RawGeneration,
    temperature: Option<RawTemperature>,
    #[serde(default)]
    load: Vec<toml::Spanned<RawLoad>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    power_unit: PowerUnit,
    horizon_h: [f64; 2],
    tie_break: Option<TieBreak>,
}

fn default_soc() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBattery {
    capacity_kwh: f64,
    max_power_kw: f64,
    #[serde(default = "default_soc")]
    initial_soc: f64,
    #[serde(default = "default_reconnect")]
    reconnect_soc: f64,
}

fn default_reconnect() -> f64 {
    DEFAULT_RECONNECT_SOC
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeneration {
    traces: Vec<TraceRef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemperature {
    trace: TraceRef,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TraceRef {
    File(String),
    Constant { constant: f64 },
    Inline { points: Vec<[f64; 2]> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    id: u32,
    kind: LoadKind,
    phases: Vec<RawPhase>,
    deadline_h: f64,
    period_h: f64,
    #[serde(default)]
    first_release_h: f64,
    priority: Option<u32>,
    thermal: Option<RawThermal>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    power: f64,
    duration_h: Option<f64>,
    preemptive: bool,
    priority: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThermal {
    g_out: f64,
    c_h: f64,
    n_ac: f64,
    p_ac: f64,
    x_stable: f64,
}

/// Reads a scenario file. `tie_break`, when given, overrides the file's setting.
pub fn load_scenario<S: Scalar>(path: &Path, tie_break: Option<TieBreak>) -> Result<Scenario<S>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, path, base, tie_break)
}

/// Parses scenario text. `origin` names the document in diagnostics and
/// `base_dir` resolves relative trace paths.
pub fn parse_scenario<S: Scalar>(
    text: &str,
    origin: &Path,
    base_dir: &Path,
    tie_break: Option<TieBreak>,
) -> Result<Scenario<S>, ConfigError> {
    let path = origin.to_path_buf();
    let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        path: path.clone(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let line_of = |offset: usize| text[..offset.min(text.len())].matches('\n').count() + 1;
    let unit = raw.meta.power_unit.to_kw();
    let lit = S::lit;

    let read_trace = |r: &TraceRef, scale: f64| -> Result<StepTrace<S>, ConfigError> {
        let trace = match r {
            TraceRef::File(name) => {
                let file = base_dir.join(name);
                let f = fs::File::open(&file).map_err(|source| ConfigError::Io {
                    path: file.clone(),
                    source,
                })?;
                StepTrace::read_csv(f).map_err(|source| ConfigError::Trace { path: file, source })?
            }
            TraceRef::Constant { constant } => StepTrace::constant(lit(*constant)),
            TraceRef::Inline { points } => StepTrace::new(points.iter().map(|p| (lit(p[0]), lit(p[1]))).collect())
                .map_err(|source| ConfigError::Trace {
                    path: path.clone(),
                    source,
                })?,
        };
        Ok(if scale == 1.0 { trace } else { trace.scaled(lit(scale)) })
    };

    let mut traces = raw.generation.traces.iter();
    let first = traces.next().ok_or_else(|| ConfigError::Invalid {
        path: path.clone(),
        line: line_of(text.find("[generation]").unwrap_or(0)),
        message: "[generation] needs at least one trace".into(),
    })?;
    let mut generation = read_trace(first, unit)?;
    for r in traces {
        generation = generation.sum(&read_trace(r, unit)?);
    }
    let temperature = raw
        .temperature
        .as_ref()
        .map(|t| read_trace(&t.trace, 1.0))
        .transpose()?;

    let battery = BatteryBank {
        capacity: lit(raw.battery.capacity_kwh),
        max_power: lit(raw.battery.max_power_kw),
        soc: lit(raw.battery.initial_soc),
        reconnect_soc: lit(raw.battery.reconnect_soc),
        cut_off: false,
    }
    .settled();

    let mut loads = Vec::with_capacity(raw.load.len());
    for spanned in &raw.load {
        let line = line_of(spanned.span().start);
        let rl = spanned.get_ref();
        let invalid = |message: String| ConfigError::Invalid {
            path: path.clone(),
            line,
            message: format!("load {}: {message}", rl.id),
        };
        let mut phases = Vec::with_capacity(rl.phases.len());
        for (k, p) in rl.phases.iter().enumerate() {
            let priority = match (rl.kind, p.priority, rl.priority) {
                (LoadKind::Composite, Some(pp), None) => pp,
                (LoadKind::Composite, _, _) => {
                    return Err(invalid(format!(
                        "composite loads give `priority` on every phase (phase {k}) and not on the load"
                    )))
                }
                (_, None, Some(lp)) => lp,
                (_, _, _) => {
                    return Err(invalid(format!(
                        "{:?} loads take a single load-level `priority` (phase {k})",
                        rl.kind
                    )))
                }
            };
            let duration = match (rl.kind, p.duration_h) {
                (LoadKind::Thermostatic, None) => 0.0,
                (LoadKind::Thermostatic, Some(_)) => {
                    return Err(invalid(
                        "thermostatic operation time is derived; omit `duration_h`".into(),
                    ))
                }
                (_, Some(d)) => d,
                (_, None) => return Err(invalid(format!("phase {k} is missing `duration_h`"))),
            };
            phases.push(Phase {
                power: lit(p.power * unit),
                duration: lit(duration),
                preemptive: p.preemptive,
                priority,
            });
        }
        let thermal = rl.thermal.as_ref().map(|th| ThermalParams {
            g_out: lit(th.g_out * unit),
            c_h: lit(th.c_h),
            n_ac: lit(th.n_ac),
            p_ac: lit(th.p_ac * unit),
            x_stable: lit(th.x_stable),
        });
        let spec = LoadSpec {
            id: rl.id,
            kind: rl.kind,
            phases,
            deadline: lit(rl.deadline_h),
            period: lit(rl.period_h),
            first_release: lit(rl.first_release_h),
            thermal,
        };
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        loads.push(spec);
    }

    let horizon = (lit(raw.meta.horizon_h[0]), lit(raw.meta.horizon_h[1]));
    let tie = tie_break.or(raw.meta.tie_break).unwrap_or_default();
    let scenario = Scenario::new(loads, battery, generation, temperature, horizon).with_tie_break(tie);
    scenario.validate().map_err(|source| ConfigError::Scenario {
        path: path.clone(),
        source,
    })?;
    Ok(scenario)
}
