//! Electric load descriptions and per-instance parameter resolution.
//!
//! Four kinds of load are supported:
//!
//! * `Simple` - one phase, fixed power and duration (e.g. a rice cooker).
//! * `Phased` - a strict sequence of phases sharing one priority (a dishwasher).
//! * `Composite` - precedence-linked appliances folded into one load; every
//!   phase carries its own priority.
//! * `Thermostatic` - an AC unit whose operation time per period is the duty
//!   cycle needed to hold a setpoint against the outside temperature, frozen at
//!   each instance release.
//!
//! Times are in hours and powers in kW throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::trace::{StepTrace, TraceError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("load {id}: {msg}")]
    Invalid { id: u32, msg: String },
    #[error("load {id}: query at t = {t} precedes first release {first_release}")]
    QueryBeforeFirstRelease { id: u32, t: f64, first_release: f64 },
    #[error("invalid thermal parameters: n_ac and p_ac must be positive")]
    InvalidThermalParams,
    #[error("load {0}: thermostatic load requires a temperature trace")]
    MissingTemperature(u32),
    #[error("load {id}: temperature trace: {source}")]
    Temperature {
        id: u32,
        #[source]
        source: TraceError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadKind {
    Simple,
    Phased,
    Composite,
    Thermostatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase<S> {
    pub power: S,
    pub duration: S,
    pub preemptive: bool,
    /// Smaller value = higher priority.
    pub priority: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams<S> {
    pub g_out: S,
    pub c_h: S,
    pub n_ac: S,
    pub p_ac: S,
    pub x_stable: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec<S> {
    pub id: u32,
    pub kind: LoadKind,
    /// For thermostatic loads the single phase's `duration` is ignored; the
    /// operation time is derived per instance.
    pub phases: Vec<Phase<S>>,
    pub deadline: S,
    pub period: S,
    pub first_release: S,
    pub thermal: Option<ThermalParams<S>>,
}

impl<S: Scalar> LoadSpec<S> {
    pub fn simple(id: u32, power: S, duration: S, deadline: S, period: S, preemptive: bool, priority: u32) -> Self {
        Self {
            id,
            kind: LoadKind::Simple,
            phases: vec![Phase {
                power,
                duration,
                preemptive,
                priority,
            }],
            deadline,
            period,
            first_release: S::zero(),
            thermal: None,
        }
    }

    /// Phases given as `(power, duration, preemptive)`.
    pub fn phased(id: u32, phases: &[(S, S, bool)], deadline: S, period: S, priority: u32) -> Self {
        Self {
            id,
            kind: LoadKind::Phased,
            phases: phases
                .iter()
                .map(|&(power, duration, preemptive)| Phase {
                    power,
                    duration,
                    preemptive,
                    priority,
                })
                .collect(),
            deadline,
            period,
            first_release: S::zero(),
            thermal: None,
        }
    }

    pub fn composite(id: u32, phases: Vec<Phase<S>>, deadline: S, period: S) -> Self {
        Self {
            id,
            kind: LoadKind::Composite,
            phases,
            deadline,
            period,
            first_release: S::zero(),
            thermal: None,
        }
    }

    pub fn thermostatic(
        id: u32,
        power: S,
        deadline: S,
        period: S,
        preemptive: bool,
        priority: u32,
        thermal: ThermalParams<S>,
    ) -> Self {
        Self {
            id,
            kind: LoadKind::Thermostatic,
            phases: vec![Phase {
                power,
                duration: S::zero(),
                preemptive,
                priority,
            }],
            deadline,
            period,
            first_release: S::zero(),
            thermal: Some(thermal),
        }
    }

    pub fn with_first_release(mut self, first_release: S) -> Self {
        self.first_release = first_release;
        self
    }

    /// Sum of the declared phase durations (not meaningful for thermostatic loads).
    pub fn nominal_operation_time(&self) -> S {
        self.phases.iter().fold(S::zero(), |acc, p| acc + p.duration)
    }

    fn invalid(&self, msg: impl Into<String>) -> LoadError {
        LoadError::Invalid {
            id: self.id,
            msg: msg.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        let finite = |x: S| x.is_finite();
        if !finite(self.period) || self.period <= S::zero() {
            return Err(self.invalid("period must be positive"));
        }
        if !finite(self.deadline) || self.deadline <= S::zero() {
            return Err(self.invalid("deadline must be positive"));
        }
        if !finite(self.first_release) {
            return Err(self.invalid("first release must be finite"));
        }
        if self.deadline > self.period + S::event_eps() {
            return Err(self.invalid(format!("deadline {} exceeds period {}", self.deadline, self.period)));
        }
        if self.phases.is_empty() {
            return Err(self.invalid("at least one phase is required"));
        }
        for (k, p) in self.phases.iter().enumerate() {
            if !finite(p.power) || p.power < S::zero() {
                return Err(self.invalid(format!("phase {k}: power must be non-negative")));
            }
        }
        match self.kind {
            LoadKind::Simple | LoadKind::Thermostatic if self.phases.len() != 1 => {
                return Err(self.invalid("simple and thermostatic loads have exactly one phase"));
            }
            LoadKind::Phased => {
                let p0 = self.phases[0].priority;
                if self.phases.iter().any(|p| p.priority != p0) {
                    return Err(self.invalid("phased loads share a single priority"));
                }
            }
            LoadKind::Composite => {
                let mut seen: Vec<u32> = self.phases.iter().map(|p| p.priority).collect();
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return Err(self.invalid("composite phase priorities must be distinct"));
                }
            }
            _ => {}
        }
        match (self.kind, &self.thermal) {
            (LoadKind::Thermostatic, None) => return Err(self.invalid("thermostatic load needs thermal parameters")),
            (LoadKind::Thermostatic, Some(th)) => {
                if !(th.n_ac > S::zero() && th.p_ac > S::zero()) {
                    return Err(LoadError::InvalidThermalParams);
                }
            }
            (_, Some(_)) => return Err(self.invalid("thermal parameters only apply to thermostatic loads")),
            (_, None) => {
                for (k, p) in self.phases.iter().enumerate() {
                    if !finite(p.duration) || p.duration <= S::zero() {
                        return Err(self.invalid(format!("phase {k}: duration must be positive")));
                    }
                }
                let c = self.nominal_operation_time();
                if c > self.deadline + S::event_eps() {
                    return Err(self.invalid(format!("total operation time {c} exceeds deadline {}", self.deadline)));
                }
            }
        }
        Ok(())
    }

    /// Priority values this load occupies (one per distinct phase priority).
    pub fn priorities(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.phases.iter().map(|p| p.priority).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Index of the effective instance at `t`, if any instance has been released.
    pub fn instance_index_at(&self, t: S) -> Option<u64> {
        let offset = t - self.first_release + S::event_eps();
        if offset < S::zero() {
            return None;
        }
        (offset / self.period).floor().to_u64()
    }

    pub fn release_time(&self, k: u64) -> S {
        self.first_release + self.period * S::from_u64(k).unwrap()
    }

    /// All release instants `first_release + k·T` inside `[t_a, t_b]`, ascending.
    pub fn release_times(&self, t_a: S, t_b: S) -> Vec<S> {
        let eps = S::event_eps();
        let k0 = ((t_a - self.first_release - eps) / self.period).ceil().max(S::zero());
        let mut k = k0.to_u64().unwrap_or(0);
        let mut out = Vec::new();
        loop {
            let a = self.release_time(k);
            if a > t_b + eps {
                break;
            }
            if a >= t_a - eps {
                out.push(a);
            }
            k += 1;
        }
        out
    }

    /// Resolves instance `k`, freezing thermostatic operation time at release.
    pub fn instance(&self, k: u64, temperature: Option<&StepTrace<S>>) -> Result<Instance<S>, LoadError> {
        let release = self.release_time(k);
        let mut phases = self.phases.clone();
        if self.kind == LoadKind::Thermostatic {
            let trace = temperature.ok_or(LoadError::MissingTemperature(self.id))?;
            let tp_out = trace
                .value_at(release)
                .map_err(|source| LoadError::Temperature { id: self.id, source })?;
            phases[0].duration = thermo_operation_time(self, tp_out)?;
        }
        let total = phases.iter().fold(S::zero(), |acc, p| acc + p.duration);
        Ok(Instance {
            load: self.id,
            index: k,
            release,
            deadline: self.deadline,
            period: self.period,
            total,
            phases,
        })
    }

    pub fn instance_at(&self, t: S, temperature: Option<&StepTrace<S>>) -> Result<Instance<S>, LoadError> {
        let k = self
            .instance_index_at(t)
            .ok_or_else(|| LoadError::QueryBeforeFirstRelease {
                id: self.id,
                t: t.to_f64_lossy(),
                first_release: self.first_release.to_f64_lossy(),
            })?;
        self.instance(k, temperature)
    }
}

/// A released instance with all durations resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance<S> {
    pub load: u32,
    pub index: u64,
    pub release: S,
    pub deadline: S,
    pub period: S,
    /// Total operation time `C` of the instance.
    pub total: S,
    pub phases: Vec<Phase<S>>,
}

impl<S: Scalar> Instance<S> {
    /// Parameters as seen while phase `phase` is current. Indices past the last
    /// phase (a completed instance) report the last phase.
    pub fn effective(&self, phase: usize) -> EffectiveParams<S> {
        let p = &self.phases[phase.min(self.phases.len() - 1)];
        EffectiveParams {
            c: self.total,
            e_current: p.power,
            d: self.deadline,
            t: self.period,
            preemptive_current: p.preemptive,
            p_current: p.priority,
            release: self.release,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams<S> {
    pub c: S,
    pub e_current: S,
    pub d: S,
    pub t: S,
    pub preemptive_current: bool,
    pub p_current: u32,
    pub release: S,
}

/// Parameters of the effective instance at `t`, with phase 0 current.
pub fn effective_params<S: Scalar>(
    spec: &LoadSpec<S>,
    t: S,
    temperature: Option<&StepTrace<S>>,
) -> Result<EffectiveParams<S>, LoadError> {
    Ok(spec.instance_at(t, temperature)?.effective(0))
}

/// Fraction of the cycle an AC must run to hold `x_stable`, clamped to `[0, 1]`.
pub fn thermo_duty_cycle<S: Scalar>(x_stable: S, tp_out: S, g_out: S, n_ac: S, p_ac: S) -> Result<S, LoadError> {
    if !(n_ac > S::zero() && p_ac > S::zero()) {
        return Err(LoadError::InvalidThermalParams);
    }
    let raw = (g_out / (n_ac * p_ac) * (x_stable - tp_out)).abs();
    Ok(raw.min(S::one()))
}

pub fn thermo_operation_time<S: Scalar>(spec: &LoadSpec<S>, tp_out: S) -> Result<S, LoadError> {
    let th = spec.thermal.as_ref().ok_or(LoadError::Invalid {
        id: spec.id,
        msg: "not a thermostatic load".into(),
    })?;
    let u = thermo_duty_cycle(th.x_stable, tp_out, th.g_out, th.n_ac, th.p_ac)?;
    Ok(spec.period * u)
}
