//! Significant-moment event loop.
//!
//! The engine jumps from one significant moment to the next: instance
//! releases, completions, phase changes, deadline-pressure onsets, SOC
//! reaching the floor, the ceiling or the reconnect level, and generation
//! breakpoints. Between moments every input to admission is constant, so
//! `OP(t)` is rebuilt only at those instants and the trajectory is exact for
//! step traces.
//!
//! Simultaneous events at one instant are handled in a fixed order: state
//! advances (completions, phase changes, onsets, SOC, trace) land first,
//! releases are applied next, then deadline misses are latched and `OP(t)` is
//! rebuilt.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryBank, BatteryError, SocBound};
use crate::load_model::{Instance, LoadError, LoadSpec};
use crate::scalar::{near, Scalar};
use crate::scheduler::build_op_set;
use crate::sma_state::{time_to_next_state_event, LoadState, SmaVector, StateError};
use crate::timeline::{
    summarize, Completion, DeadlineMiss, EventKind, LoadSnapshot, OverrunEvent, Timeline, TimelineRecord,
};
use crate::trace::{StepTrace, TraceError};

pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Two loads sharing a priority value is a scenario error.
    #[default]
    Reject,
    /// Ties resolve by ascending load id.
    Index,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("horizon start {0} must be before end {1}")]
    Horizon(f64, f64),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("battery: {0}")]
    Battery(#[from] BatteryError),
    #[error("duplicate load id {0}")]
    DuplicateId(u32),
    #[error("priority {priority} used by loads {first} and {second} (enable index tie-breaking to allow)")]
    PriorityTie { priority: u32, first: u32, second: u32 },
    #[error("load {0} is thermostatic but the scenario has no temperature trace")]
    MissingTemperature(u32),
    #[error("{name} trace starts at t = {start}, after the horizon start {t_a}")]
    TraceStartsLate { name: &'static str, start: f64, t_a: f64 },
    #[error("generation trace has a negative value")]
    NegativeGeneration,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(#[from] ScenarioError),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("event cap of {0} significant moments exceeded")]
    NonTermination(u64),
    #[error("load model: {0}")]
    Load(#[from] LoadError),
    #[error("state evolution: {0}")]
    State(#[from] StateError),
    #[error("battery: {0}")]
    Battery(#[from] BatteryError),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<S> {
    /// Sorted by id; position is the load index used internally.
    pub loads: Vec<LoadSpec<S>>,
    pub battery: BatteryBank<S>,
    /// kW.
    pub generation: StepTrace<S>,
    /// Outside temperature; required iff a thermostatic load is present.
    pub temperature: Option<StepTrace<S>>,
    pub horizon: (S, S),
    pub tie_break: TieBreak,
}

impl<S: Scalar> Scenario<S> {
    pub fn new(
        mut loads: Vec<LoadSpec<S>>,
        battery: BatteryBank<S>,
        generation: StepTrace<S>,
        temperature: Option<StepTrace<S>>,
        horizon: (S, S),
    ) -> Self {
        loads.sort_by_key(|l| l.id);
        Self {
            loads,
            battery,
            generation,
            temperature,
            horizon,
            tie_break: TieBreak::Reject,
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (t_a, t_b) = self.horizon;
        if !(t_a < t_b) || !t_a.is_finite() || !t_b.is_finite() {
            return Err(ScenarioError::Horizon(t_a.to_f64_lossy(), t_b.to_f64_lossy()));
        }
        self.battery.validate()?;
        if self.generation.start() > t_a {
            return Err(ScenarioError::TraceStartsLate {
                name: "generation",
                start: self.generation.start().to_f64_lossy(),
                t_a: t_a.to_f64_lossy(),
            });
        }
        if self.generation.min_value() < S::zero() {
            return Err(ScenarioError::NegativeGeneration);
        }
        let mut owners: Vec<(u32, u32)> = Vec::new();
        for (i, load) in self.loads.iter().enumerate() {
            load.validate()?;
            if i > 0 && self.loads[i - 1].id >= load.id {
                return Err(ScenarioError::DuplicateId(load.id));
            }
            if load.thermal.is_some() && self.temperature.is_none() {
                return Err(ScenarioError::MissingTemperature(load.id));
            }
            owners.extend(load.priorities().into_iter().map(|p| (p, load.id)));
        }
        if self.tie_break == TieBreak::Reject {
            owners.sort_unstable();
            if let Some(w) = owners.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(ScenarioError::PriorityTie {
                    priority: w[0].0,
                    first: w[0].1,
                    second: w[1].1,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub event_cap: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

pub fn run<S: Scalar>(scenario: &Scenario<S>) -> Result<Timeline<S>, SimError> {
    run_with(scenario, &RunOptions::default())
}

pub fn run_with<S: Scalar>(scenario: &Scenario<S>, opts: &RunOptions) -> Result<Timeline<S>, SimError> {
    scenario.validate()?;
    Engine::new(scenario)?.run(opts)
}

struct Engine<'a, S: Scalar> {
    sc: &'a Scenario<S>,
    z: SmaVector<S>,
    instances: Vec<Option<Instance<S>>>,
    battery: BatteryBank<S>,
    records: Vec<TimelineRecord<S>>,
    completions: Vec<Completion<S>>,
    overruns: Vec<OverrunEvent<S>>,
}

impl<'a, S: Scalar> Engine<'a, S> {
    fn new(sc: &'a Scenario<S>) -> Result<Self, SimError> {
        let t_a = sc.horizon.0;
        let temp = sc.temperature.as_ref();
        let mut states = Vec::with_capacity(sc.loads.len());
        let mut instances = Vec::with_capacity(sc.loads.len());
        for spec in &sc.loads {
            match spec.instance_index_at(t_a) {
                None => {
                    states.push(LoadState::pending(spec.first_release - t_a));
                    instances.push(None);
                }
                Some(k) if near(spec.release_time(k), t_a) => {
                    // released exactly at the start: handled as a regular release
                    states.push(LoadState::pending(S::zero()));
                    instances.push(None);
                }
                Some(k) => {
                    // warm start: a fresh instance whose release predates the horizon
                    let inst = spec.instance(k, temp)?;
                    let mut st = LoadState::pending(inst.release + inst.period - t_a);
                    st.r = inst.total;
                    st.o = t_a - inst.release;
                    if st.r <= S::event_eps() {
                        st.r = S::zero();
                    }
                    states.push(st);
                    instances.push(Some(inst));
                }
            }
        }
        Ok(Self {
            sc,
            z: SmaVector { t: t_a, states },
            instances,
            battery: sc.battery.settled(),
            records: Vec::new(),
            completions: Vec::new(),
            overruns: Vec::new(),
        })
    }

    fn run(mut self, opts: &RunOptions) -> Result<Timeline<S>, SimError> {
        let eps = S::event_eps();
        let t_b = self.sc.horizon.1;
        let mut kinds = BTreeSet::from([EventKind::Horizon]);
        let mut moments = 0u64;
        loop {
            let t = self.z.t;
            let at_end = t >= t_b - eps;
            let mut misses = Vec::new();
            if !at_end {
                self.apply_releases(&mut kinds, &mut misses)?;
            }
            self.latch_deadline_misses(&mut kinds, &mut misses);

            let params: Vec<_> = self
                .instances
                .iter()
                .zip(&self.z.states)
                .map(|(inst, st)| inst.as_ref().map(|i| i.effective(st.cursor.index)))
                .collect();
            let eg = self.sc.generation.value_at(t)?;
            let headroom = self.battery.headroom();
            let adm = build_op_set(&self.z, &params, eg, headroom);
            let split = self.battery.power_split(eg, adm.total_demand);

            let ids = |set: &BTreeSet<usize>| set.iter().map(|&i| self.sc.loads[i].id).collect::<Vec<_>>();
            let loads = self
                .sc
                .loads
                .iter()
                .zip(&self.z.states)
                .zip(&params)
                .zip(&self.instances)
                .map(|(((spec, st), p), inst)| LoadSnapshot {
                    id: spec.id,
                    s: st.s,
                    r: st.r,
                    o: st.o,
                    phase: st.cursor.index,
                    instance: inst.as_ref().map(|i| i.index),
                    power: p.map_or(spec.phases[0].power, |p| p.e_current),
                    priority: p.map_or(spec.phases[0].priority, |p| p.p_current),
                })
                .collect();
            let executing = adm.op_set.clone();
            self.records.push(TimelineRecord {
                t,
                kinds: std::mem::take(&mut kinds).into_iter().collect(),
                op_set: ids(&adm.op_set),
                non_defer: ids(&adm.non_defer),
                loads,
                eg,
                demand: adm.total_demand,
                headroom,
                battery_power: split.battery_power,
                soc: self.battery.soc,
                deficiency: split.deficiency,
                curtailed: split.curtailed,
                misses,
                admission: Some(adm),
            });
            if at_end {
                break;
            }

            moments += 1;
            if moments > opts.event_cap {
                return Err(SimError::NonTermination(opts.event_cap));
            }

            // next significant moment
            let breakpoint = self.sc.generation.next_breakpoint_after(t);
            let soc_event = self.battery.next_soc_event(split.battery_power);
            let soc_dt = soc_event.map_or(S::infinity(), |e| e.0);
            let mut dt = (t_b - t).min(breakpoint - t).min(soc_dt);
            for (i, st) in self.z.states.iter().enumerate() {
                let ev = time_to_next_state_event(st, self.instances[i].as_ref(), executing.contains(&i));
                dt = dt.min(ev);
            }
            dt = dt.max(S::zero());

            self.advance(dt, &executing, &mut kinds)?;
            let mut battery = self.battery.integrate_soc(split.battery_power, dt)?;
            if let Some((soc_dt, bound)) = soc_event {
                if near(dt, soc_dt) {
                    let (soc, kind) = match bound {
                        SocBound::Floor => (BatteryBank::<S>::floor(), EventKind::SocFloor),
                        SocBound::Ceiling => (BatteryBank::<S>::ceiling(), EventKind::SocCeiling),
                        SocBound::Reconnect => (battery.reconnect_soc, EventKind::SocReconnect),
                    };
                    battery.soc = soc;
                    battery = battery.settled();
                    kinds.insert(kind);
                }
            }
            self.battery = battery;

            let mut next_t = t + dt;
            if breakpoint.is_finite() && near(next_t, breakpoint) {
                next_t = breakpoint;
                kinds.insert(EventKind::TraceBreakpoint);
            }
            if near(next_t, t_b) {
                next_t = t_b;
                kinds.insert(EventKind::Horizon);
            }
            self.z.t = next_t;
        }

        let summary = summarize(&self.records);
        Ok(Timeline {
            horizon: self.sc.horizon,
            load_ids: self.sc.loads.iter().map(|l| l.id).collect(),
            records: self.records,
            summary,
            completions: self.completions,
            overruns: self.overruns,
        })
    }

    fn apply_releases(
        &mut self,
        kinds: &mut BTreeSet<EventKind>,
        misses: &mut Vec<DeadlineMiss<S>>,
    ) -> Result<(), SimError> {
        let t = self.z.t;
        let temp = self.sc.temperature.as_ref();
        for (i, spec) in self.sc.loads.iter().enumerate() {
            let st = self.z.states[i];
            if st.s > S::event_eps() {
                continue;
            }
            let k = match &self.instances[i] {
                Some(prev) => prev.index + 1,
                None => spec.instance_index_at(t).unwrap_or(0),
            };
            let inst = spec.instance(k, temp)?;
            let (next, overrun) = st.reset_on_release(&inst.effective(0))?;
            kinds.insert(EventKind::Release);
            if let (Some(ov), Some(prev)) = (overrun, &self.instances[i]) {
                kinds.insert(EventKind::Overrun);
                self.overruns.push(OverrunEvent {
                    load: spec.id,
                    instance: prev.index,
                    t,
                    remaining: ov.remaining,
                });
                if !ov.already_missed {
                    misses.push(DeadlineMiss {
                        load: spec.id,
                        instance: prev.index,
                        t,
                    });
                }
            }
            if next.is_complete() {
                // zero operation time: done at release
                kinds.insert(EventKind::Completion);
                self.completions.push(Completion {
                    load: spec.id,
                    instance: k,
                    release: inst.release,
                    time: t,
                    operation_time: inst.total,
                    executed: S::zero(),
                });
            }
            self.z.states[i] = next;
            self.instances[i] = Some(inst);
        }
        Ok(())
    }

    fn latch_deadline_misses(&mut self, kinds: &mut BTreeSet<EventKind>, misses: &mut Vec<DeadlineMiss<S>>) {
        for (i, st) in self.z.states.iter_mut().enumerate() {
            let Some(inst) = &self.instances[i] else { continue };
            if st.is_complete() || st.deadline_missed {
                continue;
            }
            if st.o + st.r > inst.deadline + S::event_eps() {
                st.deadline_missed = true;
                kinds.insert(EventKind::Overrun);
                misses.push(DeadlineMiss {
                    load: self.sc.loads[i].id,
                    instance: inst.index,
                    t: self.z.t,
                });
            }
        }
    }

    fn advance(&mut self, dt: S, executing: &BTreeSet<usize>, kinds: &mut BTreeSet<EventKind>) -> Result<(), SimError> {
        let eps = S::event_eps();
        let t_next = self.z.t + dt;
        for (i, st) in self.z.states.iter_mut().enumerate() {
            let inst = self.instances[i].as_ref();
            let durations: Vec<S> = inst.map_or_else(Vec::new, |x| x.phases.iter().map(|p| p.duration).collect());
            let runs = executing.contains(&i);
            let next = st.advance(dt, runs, &durations)?;
            if let Some(inst) = inst {
                if runs && !st.is_complete() && next.is_complete() {
                    kinds.insert(EventKind::Completion);
                    self.completions.push(Completion {
                        load: inst.load,
                        instance: inst.index,
                        release: inst.release,
                        time: t_next,
                        operation_time: inst.total,
                        executed: next.executed,
                    });
                } else if next.cursor.index != st.cursor.index {
                    kinds.insert(EventKind::PhaseChange);
                }
                if !runs
                    && !st.is_complete()
                    && st.o + st.r < inst.deadline - eps
                    && next.o + next.r >= inst.deadline - eps
                {
                    kinds.insert(EventKind::DeadlineOnset);
                }
            }
            *st = next;
        }
        Ok(())
    }
}
