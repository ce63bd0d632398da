//! Per-load state `(s, r, o)` and its hybrid dynamics.
//!
//! * `s` - hours until the next instance release.
//! * `r` - remaining operation time of the effective instance.
//! * `o` - time elapsed since release while the instance is incomplete.
//!
//! A release resets the triple to `(T, C, 0)`. Between events, an executing
//! load has slopes `(-1, -1, +1)` and an idle one `(-1, 0, sgn r)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::load_model::{EffectiveParams, Instance};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("reset requested with s = {0}, not at a release instant")]
    NotAtReleaseInstant(f64),
    #[error("advance by {dt} h skips an event ({what})")]
    EventSkipped { dt: f64, what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseCursor<S> {
    pub index: usize,
    /// Hours executed within the current phase.
    pub consumed: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadState<S> {
    pub s: S,
    pub r: S,
    pub o: S,
    pub cursor: PhaseCursor<S>,
    /// Latched once the effective instance can no longer meet its deadline.
    pub deadline_missed: bool,
    /// Total execution time accumulated by the effective instance.
    pub executed: S,
}

/// Release over an instance that still had work left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overrun<S> {
    pub remaining: S,
    pub already_missed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmaVector<S> {
    pub t: S,
    pub states: Vec<LoadState<S>>,
}

impl<S: Scalar> LoadState<S> {
    /// State of a load whose first instance is released `until_release` from now.
    pub fn pending(until_release: S) -> Self {
        Self {
            s: until_release,
            ..Default::default()
        }
    }

    pub fn is_complete(&self) -> bool {
        self.r <= S::event_eps()
    }

    /// Remaining time in the current phase.
    pub fn phase_remaining(&self, instance: Option<&Instance<S>>) -> S {
        match instance.and_then(|i| i.phases.get(self.cursor.index)) {
            Some(p) if !self.is_complete() => (p.duration - self.cursor.consumed).max(S::zero()),
            _ => S::zero(),
        }
    }

    /// `(o + r) - D`; positive means the deadline cannot be met.
    pub fn slack_deficit(&self, params: &EffectiveParams<S>) -> S {
        self.o + self.r - params.d
    }

    pub fn reset_on_release(&self, params: &EffectiveParams<S>) -> Result<(Self, Option<Overrun<S>>), StateError> {
        if self.s.abs() > S::event_eps() {
            return Err(StateError::NotAtReleaseInstant(self.s.to_f64_lossy()));
        }
        let overrun = (!self.is_complete()).then_some(Overrun {
            remaining: self.r,
            already_missed: self.deadline_missed,
        });
        let mut next = Self {
            s: params.t,
            r: params.c,
            o: S::zero(),
            cursor: PhaseCursor::default(),
            deadline_missed: false,
            executed: S::zero(),
        };
        if next.r <= S::event_eps() {
            next.r = S::zero();
        }
        Ok((next, overrun))
    }

    /// Evolves the state by `dt`. `phase_durations` are those of the effective
    /// instance (empty before the first release). Phase boundaries reached
    /// exactly at `dt` roll the cursor forward.
    pub fn advance(&self, dt: S, executing: bool, phase_durations: &[S]) -> Result<Self, StateError> {
        let eps = S::event_eps();
        let skipped = |what| StateError::EventSkipped {
            dt: dt.to_f64_lossy(),
            what,
        };
        if dt < S::zero() {
            return Err(skipped("negative step"));
        }
        let mut next = *self;
        next.s = self.s - dt;
        if next.s < -eps {
            return Err(skipped("release"));
        }
        if next.s.abs() <= eps {
            next.s = S::zero();
        }
        if executing && !self.is_complete() {
            let dur = phase_durations.get(self.cursor.index).copied().unwrap_or(S::zero());
            if self.cursor.consumed + dt > dur + eps {
                return Err(skipped("phase completion"));
            }
            next.r = self.r - dt;
            next.o = self.o + dt;
            next.executed = self.executed + dt;
            next.cursor.consumed = self.cursor.consumed + dt;
            if next.r <= eps {
                next.r = S::zero();
            }
            while next.cursor.index < phase_durations.len()
                && next.cursor.consumed >= phase_durations[next.cursor.index] - eps
            {
                next.cursor.consumed = S::zero();
                next.cursor.index += 1;
            }
            if next.r == S::zero() {
                next.cursor.index = phase_durations.len();
                next.cursor.consumed = S::zero();
            }
        } else if !self.is_complete() {
            next.o = self.o + dt;
        }
        Ok(next)
    }
}

/// Indices of loads that must run now: deadline pressure (`o + r >= D - eps`
/// with work left) or a non-preemptive phase that has started and not finished.
pub fn non_deferrable<S: Scalar>(z: &SmaVector<S>, params: &[Option<EffectiveParams<S>>]) -> BTreeSet<usize> {
    let eps = S::event_eps();
    z.states
        .iter()
        .zip(params)
        .enumerate()
        .filter_map(|(i, (st, p))| {
            let p = p.as_ref()?;
            if st.is_complete() {
                return None;
            }
            let pressure = st.o + st.r >= p.d - eps;
            let mid_run = !p.preemptive_current && st.cursor.consumed > eps;
            (pressure || mid_run).then_some(i)
        })
        .collect()
}

/// Time until this load's next significant moment, or `+inf`.
pub fn time_to_next_state_event<S: Scalar>(state: &LoadState<S>, instance: Option<&Instance<S>>, executing: bool) -> S {
    let eps = S::event_eps();
    let mut best = S::infinity();
    if state.s > eps {
        best = best.min(state.s);
    }
    if let Some(inst) = instance {
        if !state.is_complete() {
            if executing {
                best = best.min(state.phase_remaining(Some(inst))).min(state.r);
            } else {
                let until_pressure = inst.deadline - (state.o + state.r);
                if until_pressure > eps {
                    best = best.min(until_pressure);
                }
            }
        }
    }
    best
}
