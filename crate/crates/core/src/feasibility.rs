//! Horizon-level independence check and deficiency reporting.
//!
//! The micro-grid can run islanded over the horizon iff at every instant the
//! non-deferrable demand fits within generation plus battery headroom. All
//! three quantities are constant between significant moments, so checking
//! each timeline segment is exhaustive. This module evaluates the condition
//! straight from the per-load snapshots; it does not reuse the engine's own
//! power split.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::timeline::{intervals_of, segment_width, DeficiencyInterval, Timeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport<S> {
    pub feasible: bool,
    /// Step profile of the shortfall (kW): value changes as `(t, kW)`, with an
    /// implicit zero before the first entry. Empty iff identically zero.
    pub deficiency_profile: Vec<(S, S)>,
    pub deficiency_intervals: Vec<DeficiencyInterval<S>>,
    pub first_violation: Option<S>,
    /// Step profile of non-deferrable demand (kW), same encoding.
    pub nondefer_demand_profile: Vec<(S, S)>,
}

/// Shortfall `max(0, non-deferrable demand - generation - headroom)`.
pub fn deficiency_at<S: Scalar>(nondefer_demand: S, eg: S, headroom: S) -> S {
    (nondefer_demand - eg - headroom).max(S::zero())
}

fn push_change<S: Scalar>(profile: &mut Vec<(S, S)>, t: S, v: S) {
    let last = profile.last().map_or(S::zero(), |p| p.1);
    if v != last {
        profile.push((t, v));
    }
}

pub fn check_feasibility<S: Scalar>(timeline: &Timeline<S>) -> FeasibilityReport<S> {
    let recs = &timeline.records;
    let shortfall = |i: usize| {
        let r = &recs[i];
        deficiency_at(r.non_defer_demand(), r.eg, r.headroom)
    };
    let mut deficiency_profile = Vec::new();
    let mut nondefer_demand_profile = Vec::new();
    let mut first_violation = None;
    for (i, r) in recs.iter().enumerate() {
        let d = shortfall(i);
        push_change(&mut deficiency_profile, r.t, d);
        push_change(&mut nondefer_demand_profile, r.t, r.non_defer_demand());
        if first_violation.is_none() && d > S::event_eps() {
            first_violation = Some(r.t);
        }
    }
    let deficiency_intervals = intervals_of(recs, |r| deficiency_at(r.non_defer_demand(), r.eg, r.headroom));
    debug_assert!(deficiency_intervals.iter().all(|iv| iv.end >= iv.start));
    FeasibilityReport {
        feasible: first_violation.is_none(),
        deficiency_profile,
        deficiency_intervals,
        first_violation,
        nondefer_demand_profile,
    }
}

impl<S: Scalar> FeasibilityReport<S> {
    /// Integral of the deficiency profile over the timeline.
    pub fn deficiency_energy(&self, timeline: &Timeline<S>) -> S {
        let recs = &timeline.records;
        (0..recs.len()).fold(S::zero(), |acc, i| {
            let r = &recs[i];
            acc + deficiency_at(r.non_defer_demand(), r.eg, r.headroom) * segment_width(recs, i)
        })
    }
}
