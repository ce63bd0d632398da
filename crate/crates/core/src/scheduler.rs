//! Priority-ordered greedy admission that builds the executing set `OP(t)`.
//!
//! Non-deferrable loads are admitted unconditionally. The remaining loads with
//! work left are considered in ascending priority value (smaller = higher
//! priority) and admitted whole iff their power fits within generation plus
//! battery headroom on top of everything already admitted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::load_model::EffectiveParams;
use crate::scalar::Scalar;
use crate::sma_state::{non_deferrable, SmaVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rejection<S> {
    /// Load index (position in the scenario).
    pub load: usize,
    pub demand: S,
    /// Supply minus already-admitted demand when the load was considered.
    pub available: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionResult<S> {
    pub op_set: BTreeSet<usize>,
    pub non_defer: BTreeSet<usize>,
    /// In consideration order.
    pub rejected: Vec<Rejection<S>>,
    pub total_demand: S,
    pub supply: S,
}

/// Whether `demand` fits into `supply` (with event tolerance on the boundary).
pub fn fits<S: Scalar>(demand: S, supply: S) -> bool {
    demand <= supply + S::event_eps()
}

/// Runs the admission loop for an already-known non-deferrable set.
///
/// `pending` lists every load index with remaining work; `params[i]` must be
/// `Some` for each of them.
pub fn admit<S: Scalar>(
    non_defer: BTreeSet<usize>,
    pending: impl IntoIterator<Item = usize>,
    params: &[Option<EffectiveParams<S>>],
    eg: S,
    headroom: S,
) -> AdmissionResult<S> {
    let supply = eg + headroom;
    let power = |i: usize| params[i].as_ref().map_or(S::zero(), |p| p.e_current);
    let mut pool: Vec<usize> = pending.into_iter().filter(|i| !non_defer.contains(i)).collect();
    // ties (only possible with index tie-breaking enabled) resolve by index
    pool.sort_by_key(|&i| (params[i].as_ref().map_or(u32::MAX, |p| p.p_current), i));
    pool.dedup();

    let mut op_set = non_defer.clone();
    let mut total_demand = non_defer.iter().fold(S::zero(), |acc, &i| acc + power(i));
    let mut rejected = Vec::new();
    for n in pool {
        let e = power(n);
        if fits(total_demand + e, supply) {
            op_set.insert(n);
            total_demand = total_demand + e;
        } else {
            rejected.push(Rejection {
                load: n,
                demand: e,
                available: supply - total_demand,
            });
        }
    }
    AdmissionResult {
        op_set,
        non_defer,
        rejected,
        total_demand,
        supply,
    }
}

impl<S: Scalar> AdmissionResult<S> {
    /// Replays the greedy loop from this result alone and reports the first
    /// inconsistency. `power` and `priority` describe each load index at the
    /// instant of admission.
    pub fn replay(&self, power: impl Fn(usize) -> S, priority: impl Fn(usize) -> u32) -> Result<(), String> {
        if !self.op_set.is_superset(&self.non_defer) {
            return Err("op_set does not contain every non-deferrable load".into());
        }
        let mut considered: Vec<usize> = self
            .op_set
            .iter()
            .copied()
            .filter(|i| !self.non_defer.contains(i))
            .chain(self.rejected.iter().map(|r| r.load))
            .collect();
        considered.sort_by_key(|&i| (priority(i), i));
        let mut demand = self.non_defer.iter().fold(S::zero(), |acc, &i| acc + power(i));
        let mut rejections = self.rejected.iter();
        for i in considered {
            let e = power(i);
            if self.op_set.contains(&i) {
                if !fits(demand + e, self.supply) {
                    return Err(format!(
                        "load {i} admitted with {e} kW over {} kW available",
                        self.supply - demand
                    ));
                }
                demand = demand + e;
            } else {
                let rj = rejections.next().filter(|rj| rj.load == i);
                let Some(rj) = rj else {
                    return Err(format!("rejection of load {i} out of order"));
                };
                if fits(demand + e, self.supply) {
                    return Err(format!(
                        "load {i} rejected although {e} kW fits into {} kW",
                        self.supply - demand
                    ));
                }
                if rj.demand != e || rj.available != self.supply - demand {
                    return Err(format!("rejection record for load {i} does not match the replay"));
                }
            }
        }
        if demand != self.total_demand {
            return Err(format!(
                "total demand {} differs from replayed {demand}",
                self.total_demand
            ));
        }
        Ok(())
    }
}

/// Builds `OP(t)` from the state vector.
pub fn build_op_set<S: Scalar>(
    z: &SmaVector<S>,
    params: &[Option<EffectiveParams<S>>],
    eg: S,
    battery_headroom: S,
) -> AdmissionResult<S> {
    let nd = non_deferrable(z, params);
    let pending = z
        .states
        .iter()
        .enumerate()
        .filter(|(i, st)| !st.is_complete() && params[*i].is_some())
        .map(|(i, _)| i);
    admit(nd, pending, params, eg, battery_headroom)
}
