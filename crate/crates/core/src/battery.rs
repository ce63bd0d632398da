//! Battery bank: SOC bounds, discharge headroom and SOC dynamics.
//!
//! Reaching the 20% floor cuts discharge off until the bank has recharged to
//! `reconnect_soc`. Without that band a deferrable load shed at the floor
//! would be readmitted as soon as any surplus lifted SOC off the bound, and
//! the trajectory would chatter with zero period.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const SOC_FLOOR: f64 = 0.20;
pub const SOC_CEILING: f64 = 1.00;
pub const DEFAULT_RECONNECT_SOC: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("battery capacity must be positive")]
    BadCapacity,
    #[error("battery max power must be non-negative")]
    BadPower,
    #[error("initial SOC {0} outside [0.20, 1.00]")]
    BadSoc(f64),
    #[error("reconnect SOC {0} outside (0.20, 1.00]")]
    BadReconnect(f64),
    #[error("SOC integration reached {0}, crossing a bound inside the step")]
    BoundaryCrossed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryBank<S> {
    /// kWh.
    pub capacity: S,
    /// Maximum charge/discharge rate, kW. Zero disables the battery.
    pub max_power: S,
    pub soc: S,
    /// SOC at which discharge resumes after the floor was reached.
    pub reconnect_soc: S,
    /// Discharge is cut off: the floor was reached and SOC has not yet
    /// recovered to `reconnect_soc`.
    pub cut_off: bool,
}

/// SOC level a constant battery power is heading to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocBound {
    Floor,
    Ceiling,
    Reconnect,
}

/// How one instant's net generation is spread over battery, loads and curtailment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit<S> {
    /// Positive charging, negative discharging.
    pub battery_power: S,
    pub deficiency: S,
    pub curtailed: S,
}

impl<S: Scalar> BatteryBank<S> {
    pub fn new(capacity: S, max_power: S, soc: S) -> Result<Self, BatteryError> {
        Self::with_reconnect(capacity, max_power, soc, S::lit(DEFAULT_RECONNECT_SOC))
    }

    pub fn with_reconnect(capacity: S, max_power: S, soc: S, reconnect_soc: S) -> Result<Self, BatteryError> {
        let bank = Self {
            capacity,
            max_power,
            soc,
            reconnect_soc,
            cut_off: false,
        }
        .settled();
        bank.validate()?;
        Ok(bank)
    }

    /// Updates the cut-off latch from the current SOC.
    pub fn settled(mut self) -> Self {
        if self.at_floor() {
            self.cut_off = true;
        } else if self.soc >= self.reconnect_soc - S::event_eps() {
            self.cut_off = false;
        }
        self
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        if !(self.capacity > S::zero()) || !self.capacity.is_finite() {
            return Err(BatteryError::BadCapacity);
        }
        if !(self.max_power >= S::zero()) || !self.max_power.is_finite() {
            return Err(BatteryError::BadPower);
        }
        let eps = S::event_eps();
        if !(self.soc >= Self::floor() - eps && self.soc <= Self::ceiling() + eps) {
            return Err(BatteryError::BadSoc(self.soc.to_f64_lossy()));
        }
        if !(self.reconnect_soc > Self::floor() && self.reconnect_soc <= Self::ceiling()) {
            return Err(BatteryError::BadReconnect(self.reconnect_soc.to_f64_lossy()));
        }
        Ok(())
    }

    pub fn floor() -> S {
        S::lit(SOC_FLOOR)
    }

    pub fn ceiling() -> S {
        S::lit(SOC_CEILING)
    }

    pub fn at_floor(&self) -> bool {
        self.soc <= Self::floor() + S::event_eps()
    }

    pub fn at_ceiling(&self) -> bool {
        self.soc >= Self::ceiling() - S::event_eps()
    }

    /// Discharge power available now: `max_power` strictly above the floor
    /// and not cut off, else 0.
    pub fn headroom(&self) -> S {
        if self.at_floor() || self.cut_off {
            S::zero()
        } else {
            self.max_power
        }
    }

    pub fn power_split(&self, eg: S, demand: S) -> PowerSplit<S> {
        let net = eg - demand;
        if net >= S::zero() {
            let battery_power = if self.at_ceiling() {
                S::zero()
            } else {
                net.min(self.max_power)
            };
            PowerSplit {
                battery_power,
                deficiency: S::zero(),
                curtailed: net - battery_power,
            }
        } else {
            let shortfall = -net;
            let discharge = shortfall.min(self.headroom());
            PowerSplit {
                battery_power: -discharge,
                deficiency: shortfall - discharge,
                curtailed: S::zero(),
            }
        }
    }

    /// Integrates SOC over `dt` at constant `battery_power` and updates the latch.
    pub fn integrate_soc(&self, battery_power: S, dt: S) -> Result<Self, BatteryError> {
        let eps = S::event_eps();
        let raw = self.soc + battery_power * dt / self.capacity;
        if raw < Self::floor() - eps || raw > Self::ceiling() + eps {
            return Err(BatteryError::BoundaryCrossed(raw.to_f64_lossy()));
        }
        Ok(Self {
            soc: raw.max(Self::floor()).min(Self::ceiling()),
            ..*self
        }
        .settled())
    }

    /// Hours until SOC reaches the bound it is heading to at `battery_power`.
    pub fn time_to_soc_event(&self, battery_power: S) -> S {
        if battery_power < S::zero() {
            ((self.soc - Self::floor()) * self.capacity / -battery_power).max(S::zero())
        } else if battery_power > S::zero() {
            ((Self::ceiling() - self.soc) * self.capacity / battery_power).max(S::zero())
        } else {
            S::infinity()
        }
    }

    /// Like [`time_to_soc_event`](Self::time_to_soc_event), but a cut-off
    /// bank that is charging first meets `reconnect_soc`.
    pub fn next_soc_event(&self, battery_power: S) -> Option<(S, SocBound)> {
        if battery_power < S::zero() {
            Some((self.time_to_soc_event(battery_power), SocBound::Floor))
        } else if battery_power > S::zero() {
            if self.cut_off && self.soc < self.reconnect_soc {
                let dt = (self.reconnect_soc - self.soc) * self.capacity / battery_power;
                Some((dt.max(S::zero()), SocBound::Reconnect))
            } else {
                Some((self.time_to_soc_event(battery_power), SocBound::Ceiling))
            }
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank(soc: f64) -> BatteryBank<f64> {
        BatteryBank::new(180.0, 90.0, soc).unwrap()
    }

    #[test]
    fn headroom_steps_at_floor() {
        assert_eq!(bank(0.5).headroom(), 90.0);
        assert_eq!(bank(0.2).headroom(), 0.0);
        assert_eq!(bank(0.21).headroom(), 90.0);
        assert_eq!(BatteryBank::new(180.0, 0.0, 0.5).unwrap().headroom(), 0.0);
    }

    #[test]
    fn split_examples() {
        let s = bank(0.5).power_split(250.0, 400.0);
        assert_eq!(
            s,
            PowerSplit {
                battery_power: -90.0,
                deficiency: 60.0,
                curtailed: 0.0
            }
        );
        let s = bank(0.5).power_split(120.0, 120.0);
        assert_eq!(
            s,
            PowerSplit {
                battery_power: 0.0,
                deficiency: 0.0,
                curtailed: 0.0
            }
        );
        let s = bank(1.0).power_split(300.0, 100.0);
        assert_eq!(
            s,
            PowerSplit {
                battery_power: 0.0,
                deficiency: 0.0,
                curtailed: 200.0
            }
        );
        let s = bank(0.5).power_split(300.0, 100.0);
        assert_eq!(
            s,
            PowerSplit {
                battery_power: 90.0,
                deficiency: 0.0,
                curtailed: 110.0
            }
        );
        let s = bank(0.2).power_split(100.0, 150.0);
        assert_eq!(
            s,
            PowerSplit {
                battery_power: 0.0,
                deficiency: 50.0,
                curtailed: 0.0
            }
        );
    }

    #[test]
    fn soc_integration() {
        let b = bank(0.5).integrate_soc(-90.0, 0.5).unwrap();
        assert!((b.soc - 0.25).abs() < 1e-15);
        assert_eq!(bank(0.5).integrate_soc(0.0, 7.0).unwrap().soc, 0.5);
        assert_eq!(bank(0.9).integrate_soc(90.0, 0.2).unwrap().soc, 1.0);
        assert!(matches!(
            bank(0.9).integrate_soc(90.0, 1.0),
            Err(BatteryError::BoundaryCrossed(_))
        ));
    }

    #[test]
    fn soc_event_times() {
        assert!((bank(0.5).time_to_soc_event(-90.0) - 0.6).abs() < 1e-12);
        assert_eq!(bank(0.5).time_to_soc_event(0.0), f64::INFINITY);
        assert_eq!(bank(1.0).time_to_soc_event(50.0), 0.0);
    }

    #[test]
    fn rejects_bad_banks() {
        assert_eq!(BatteryBank::new(0.0, 90.0, 0.5), Err(BatteryError::BadCapacity));
        assert_eq!(BatteryBank::new(10.0, -1.0, 0.5), Err(BatteryError::BadPower));
        assert!(matches!(BatteryBank::new(10.0, 1.0, 0.1), Err(BatteryError::BadSoc(_))));
        assert!(matches!(
            BatteryBank::with_reconnect(10.0, 1.0, 0.5, 0.2),
            Err(BatteryError::BadReconnect(_))
        ));
    }

    #[test]
    fn floor_latches_until_reconnect() {
        let b = bank(0.3).integrate_soc(-90.0, 0.2).unwrap();
        assert!(b.at_floor() && b.cut_off);
        assert_eq!(b.headroom(), 0.0);
        let (dt, bound) = b.next_soc_event(45.0).unwrap();
        assert_eq!(bound, SocBound::Reconnect);
        assert!((dt - 0.2).abs() < 1e-12);
        let mid = b.integrate_soc(45.0, 0.1).unwrap();
        assert!(mid.cut_off);
        assert_eq!(mid.headroom(), 0.0);
        let back = b.integrate_soc(45.0, dt).unwrap();
        assert!(!back.cut_off);
        assert_eq!(back.headroom(), 90.0);
        assert_eq!(back.next_soc_event(45.0).unwrap().1, SocBound::Ceiling);
        // starting on the floor counts as cut off
        assert!(bank(0.2).cut_off);
        assert!(!bank(0.21).cut_off);
    }

    proptest! {
        #[test]
        fn split_balances(soc in 0.2f64..=1.0, eg in 0.0f64..500.0, demand in 0.0f64..800.0) {
            let b = bank(soc);
            let s = b.power_split(eg, demand);
            let discharge = (-s.battery_power).max(0.0);
            prop_assert!((discharge + s.deficiency - (demand - eg).max(0.0)).abs() < 1e-9);
            prop_assert!((eg - s.curtailed - s.battery_power.max(0.0) + discharge - (demand - s.deficiency)).abs() < 1e-9);
            prop_assert!(s.battery_power.abs() <= b.max_power);
            if s.deficiency > 0.0 {
                prop_assert_eq!(s.battery_power, -b.headroom());
            }
        }

        #[test]
        fn event_time_lands_on_bound(soc in 0.2f64..=1.0, p in -90.0f64..90.0) {
            let b = bank(soc);
            let dt = b.time_to_soc_event(p);
            if dt.is_finite() {
                let after = b.integrate_soc(p, dt).unwrap();
                prop_assert!(after.at_floor() || after.at_ceiling());
            }
        }
    }
}
