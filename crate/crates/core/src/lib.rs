//! Event-driven micro-grid simulator with a feasibility checker.
//!
//! Loads are periodic tasks with phases of constant power. The engine keeps a
//! state vector `(s, r, o)` per load, admits loads greedily by priority
//! against current generation plus battery headroom, and integrates exactly
//! between events. [`check_feasibility`] turns a timeline into a deficiency
//! verdict, and [`run_fixed_step`] is an independent time-stepped reference.
//!
//! Time is in hours and power in kW throughout. The core is generic over
//! [`Scalar`] (`f64` or `f32`); the aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod config;
pub mod feasibility;
pub mod fixed_step;
pub mod load_model;
pub mod scalar;
pub mod scheduler;
pub mod sim_engine;
pub mod sma_state;
pub mod timeline;
pub mod trace;

pub use config::{load_scenario, parse_scenario, ConfigError, PowerUnit};
pub use feasibility::{check_feasibility, deficiency_at};
pub use fixed_step::{compare, run_fixed_step};
pub use load_model::{LoadError, LoadKind};
pub use scalar::Scalar;
pub use sim_engine::{run, run_with, RunOptions, ScenarioError, SimError, TieBreak, DEFAULT_EVENT_CAP};
pub use timeline::{EventKind, TimelineIoError};

pub type Scenario = sim_engine::Scenario<f64>;
pub type Timeline = timeline::Timeline<f64>;
pub type TimelineRecord = timeline::TimelineRecord<f64>;
pub type LoadSpec = load_model::LoadSpec<f64>;
pub type Phase = load_model::Phase<f64>;
pub type ThermalParams = load_model::ThermalParams<f64>;
pub type StepTrace = trace::StepTrace<f64>;
pub type BatteryBank = battery::BatteryBank<f64>;
pub type FeasibilityReport = feasibility::FeasibilityReport<f64>;
pub type OracleComparison = fixed_step::OracleComparison<f64>;

pub type Scenario32 = sim_engine::Scenario<f32>;
pub type Timeline32 = timeline::Timeline<f32>;
