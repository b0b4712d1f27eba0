//! Simulation testbed for directed sensor-value fuzzing, attack detection and
//! attack mitigation on a desk-scale cleaning robot.
//!
//! A [`world::WorldModel`] advances in fixed ticks. Each tick the sensor
//! samples the world, the reading passes through a possibly compromised
//! [`attack::AttackChannel`] driven by a fuzzer, the [`shade`] detectors
//! judge what arrived, and the [`controller`] decides how to move, falling
//! back to map navigation from [`remit`] once an attack is detected.
//! [`harness`] runs seeded campaigns of such trials.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod histmap;
pub mod remit;
pub mod robofuzz;
pub mod scenario;
pub mod sensing;
pub mod shade;
pub mod world;

pub use error::{Error, Result};
pub use scenario::Scenario;
