//! Deterministic freeway-traffic simulator and cyber-attack detection toolkit.
//!
//! The crate couples a linearized macroscopic plant with two independent
//! detection channels and a comparator:
//!
//! * a **crowdsourced channel**: probe vehicles post (noisy, delayed, possibly
//!   corrupted) position messages; a screening pipeline filters fakes and
//!   irrelevant chatter, reconstructs local densities through a micro-macro
//!   interface, and feeds a collocated-injection observer (`social_filter`);
//! * a **roadside channel**: a single outlet speed measurement drives a
//!   boundary-observer built from backstepping kernels (`physical_filter`);
//! * a **comparator** that fuses the two residuals into an attack verdict and
//!   localizes which channel fired.
//!
//! Everything is reproducible: one seed drives derived per-subsystem RNG
//! streams, and scenario outputs are byte-identical across runs.

// Validation sites use `!(x > 0.0)` rather than `x <= 0.0` so that NaN input
// fails the check instead of slipping through the negation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod batch;
pub mod comparator;
pub mod config;
pub mod model;
pub mod physical_filter;
pub mod pipeline;
pub mod plant;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod social_filter;
pub mod tracking;
pub mod vehicle;

pub use model::{Grid, LinearizationConstants, TrafficParams};
