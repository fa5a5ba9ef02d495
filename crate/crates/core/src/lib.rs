//! Optimal estimate-dependent threshold policies for age of incorrect
//! information (AoII) in remote estimation of a finite Markov source over a
//! channel with discrete phase-type delay.
//!
//! The analytic path builds, for every embedded synchronisation value `j` and
//! threshold `tau`, a dual-regime absorbing chain describing the out-of-sync
//! interval ([`cycle`], [`dr_dph`]), turns it into SMDP parameters and solves
//! the average-cost SMDP by policy iteration ([`smdp`]). The slot-level
//! simulator ([`sim`]) is an independent check of every closed form, and
//! [`experiments`] drives the benchmark comparisons.

pub mod combinatorics;
pub mod cycle;
pub mod dr_dph;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod smdp;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
