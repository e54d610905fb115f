//! Event-driven stochastic delay model for unmanaged intersections.
//!
//! Vehicles arrive as a Poisson stream split over lanes. Each arrival moves
//! the intersection to a new equilibrium under a right-of-way policy (FIFO or
//! flexible order), and the state kept between arrivals is one delay per
//! lane. The crate provides the exact equilibrium ([`micro`]), the one-event
//! step maps on lane delays ([`mapping`]), a particle engine for the delay
//! distribution ([`eds`]), the closed-form steady state for symmetric lanes
//! ([`analytic`]), cross-checks between them ([`validation`]) and the
//! experiment drivers behind the command-line tool ([`commands`]).

pub mod analytic;
pub mod commands;
pub mod eds;
pub mod error;
pub mod mapping;
pub mod micro;
pub mod model;
pub mod validation;

pub use error::{Error, Result};
pub use mapping::{Policy, Region, RegionLabel};
pub use micro::{MicroState, VehicleRecord};
pub use model::{ArrivalEvent, DelayVector, EventStream, IntersectionSpec, Lane};
