//! Load-development experiments for rifle cartridges.
//!
//! The crate covers the full analysis path of a blocked two-factor
//! experiment (seating depth x powder charge, lots as blocks): randomized
//! plans, shot-group geometry, sequential ANOVA/ANCOVA on per-shot radial
//! deviations, cell-mean response surfaces, and a simulator that produces
//! data with known ground truth.

pub mod dataio;
pub mod doe;
pub mod groupstats;
pub mod linmod;
pub mod shotsim;
pub mod surface;
