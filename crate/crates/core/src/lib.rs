//! Transient-stability toolkit for reduced multi-machine networks.
//!
//! Computes three critical clearing times for a fault scenario: the true CCT
//! from repeated simulation, a direct-method estimate from the closest-UEP
//! energy boundary, and an analytic estimate from a quartic in time.

pub mod energy;
pub mod equilibria;
pub mod netmodel;
pub mod ode;
pub mod swing;
pub mod faultstudy;
pub mod scenario;
pub mod report;
pub mod sweep;
