//! Two-agent driving simulator with a model-predictive shield.

pub mod controllers;
pub mod dynamics;
pub mod geometry;
pub mod harness;
pub mod humans;
pub mod reachability;
pub mod rng;
pub mod scenarios;
pub mod shield;
pub mod verify;
