//! Bundled case files.

/// The PJM 5-bus system: four generator buses, three loads.
pub const CASE5: &str = include_str!("../data/case5.m");

/// The IEEE 30-bus test system.
pub const CASE30: &str = include_str!("../data/case30.m");
