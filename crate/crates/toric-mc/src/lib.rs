//! Monte Carlo simulation and numerical analysis of topological quantum
//! memory on toric-code lattices: expanding-diamonds recovery with perfect
//! measurements, expanding-octahedra recovery with faulty measurements,
//! chain-counting threshold bounds, power-law data reduction, and high-genus
//! surface scaling.

pub mod analysis;
pub mod decoder2d;
pub mod decoder3d;
pub mod fitting;
pub mod campaign;
pub mod lattice;
pub mod surface;

/// log base 3 of 2, the chain-scaling exponent beta.
pub const BETA: f64 = 0.630929753571457_f64;
