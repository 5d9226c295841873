//! A 1+1 dimensional toolkit for relational ("grid-free") spacetime physics.
//!
//! The library treats coordinate charts as private plumbing: every public
//! quantity is either a scalar built from the metric (intervals, proper
//! times, fractions of probability) or is explicitly labeled by the local
//! grid it refers to (energies, momenta, derivatives). Modules:
//!
//! - [`geometry`]: charts, events, metric intervals, light cones, geodesic
//!   separations, and the five-event neighborhood used by limit constructions.
//! - [`wavepacket`]: scalar wave packets (Schroedinger and Klein-Gordon),
//!   their probability current, and grid evolution.
//! - [`partition`]: probability-flow streamlines that carve a packet into
//!   fixed-fraction bands, perpendicular cuts, local grids, and the internal
//!   chart a packet induces on its own neighborhood.
//! - [`differentials`]: derivatives defined as limits over shrinking
//!   metric neighborhoods, with extrapolation and convergence diagnostics.
//! - [`photon`]: massless signals as phase fields on families of light
//!   lines, with all kinematics read off a chosen local grid.
//! - [`states`]: multi-particle state tuples on spacelike configurations,
//!   the successor partial order, collapse games on recorded histories,
//!   and a stochastic decay-plus-detection scenario.

pub mod differentials;
pub mod geometry;
pub mod numeric;
pub mod partition;
pub mod photon;
pub mod states;
pub mod wavepacket;
