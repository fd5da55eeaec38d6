//! Computational laboratory for iterated function systems of
//! area-preserving surface maps.

pub mod boxdim;
pub mod bump_flow;
pub mod continua_grid;
pub mod experiments;
pub mod geometry;
pub mod ifs_engine;
pub mod invariant_detect;
pub mod map_zoo;
pub mod numfmt;
pub mod seeds;
