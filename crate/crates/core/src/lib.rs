//! Minimum-time trajectory planning for vehicles that switch between
//! motion modes, built on composite timed-elastic-band pose graphs.

pub mod environment;
pub mod export;
pub mod graph;
pub mod lm;
pub mod manifold;
pub mod models;
pub mod penalties;
pub mod planner;
pub mod prm;
pub mod scenario;
pub mod sparse;
