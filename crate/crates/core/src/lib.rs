//! Safe multi-agent relocation around a tumbling target.

pub mod cbf;
pub mod convex;
pub mod dcol;
pub mod dynamics;
pub mod estimation;
pub mod mpc;
pub mod planner;
pub mod sim;
