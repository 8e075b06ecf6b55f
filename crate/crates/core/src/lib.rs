//! Batched Lipschitz bandits over `[0,1]^d`.
//!
//! The engine runs batched elimination over dyadic cubes: each batch plays
//! every active cube equally often, the rewards are revealed only when the
//! batch commits, cubes whose estimate trails the leader by more than `4 r_m`
//! are dropped, and the survivors are split to the next edge length.

pub mod analysis;
pub mod engine;
pub mod environments;
pub mod error;
pub mod geometry;
pub mod report;
pub mod sequences;

pub use error::{Error, Result};
