//! Learning controlled, partially observable dynamical systems by two-stage
//! regression over predictive states.
//!
//! The model maintains a compressed conditional operator `q_t` that maps
//! features of the next `k` actions to features of the next `k`
//! observations. Learning regresses history features onto state and
//! extended-state estimates (S1), then regresses extended states onto states
//! (S2). The resulting recursive filter can be refined by backpropagation
//! through time.

pub mod arx;
pub mod datagen;
pub mod error;
pub mod features;
pub mod filter;
pub mod numerics;
pub mod oracles;
pub mod refine;
pub mod two_stage;

pub use error::{Error, Result};
