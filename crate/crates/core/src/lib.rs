//! Estimation lower bounds for linear time-invariant state-space models
//! `x_{i+1} = A x_i + B ε_i`: least squares, Fisher information, Cramér–Rao
//! and van Trees bounds, and seeded Monte Carlo checks of the identities and
//! inequalities behind them.

pub mod bounds;
pub mod error;
pub mod linalg;
pub mod lti;
pub mod mc;
pub mod minimax;
pub mod quadrature;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use lti::{GramStatistics, SystemParams, Trajectory};
pub use rng::RandomStream;
