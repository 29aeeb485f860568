//! Finite-population stochastic evolutionary game dynamics: simulation of
//! the revision chain, its mean dynamic, and the large-deviations quantities
//! (Cramér transform, path costs, exit costs, stationary decay rates,
//! Laplace values) with closed forms for logit choice in potential games.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod games;
pub mod largedev;
pub mod logit_potential;
pub mod process;
pub mod protocols;
pub mod rng;
pub mod simplex;

pub use error::{Error, Result};
pub use games::{Evaluation, GameSpec};
pub use protocols::{ProtocolSpec, SwitchMatrix};
pub use simplex::{GridState, SimplexPoint};
