//! Exact and statistical tooling for positive recurrent Q-processes:
//! Galton-Watson population systems conditioned on indefinite survival.
//!
//! The crate computes the conditioned chain's transition laws exactly from
//! generating-function iteration, tabulates the joint distribution of
//! population size and accumulated progeny three independent ways (bivariate
//! series, forward dynamic programming, Monte-Carlo over a spine
//! decomposition), evaluates progeny moments in closed form, and probes the
//! normal-limit and law-of-large-numbers behaviour of the total progeny with
//! seeded, reproducible statistics.

pub mod error;
pub mod offspring;
pub mod progeny;

pub use error::{QprocError, Result};
pub use offspring::{OffspringLaw, SystemParams};
