//! Decentralized Riemannian optimization on the Stiefel manifold.
//!
//! A network of `n` simulated agents jointly minimizes
//! `f(x) = (1/n) sum_i f_i(x)` over `St(d, r) = {x : x^T x = I_r}`, each agent
//! holding its own `f_i` and exchanging iterates only with its neighbors
//! through a doubly stochastic mixing matrix.
//!
//! * [`manifold`]: points, tangent vectors, polar retraction, the induced
//!   arithmetic mean and the local consensus region.
//! * [`network`]: graphs, Metropolis weights, spectral constants.
//! * [`problems`]: the leading-eigenvector objective and data sources.
//! * [`algorithms`]: DRCS, DRSGD/DRDGD, DRGTA, stepsize schedules, the run loop.
//! * [`metrics`]: subspace distance, stationarity and log rows.
//! * [`harness`]: experiment configuration, CSV output and reports.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod harness;
pub mod manifold;
pub mod metrics;
pub mod network;
pub mod problems;

pub use error::{Error, Result};
pub use manifold::{StiefelPoint, SwarmState, TangentVector};
