//! Parameter estimation for the Ornstein-Uhlenbeck process.
//!
//! * [`process`]: parameters, exact simulation, moments, transition density.
//! * [`mle`]: exact likelihood, moment initializer and the MLE pipeline.
//! * [`optimizer`]: strong-Wolfe line search, BFGS, basin hopping.
//! * [`neural`]: a from-scratch two-layer LSTM regressor and its training loop.
//! * [`bench`]: regime definitions, summary statistics and the benchmark driver.
//! * [`io`]: trajectory CSV files and dataset manifests.

pub mod bench;
pub mod error;
pub mod io;
pub mod mle;
pub mod neural;
pub mod optimizer;
pub mod process;
pub mod rng;

pub use error::{OuError, Result};
pub use process::{GridSpec, InitMode, OUParams, SimConfig, Trajectory};
