//! Mixed-form physics-informed neural networks for multiscale elliptic
//! problems `-div(A(x) grad u) = f` with Dirichlet data on box domains.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: dual numbers for input derivatives and a matrix tape for
//!   parameter gradients.
//! * [`network`]: the multi-scale network with Fourier-feature first layers.
//! * [`problems`]: the benchmark catalog and expression-defined problems.
//! * [`sampling`]: collocation batches and evaluation grids.
//! * [`loss`]: mixed (flux) and classical residual losses, penalty schedule.
//! * [`trainer`]: Adam training loop, schedules, evaluation and run records.
//! * [`fdm`]: finite-difference reference solvers.

pub mod autodiff;
pub mod error;
pub mod fdm;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod problems;
pub mod sampling;
pub mod summation;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
