//! Learning Gaussian mixture models by gradient descent over the closed-form
//! Cramér 2-distance (univariate) and its sliced extension (multivariate).
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel`]: `Phi`, `phi`, `U`, `V` and the pairwise cross term.
//! * [`gmm1d`]: univariate mixtures, the closed-form distance, analytic
//!   gradients and the likelihood.
//! * [`gmm_nd`]: multivariate mixtures, projections and the sliced distance.
//! * [`optim`]: Lion with per-group learning rates, softmax weights and the
//!   negative-sigma penalty.
//! * [`fit`]: training loops.
//! * [`oracle`]: independent checks (quadrature, energy distance, finite
//!   differences, exhaustive return distributions).
//! * [`distq`]: tabular distributional Q-learning on a small MDP.
//! * [`io`]: model and points file formats used by the command line tool.

pub mod distq;
pub mod error;
pub mod fit;
pub mod gmm1d;
pub mod gmm_nd;
pub mod io;
pub mod kernel;
pub mod optim;
pub mod oracle;

pub use error::{Error, Result};
pub use nalgebra;
pub use gmm1d::{c2_squared, c2_squared_grad, Gmm1, Grad1};
pub use gmm_nd::{sliced_c2_squared, sliced_c2_squared_grad, DirectionSet, GmmN, GradN};
