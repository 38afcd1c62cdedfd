//! Parsimonious hidden Markov models for matrix-variate longitudinal data.
//!
//! Each unit `i` is observed at times `t = 1..T` as a `P x R` matrix. A
//! homogeneous hidden Markov chain drives the state of every unit, and given
//! the state the matrix follows a matrix-normal law whose row and column
//! covariances are constrained by one of 14 x 7 = 98 eigen-decomposition
//! structures. Parameters are estimated by ECM with log-space
//! forward–backward recursions and short-EM initialization; models are
//! compared by BIC.

pub mod ecm;
pub mod error;
pub mod linalg;
pub mod matnorm;
pub mod panel;
pub mod rng;
pub mod select;
pub mod serde_matrix;
pub mod sim;
pub mod structures;

pub use ecm::{decode, e_step, fit, FitConfig, FitReport, HmmParams, Posteriors};
pub use error::{Error, Result};
pub use matnorm::MatNormParams;
pub use panel::{load_panel, save_panel, LongFormat, MatrixPanel, PanelDims};
pub use select::{bic, n_free_params, run_grid, run_grid_sequential, ModelGrid, SelectionReport};
pub use structures::{PsiStructure, SigmaStructure, StructurePair};
