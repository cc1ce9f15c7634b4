//! Optimal multiple testing procedures for two-subpopulation trials,
//! computed by discretizing the rejection region and solving sparse
//! linear programs.

pub mod actions;
pub mod analysis;
pub mod error;
pub mod kernel;
pub mod loss;
pub mod lp;
pub mod normal;
pub mod prior;
pub mod procedures;
pub mod solver;
pub mod trial;
pub mod workflows;

pub use actions::{ActionSpace, SpaceKind};
pub use error::{Error, Result};
pub use kernel::{rect_prob, Rect, RectGrid};
pub use loss::{LossKind, LossSpec};
pub use prior::{Component, Prior};
pub use trial::{DerivedScale, TrialDesign, H01, H02, H0C};
