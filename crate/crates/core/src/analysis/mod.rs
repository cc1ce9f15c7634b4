//! Certification of solved procedures: the dual lower bound on the
//! achievable Bayes risk, the monotone extension beyond the grid, the
//! continuum error-rate check, and the region-extension LP.

pub mod augment;
pub mod bound;
pub mod extend;
pub mod verify;

pub use augment::{extend_region_lp, Augmented};
pub use bound::{dual_lower_bound, BoundOptions, DualCertificate};
pub use extend::{claim_mask, extend_procedure, extend_procedure_with, ExtendedProcedure, Level, Randomization, ENVELOPE_TOL};
pub use verify::{verify_fwer, FwerVerification, Peak, VerifyOptions};
