//! Validated integration of polynomial initial value problems and certified
//! polynomial approximants of their solutions.

mod approx;
mod series;
mod stepper;

pub use approx::{
    approx_function, certify_candidate, check_approx, check_record, range_bound, verify_error,
    CertifiedApprox, DiffCheck, ErrorRecord, Piece,
};
pub use stepper::{enclose_at, solve_enclosure, verify_steps, TaylorStep, TAYLOR_ORDER};

use crate::rational::{fmt_q, Q};

/// The enclosure could not be continued: no admissible step size or the
/// requested tolerance is out of reach.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("enclosure of `{func}` diverged near t = {}: {reason}", fmt_q(.time))]
pub struct DivergenceError {
    pub func: String,
    pub time: Q,
    pub reason: String,
}
