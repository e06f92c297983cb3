//! δ-decisions for bounded first-order formulas over the reals extended with
//! differentially-defined functions.

pub mod formula;
pub mod interval;
pub mod poly;
pub mod rational;
pub mod registry;
pub mod ode;
pub mod enclosure;
pub mod perturbation;
pub mod engine;
pub mod decide;
pub mod certificate;
