//! Rothe time stepping and P1 finite elements for evolutionary
//! hemivariational inequalities with a history-dependent operator, with a
//! quasistatic viscoelastic contact model on top.

pub mod contact;
pub mod convergence;
pub mod error;
pub mod fem;
pub mod hvi;
pub mod linalg;
pub mod oracle;
pub mod quadrature;
pub mod rothe;
pub mod step;

pub use error::{HviError, Result};
