//! Synthetic control and synthetic difference-in-differences on
//! state-by-year aggregates.

mod aggregate;
mod scm;
mod sdid;

pub use aggregate::AggregatePanel;
pub use scm::{scm_fit, scm_placebo, ScmPlacebo, ScmSolution};
pub use sdid::{sdid_estimate, sdid_fit, SdidSolution, DEFAULT_RIDGE};
