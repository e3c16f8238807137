//! Multi-period cost-of-capital margin valuation.
//!
//! The residual liability cash flow `X = (X_1, ..., X_T)` is valued by
//! repeated one-period replication with cash. At every step a capital
//! requirement `R_t(-Y)` is held, and a capital provider with limited
//! liability accepts funding the buffer when its compensation, measured by a
//! utility `U_t`, covers `(1 + eta)` times the capital supplied. The value is
//! the backward composition of the one-step operator
//!
//! ```text
//! W_t(Y) = R_t(-Y) - U_t((R_t(-Y) - Y)_+) / (1 + eta)
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`distribution`]: exact finite laws with the left-continuous quantile.
//! * [`risk`]: quantile-integral risk measures and utilities, plus the
//!   standard normal functions in [`normal`].
//! * [`valuation`]: the operator `W_t`, its normal closed forms and bounds.
//! * [`oracle`]: scenario trees, the utility-process form and nested Monte
//!   Carlo, used as ground truth.
//! * [`ar`], [`gaussian`], [`life`]: model-specific engines.
//! * [`eiopa`]: the regulatory risk-margin comparator.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod distribution;
pub mod eiopa;
pub mod error;
pub mod gaussian;
pub mod life;
pub mod normal;
pub mod oracle;
pub mod risk;
pub mod valuation;

pub use ar::{ARModel, Innovation};
pub use distribution::DiscreteDistribution;
pub use eiopa::{EiopaParams, StressMode};
pub use error::{CocmError, Result};
pub use gaussian::{GaussianModel, GaussianValue, JointGaussianModel, Schedule};
pub use life::{Cohort, DeferredProbs, MakehamLaw, ValueTable};
pub use oracle::{McConfig, McEstimate, ScenarioTree};
pub use risk::{RiskMeasureKind, SpectralMeasure};
pub use valuation::{UtilitySpec, ValuationSpec};
