//! Finite-key secret-key rates for BB84 and six-state quantum key
//! distribution.
//!
//! Given an initial signal count, an observed error rate, and a failure
//! budget, the crate evaluates epsilon-secure key rates under three
//! analyses — collective attacks, coherent attacks via a min-entropy
//! reduction, and coherent attacks via post-selection on top of the
//! collective statement — and optimizes the estimation-sample count and the
//! budget split for each.
//!
//! Layering, bottom up:
//!
//! * [`bounds`]: closed-form statistical deviations, error-correction
//!   leakage, the smooth-entropy correction, and the multinomial floor
//!   inequality.
//! * [`entropy`]: Bell-diagonal states, S(X|E) by explicit
//!   eigendecomposition and by closed form, and its minimization over
//!   error-rate constraint sets.
//! * [`rates`]: the three per-model rate assemblies.
//! * [`optimizer`]: grid search plus coordinate descent over m and the
//!   budget split.
//! * [`oracle`]: independent recomputation routes (double-double
//!   arithmetic, a second entropy assembly, a brute-force grid minimizer)
//!   used by the self-test machinery.
//!
//! Everything numeric is generic over the scalar type via [`Real`]; the
//! `*64` aliases fix f64, which all shipped tolerances assume.

pub mod bounds;
pub mod entropy;
pub mod optimizer;
pub mod oracle;
pub mod rates;

/// Scalar type for all numeric kernels.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + core::fmt::Debug
    + core::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy f64 -> T conversion for constants; panics only if T cannot
/// represent any approximation of x, which the [`Real`] types always can.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in every Real type")
}

/// Error type of every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// An input lies outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A composite value (state, operator) violates a structural invariant.
    #[error("invalid state: {0}")]
    InvalidState(String),
    /// A constraint set contains no admissible state.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
}

pub type Result<T> = core::result::Result<T, Error>;

/// Which prepare-and-measure protocol generated the statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    /// Two mutually unbiased bases; the Y-basis correlation is unmonitored.
    Bb84,
    /// All three mutually unbiased bases monitored.
    SixState,
}

impl ProtocolKind {
    pub fn monitored_bases(&self) -> u32 {
        match self {
            ProtocolKind::Bb84 => 2,
            ProtocolKind::SixState => 3,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            ProtocolKind::Bb84 => "bb84",
            ProtocolKind::SixState => "six-state",
        }
    }
}

impl core::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.token())
    }
}

/// How the monitored error rates are constrained by the observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ConstraintMode {
    /// Every monitored basis rate lies in the estimation interval.
    #[default]
    PerBasis,
    /// Only the average of the monitored rates is pinned.
    Averaged,
}

pub type BellDiagonalState64 = entropy::BellDiagonalState<f64>;
pub type HermitianOperator64 = entropy::HermitianOperator<f64>;
pub type ErrorConstraintSet64 = entropy::ErrorConstraintSet<f64>;
pub type FluctuationBounds64 = bounds::FluctuationBounds<f64>;
pub type ProtocolSpec64 = rates::ProtocolSpec<f64>;
pub type SecurityBudget64 = rates::SecurityBudget<f64>;
pub type RatePoint64 = rates::RatePoint<f64>;
pub type OptimizationSpec64 = optimizer::OptimizationSpec<f64>;
