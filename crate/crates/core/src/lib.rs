//! Blind and semi-blind multiuser detection for synchronous downlink
//! DS-CDMA / WCDMA.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: a small dense complex linear-algebra kernel (Jacobi
//!   Hermitian eigensolver, Cholesky solves, Gram-Schmidt).
//! * [`codes`]: Gold and OVSF channelisation codes, WCDMA scrambling.
//! * [`sigmodel`]: multipath signature matrices and the two-tap chip-rate
//!   received-signal model.
//! * [`preproc`]: covariance estimation and noise-subtracted whitening.
//! * [`detectors`]: matched filter, Rake and LMMSE baselines, the three
//!   adaptive blind separating structures (feed-forward, feedback I,
//!   feedback II) and the adaptive Rake receivers.
//! * [`eval`]: Monte Carlo BER harness and CSV persistence.
//!
//! All numerical code is generic over the real scalar [`Real`] (`f32` or
//! `f64`). The aliases at the crate root fix the scalar to `f64`, which is
//! what the harness and the command-line tool use.

// `!(x < limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codes;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod preproc;
pub mod rng;
pub mod sigmodel;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

pub use error::{Error, Result};
pub use num_complex::Complex;

/// Real scalar the library is generic over.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or sample.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Double-precision complex sample.
pub type C64 = Complex<f64>;
/// Double-precision dense complex matrix.
pub type CMatrix = numerics::Matrix<f64>;
pub type EigResult = numerics::EigResult<f64>;
pub type ScramblingSequence = codes::ScramblingSequence<f64>;
pub type ChannelProfile = sigmodel::ChannelProfile<f64>;
pub type SignaturePair = sigmodel::SignaturePair<f64>;
pub type SymbolFrame = sigmodel::SymbolFrame<f64>;
pub type ReceivedFrame = sigmodel::ReceivedFrame<f64>;
pub type WhiteningTransform = preproc::WhiteningTransform<f64>;
pub type DemixingState = detectors::blind::DemixingState<f64>;
pub type AdaptiveRakeState = detectors::adaptive_rake::AdaptiveRakeState<f64>;

pub use codes::{CodeFamily, CodeSet};
