//! Scalar abstraction for the solver kernels.
//!
//! All field and solver code is generic over [`Real`]; `f32` and `f64` are the
//! provided instantiations (aliases for the common concrete types live at the
//! crate root). Tolerance-sensitive work (the identity suites, the acceptance
//! runs) is expected to use `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar usable in every kernel: field arithmetic, FFTs,
/// banded complex solves and diagnostics.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
    + std::fmt::LowerExp
    + Default
{
    /// Conversion from an `f64` literal (panics on non-representable input,
    /// which cannot happen for the finite constants used in this crate).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Lossy view as `f64`, used for reporting and error payloads.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
