//! Semiclassical Fourier integral operators
//!
//! F_h φ(x) = ∬ e^{i(S(x,θ) − y·θ)/h} a(x,θ) φ(y) dy d̂_hθ,  d̂_hθ = (2πh)^{-n} dθ
//!
//! on ℝⁿ with n ∈ {1, 2}: hypothesis checks for the phase S and the amplitude a,
//! cutoff-regularized oscillatory integrals, dense kernel assembly, numerical
//! symbol calculus for F_hF_h* and F_h*F_h, and singular-value diagnostics.
//!
//! The crate is `no_std` + `alloc` when the default `std` feature is disabled.
//! The `parallel` feature enables rayon for row-parallel assembly; results do
//! not depend on the thread count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod calculus;
pub mod dense;
pub mod error;
pub mod numeric;
pub mod operator;
pub mod oscillatory;
pub mod phase;
pub mod spectral;
pub mod symbols;

mod prelude {
    pub use alloc::{format, string::String, sync::Arc, vec, vec::Vec};
    pub use num_complex::Complex64;
    #[allow(unused_imports)]
    pub use num_traits::Float;
}

pub use error::{Error, Result};
pub use num_complex::Complex64;
