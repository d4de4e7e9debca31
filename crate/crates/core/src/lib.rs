//! Two-phase model of non-sarcomeric actomyosin bundles: length-structured
//! filament densities of two orientations, transported by velocities from a
//! quasi-stationary force balance on a bundle of prescribed force or length.

// Checks are written `!(a >= b)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod config;
pub mod density;
pub mod evolution;
pub mod functions;
pub mod oracles;
pub mod studies;
pub mod transport;
pub mod velocity;
