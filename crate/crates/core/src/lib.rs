//! Deterministic linear sketches for l1 heavy hitters in turnstile streams.
//!
//! A sketch is a fixed matrix `Phi` chosen once from a seed; the stream is
//! summarized as `v = Phi x` and decoders recover every large coordinate of
//! `x` from `v` alone, for every input `x`.
//!
//! * [`l1`]: `||x - xhat||_1 <= (1 + eps) ||x_{-k}||_1` with `O(k)` output.
//! * [`linf`]: `||x - xhat||_inf <= (1/k) ||x_{-k}||_1`, and a combined
//!   scheme reaching `(1/k) ||x_{-k^2}||_1`.
//! * [`strict`]: a seedless Reed-Solomon construction for streams whose
//!   coordinates never go negative.
//!
//! [`oracle`] holds the brute-force checks every guarantee is tested against.

pub mod coding;
pub mod descriptor;
pub mod error;
pub mod hashgraph;
pub mod l1;
pub mod linf;
pub mod oracle;
pub mod par;
pub mod planted;
pub mod signal;
pub mod sketch;
pub mod stream;
pub mod strict;
pub mod weak;

pub use error::{Error, Result};
pub use signal::{head_set, tail_norm, Signal, SparseVector, Update};
pub use sketch::{apply, LinearOperator, SketchVector};
