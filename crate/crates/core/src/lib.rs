//! Cross-view RGB-D action recognition on top of ingested per-frame features.
//!
//! The pipeline has two streams. Depth-stream feature sequences are encoded
//! with a Fourier temporal pyramid ([`pyramid`]). RGB-stream trajectory
//! descriptors are quantized against a learned codebook ([`codebook`]) and
//! pushed through a view-transfer regression network ([`viewnet`]) whose
//! concatenated layer activations form a view-invariant descriptor. Both
//! streams are normalized and stacked into one dictionary ([`fusion`]) which a
//! sparse-dense collaborative representation classifier ([`cr`]) queries.
//!
//! [`synth`] produces a deterministic multi-view benchmark and [`harness`]
//! runs the cross-view protocol over it.

pub mod codebook;
pub mod cr;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod io;
pub mod pyramid;
pub mod rng;
pub mod synth;
pub mod viewnet;

pub use error::{Error, Result};
