//! Uniform random binary trees from critical Galton-Watson processes.
//!
//! * [`bitsource`]: buffered, splittable random bit streams.
//! * [`treestore`]: per-worker slab storage, preorder encodings, measures.
//! * [`engines`]: naive, iterative, threshold-parallel and hybrid generators
//!   plus size-conditioned samplers.
//! * [`replay`]: deterministic analyses of a finished tree (first-task
//!   lifetime, per-task loads, fully parallel time, peak load).
//! * [`oracle`]: exact enumeration and closed forms in rational arithmetic.
//! * [`stats`]: distances, goodness of fit and scaling fits.
//! * [`verify`] and [`bench`]: the verification suites and benchmarks used
//!   by the command line tool.

pub mod bench;
pub mod bitsource;
pub mod engines;
pub mod error;
pub mod oracle;
pub mod replay;
pub mod stats;
pub mod treestore;
pub mod verify;

pub use bitsource::{BitSource, SourceUsage, WORD_BITS};
pub use engines::{
    generate, generate_hybrid, generate_iterative, generate_naive, generate_parallel, sample_conditioned, Algo,
    ConditionedSampler, ForcedBits, GenOutcome, GenParams, GenResult, Generator, RngMode, SampleMethod,
};
pub use error::{Error, Result};
pub use treestore::{decode_bits, NodeHandle, NodeStore, Tree};
