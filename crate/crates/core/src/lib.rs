//! Word-level lexical substitution toolkit for stress-testing and hardening
//! toxic-language classifiers.
//!
//! The pipeline picks influential words with a substitute classifier
//! (omission scores), proposes context-aware replacements through a
//! pluggable language-model backend, rolls the substitutions out into
//! augmented samples, and measures how target classifiers hold up:
//! F1/TPR drops under perturbation, recovery after augmentation training,
//! and many-to-many transferability across augmenters.

pub mod backend;
pub mod baselines;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod selector;
pub mod stem;
pub mod substitution;
pub mod text;
pub mod wordnet;

pub use error::{Error, ErrorClass, Result};

/// Floating-point scalar the numeric core is generic over.
///
/// Implemented by `f32` and `f64`; pick via the crate-root aliases unless
/// a caller needs to choose precision explicitly.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + std::fmt::Debug
        + std::fmt::Display
        + std::iter::Sum
        + std::ops::AddAssign
        + Send
        + Sync
        + serde::Serialize
        + serde::de::DeserializeOwned
        + 'static
{
}

/// Double-precision corpus statistics (the default everywhere).
pub type CorpusStats = corpus::CorpusStats<f64>;
/// Double-precision candidate set.
pub type CandidateSet = substitution::CandidateSet<f64>;
/// Double-precision substitution plan.
pub type SubstitutionPlan = substitution::SubstitutionPlan<f64>;
