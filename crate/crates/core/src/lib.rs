//! Attribute-inference risk auditing for tabular synthetic data.
//!
//! The crate plays a repeated privacy game against a synthetic data
//! generator: an original dataset is sampled, one record's binary secret is
//! randomized, a synthetic dataset is generated from the result, and attacks
//! try to recover the randomized bit from the synthetic data plus the
//! quasi-identifiers. Alongside attack accuracy it reports standard utility
//! error metrics, so privacy/utility tradeoffs can be mapped per generator,
//! synthetic data size, and privacy budget.

pub mod attack;
pub mod benchdata;
pub mod data;
pub mod dp;
pub mod experiment;
pub mod game;
pub mod lp;
pub mod query;
pub mod sdg;
pub mod stats;
pub mod utility;
