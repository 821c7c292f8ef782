//! Explicit feedback laws for robust linear MPC with approximation-aware constraint tightening.
//!
//! The exact solver ([`msa`]) labels states, [`datagen`] builds datasets, and
//! [`quifs`] or [`nnfs`] turn them into explicit laws that [`cloop`] deploys and validates.

pub mod cloop;
pub mod conic;
pub mod datagen;
pub mod error;
pub mod manifest;
pub mod msa;
pub mod nnfs;
pub mod policy;
pub mod problem;
pub mod quifs;
pub mod sip;
