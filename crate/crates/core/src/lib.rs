//! Evaluation harness for hidden-content recognition in vision-language
//! models.
//!
//! The crate covers the whole offline pipeline: loading a benchmark
//! manifest, perceptual image preprocessing, driving chat endpoints through
//! a staged questioning protocol, judging responses, running resolution and
//! squint sweeps, analysing encoder-token redundancy from exported tensors,
//! and rendering reports.

mod fsutil;
pub mod image_ops;
pub mod manifest;
pub mod tensor_io;
pub mod redundancy;
pub mod client;
pub mod scoring;
pub mod protocol;
pub mod sweep;
pub mod reporting;
