//! Dry-biomass composition estimation from pasture canopy images.
//!
//! Field samples are labeled with the percentages of grass, clover (broken
//! down into white and red clover where available), and weeds in the dry
//! biomass. This crate implements the full training pipeline for predicting
//! those percentages from images when many labels are only partially known:
//!
//! * [`data`] — labels CSV ingest with hierarchy validation, and the
//!   seeded train/validation split persisted as a manifest
//! * [`impute`] — mean, median, and chained-regression fillers for the
//!   missing white/red clover breakdown
//! * [`augment`] — label-preserving random affine augmentation with wrap
//!   fill, resized to a square training resolution
//! * [`nn`] — dense tensors with hand-written backprop: dense, batch-norm,
//!   ReLU, softmax layers, a frozen convolutional extractor, weighted RMSE
//!   loss, and Adam with learning-rate decay
//! * [`pipeline`] — the training loop (best-validation checkpointing),
//!   prediction, and per-component RMSE/MAE evaluation
//! * [`checkpoint`] — the binary weight container used for checkpoints and
//!   extractor weight files
//! * [`config`] — flat `key=value` run configuration for the CLI
//!
//! Everything is deterministic given the run seed: reruns produce
//! byte-identical checkpoints, manifests, and CSV reports.
//!
//! The `examples/` directory walks each capability end to end on synthetic
//! data; the `biomass` binary exposes the same operations as subcommands.

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod img;
pub mod impute;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
