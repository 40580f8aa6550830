//! Multimodal gaze forecasting for foveated rendering.
//!
//! Gaze history, head orientation and scene features are encoded separately,
//! mixed by a learned three-way gate, and decoded into 1/2/3-step-ahead gaze
//! predictions. The crate also carries the data pipeline, a synthetic session
//! generator, the training loop, evaluation metrics and a latency harness.

pub mod bench;
pub mod datapipe;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod numkernel;
pub mod seed;
pub mod synthgen;
pub mod train;
