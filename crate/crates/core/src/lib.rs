//! Action-prior conditioned forecasting of agent bounding boxes and ego
//! motion from an egocentric viewpoint.
//!
//! The crate is organized bottom-up:
//!
//! * [`scene`] and [`taxonomy`]: clip data model, JSONL format, windowing.
//! * [`synth`]: procedural clips whose motion follows their action labels.
//! * [`nn`]: a small reverse-mode autodiff tape with GRU and affine layers.
//! * [`action`], [`interaction`], [`fol`], [`ego`]: the forecasting networks
//!   and their losses.
//! * [`baselines`], [`metrics`], [`experiment`]: baselines, evaluation and
//!   end-to-end orchestration.

pub mod action;
pub mod baselines;
pub mod ego;
pub mod error;
pub mod experiment;
pub mod fol;
pub mod interaction;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod records;
pub mod scene;
pub mod synth;
pub mod taxonomy;
pub mod training;

pub use error::{Error, Result};
