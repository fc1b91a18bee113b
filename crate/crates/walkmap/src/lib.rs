//! Offline toolkit for path-based indoor-localization surveys.
//!
//! The pipeline turns walking sensor logs (accelerometer, magnetometer, WiFi
//! scans) into a trained fingerprint map — one Gaussian Process per feature —
//! and answers location queries by maximum likelihood over a prediction grid.
//! A synthetic-environment simulator provides ground truth for verification
//! and survey-cost planning.
//!
//! Stages, each its own module:
//!
//! 1. [`steps`] detects step events in raw accelerometer streams.
//! 2. [`tagging`] assigns inferred locations to fingerprints captured during
//!    a walk, by constant-speed or constant-stride interpolation.
//! 3. [`gp`] fits one exact Gaussian Process per feature (exponential
//!    kernel, marginal-likelihood maximization).
//! 4. [`fpmap`] orchestrates training over all features, including floor
//!    imputation for unheard access points.
//! 5. [`selection`] screens access points by fitted noise variance with a
//!    per-location coverage safeguard.
//! 6. [`localizer`] answers queries by grid argmax of the summed per-feature
//!    log-likelihoods, and scores batches against ground truth.
//! 7. [`sim`] generates synthetic environments, walks and queries, and
//!    models survey cost and walking-speed recommendations.

pub mod error;
pub mod geom;
pub mod gp;
pub mod optim;
pub mod steps;
pub mod tagging;

pub use error::{Error, Result};
