//! Step detection from raw 3-axis accelerometer streams.
//!
//! The pipeline is: magnitude, low-pass filter, two-threshold peak detection.
//! A filtered local maximum becomes a step event when it exceeds the most
//! recent preceding valley by at least `theta_mag` and is separated from the
//! previously accepted step by at least `theta_time_ms`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw accelerometer sample, device frame, m/s².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t_ms: i64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

/// Time-stamped step events, strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvents {
    pub timestamps_ms: Vec<i64>,
}

impl StepEvents {
    pub fn new(timestamps_ms: Vec<i64>) -> Result<StepEvents> {
        for i in 1..timestamps_ms.len() {
            if timestamps_ms[i] <= timestamps_ms[i - 1] {
                return Err(Error::NonMonotoneTimestamps(i));
            }
        }
        Ok(StepEvents { timestamps_ms })
    }

    pub fn count(&self) -> usize {
        self.timestamps_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_ms.is_empty()
    }
}

/// Detector configuration. The filter cutoff sits above the ~2 Hz gait
/// frequency; both thresholds are survey-tunable because reasonable values
/// depend on device placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDetectorConfig {
    /// Low-pass cutoff in Hz.
    pub cutoff_hz: f64,
    /// Minimum time between accepted steps, milliseconds.
    pub theta_time_ms: f64,
    /// Minimum peak-to-valley magnitude difference, m/s².
    pub theta_mag: f64,
}

impl Default for StepDetectorConfig {
    fn default() -> Self {
        StepDetectorConfig {
            cutoff_hz: 3.0,
            theta_time_ms: 300.0,
            theta_mag: 1.0,
        }
    }
}

impl StepDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_hz > 0.0 && self.theta_time_ms > 0.0 && self.theta_mag > 0.0) {
            return Err(Error::InvalidDetectorConfig(
                "cutoff_hz, theta_time_ms and theta_mag must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Euclidean norm of the three axes.
pub fn accel_magnitude(sample: &AccelSample) -> f64 {
    (sample.ax * sample.ax + sample.ay * sample.ay + sample.az * sample.az).sqrt()
}

/// Second-order Butterworth low-pass applied sample by sample with the actual
/// time deltas (no resampling). The filter state is initialized to the first
/// sample, so a constant series passes through at steady state from the start.
pub fn low_pass(t_ms: &[i64], x: &[f64], cutoff_hz: f64) -> Result<Vec<f64>> {
    assert_eq!(t_ms.len(), x.len());
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: x.len(),
        });
    }
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    let (mut x1, mut x2) = (x[0], x[0]);
    let (mut y1, mut y2) = (x[0], x[0]);
    let mut coeffs = BiquadCoeffs::default();
    let mut last_dt = 0i64;
    for i in 1..x.len() {
        let dt_ms = t_ms[i] - t_ms[i - 1];
        if dt_ms <= 0 {
            return Err(Error::NonMonotoneTimestamps(i));
        }
        if dt_ms != last_dt {
            coeffs = BiquadCoeffs::lowpass(cutoff_hz, dt_ms as f64 / 1000.0).ok_or(
                Error::CutoffAboveNyquist {
                    cutoff_hz,
                    dt_ms,
                },
            )?;
            last_dt = dt_ms;
        }
        let y = coeffs.b0 * x[i] + coeffs.b1 * x1 + coeffs.b2 * x2
            - coeffs.a1 * y1
            - coeffs.a2 * y2;
        x2 = x1;
        x1 = x[i];
        y2 = y1;
        y1 = y;
        out.push(y);
    }
    Ok(out)
}

#[derive(Clone, Copy, Default)]
struct BiquadCoeffs {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl BiquadCoeffs {
    /// RBJ cookbook low-pass with Butterworth Q = 1/sqrt(2). Returns None when
    /// the cutoff is at or above Nyquist for this sample spacing.
    fn lowpass(cutoff_hz: f64, dt_s: f64) -> Option<BiquadCoeffs> {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz * dt_s;
        if w0 >= std::f64::consts::PI {
            return None;
        }
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let alpha = w0.sin() / (2.0 * q);
        let cosw = w0.cos();
        let a0 = 1.0 + alpha;
        Some(BiquadCoeffs {
            b0: (1.0 - cosw) / 2.0 / a0,
            b1: (1.0 - cosw) / a0,
            b2: (1.0 - cosw) / 2.0 / a0,
            a1: -2.0 * cosw / a0,
            a2: (1.0 - alpha) / a0,
        })
    }
}

/// Runs the full detection pipeline on a raw accelerometer stream.
///
/// An empty (or single-sample) stream yields zero steps; that is not an
/// error. Timestamps must be strictly increasing.
pub fn detect_steps(samples: &[AccelSample], config: &StepDetectorConfig) -> Result<StepEvents> {
    config.validate()?;
    if samples.len() < 2 {
        return Ok(StepEvents::default());
    }
    let t: Vec<i64> = samples.iter().map(|s| s.t_ms).collect();
    let mag: Vec<f64> = samples.iter().map(accel_magnitude).collect();
    let filtered = low_pass(&t, &mag, config.cutoff_hz)?;
    detect_steps_filtered(&t, &filtered, config)
}

/// Two-threshold peak detection over an already-filtered magnitude series.
/// The first sample is treated as a valley.
pub fn detect_steps_filtered(
    t_ms: &[i64],
    filtered: &[f64],
    config: &StepDetectorConfig,
) -> Result<StepEvents> {
    let mut events = Vec::new();
    if filtered.len() < 2 {
        return Ok(StepEvents::default());
    }
    let mut last_valley = filtered[0];
    let mut last_step_t: Option<i64> = None;
    let mut rising = false;
    for i in 1..filtered.len() {
        if filtered[i] > filtered[i - 1] {
            if !rising {
                last_valley = filtered[i - 1];
            }
            rising = true;
        } else if filtered[i] < filtered[i - 1] {
            if rising {
                let peak = filtered[i - 1];
                let t_peak = t_ms[i - 1];
                let far_enough = last_step_t
                    .map_or(true, |prev| (t_peak - prev) as f64 >= config.theta_time_ms);
                if peak - last_valley >= config.theta_mag && far_enough {
                    events.push(t_peak);
                    last_step_t = Some(t_peak);
                }
            }
            rising = false;
        }
        // Equal neighbors keep the current direction.
    }
    StepEvents::new(events)
}
