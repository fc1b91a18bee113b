//! Single-output Gaussian Process regression with the exponential kernel
//! `k(x, x') = sigma_f^2 * exp(-||x - x'|| / l)`.
//!
//! Inference is exact: the gram matrix `A = K + sigma_n^2 I` is factorized
//! once (Cholesky) and reused for the marginal likelihood, its gradient, and
//! posterior prediction. Hyperparameters are fitted by maximizing the log
//! marginal likelihood
//!
//! ```text
//! log p(y|X) = -1/2 y' A^-1 y - 1/2 log|A| - n/2 log(2 pi)
//! ```
//!
//! over log-transformed parameters with box constraints, using the
//! limited-memory quasi-Newton minimizer from [`crate::optim`] with seeded
//! multi-start (the likelihood surface is multimodal).
//!
//! The observed values are modeled with a zero-mean prior; callers that work
//! with far-from-zero data (raw RSS) subtract the empirical mean before
//! fitting and the model restores the offset at prediction time.

use std::cell::Cell;
use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Location;
use crate::optim::{minimize_bounded, BoxBounds, MinimizeOptions};

type Cholesky = nalgebra::linalg::Cholesky<f64, Dyn>;

/// Kernel and noise hyperparameters. Units: `sigma_f2` and `sigma_n2` are in
/// squared feature units, `length_scale_l` in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub sigma_f2: f64,
    pub length_scale_l: f64,
    pub sigma_n2: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f2 > 0.0 && self.sigma_f2.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "sigma_f2 must be positive and finite, got {}",
                self.sigma_f2
            )));
        }
        if !(self.length_scale_l > 0.0 && self.length_scale_l.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "length_scale_l must be positive and finite, got {}",
                self.length_scale_l
            )));
        }
        if !(self.sigma_n2 >= 0.0 && self.sigma_n2.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "sigma_n2 must be non-negative and finite, got {}",
                self.sigma_n2
            )));
        }
        Ok(())
    }

    fn to_log(self) -> [f64; 3] {
        [
            self.sigma_f2.ln(),
            self.length_scale_l.ln(),
            self.sigma_n2.ln(),
        ]
    }

    fn from_log(u: &[f64]) -> Hyperparams {
        Hyperparams {
            sigma_f2: u[0].exp(),
            length_scale_l: u[1].exp(),
            sigma_n2: u[2].exp(),
        }
    }
}

/// The noise clamp. The default keeps the noise *standard deviation* in
/// [1e-5, 9]; set `bound_is_variance` to clamp the variance to the same
/// interval instead. Both readings are supported because the two differ only
/// in how the published interval is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseBound {
    pub lo: f64,
    pub hi: f64,
    pub bound_is_variance: bool,
}

impl Default for NoiseBound {
    fn default() -> Self {
        NoiseBound {
            lo: 1e-5,
            hi: 9.0,
            bound_is_variance: false,
        }
    }
}

impl NoiseBound {
    /// The implied interval for sigma_n^2.
    pub fn variance_range(&self) -> (f64, f64) {
        if self.bound_is_variance {
            (self.lo, self.hi)
        } else {
            (self.lo * self.lo, self.hi * self.hi)
        }
    }
}

/// Box constraints for fitting, as (lo, hi) pairs per hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub sigma_f2: (f64, f64),
    pub length_scale_l: (f64, f64),
    pub sigma_n2: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            sigma_f2: (1e-10, 1e6),
            length_scale_l: (1e-2, 1e4),
            sigma_n2: NoiseBound::default().variance_range(),
        }
    }
}

impl HyperBounds {
    pub fn with_noise_bound(noise: &NoiseBound) -> HyperBounds {
        HyperBounds {
            sigma_n2: noise.variance_range(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("sigma_f2", self.sigma_f2),
            ("length_scale_l", self.length_scale_l),
            ("sigma_n2", self.sigma_n2),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidHyperparams(format!(
                    "bound for {name} must satisfy 0 < lo <= hi < inf, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn clamp(&self, h: &Hyperparams) -> Hyperparams {
        Hyperparams {
            sigma_f2: h.sigma_f2.clamp(self.sigma_f2.0, self.sigma_f2.1),
            length_scale_l: h
                .length_scale_l
                .clamp(self.length_scale_l.0, self.length_scale_l.1),
            sigma_n2: h.sigma_n2.clamp(self.sigma_n2.0, self.sigma_n2.1),
        }
    }

    pub fn contains(&self, h: &Hyperparams) -> bool {
        (self.sigma_f2.0..=self.sigma_f2.1).contains(&h.sigma_f2)
            && (self.length_scale_l.0..=self.length_scale_l.1).contains(&h.length_scale_l)
            && (self.sigma_n2.0..=self.sigma_n2.1).contains(&h.sigma_n2)
    }

    fn log_box(&self) -> BoxBounds {
        BoxBounds {
            lo: vec![
                self.sigma_f2.0.ln(),
                self.length_scale_l.0.ln(),
                self.sigma_n2.0.ln(),
            ],
            hi: vec![
                self.sigma_f2.1.ln(),
                self.length_scale_l.1.ln(),
                self.sigma_n2.1.ln(),
            ],
        }
    }
}

/// Exponential-kernel covariance between two locations.
pub fn kernel(a: &Location, b: &Location, hyper: &Hyperparams) -> f64 {
    hyper.sigma_f2 * (-a.distance(b) / hyper.length_scale_l).exp()
}

fn distance_matrix(xs: &[Location]) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| xs[i].distance(&xs[j]))
}

/// `A = sigma_f2 * exp(-D/l) + sigma_n2 * I` from a precomputed distance
/// matrix.
fn gram_from_distances(d: &DMatrix<f64>, h: &Hyperparams) -> DMatrix<f64> {
    let n = d.nrows();
    let mut a = d.map(|dist| h.sigma_f2 * (-dist / h.length_scale_l).exp());
    for i in 0..n {
        a[(i, i)] += h.sigma_n2;
    }
    a
}

/// Cholesky with diagonal-jitter escalation 1e-10 -> 1e-8 -> 1e-6 (relative
/// to the diagonal magnitude). Returns the factor and the jitter applied, if
/// any.
fn cholesky_with_jitter(a: &DMatrix<f64>, scale: f64) -> Result<(Cholesky, Option<f64>)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, None));
    }
    for level in [1e-10, 1e-8, 1e-6] {
        let jitter = level * scale;
        let mut aj = a.clone();
        for i in 0..a.nrows() {
            aj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(aj) {
            warn!("gram matrix not positive definite; recovered with jitter {jitter:.3e}");
            return Ok((c, Some(jitter)));
        }
    }
    Err(Error::Factorization { feature: None })
}

fn log_det_from_factor(chol: &Cholesky) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Log marginal likelihood of `ys` at `xs` under the given hyperparameters,
/// computed through the cached triangular factorization.
pub fn log_marginal_likelihood(xs: &[Location], ys: &[f64], hyper: &Hyperparams) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    assert_eq!(xs.len(), ys.len());
    hyper.validate()?;
    let d = distance_matrix(xs);
    let y = DVector::from_column_slice(ys);
    let (lml, _, _) = lml_impl(&d, &y, hyper, false)?;
    Ok(lml)
}

/// Log marginal likelihood together with its gradient with respect to
/// `(log sigma_f2, log l, log sigma_n2)`.
pub fn log_marginal_likelihood_with_grad(
    xs: &[Location],
    ys: &[f64],
    hyper: &Hyperparams,
) -> Result<(f64, [f64; 3])> {
    if xs.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    assert_eq!(xs.len(), ys.len());
    hyper.validate()?;
    let d = distance_matrix(xs);
    let y = DVector::from_column_slice(ys);
    let (lml, grad, _) = lml_impl(&d, &y, hyper, true)?;
    Ok((lml, grad.expect("gradient requested")))
}

/// Shared likelihood evaluation. With `with_grad`, also returns
/// `d lml / d (log sigma_f2, log l, log sigma_n2)` using
/// `d lml / d theta = 1/2 tr((alpha alpha' - A^-1) dA/d theta)`.
fn lml_impl(
    d: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &Hyperparams,
    with_grad: bool,
) -> Result<(f64, Option<[f64; 3]>, Option<f64>)> {
    let n = y.len();
    let a = gram_from_distances(d, h);
    let (chol, jitter) = cholesky_with_jitter(&a, h.sigma_f2 + h.sigma_n2)?;
    let alpha = chol.solve(y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det_from_factor(&chol)
        - n as f64 / 2.0 * (2.0 * PI).ln();
    if !with_grad {
        return Ok((lml, None, jitter));
    }

    let a_inv = chol.inverse();
    let inv_l = 1.0 / h.length_scale_l;
    let mut g_sigma_f2 = 0.0;
    let mut g_length = 0.0;
    let mut g_noise_diag = 0.0;
    for i in 0..n {
        for j in 0..n {
            let m_ij = alpha[i] * alpha[j] - a_inv[(i, j)];
            // Noise-free kernel entry: A minus the diagonal noise.
            let kf_ij = if i == j {
                a[(i, i)] - h.sigma_n2
            } else {
                a[(i, j)]
            };
            g_sigma_f2 += m_ij * kf_ij;
            g_length += m_ij * kf_ij * d[(i, j)] * inv_l;
        }
        g_noise_diag += alpha[i] * alpha[i] - a_inv[(i, i)];
    }
    let grad = [
        0.5 * g_sigma_f2,
        0.5 * g_length,
        0.5 * h.sigma_n2 * g_noise_diag,
    ];
    Ok((lml, Some(grad), jitter))
}

/// Multi-start fit configuration. All randomness (the restart starting
/// points) is drawn from a stream seeded with `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 5,
            max_iters: 100,
            grad_tol: 1e-5,
            seed: 0,
        }
    }
}

/// Outcome of a hyperparameter fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub log_marginal_likelihood: f64,
    /// Iterations used by the winning restart.
    pub iterations: usize,
    /// Whether the winning restart met the gradient tolerance (as opposed to
    /// hitting the iteration cap).
    pub converged: bool,
    pub grad_inf_norm: f64,
    pub restarts: usize,
    /// Number of likelihood evaluations that needed diagonal jitter.
    pub jitter_events: usize,
}

/// Scale-aware default initialization: signal variance from the sample
/// variance of `ys`, corridor-scale length, unit noise; all clamped into the
/// bounds.
pub fn default_init(ys: &[f64], bounds: &HyperBounds) -> Hyperparams {
    let n = ys.len().max(1) as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let h = Hyperparams {
        sigma_f2: var.max(1e-6),
        length_scale_l: 10.0,
        sigma_n2: 1.0,
    };
    let mut clamped = h;
    clamped.sigma_f2 = clamped.sigma_f2.clamp(bounds.sigma_f2.0, bounds.sigma_f2.1);
    clamped.length_scale_l = clamped
        .length_scale_l
        .clamp(bounds.length_scale_l.0, bounds.length_scale_l.1);
    clamped.sigma_n2 = clamped.sigma_n2.clamp(bounds.sigma_n2.0, bounds.sigma_n2.1);
    clamped
}

/// Maximizes the log marginal likelihood over the bounds. The first start is
/// the (projected) `init`; the remaining `restarts - 1` starts sample the
/// log-space box uniformly. The result never scores below `init`.
pub fn fit_hyperparameters(
    xs: &[Location],
    ys: &[f64],
    init: &Hyperparams,
    bounds: &HyperBounds,
    opts: &FitOptions,
) -> Result<(Hyperparams, FitReport)> {
    if xs.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: xs.len(),
        });
    }
    assert_eq!(xs.len(), ys.len());
    bounds.validate()?;

    let d = distance_matrix(xs);
    let y = DVector::from_column_slice(ys);
    let jitter_events = Cell::new(0usize);
    let mut objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let h = Hyperparams::from_log(u);
        match lml_impl(&d, &y, &h, true) {
            Ok((lml, Some(grad), jitter)) => {
                if jitter.is_some() {
                    jitter_events.set(jitter_events.get() + 1);
                }
                if !lml.is_finite() {
                    return None;
                }
                Some((-lml, grad.iter().map(|g| -g).collect()))
            }
            _ => None,
        }
    };

    let log_box = bounds.log_box();
    let minimize_opts = MinimizeOptions {
        max_iters: opts.max_iters,
        grad_tol: opts.grad_tol,
        memory: 8,
    };

    let mut starts = vec![bounds.clamp(init).to_log()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 1..opts.restarts.max(1) {
        let u: Vec<f64> = (0..3)
            .map(|i| rng.random_range(log_box.lo[i]..=log_box.hi[i]))
            .collect();
        starts.push([u[0], u[1], u[2]]);
    }

    let mut best: Option<crate::optim::MinimizeResult> = None;
    let mut failures = 0usize;
    for start in &starts {
        match minimize_bounded(&mut objective, start, &log_box, &minimize_opts) {
            Some(r) => {
                if best.as_ref().map_or(true, |b| r.f < b.f) {
                    best = Some(r);
                }
            }
            None => failures += 1,
        }
    }
    let best = best.ok_or_else(|| {
        Error::FitFailed(format!(
            "all {failures} restart(s) failed: likelihood not evaluable at any starting point"
        ))
    })?;

    let fitted = bounds.clamp(&Hyperparams::from_log(&best.x));
    let report = FitReport {
        log_marginal_likelihood: -best.f,
        iterations: best.iterations,
        converged: best.converged,
        grad_inf_norm: best.grad_inf_norm,
        restarts: starts.len(),
        jitter_events: jitter_events.get(),
    };
    Ok((fitted, report))
}

/// A fitted Gaussian Process: hyperparameters, training set, and the cached
/// factorization of `K + sigma_n2 I`. Immutable after construction; safe to
/// share across threads for prediction.
#[derive(Clone)]
pub struct GpModel {
    hyper: Hyperparams,
    train_x: Vec<Location>,
    train_y: Vec<f64>,
    mean_offset: f64,
    centered: bool,
    factor: Option<Cholesky>,
    alpha: DVector<f64>,
    jitter: Option<f64>,
}

impl std::fmt::Debug for GpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpModel")
            .field("hyper", &self.hyper)
            .field("n_train", &self.train_x.len())
            .field("mean_offset", &self.mean_offset)
            .field("centered", &self.centered)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl GpModel {
    /// Builds a model with fixed hyperparameters. With `center`, the
    /// empirical mean of `train_y` is subtracted before conditioning and
    /// restored at prediction.
    pub fn with_hyperparams(
        train_x: Vec<Location>,
        train_y: Vec<f64>,
        hyper: Hyperparams,
        center: bool,
    ) -> Result<GpModel> {
        let offset = if center && !train_y.is_empty() {
            train_y.iter().sum::<f64>() / train_y.len() as f64
        } else {
            0.0
        };
        Self::from_parts(train_x, train_y, hyper, offset, center)
    }

    /// Rebuilds a model from stored parts (deserialization path): the
    /// factorization is recomputed from the training set, the offset is taken
    /// as stored.
    pub fn from_parts(
        train_x: Vec<Location>,
        train_y: Vec<f64>,
        hyper: Hyperparams,
        mean_offset: f64,
        centered: bool,
    ) -> Result<GpModel> {
        assert_eq!(train_x.len(), train_y.len());
        hyper.validate()?;
        if train_x.is_empty() {
            return Ok(GpModel {
                hyper,
                train_x,
                train_y,
                mean_offset,
                centered,
                factor: None,
                alpha: DVector::zeros(0),
                jitter: None,
            });
        }
        let d = distance_matrix(&train_x);
        let a = gram_from_distances(&d, &hyper);
        let (factor, jitter) = cholesky_with_jitter(&a, hyper.sigma_f2 + hyper.sigma_n2)?;
        let yc = DVector::from_iterator(
            train_y.len(),
            train_y.iter().map(|y| y - mean_offset),
        );
        let alpha = factor.solve(&yc);
        Ok(GpModel {
            hyper,
            train_x,
            train_y,
            mean_offset,
            centered,
            factor: Some(factor),
            alpha,
            jitter,
        })
    }

    /// Fits hyperparameters on (optionally centered) data and conditions the
    /// model. `init` defaults to [`default_init`] of the centered values.
    pub fn fit(
        train_x: Vec<Location>,
        train_y: Vec<f64>,
        init: Option<Hyperparams>,
        bounds: &HyperBounds,
        opts: &FitOptions,
        center: bool,
    ) -> Result<(GpModel, FitReport)> {
        let offset = if center && !train_y.is_empty() {
            train_y.iter().sum::<f64>() / train_y.len() as f64
        } else {
            0.0
        };
        let yc: Vec<f64> = train_y.iter().map(|y| y - offset).collect();
        let init = init.unwrap_or_else(|| default_init(&yc, bounds));
        let (hyper, report) = fit_hyperparameters(&train_x, &yc, &init, bounds, opts)?;
        let model = Self::from_parts(train_x, train_y, hyper, offset, center)?;
        Ok((model, report))
    }

    /// Posterior predictive mean and variance at `x`. The variance includes
    /// the noise term: `sigma_f2 - k*' A^-1 k* + sigma_n2`. An empty model
    /// returns the prior `(offset, sigma_f2 + sigma_n2)`.
    pub fn predict(&self, x: &Location) -> (f64, f64) {
        match &self.factor {
            None => (self.mean_offset, self.hyper.sigma_f2 + self.hyper.sigma_n2),
            Some(chol) => {
                let kstar = DVector::from_iterator(
                    self.train_x.len(),
                    self.train_x.iter().map(|t| kernel(t, x, &self.hyper)),
                );
                let mean = self.mean_offset + kstar.dot(&self.alpha);
                let var =
                    self.hyper.sigma_f2 + self.hyper.sigma_n2 - kstar.dot(&chol.solve(&kstar));
                (mean, var.max(0.0))
            }
        }
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn n_train(&self) -> usize {
        self.train_x.len()
    }

    pub fn train_x(&self) -> &[Location] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    /// Diagonal jitter applied during factorization, if any was needed.
    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }
}
