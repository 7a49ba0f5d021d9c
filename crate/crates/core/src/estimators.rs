//! Maximum-likelihood estimation of the link parameters `t' = sqrt(T)` and
//! `sigma'^2 = 1 + T eps` from sampled symbol pairs, with a Monte Carlo check
//! of the estimators' sampling laws.
//!
//! Every trial draws from its own ChaCha8 stream, selected by trial index
//! under a common seed, so results do not depend on scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite::{worst_case_ancilla, LinkBounds};
use crate::numeric::{compensated_sum, format_sig9, CompensatedSum};

/// Paired symbols `y = t x + z` for one estimation block.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Modulation variance V of `x`.
    pub v_mod: f64,
}

impl SampleBatch {
    pub fn new(x: Vec<f64>, y: Vec<f64>, v_mod: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::domain("SampleBatch", format!("{} x vs {} y", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::domain("SampleBatch", "need at least 2 samples"));
        }
        if !(v_mod > 0.0) {
            return Err(Error::domain("SampleBatch", format!("V = {v_mod} must be positive")));
        }
        Ok(Self { x, y, v_mod })
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_sampling(t: f64, sigma2: f64, v_mod: f64, k: usize) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::domain("simulate_samples", format!("t = {t}")));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::domain("simulate_samples", format!("sigma^2 = {sigma2}")));
    }
    if !(v_mod > 0.0) {
        return Err(Error::domain("simulate_samples", format!("V = {v_mod}")));
    }
    if k < 2 {
        return Err(Error::domain("simulate_samples", "k < 2"));
    }
    Ok(())
}

fn draw_batch(t: f64, sigma2: f64, v_mod: f64, k: usize, rng: &mut ChaCha8Rng) -> SampleBatch {
    let sx = v_mod.sqrt();
    let sz = sigma2.sqrt();
    let mut x = Vec::with_capacity(k);
    let mut y = Vec::with_capacity(k);
    for _ in 0..k {
        let xi = sx * rng.sample::<f64, _>(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        x.push(xi);
        y.push(t * xi + sz * zi);
    }
    SampleBatch { x, y, v_mod }
}

/// Draws `x ~ N(0, V)` and `y = t x + z` with `z ~ N(0, sigma2)`.
pub fn simulate_samples(t: f64, sigma2: f64, v_mod: f64, k: usize, seed: u64) -> Result<SampleBatch> {
    check_sampling(t, sigma2, v_mod, k)?;
    Ok(draw_batch(t, sigma2, v_mod, k, &mut trial_rng(seed, 0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    fn around(center: f64, half_width: f64) -> Self {
        Self { low: center - half_width, high: center + half_width }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleResult {
    pub k: usize,
    pub t_hat: f64,
    pub sigma2_hat: f64,
    /// `t_hat -+ z sqrt(sigma2_hat / (l V))`.
    pub ci_t: Interval,
    /// `sigma2_hat -+ z sigma2_hat sqrt(2) / sqrt(l)`.
    pub ci_sigma2: Interval,
}

/// `t_hat = sum(xy) / sum(x^2)` and `sigma2_hat = (1/k) sum (y - t_hat x)^2`.
///
/// The interval half-widths use `l V` in place of `sum(x^2)`, with `l = k`.
pub fn mle_estimate(batch: &SampleBatch, z_pe: f64) -> Result<MleResult> {
    let sxx = compensated_sum(batch.x.iter().map(|x| x * x));
    if !(sxx > 0.0) {
        return Err(Error::domain("mle_estimate", "all x are zero"));
    }
    let sxy = compensated_sum(batch.x.iter().zip(&batch.y).map(|(x, y)| x * y));
    let t_hat = sxy / sxx;
    let k = batch.k();
    let l = k as f64;
    let sigma2_hat =
        compensated_sum(batch.x.iter().zip(&batch.y).map(|(x, y)| (y - t_hat * x).powi(2))) / l;
    Ok(MleResult {
        k,
        t_hat,
        sigma2_hat,
        ci_t: Interval::around(t_hat, z_pe * (sigma2_hat / (l * batch.v_mod)).sqrt()),
        ci_sigma2: Interval::around(sigma2_hat, z_pe * sigma2_hat * std::f64::consts::SQRT_2 / l.sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialEstimate {
    pub trial: usize,
    pub t_hat: f64,
    pub sigma2_hat: f64,
}

/// Empirical moments of the estimators against their sampling laws
/// `t_hat ~ N(t, sigma^2 / (l V))` and `l sigma2_hat / sigma^2 ~ chi^2(l - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorStats {
    pub t: f64,
    pub sigma2: f64,
    pub v_mod: f64,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub mean_t_hat: f64,
    pub se_mean_t_hat: f64,
    pub var_t_hat: f64,
    pub target_var_t_hat: f64,
    /// `var_t_hat / target_var_t_hat`.
    pub var_ratio_t_hat: f64,
    pub mean_sigma2_hat: f64,
    /// Mean and variance of `l sigma2_hat / sigma^2`; `None` when `sigma^2 = 0`.
    pub mean_chi2: Option<f64>,
    pub se_mean_chi2: Option<f64>,
    pub var_chi2: Option<f64>,
    pub target_mean_chi2: f64,
    pub target_var_chi2: f64,
    /// Fraction of trials whose `ci_t` contains `t`.
    pub coverage_t: f64,
    pub pass_mean_t_hat: bool,
    pub pass_var_t_hat: bool,
    pub pass_mean_chi2: Option<bool>,
}

impl EstimatorStats {
    pub fn passed(&self) -> bool {
        self.pass_mean_t_hat && self.pass_var_t_hat && self.pass_mean_chi2.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub stats: EstimatorStats,
    pub estimates: Vec<TrialEstimate>,
}

/// Mean and unbiased variance, accumulated in index order.
fn moments(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = compensated_sum(xs.clone()) / n;
    let var = xs.map(|x| (x - mean).powi(2)).collect::<CompensatedSum>().value() / (n - 1.0);
    (mean, var)
}

/// Repeats sampling and estimation `trials` times and compares the empirical
/// moments with the theoretical laws at 5 standard errors (variance of
/// `t_hat` within 20%).
pub fn estimator_distribution_test(
    t: f64,
    sigma2: f64,
    v_mod: f64,
    k: usize,
    trials: usize,
    seed: u64,
    z_pe: f64,
) -> Result<EstimatorRun> {
    check_sampling(t, sigma2, v_mod, k)?;
    if trials < 2 {
        return Err(Error::domain("estimator_distribution_test", "need at least 2 trials"));
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let batch = draw_batch(t, sigma2, v_mod, k, &mut trial_rng(seed, trial as u64 + 1));
            mle_estimate(&batch, z_pe).map(|m| (trial, m))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = trials as f64;
    let l = k as f64;
    let (mean_t_hat, var_t_hat) = moments(results.iter().map(|(_, m)| m.t_hat));
    let se_mean_t_hat = (var_t_hat / n).sqrt();
    let target_var_t_hat = sigma2 / (l * v_mod);
    let mean_sigma2_hat = compensated_sum(results.iter().map(|(_, m)| m.sigma2_hat)) / n;
    let covered = results.iter().filter(|(_, m)| m.ci_t.contains(t)).count();

    let (mean_chi2, se_mean_chi2, var_chi2) = if sigma2 > 0.0 {
        let (mean, var) = moments(results.iter().map(|(_, m)| l * m.sigma2_hat / sigma2));
        (Some(mean), Some((var / n).sqrt()), Some(var))
    } else {
        (None, None, None)
    };
    let target_mean_chi2 = l - 1.0;
    let within = |mean: f64, target: f64, se: f64| (mean - target).abs() <= 5.0 * se;

    let (pass_mean_t_hat, pass_var_t_hat) = if sigma2 > 0.0 {
        (
            within(mean_t_hat, t, se_mean_t_hat),
            (var_t_hat / target_var_t_hat - 1.0).abs() <= 0.2,
        )
    } else {
        let exact = results.iter().all(|(_, m)| (m.t_hat - t).abs() <= 1e-12 * t.abs().max(1.0));
        (exact, exact)
    };

    let stats = EstimatorStats {
        t,
        sigma2,
        v_mod,
        k,
        trials,
        seed,
        mean_t_hat,
        se_mean_t_hat,
        var_t_hat,
        target_var_t_hat,
        var_ratio_t_hat: var_t_hat / target_var_t_hat,
        mean_sigma2_hat,
        mean_chi2,
        se_mean_chi2,
        var_chi2,
        target_mean_chi2,
        target_var_chi2: 2.0 * (l - 1.0),
        coverage_t: covered as f64 / n,
        pass_mean_t_hat,
        pass_var_t_hat,
        pass_mean_chi2: mean_chi2.zip(se_mean_chi2).map(|(m, se)| within(m, target_mean_chi2, se)),
    };
    let estimates = results
        .into_iter()
        .map(|(trial, m)| TrialEstimate { trial, t_hat: m.t_hat, sigma2_hat: m.sigma2_hat })
        .collect();
    Ok(EstimatorRun { stats, estimates })
}

/// Per-trial estimates as CSV with columns `trial,t_hat,sigma2_hat`.
pub fn write_trials_csv<W: Write>(estimates: &[TrialEstimate], mut out: W) -> Result<()> {
    writeln!(out, "trial,t_hat,sigma2_hat")?;
    for e in estimates {
        writeln!(out, "{},{},{}", e.trial, format_sig9(e.t_hat), format_sig9(e.sigma2_hat))?;
    }
    Ok(())
}

/// Sample-based worst-case corner for one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleBounds {
    pub mle: MleResult,
    /// `t_hat - z sqrt(sigma2_hat / (l V))`, before flooring.
    pub t_hat_low: f64,
    /// `sigma2_hat + z sigma2_hat sqrt(2) / sqrt(l)`.
    pub sigma2_hat_up: f64,
    /// Mapped through `t' = sqrt(T)` and `sigma'^2 = 1 + T eps`.
    pub link: LinkBounds,
}

/// Confidence-bound corner from one batch, mapped to `(T_L, eps_U, W_U)`.
///
/// `T = t_hat^2` and `T_L = t_hat_low^2`; a negative `t_hat_low` floors `T_L`
/// at zero with the clamp flag set. The excess noise bound is referred to the
/// point estimate `T`, matching the analytical bound.
pub fn bounds_from_samples(batch: &SampleBatch, z_pe: f64) -> Result<SampleBounds> {
    let mle = mle_estimate(batch, z_pe)?;
    let t_hat_low = mle.ci_t.low;
    let sigma2_hat_up = mle.ci_sigma2.high;
    let t = mle.t_hat * mle.t_hat;
    if !(t > 0.0) {
        return Err(Error::domain("bounds_from_samples", "estimated transmittance is zero"));
    }
    let clamped = t_hat_low < 0.0;
    let t_low = if clamped { 0.0 } else { t_hat_low * t_hat_low };
    let eps = (mle.sigma2_hat - 1.0) / t;
    let eps_up = (sigma2_hat_up - 1.0) / t;
    Ok(SampleBounds {
        mle,
        t_hat_low,
        sigma2_hat_up,
        link: LinkBounds {
            t,
            eps,
            t_low,
            t_low_clamped: clamped,
            eps_up,
            w_up: worst_case_ancilla(t_low, eps_up)?,
        },
    })
}
