//! Asymptotic reverse-reconciliation key rate of the CV-MDI protocol.
//!
//! Each parallel channel pair (Alice-Charlie, Bob-Charlie) is reduced to an
//! equivalent one-way channel `(T_i, eps_i)` after Bob's optimal displacement.
//! The rate is `beta * S(A:B) - I(B:E)` with Eve's information bounded through
//! the symplectic spectrum of the one-way Gaussian state. MIMO rates are the
//! sum over parallel channels.
//!
//! Near the operating point (`V_M = 1e5`) the reduced transmittance sits
//! within `1e-5` of unity, so `1 - T_i` is carried explicitly rather than
//! recomputed by subtraction, and every entropy is evaluated in a form free
//! of catastrophic cancellation.

use std::f64::consts::LN_2;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ParallelChannel, ParallelChannelSet};
use crate::config::{SourceVariances, SystemConfig};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Upper bound for the reduced transmittance; `W_hat` has a pole at `T_i = 1`.
pub const MAX_EQUIVALENT_TRANSMITTANCE: f64 = 1.0 - 1e-12;

/// Symplectic eigenvalues may undershoot 1 by this much before being rejected.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-9;

/// Channel excess noise from Eve's ancilla variance, `(W(1-T) - 1)/T + 1`.
pub fn excess_noise_from_ancilla(t: f64, w: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain("excess_noise_from_ancilla", format!("T = {t} not in (0, 1]")));
    }
    if !(w >= 1.0) {
        return Err(Error::domain("excess_noise_from_ancilla", format!("W = {w} < 1")));
    }
    // (W - 1)(1 - T)/T, algebraically identical and exact at W = 1
    Ok((w - 1.0) * (1.0 - t) / t)
}

/// Inverse of [`excess_noise_from_ancilla`]: `(T(eps - 1) + 1)/(1 - T)`.
pub fn noise_variance_from_excess(t: f64, eps: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain("noise_variance_from_excess", format!("T = {t} not in (0, 1)")));
    }
    Ok(noise_variance_with_complement(t, 1.0 - t, eps))
}

fn noise_variance_with_complement(t: f64, one_minus_t: f64, eps: f64) -> f64 {
    (t * (eps - 1.0) + 1.0) / one_minus_t
}

/// Displacement gain minimizing the equivalent excess noise,
/// `g^2 = 2(V_B - 1) / (T_B (V_B + 1))`.
pub fn optimal_gain_sq(t_b: f64, v_b: f64) -> Result<f64> {
    if !(t_b > 0.0) {
        return Err(Error::domain("optimal_gain_sq", format!("T_B = {t_b} must be positive")));
    }
    if !(v_b > 1.0) {
        return Err(Error::domain("optimal_gain_sq", format!("V_B = {v_b} must exceed 1")));
    }
    Ok(2.0 * (v_b - 1.0) / (t_b * (v_b + 1.0)))
}

/// Link-level inputs of the MDI-to-one-way reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MdiLinkParams {
    pub t_a: f64,
    pub t_b: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    /// Bob's total source variance V_B (SNU).
    pub v_b: f64,
}

impl MdiLinkParams {
    fn check(&self, op: &'static str) -> Result<()> {
        for (name, t) in [("T_A", self.t_a), ("T_B", self.t_b)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::domain(op, format!("{name} = {t} not in (0, 1]")));
            }
        }
        for (name, eta) in [("eta_A", self.eta_a), ("eta_B", self.eta_b)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::domain(op, format!("{name} = {eta} not in (0, 1]")));
            }
        }
        if !(self.v_b > 1.0) {
            return Err(Error::domain(op, format!("V_B = {} must exceed 1", self.v_b)));
        }
        Ok(())
    }

    /// Noise shared by both gain conventions: Alice's excess, Bob's excess
    /// referred to Alice's input, and the untrusted detector noise.
    fn common_excess(&self) -> f64 {
        self.eps_a
            + (2.0 + (self.eps_b - 2.0) * self.t_b) / self.t_a
            + (1.0 - self.eta_a) / self.eta_a
            + (1.0 - self.eta_b) / self.eta_b
    }
}

/// One-way channel equivalent to a pair of MDI links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneWayEquivalent {
    pub t_eq: f64,
    /// `1 - t_eq`, computed without cancellation.
    pub one_minus_t_eq: f64,
    pub eps_eq: f64,
    pub w_hat: f64,
    pub gain_sq: f64,
    /// Set when `t_eq` hit [`MAX_EQUIVALENT_TRANSMITTANCE`].
    pub truncated: bool,
}

impl OneWayEquivalent {
    /// `Lambda(x, y) = T x + (1 - T) y`.
    pub fn mix(&self, x: f64, y: f64) -> f64 {
        self.t_eq * x + self.one_minus_t_eq * y
    }
}

/// Reduces the MDI link pair under the optimal displacement gain.
///
/// `T_i = T_A (V_B - 1) / (T_B (V_B + 1))` and
/// `eps_i = eps_A + (2 + (eps_B - 2) T_B)/T_A + sum (1 - eta)/eta`.
pub fn equivalent_one_way(p: &MdiLinkParams) -> Result<OneWayEquivalent> {
    p.check("equivalent_one_way")?;
    let gain_sq = optimal_gain_sq(p.t_b, p.v_b)?;
    let denom = p.t_b * (p.v_b + 1.0);
    let mut t_eq = p.t_a * (p.v_b - 1.0) / denom;
    let mut one_minus = ((p.t_b - p.t_a) * p.v_b + p.t_b + p.t_a) / denom;
    let truncated = t_eq >= MAX_EQUIVALENT_TRANSMITTANCE;
    if truncated {
        t_eq = MAX_EQUIVALENT_TRANSMITTANCE;
        one_minus = 1.0 - MAX_EQUIVALENT_TRANSMITTANCE;
    }
    let eps_eq = p.common_excess();
    Ok(OneWayEquivalent {
        t_eq,
        one_minus_t_eq: one_minus,
        eps_eq,
        w_hat: noise_variance_with_complement(t_eq, one_minus, eps_eq),
        gain_sq,
        truncated,
    })
}

/// Equivalent transmittance for an arbitrary displacement gain, `g^2 T_A / 2`.
pub fn equivalent_transmittance_with_gain(t_a: f64, gain_sq: f64) -> f64 {
    0.5 * gain_sq * t_a
}

/// Equivalent excess noise for an arbitrary displacement gain; the first term
/// vanishes at [`optimal_gain_sq`].
pub fn excess_noise_with_gain(p: &MdiLinkParams, gain_sq: f64) -> Result<f64> {
    p.check("excess_noise_with_gain")?;
    if !(gain_sq > 0.0) {
        return Err(Error::domain("excess_noise_with_gain", format!("g^2 = {gain_sq}")));
    }
    let mismatch = (2.0 / (p.t_b * gain_sq)).sqrt() * (p.v_b - 1.0).sqrt() - (p.v_b + 1.0).sqrt();
    Ok(p.t_b / p.t_a * mismatch * mismatch + p.common_excess())
}

/// Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue `x`.
pub fn bosonic_entropy(x: f64) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::domain("bosonic_entropy", format!("x = {x} < 1")));
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let plus = 0.5 * (x + 1.0);
    let minus = 0.5 * (x - 1.0);
    if x < 3.0 {
        Ok(plus * plus.log2() - minus * minus.log2())
    } else {
        // log2(m) + p log2(1 + 1/m): avoids subtracting two ~x log x terms
        Ok(minus.log2() + plus * (1.0 / minus).ln_1p() / LN_2)
    }
}

/// Alice-Bob mutual information `1/2 log2(1 + T V_M / Lambda(V_O, W_hat))`.
pub fn mutual_information(eq: &OneWayEquivalent, sources: &SourceVariances) -> f64 {
    let noise = eq.mix(sources.v_thermal, eq.w_hat);
    0.5 * (eq.t_eq * sources.v_mod / noise).ln_1p() / LN_2
}

/// Closed-form symplectic spectrum of the one-way state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymplecticSpectrum {
    /// `[lambda_1, lambda_2, lambda_3, lambda_4]`.
    pub lambdas: [f64; 4],
    /// `A = lambda_3^2 + lambda_4^2`.
    pub a: f64,
    /// `B = lambda_3^2 lambda_4^2`.
    pub b: f64,
}

/// `lambda_1 = W_hat`, `lambda_2 = Lambda(W_hat, V_A)` and `lambda_3,4` from
/// the invariants
///
/// ```text
/// A = W (V L1 + L2) / L3,   B = V W^2 L1 L2 / L3^2
/// L1 = Lambda(W, V), L2 = Lambda(W V, 1), L3 = Lambda(V, W)
/// ```
///
/// The discriminant factors as `A^2 - 4B = (W (V L1 - L2) / L3)^2` with
/// `V L1 - L2 = (1 - T)(V^2 - 1) >= 0`, so the roots are taken directly:
/// `lambda_3^2 = W V L1 / L3` and `lambda_4^2 = W L2 / L3`. Evaluating the
/// printed root formula in f64 at `V = 1e5` loses every significant digit.
pub fn symplectic_eigenvalues_closed(v_a: f64, eq: &OneWayEquivalent) -> Result<SymplecticSpectrum> {
    const OP: &str = "symplectic_eigenvalues_closed";
    if !(v_a > 1.0) {
        return Err(Error::domain(OP, format!("V_A = {v_a} must exceed 1")));
    }
    if !(eq.w_hat >= 1.0 - EIGENVALUE_TOLERANCE) {
        return Err(Error::domain(OP, format!("W_hat = {} < 1", eq.w_hat)));
    }
    if !(eq.t_eq > 0.0 && eq.t_eq < 1.0) {
        return Err(Error::domain(OP, format!("T = {} not in (0, 1)", eq.t_eq)));
    }
    let w = eq.w_hat;
    let l1 = eq.mix(w, v_a);
    let l2 = eq.mix(w * v_a, 1.0);
    let l3 = eq.mix(v_a, w);
    let l3_sq = w * v_a * l1 / l3;
    let l4_sq = w * l2 / l3;
    let spectrum = SymplecticSpectrum {
        lambdas: [w, l1, l3_sq.sqrt(), l4_sq.sqrt()],
        a: l3_sq + l4_sq,
        b: l3_sq * l4_sq,
    };
    if spectrum.lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::NumericalRegime {
            op: OP,
            reason: format!("non-finite eigenvalue for V = {v_a}, W = {w}, T = {}", eq.t_eq),
        });
    }
    Ok(spectrum)
}

/// Roots `sqrt((A +- sqrt(A^2 - 4B)) / 2)` of the invariant pair, as printed.
///
/// A discriminant below zero by at most `EIGENVALUE_TOLERANCE * A^2` is
/// clipped; anything further is a regime error.
pub fn eigenvalues_from_invariants(a: f64, b: f64) -> Result<(f64, f64)> {
    let disc = a * a - 4.0 * b;
    let disc = if disc >= 0.0 {
        disc
    } else if disc >= -EIGENVALUE_TOLERANCE * a * a {
        0.0
    } else {
        return Err(Error::NumericalRegime {
            op: "eigenvalues_from_invariants",
            reason: format!("A^2 - 4B = {disc} for A = {a}, B = {b}"),
        });
    };
    let root = disc.sqrt();
    Ok(((0.5 * (a + root)).sqrt(), (0.5 * (a - root)).max(0.0).sqrt()))
}

/// Two-mode covariance matrix in `(x_A, p_A, x_B, p_B)` ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceAB(pub Matrix4<f64>);

/// Blocks `V I`, `sqrt(T (V^2 - 1)) Z` and `(T V + (1 - T) W) I`.
pub fn covariance_ab(v_a: f64, t: f64, w_hat: f64) -> CovarianceAB {
    let a = v_a;
    let b = t * v_a + (1.0 - t) * w_hat;
    let c = (t * (v_a * v_a - 1.0)).sqrt();
    CovarianceAB(Matrix4::new(
        a, 0.0, c, 0.0, //
        0.0, a, 0.0, -c, //
        c, 0.0, b, 0.0, //
        0.0, -c, 0.0, b,
    ))
}

fn symplectic_form() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// Symplectic eigenvalues of a two-mode covariance matrix, descending.
///
/// Computed as the moduli of the eigenvalues of `i sqrt(g) Omega sqrt(g)`,
/// which is Hermitian and shares its spectrum with `i Omega g`.
pub fn symplectic_eigenvalues_numeric(cov: &Matrix4<f64>) -> Result<[f64; 2]> {
    const OP: &str = "symplectic_eigenvalues_numeric";
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::domain(OP, "covariance matrix is not symmetric"));
    }
    let eig = SymmetricEigen::new(*cov);
    if eig.eigenvalues.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::domain(OP, "covariance matrix is not positive definite"));
    }
    let root = eig.eigenvectors
        * Matrix4::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let m = root * symplectic_form() * root;
    let herm = m.map(|x| Complex64::new(0.0, x));
    let mut nu: Vec<f64> = SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .collect();
    nu.sort_by(|a, b| b.total_cmp(a));
    Ok([nu[0], nu[2]])
}

/// Eve's Holevo information `f(l1) + f(l2) - f(l3) - f(l4)`.
pub fn holevo_bound(lambdas: &[f64; 4]) -> Result<f64> {
    let mut f = [0.0; 4];
    for (slot, &l) in f.iter_mut().zip(lambdas) {
        let l = if (1.0 - EIGENVALUE_TOLERANCE..1.0).contains(&l) { 1.0 } else { l };
        *slot = bosonic_entropy(l)?;
    }
    let chi = (f[0] + f[1]) - (f[2] + f[3]);
    Ok(if (-EIGENVALUE_TOLERANCE..0.0).contains(&chi) { 0.0 } else { chi })
}

/// Full per-channel breakdown of the asymptotic rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelRate {
    pub t_a: f64,
    pub t_b: f64,
    pub w_a: f64,
    pub w_b: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub one_way: OneWayEquivalent,
    pub mutual_information: f64,
    pub holevo: f64,
    pub lambdas: [f64; 4],
    /// `beta S(A:B) - I(B:E)`; negative values are reported unchanged.
    pub key_rate: f64,
}

/// Runs the whole single-channel pipeline: excess noises, one-way reduction,
/// mutual information, symplectic spectrum and Holevo bound.
pub fn channel_key_rate(channel: &ParallelChannel, cfg: &SystemConfig) -> Result<ChannelRate> {
    let sources = SourceVariances::from_config(cfg)?;
    channel_key_rate_with(channel, cfg, &sources)
}

fn channel_key_rate_with(
    channel: &ParallelChannel,
    cfg: &SystemConfig,
    sources: &SourceVariances,
) -> Result<ChannelRate> {
    let eps_a = excess_noise_from_ancilla(channel.t_a, channel.w_a)?;
    let eps_b = excess_noise_from_ancilla(channel.t_b, channel.w_b)?;
    let one_way = equivalent_one_way(&MdiLinkParams {
        t_a: channel.t_a,
        t_b: channel.t_b,
        eps_a,
        eps_b,
        eta_a: cfg.det_eff_a,
        eta_b: cfg.det_eff_b,
        v_b: sources.v_total,
    })?;
    let mutual_information = mutual_information(&one_way, sources);
    let spectrum = symplectic_eigenvalues_closed(sources.v_total, &one_way)?;
    let holevo = holevo_bound(&spectrum.lambdas)?;
    Ok(ChannelRate {
        t_a: channel.t_a,
        t_b: channel.t_b,
        w_a: channel.w_a,
        w_b: channel.w_b,
        eps_a,
        eps_b,
        one_way,
        mutual_information,
        holevo,
        lambdas: spectrum.lambdas,
        key_rate: cfg.recon_eff * mutual_information - holevo,
    })
}

/// Per-channel records and their total (bits per channel use).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub channels: Vec<ChannelRate>,
    pub total: f64,
    pub clamped: usize,
}

impl KeyRateReport {
    pub fn r(&self) -> usize {
        self.channels.len()
    }
}

/// Runs of identical consecutive channels, as `(first index, length)`.
pub(crate) fn identical_runs(channels: &[ParallelChannel]) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, ch) in channels.iter().enumerate() {
        match runs.last_mut() {
            Some((start, len)) if channels[*start] == *ch => *len += 1,
            _ => runs.push((i, 1)),
        }
    }
    runs
}

/// Sum of per-channel rates over the MIMO channel set.
///
/// Identical channels are evaluated once, so an idealized set of `r` equal
/// channels totals exactly `r * K_1`. Distinct channels are evaluated in
/// parallel and summed in index order with compensation.
pub fn mimo_key_rate(set: &ParallelChannelSet, cfg: &SystemConfig) -> Result<KeyRateReport> {
    let sources = SourceVariances::from_config(cfg)?;
    let runs = identical_runs(&set.channels);
    let rates = runs
        .par_iter()
        .map(|&(start, _)| channel_key_rate_with(&set.channels[start], cfg, &sources))
        .collect::<Result<Vec<_>>>()?;
    let mut total = CompensatedSum::new();
    let mut channels = Vec::with_capacity(set.r());
    for (rate, &(_, len)) in rates.iter().zip(&runs) {
        total.add(len as f64 * rate.key_rate);
        channels.extend(std::iter::repeat_n(*rate, len));
    }
    Ok(KeyRateReport { channels, total: total.value(), clamped: set.clamped })
}
