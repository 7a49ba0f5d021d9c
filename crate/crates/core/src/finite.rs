//! Finite-size key rate: privacy-amplification penalty, worst-case channel
//! bounds from parameter estimation, and the finite-code MIMO rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{channel_key_rate, excess_noise_from_ancilla, identical_runs, ChannelRate};
use crate::channel::{ParallelChannel, ParallelChannelSet};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Factor applied to each channel bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Prefactor {
    /// `N / M`, the fraction of symbols kept for the key.
    #[default]
    KeyFraction,
    /// Bracket reported without the `N / M` scaling, for direct comparison
    /// against asymptotic curves.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteSizeConfig {
    /// M, total symbols exchanged per parallel channel.
    pub block_total: u64,
    /// N, symbols kept for the key.
    pub block_key: u64,
    /// l = M - N, symbols spent on parameter estimation.
    pub block_est: u64,
    pub eps_smooth: f64,
    pub eps_pa: f64,
    /// Confidence multiplier `z_{eps_PE / 2}`.
    pub z_pe: f64,
    pub dim_hx: u32,
    pub prefactor: Prefactor,
}

impl Default for FiniteSizeConfig {
    fn default() -> Self {
        Self::half_split(2_000_000)
    }
}

impl FiniteSizeConfig {
    /// `l = N = M / 2` with the default security parameters.
    pub fn half_split(block_total: u64) -> Self {
        let half = block_total / 2;
        Self {
            block_total,
            block_key: half,
            block_est: block_total - half,
            eps_smooth: 1e-10,
            eps_pa: 1e-10,
            z_pe: 6.5,
            dim_hx: 2,
            prefactor: Prefactor::KeyFraction,
        }
    }

    pub fn with_prefactor(mut self, prefactor: Prefactor) -> Self {
        self.prefactor = prefactor;
        self
    }

    pub fn validate(self) -> Result<Self> {
        if self.block_key == 0 {
            return Err(Error::config("block_key", "must be at least 1"));
        }
        if self.block_est == 0 {
            return Err(Error::config("block_est", "must be at least 1"));
        }
        if self.block_key.checked_add(self.block_est) != Some(self.block_total) {
            return Err(Error::config(
                "block_total",
                format!(
                    "block_key + block_est = {} + {} differs from {}",
                    self.block_key, self.block_est, self.block_total
                ),
            ));
        }
        for (field, eps) in [("eps_smooth", self.eps_smooth), ("eps_pa", self.eps_pa)] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::config(field, format!("{eps} not in (0, 1)")));
            }
        }
        if !(self.z_pe > 0.0 && self.z_pe.is_finite()) {
            return Err(Error::config("z_pe", format!("{} must be positive", self.z_pe)));
        }
        if self.dim_hx == 0 {
            return Err(Error::config("dim_hx", "must be at least 1"));
        }
        Ok(self)
    }

    pub fn penalty(&self) -> Result<f64> {
        pa_penalty(self.block_key, self.eps_smooth, self.eps_pa, self.dim_hx)
    }

    pub fn prefactor_value(&self) -> f64 {
        match self.prefactor {
            Prefactor::KeyFraction => self.block_key as f64 / self.block_total as f64,
            Prefactor::None => 1.0,
        }
    }
}

/// Privacy-amplification cost in bits per symbol,
/// `(2 dim + 3) sqrt(log2(2/eps_s)/N) + (2/N) log2(1/eps_pa)`.
pub fn pa_penalty(n: u64, eps_smooth: f64, eps_pa: f64, dim_hx: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("pa_penalty", "N = 0"));
    }
    if !(eps_smooth > 0.0 && eps_smooth < 1.0 && eps_pa > 0.0 && eps_pa < 1.0) {
        return Err(Error::domain("pa_penalty", "security parameters must lie in (0, 1)"));
    }
    let n = n as f64;
    let smooth = (2.0 * f64::from(dim_hx) + 3.0) * ((2.0 / eps_smooth).log2() / n).sqrt();
    Ok(smooth + 2.0 / n * (1.0 / eps_pa).log2())
}

/// Lower confidence bound on a transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransmittanceBound {
    pub value: f64,
    /// The root went negative and the bound was floored at zero.
    pub clamped: bool,
}

/// `T_L = (sqrt(T) - z sqrt((1 + T eps)/(l V)))^2`, floored at zero.
pub fn worst_case_transmittance(
    t: f64,
    eps: f64,
    l: f64,
    v_mod: f64,
    z_pe: f64,
) -> Result<TransmittanceBound> {
    const OP: &str = "worst_case_transmittance";
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(OP, format!("T = {t} not in (0, 1]")));
    }
    if !(l >= 1.0) {
        return Err(Error::domain(OP, format!("l = {l} < 1")));
    }
    if !(v_mod > 0.0) {
        return Err(Error::domain(OP, format!("V = {v_mod} must be positive")));
    }
    let root = t.sqrt() - z_pe * ((1.0 + t * eps) / (l * v_mod)).sqrt();
    if root < 0.0 {
        return Ok(TransmittanceBound { value: 0.0, clamped: true });
    }
    let value = if z_pe == 0.0 { t } else { (root * root).min(t) };
    Ok(TransmittanceBound { value, clamped: false })
}

/// `eps_U = eps + z (1 + T eps) sqrt(2) / (T sqrt(l))`.
pub fn worst_case_excess(t: f64, eps: f64, l: f64, z_pe: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain("worst_case_excess", format!("T = {t} not in (0, 1]")));
    }
    if !(l >= 1.0) {
        return Err(Error::domain("worst_case_excess", format!("l = {l} < 1")));
    }
    Ok(eps + z_pe * (1.0 + t * eps) * std::f64::consts::SQRT_2 / (t * l.sqrt()))
}

/// `W_U = T_L eps_U / (1 - T_L) + 1`.
pub fn worst_case_ancilla(t_low: f64, eps_up: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t_low) {
        return Err(Error::domain("worst_case_ancilla", format!("T_L = {t_low} not in [0, 1)")));
    }
    Ok(t_low * eps_up / (1.0 - t_low) + 1.0)
}

/// True and worst-case parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBounds {
    pub t: f64,
    pub eps: f64,
    pub t_low: f64,
    pub t_low_clamped: bool,
    pub eps_up: f64,
    pub w_up: f64,
}

impl LinkBounds {
    pub fn new(t: f64, w: f64, l: f64, v_mod: f64, z_pe: f64) -> Result<Self> {
        let eps = excess_noise_from_ancilla(t, w)?;
        let t_low = worst_case_transmittance(t, eps, l, v_mod, z_pe)?;
        let eps_up = worst_case_excess(t, eps, l, z_pe)?;
        // at T_L = 1 the channel is lossless and carries no excess noise
        let w_up = if t_low.value >= 1.0 { 1.0 } else { worst_case_ancilla(t_low.value, eps_up)? };
        Ok(Self { t, eps, t_low: t_low.value, t_low_clamped: t_low.clamped, eps_up, w_up })
    }
}

/// Worst-case corner for both links of a parallel channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCaseChannel {
    pub a: LinkBounds,
    pub b: LinkBounds,
}

impl WorstCaseChannel {
    pub fn new(ch: &ParallelChannel, fs: &FiniteSizeConfig, v_mod: f64) -> Result<Self> {
        let l = fs.block_est as f64;
        Ok(Self {
            a: LinkBounds::new(ch.t_a, ch.w_a, l, v_mod, fs.z_pe)?,
            b: LinkBounds::new(ch.t_b, ch.w_b, l, v_mod, fs.z_pe)?,
        })
    }

    pub fn clamped(&self) -> bool {
        self.a.t_low_clamped || self.b.t_low_clamped || self.a.t_low == 0.0 || self.b.t_low == 0.0
    }

    pub fn bounded_channel(&self) -> ParallelChannel {
        ParallelChannel { t_a: self.a.t_low, t_b: self.b.t_low, w_a: self.a.w_up, w_b: self.b.w_up }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteChannelRate {
    pub bounds: WorstCaseChannel,
    /// Asymptotic pipeline on the bounded parameters; absent when a bound
    /// transmittance collapsed to zero.
    pub bounded: Option<ChannelRate>,
    /// `beta S - I` at the worst-case corner (zero when `bounded` is absent).
    pub key_rate_bounded: f64,
    /// `prefactor * (key_rate_bounded - Delta)`.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteKeyRateReport {
    pub channels: Vec<FiniteChannelRate>,
    pub total: f64,
    pub penalty: f64,
    pub prefactor: f64,
    /// Channels whose true transmittance was clamped at 1.
    pub clamped: usize,
    /// Channels whose worst-case transmittance was floored at 0.
    pub bound_clamped: usize,
}

impl FiniteKeyRateReport {
    pub fn r(&self) -> usize {
        self.channels.len()
    }
}

fn finite_channel_rate(
    ch: &ParallelChannel,
    fs: &FiniteSizeConfig,
    cfg: &SystemConfig,
    penalty: f64,
) -> Result<FiniteChannelRate> {
    let bounds = WorstCaseChannel::new(ch, fs, cfg.mod_variance)?;
    let bounded = if bounds.a.t_low > 0.0 && bounds.b.t_low > 0.0 {
        Some(channel_key_rate(&bounds.bounded_channel(), cfg)?)
    } else {
        None
    };
    let key_rate_bounded = bounded.map_or(0.0, |r| r.key_rate);
    Ok(FiniteChannelRate {
        bounds,
        bounded,
        key_rate_bounded,
        contribution: fs.prefactor_value() * (key_rate_bounded - penalty),
    })
}

/// `sum_i prefactor * (K_i(T_L, W_U) - Delta(N))`.
///
/// Reconciliation efficiency enters once, inside the per-channel rate.
/// Negative brackets are kept as they are.
pub fn finite_mimo_key_rate(
    set: &ParallelChannelSet,
    fs: &FiniteSizeConfig,
    cfg: &SystemConfig,
) -> Result<FiniteKeyRateReport> {
    let fs = fs.validate()?;
    let penalty = fs.penalty()?;
    let runs = identical_runs(&set.channels);
    let rates = runs
        .par_iter()
        .map(|&(start, _)| finite_channel_rate(&set.channels[start], &fs, cfg, penalty))
        .collect::<Result<Vec<_>>>()?;
    let mut total = CompensatedSum::new();
    let mut bound_clamped = 0;
    let mut channels = Vec::with_capacity(set.r());
    for (rate, &(_, len)) in rates.into_iter().zip(&runs) {
        total.add(len as f64 * rate.contribution);
        if rate.bounds.clamped() {
            bound_clamped += len;
        }
        channels.extend(std::iter::repeat_n(rate, len));
    }
    Ok(FiniteKeyRateReport {
        channels,
        total: total.value(),
        penalty,
        prefactor: fs.prefactor_value(),
        clamped: set.clamped,
        bound_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::{mimo_key_rate, noise_variance_from_excess};
    use crate::channel::idealized_parallel_channels;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn penalty_reference() {
        let d = pa_penalty(1_000_000, 1e-10, 1e-10, 2).unwrap();
        assert!(rel(d, 0.041_014_512_588_581_93) < 1e-13);
        assert!(pa_penalty(0, 1e-10, 1e-10, 2).is_err());
    }

    #[test]
    fn penalty_scaling() {
        let first = |n: u64| pa_penalty(n, 1e-10, 1e-10, 2).unwrap() - 2.0 / n as f64 * 1e10f64.log2();
        assert!(rel(first(4_000_000), 0.5 * first(1_000_000)) < 1e-12);
        let mut prev = f64::INFINITY;
        for e in 1..=15 {
            let d = pa_penalty(10u64.pow(e), 1e-10, 1e-10, 2).unwrap();
            assert!(d > 0.0 && d < prev);
            prev = d;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn transmittance_bound_examples() {
        let b = worst_case_transmittance(0.25, 0.05, 1e6, 1e5, 6.5).unwrap();
        assert!(rel(b.value, 0.249_979_317_554_431_5) < 1e-13);
        assert!(!b.clamped);
        assert_eq!(worst_case_transmittance(0.37, 0.1, 10.0, 1e5, 0.0).unwrap().value, 0.37);
        let far = worst_case_transmittance(0.25, 0.05, 1e15, 1e5, 6.5).unwrap().value;
        assert!(rel(far, 0.25) < 1e-8);
    }

    #[test]
    fn transmittance_bound_clamps() {
        let b = worst_case_transmittance(1e-6, 0.0, 10.0, 1.0, 6.5).unwrap();
        assert_eq!(b, TransmittanceBound { value: 0.0, clamped: true });
    }

    #[test]
    fn excess_bound_examples() {
        let e = worst_case_excess(0.25, 0.05, 1e6, 6.5).unwrap();
        assert!(rel(e, 0.087_229_172_029_471_73) < 1e-13);
        assert_eq!(worst_case_excess(0.25, 0.05, 1e6, 0.0).unwrap(), 0.05);
        let c1 = worst_case_excess(0.4, 0.0, 1e4, 6.5).unwrap();
        let c2 = worst_case_excess(0.2, 0.0, 1e4, 6.5).unwrap();
        assert!(rel(c2, 2.0 * c1) < 1e-14);
        assert!(worst_case_excess(0.0, 0.0, 1e4, 6.5).is_err());
    }

    #[test]
    fn ancilla_bound_examples() {
        assert_eq!(worst_case_ancilla(0.3, 0.0).unwrap(), 1.0);
        assert!((worst_case_ancilla(0.5, 2.0).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(worst_case_ancilla(0.0, 5.0).unwrap(), 1.0);
        assert!(worst_case_ancilla(1.0, 0.0).is_err());
    }

    #[test]
    fn ancilla_bound_consistent_with_inverse_map() {
        for i in 1..50 {
            let t = i as f64 / 50.0;
            for eps in [0.0, 0.01, 0.5, 3.0, 40.0] {
                let a = worst_case_ancilla(t, eps).unwrap();
                let b = noise_variance_from_excess(t, eps).unwrap();
                assert!(rel(a, b) <= 1e-12);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(FiniteSizeConfig::default().validate().is_ok());
        let bad = FiniteSizeConfig { block_est: 7, ..FiniteSizeConfig::half_split(100) };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig { field: "block_total", .. })));
        let bad = FiniteSizeConfig { eps_pa: 1.0, ..FiniteSizeConfig::default() };
        assert!(bad.validate().is_err());
        let bad = FiniteSizeConfig { z_pe: 0.0, ..FiniteSizeConfig::default() };
        assert!(bad.validate().is_err());
        let odd = FiniteSizeConfig::half_split(7);
        assert_eq!(odd.block_key + odd.block_est, 7);
    }

    fn mimo128(d: f64) -> SystemConfig {
        SystemConfig::symmetric(128, 1e11, 0.6, d)
    }

    #[test]
    fn large_block_approaches_asymptotic_bracket() {
        let cfg = mimo128(200.0);
        let set = idealized_parallel_channels(&cfg).unwrap();
        let asym = mimo_key_rate(&set, &cfg).unwrap().total;
        let fs = FiniteSizeConfig::half_split(2_000_000_000_000_000);
        let fin = finite_mimo_key_rate(&set, &fs, &cfg).unwrap();
        assert!(rel(fin.total, 0.5 * asym) < 1e-3);
        let fin = finite_mimo_key_rate(&set, &fs.with_prefactor(Prefactor::None), &cfg).unwrap();
        assert!(rel(fin.total, asym) < 1e-3);
    }

    #[test]
    fn tiny_block_goes_negative() {
        let cfg = SystemConfig::default();
        let set = idealized_parallel_channels(&cfg).unwrap();
        let fin = finite_mimo_key_rate(&set, &FiniteSizeConfig::half_split(1_000), &cfg).unwrap();
        assert!(fin.total < 0.0);
    }

    #[test]
    fn collapsed_bound_contributes_minus_penalty() {
        let cfg = SystemConfig::default();
        let set = ParallelChannelSet {
            channels: vec![ParallelChannel { t_a: 1e-12, t_b: 1e-12, w_a: 1.0, w_b: 1.0 }],
            clamped: 0,
        };
        let fs = FiniteSizeConfig::half_split(20);
        let fin = finite_mimo_key_rate(&set, &fs, &cfg).unwrap();
        assert_eq!(fin.bound_clamped, 1);
        assert!(fin.channels[0].bounded.is_none());
        assert_eq!(fin.total, 0.5 * -fin.penalty);
    }

    #[test]
    fn monotone_in_block_size() {
        let cfg = mimo128(250.0);
        let set = idealized_parallel_channels(&cfg).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for m in [20_000, 200_000, 2_000_000, 200_000_000] {
            let k = finite_mimo_key_rate(&set, &FiniteSizeConfig::half_split(m), &cfg).unwrap().total;
            assert!(k >= prev, "M = {m}");
            prev = k;
        }
    }

    #[test]
    fn dominated_by_asymptotic_rate() {
        for d in [10.0, 50.0, 100.0, 200.0, 300.0, 320.0, 400.0] {
            let cfg = mimo128(d);
            let set = idealized_parallel_channels(&cfg).unwrap();
            let asym = mimo_key_rate(&set, &cfg).unwrap().total;
            for m in [1_000, 20_000, 200_000, 2_000_000, 200_000_000] {
                let fs = FiniteSizeConfig::half_split(m);
                let raw = finite_mimo_key_rate(&set, &fs.with_prefactor(Prefactor::None), &cfg).unwrap();
                assert!(raw.total <= asym, "d = {d}, M = {m}");
                let scaled = finite_mimo_key_rate(&set, &fs, &cfg).unwrap();
                assert!(scaled.total <= asym.max(0.0), "d = {d}, M = {m}");
            }
        }
    }

    #[test]
    fn rate_increases_with_transmittance_and_decreases_with_noise() {
        // numerical check of the sign of dK/dt and dK/dsigma^2 at the corner
        let cfg = SystemConfig::default();
        let base = ParallelChannel { t_a: 1e-4, t_b: 1e-4, w_a: 1.2, w_b: 1.2 };
        let k = |c: ParallelChannel| channel_key_rate(&c, &cfg).unwrap().key_rate;
        let k0 = k(base);
        assert!(k(ParallelChannel { t_a: 1.01e-4, t_b: 1.01e-4, ..base }) > k0);
        assert!(k(ParallelChannel { w_a: 1.3, w_b: 1.3, ..base }) < k0);
    }

    proptest! {
        #[test]
        fn prop_bound_ordering(
            t in 1e-6f64..1.0,
            eps in 0.0f64..5.0,
            l in 1.0f64..1e9,
            z in 0.0f64..10.0,
        ) {
            let tl = worst_case_transmittance(t, eps, l, 1e5, z).unwrap();
            prop_assert!(tl.value <= t && tl.value >= 0.0);
            prop_assert!(worst_case_excess(t, eps, l, z).unwrap() >= eps);
        }
    }
}
