use rayon::prelude::*;
use serde::Serialize;

use super::output::Table;
use crate::asymptotic::mimo_key_rate;
use crate::channel::{idealized_parallel_channels, realized_parallel_channels, ParallelChannelSet};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::finite::{finite_mimo_key_rate, FiniteSizeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Total Alice-Bob distance in meters, Charlie at the midpoint.
    Distance,
    /// Carrier frequency in Hz.
    Frequency,
    /// Homodyne efficiency applied to both detectors.
    DetectorEfficiency,
    /// Total block size M with `l = N = M/2`; finite mode only.
    BlockSize,
    /// Symmetric `n x n` arrays on both links.
    Antennas,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Distance => "distance",
            SweepAxis::Frequency => "frequency",
            SweepAxis::DetectorEfficiency => "detector_efficiency",
            SweepAxis::BlockSize => "block_size",
            SweepAxis::Antennas => "antennas",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode {
    Asymptotic,
    Finite(FiniteSizeConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// Every parallel channel carries the path-loss transmittance.
    Idealized,
    /// Transmittances from a seeded multipath realization.
    Realized { seed: u64 },
}

pub fn parallel_channels(cfg: &SystemConfig, mode: ChannelMode) -> Result<ParallelChannelSet> {
    match mode {
        ChannelMode::Idealized => idealized_parallel_channels(cfg),
        ChannelMode::Realized { seed } => realized_parallel_channels(cfg, seed),
    }
}

/// Total and first-channel rate at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub total_rate: f64,
    pub channel_rate: f64,
    pub r: usize,
    /// Channels with a clamped transmittance, including worst-case bounds
    /// floored at zero in finite mode.
    pub clamped: usize,
}

pub fn evaluate(cfg: &SystemConfig, rate: &RateMode, channel: ChannelMode) -> Result<RatePoint> {
    let cfg = cfg.validate()?;
    let set = parallel_channels(&cfg, channel)?;
    match rate {
        RateMode::Asymptotic => {
            let report = mimo_key_rate(&set, &cfg)?;
            Ok(RatePoint {
                total_rate: report.total,
                channel_rate: report.channels.first().map_or(0.0, |c| c.key_rate),
                r: report.r(),
                clamped: report.clamped,
            })
        }
        RateMode::Finite(fs) => {
            let report = finite_mimo_key_rate(&set, fs, &cfg)?;
            Ok(RatePoint {
                total_rate: report.total,
                channel_rate: report.channels.first().map_or(0.0, |c| c.contribution),
                r: report.r(),
                clamped: report.clamped + report.bound_clamped,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub rate: RateMode,
    pub channel: ChannelMode,
    pub base: SystemConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Request("sweep grid is empty".into()));
        }
        if let Some(bad) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::Request(format!("grid value {bad} is not finite")));
        }
        if let Some(w) = self.grid.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Request(format!(
                "grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        match self.axis {
            SweepAxis::BlockSize if !matches!(self.rate, RateMode::Finite(_)) => {
                return Err(Error::Request("block_size sweeps need finite mode".into()));
            }
            SweepAxis::BlockSize | SweepAxis::Antennas => {
                let min = if self.axis == SweepAxis::BlockSize { 2.0 } else { 1.0 };
                if let Some(v) = self.grid.iter().find(|v| v.fract() != 0.0 || **v < min) {
                    return Err(Error::Request(format!(
                        "{} values must be integers >= {min}, got {v}",
                        self.axis.name()
                    )));
                }
            }
            _ => {}
        }
        self.base.validate()?;
        Ok(())
    }

    /// Base configuration and rate mode with the swept parameter set to `value`.
    pub fn point(&self, value: f64) -> (SystemConfig, RateMode) {
        let mut cfg = self.base;
        let mut rate = self.rate;
        match self.axis {
            SweepAxis::Distance => cfg = cfg.with_distance_ab(value),
            SweepAxis::Frequency => cfg.frequency_hz = value,
            SweepAxis::DetectorEfficiency => cfg = cfg.with_detector_efficiency(value),
            SweepAxis::Antennas => cfg = cfg.with_antennas(value as usize),
            SweepAxis::BlockSize => {
                if let RateMode::Finite(fs) = &mut rate {
                    *fs = with_block_total(fs, value as u64);
                }
            }
        }
        (cfg, rate)
    }
}

/// Half split of a new block size, keeping the security parameters.
pub fn with_block_total(fs: &FiniteSizeConfig, block_total: u64) -> FiniteSizeConfig {
    let split = FiniteSizeConfig::half_split(block_total);
    FiniteSizeConfig {
        block_total,
        block_key: split.block_key,
        block_est: split.block_est,
        ..*fs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub total_rate: f64,
    pub channel_rate: f64,
    pub r: usize,
    pub clamped: usize,
    /// `total_rate > 0`.
    pub feasible: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_result(axis_value: f64, result: Result<RatePoint>) -> Self {
        match result {
            Ok(p) => SweepRow {
                axis_value,
                total_rate: p.total_rate,
                channel_rate: p.channel_rate,
                r: p.r,
                clamped: p.clamped,
                feasible: p.total_rate > 0.0,
                error: None,
            },
            Err(e) => SweepRow {
                axis_value,
                total_rate: f64::NAN,
                channel_rate: f64::NAN,
                r: 0,
                clamped: 0,
                feasible: false,
                error: Some(e.to_string()),
            },
        }
    }
}

pub const SWEEP_COLUMNS: [&str; 7] =
    ["axis_value", "total_rate", "channel_rate", "r", "clamped", "feasible", "error"];

pub fn rows_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(SWEEP_COLUMNS);
    for row in rows {
        t.push(vec![
            row.axis_value.into(),
            row.total_rate.into(),
            row.channel_rate.into(),
            row.r.into(),
            row.clamped.into(),
            row.feasible.into(),
            row.error.clone().into(),
        ]);
    }
    t
}

/// Evaluates every grid point independently; failures are recorded per row.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    Ok(spec
        .grid
        .par_iter()
        .map(|&v| {
            let (cfg, rate) = spec.point(v);
            SweepRow::from_result(v, evaluate(&cfg, &rate, spec.channel))
        })
        .collect())
}

pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|i| if i == n - 1 { end } else { start + (end - start) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Shortest distance probed when checking that a configuration is feasible.
pub const MIN_DISTANCE_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxDistance {
    pub distance_m: f64,
    /// Last distance with a positive rate.
    pub lo_m: f64,
    /// First distance with a non-positive rate.
    pub hi_m: f64,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub evaluations: usize,
}

/// Zero crossing of the total rate in the total distance `d_AB`.
///
/// Expands from 1 m by doubling until the rate is non-positive, then bisects
/// until the bracket is no wider than `tol_m` and returns its midpoint, so
/// `rate(d - tol) > 0 >= rate(d + tol)` when the rate is monotone.
pub fn max_distance(
    cfg: &SystemConfig,
    rate: &RateMode,
    channel: ChannelMode,
    tol_m: f64,
) -> Result<MaxDistance> {
    if !(tol_m > 0.0 && tol_m.is_finite()) {
        return Err(Error::Request(format!("tolerance {tol_m} must be positive")));
    }
    let cfg = cfg.validate()?;
    let mut evaluations = 0;
    let mut rate_at = |d: f64| {
        evaluations += 1;
        evaluate(&cfg.with_distance_ab(d), rate, channel).map(|p| p.total_rate)
    };

    let mut lo = MIN_DISTANCE_M;
    let mut rate_lo = rate_at(lo)?;
    if !(rate_lo > 0.0) {
        return Err(Error::Infeasible(format!(
            "key rate {rate_lo} at {MIN_DISTANCE_M} m is not positive"
        )));
    }
    let mut hi = 1.0;
    let mut rate_hi = rate_at(hi)?;
    while rate_hi > 0.0 {
        lo = hi;
        rate_lo = rate_hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::NumericalRegime {
                op: "max_distance",
                reason: "rate still positive beyond 1e9 m".into(),
            });
        }
        rate_hi = rate_at(hi)?;
    }
    while hi - lo > tol_m {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = rate_at(mid)?;
        if r > 0.0 {
            lo = mid;
            rate_lo = r;
        } else {
            hi = mid;
            rate_hi = r;
        }
    }
    Ok(MaxDistance { distance_m: 0.5 * (lo + hi), lo_m: lo, hi_m: hi, rate_lo, rate_hi, evaluations })
}

/// Atmospheric loss paired with each carrier used in the reproduction presets.
pub const ATMOSPHERIC_LOSS_TABLE: [(f64, f64); 4] =
    [(1.0e11, 0.6), (2.5e11, 5.0), (5.0e11, 50.0), (1.0e12, 100.0)];

pub fn atmospheric_loss_for(frequency_hz: f64) -> Option<f64> {
    ATMOSPHERIC_LOSS_TABLE
        .iter()
        .find(|(f, _)| (f - frequency_hz).abs() <= 1e-9 * f)
        .map(|&(_, delta)| delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn siso() -> SystemConfig {
        SystemConfig::default()
    }

    fn distance_spec(grid: Vec<f64>) -> SweepSpec {
        SweepSpec {
            axis: SweepAxis::Distance,
            grid,
            rate: RateMode::Asymptotic,
            channel: ChannelMode::Idealized,
            base: siso(),
        }
    }

    #[test]
    fn siso_distance_sweep_boundary() {
        let rows = sweep(&distance_spec(vec![1.0, 2.0, 2.6, 3.0])).unwrap();
        assert!(rows[0].feasible && rows[1].feasible);
        assert!(!rows[2].feasible && !rows[3].feasible);
        for row in &rows {
            assert_eq!(row.feasible, row.total_rate > 0.0);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(sweep(&distance_spec(vec![])).is_err());
        assert!(sweep(&distance_spec(vec![1.0, 1.0])).is_err());
        assert!(sweep(&distance_spec(vec![2.0, 1.0])).is_err());
        let spec = SweepSpec { axis: SweepAxis::BlockSize, ..distance_spec(vec![1e4]) };
        assert!(matches!(sweep(&spec), Err(Error::Request(_))));
        let spec = SweepSpec { axis: SweepAxis::Antennas, ..distance_spec(vec![1.5]) };
        assert!(sweep(&spec).is_err());
    }

    #[test]
    fn per_point_errors_do_not_abort() {
        let spec = SweepSpec {
            axis: SweepAxis::DetectorEfficiency,
            ..distance_spec(vec![0.5, 1.0, 1.5])
        };
        let rows = sweep(&spec).unwrap();
        assert!(rows[0].error.is_none() && rows[1].error.is_none());
        assert!(rows[2].error.as_deref().unwrap().contains("det_eff_a"));
        assert!(!rows[2].feasible);
    }

    #[test]
    fn order_independent() {
        let grid = linspace(0.2, 3.0, 15);
        let rows = sweep(&distance_spec(grid.clone())).unwrap();
        for (i, &d) in grid.iter().enumerate().rev() {
            let single = sweep(&distance_spec(vec![d])).unwrap();
            assert_eq!(single[0], rows[i]);
        }
    }

    #[test]
    fn frequency_sweep_at_contact_is_smooth() {
        let spec = SweepSpec {
            axis: SweepAxis::Frequency,
            base: siso().with_distance_ab(0.0),
            ..distance_spec(linspace(1e11, 1e12, 10))
        };
        let rows = sweep(&spec).unwrap();
        assert!(rows.iter().all(|r| r.feasible && r.clamped == 1));
        assert!(rows.windows(2).all(|w| w[1].total_rate > w[0].total_rate));
    }

    #[test]
    fn block_size_sweep_rises_toward_asymptotic() {
        let base = SystemConfig::symmetric(128, 1e11, 0.6, 250.0);
        let spec = SweepSpec {
            axis: SweepAxis::BlockSize,
            grid: vec![2e4, 2e5, 2e6, 2e8],
            rate: RateMode::Finite(FiniteSizeConfig::default()),
            channel: ChannelMode::Idealized,
            base,
        };
        let rows = sweep(&spec).unwrap();
        assert!(rows.windows(2).all(|w| w[1].total_rate > w[0].total_rate));
        let asym = evaluate(&base, &RateMode::Asymptotic, ChannelMode::Idealized).unwrap();
        assert!(rows[3].total_rate < asym.total_rate);
    }

    #[test]
    fn antenna_sweep_orders_configurations() {
        let spec = SweepSpec {
            axis: SweepAxis::Antennas,
            base: SystemConfig::symmetric(1, 1e11, 0.6, 15.0),
            ..distance_spec(vec![4.0, 8.0, 16.0, 32.0])
        };
        let rows = sweep(&spec).unwrap();
        assert!(rows.windows(2).all(|w| w[1].total_rate > w[0].total_rate));
    }

    #[test]
    fn max_distance_brackets_zero() {
        let m = max_distance(&siso(), &RateMode::Asymptotic, ChannelMode::Idealized, 1e-3).unwrap();
        assert!(m.hi_m - m.lo_m <= 1e-3);
        assert!(m.rate_lo > 0.0 && m.rate_hi <= 0.0);
        let at = |d: f64| {
            evaluate(&siso().with_distance_ab(d), &RateMode::Asymptotic, ChannelMode::Idealized)
                .unwrap()
                .total_rate
        };
        assert!(at(m.distance_m - 1e-3) > 0.0);
        assert!(at(m.distance_m + 1e-3) <= 0.0);
    }

    #[test]
    fn infeasible_configuration() {
        let cfg = SystemConfig { ancilla_variance: 1e6, ..siso() };
        let r = max_distance(&cfg, &RateMode::Asymptotic, ChannelMode::Idealized, 0.01);
        // W only matters once T < 1, so the contact point is still feasible
        assert!(r.is_ok());
        let cfg = SystemConfig { recon_eff: 0.0, ..siso() };
        let r = max_distance(&cfg, &RateMode::Asymptotic, ChannelMode::Idealized, 0.01);
        assert!(matches!(r, Err(Error::Infeasible(_))));
        assert!(max_distance(&siso(), &RateMode::Asymptotic, ChannelMode::Idealized, 0.0).is_err());
    }

    #[test]
    fn loss_table_lookup() {
        assert_eq!(atmospheric_loss_for(1e11), Some(0.6));
        assert_eq!(atmospheric_loss_for(1e12), Some(100.0));
        assert_eq!(atmospheric_loss_for(3e11), None);
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(0.0, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
        assert!((g[3] - 0.3).abs() < 1e-15);
        assert_eq!(linspace(2.0, 5.0, 1), vec![2.0]);
    }
}
