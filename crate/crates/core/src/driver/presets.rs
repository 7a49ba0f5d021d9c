//! Figure and table reproduction presets. All presets use idealized channels
//! and the default system parameters unless a series overrides them.

use super::output::Table;
use super::sweep::{
    atmospheric_loss_for, linspace, max_distance, rows_table, sweep, ChannelMode, RateMode,
    SweepAxis, SweepSpec,
};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::finite::FiniteSizeConfig;

pub const FIGURE_IDS: [&str; 11] = [
    "fig2a", "fig2b", "fig2c", "fig2d", "fig3", "fig4", "fig5", "fig6", "fig7", "fig10", "table2",
];

const MIMO_SIZES: [usize; 8] = [8, 16, 32, 64, 128, 256, 512, 1024];
const FREQUENCIES: [f64; 4] = [1.0e11, 2.5e11, 5.0e11, 1.0e12];
const FIG6_BLOCKS: [u64; 4] = [20_000, 200_000, 2_000_000, 200_000_000];
const DISTANCE_POINTS: usize = 101;
const SURFACE_POINTS: usize = 41;
const EXTENT_TOL_M: f64 = 1e-3;

/// One output file of a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub table: Table,
}

fn config_at(antennas: usize, frequency_hz: f64) -> SystemConfig {
    let delta = atmospheric_loss_for(frequency_hz).unwrap_or(SystemConfig::default().atmo_loss_db_per_km);
    SystemConfig::symmetric(antennas, frequency_hz, delta, 0.0)
}

fn ghz(frequency_hz: f64) -> String {
    format!("{}ghz", (frequency_hz / 1e9).round())
}

fn block_label(m: u64) -> String {
    let exp = (m as f64).log10().floor() as i32;
    let mantissa = m as f64 / 10f64.powi(exp);
    format!("m{}e{exp}", mantissa.round())
}

/// Distance grid from contact to 5% past the asymptotic zero crossing.
fn distance_grid(cfg: &SystemConfig, points: usize) -> Result<Vec<f64>> {
    let reach = max_distance(cfg, &RateMode::Asymptotic, ChannelMode::Idealized, EXTENT_TOL_M)?;
    Ok(linspace(0.0, 1.05 * reach.distance_m, points))
}

fn distance_table(cfg: &SystemConfig, rate: RateMode, grid: &[f64]) -> Result<Table> {
    let rows = sweep(&SweepSpec {
        axis: SweepAxis::Distance,
        grid: grid.to_vec(),
        rate,
        channel: ChannelMode::Idealized,
        base: *cfg,
    })?;
    Ok(rows_table(&rows))
}

fn fig2(frequency_hz: f64, id: &str) -> Result<Vec<Artifact>> {
    MIMO_SIZES
        .iter()
        .map(|&n| {
            let cfg = config_at(n, frequency_hz);
            let grid = distance_grid(&cfg, DISTANCE_POINTS)?;
            Ok(Artifact {
                name: format!("{id}_{n}x{n}"),
                table: distance_table(&cfg, RateMode::Asymptotic, &grid)?,
            })
        })
        .collect()
}

fn fig3() -> Result<Vec<Artifact>> {
    let etas = linspace(0.6, 1.0, 9);
    let mut out = Vec::new();
    for (panel, &f) in ["a", "b", "c"].iter().zip(&FREQUENCIES[..3]) {
        for n in [16, 8, 4] {
            let cfg = config_at(n, f);
            let grid = distance_grid(&cfg, SURFACE_POINTS)?;
            let mut table = Table::default();
            for &eta in &etas {
                let slice = distance_table(&cfg.with_detector_efficiency(eta), RateMode::Asymptotic, &grid)?;
                table.extend(slice.with_leading_column("detector_efficiency", eta.into()))?;
            }
            out.push(Artifact { name: format!("fig3{panel}_{n}x{n}"), table });
        }
    }
    Ok(out)
}

fn fig4() -> Result<Vec<Artifact>> {
    FREQUENCIES
        .iter()
        .map(|&f| {
            let cfg = config_at(1, f);
            let grid = distance_grid(&cfg, DISTANCE_POINTS)?;
            Ok(Artifact {
                name: format!("fig4_{}", ghz(f)),
                table: distance_table(&cfg, RateMode::Asymptotic, &grid)?,
            })
        })
        .collect()
}

fn fig5() -> Result<Vec<Artifact>> {
    let cfg = config_at(1, 1e11);
    let grid = distance_grid(&cfg, DISTANCE_POINTS)?;
    [0.6, 0.7, 0.8, 0.9, 1.0]
        .iter()
        .map(|&eta| {
            Ok(Artifact {
                name: format!("fig5_eta{eta:.1}"),
                table: distance_table(&cfg.with_detector_efficiency(eta), RateMode::Asymptotic, &grid)?,
            })
        })
        .collect()
}

fn fig6() -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    for n in MIMO_SIZES {
        let cfg = config_at(n, 1e11);
        let grid = distance_grid(&cfg, DISTANCE_POINTS)?;
        out.push(Artifact {
            name: format!("fig6_{n}x{n}_akr"),
            table: distance_table(&cfg, RateMode::Asymptotic, &grid)?,
        });
        for m in FIG6_BLOCKS {
            let rate = RateMode::Finite(FiniteSizeConfig::half_split(m));
            out.push(Artifact {
                name: format!("fig6_{n}x{n}_{}", block_label(m)),
                table: distance_table(&cfg, rate, &grid)?,
            });
        }
    }
    Ok(out)
}

fn fig7() -> Result<Vec<Artifact>> {
    let cfg = config_at(1, 1e11);
    let grid = distance_grid(&cfg, SURFACE_POINTS)?;
    let mut table = Table::default();
    for n in [
        10_000u64, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000, 2_000_000, 5_000_000,
        10_000_000, 100_000_000,
    ] {
        let rate = RateMode::Finite(FiniteSizeConfig::half_split(2 * n));
        table.extend(distance_table(&cfg, rate, &grid)?.with_leading_column("block_key", n.into()))?;
    }
    Ok(vec![Artifact { name: "fig7".into(), table }])
}

fn fig10() -> Result<Vec<Artifact>> {
    let grid = linspace(1e11, 1e12, 91);
    std::iter::once(1)
        .chain(MIMO_SIZES)
        .map(|n| {
            let rows = sweep(&SweepSpec {
                axis: SweepAxis::Frequency,
                grid: grid.clone(),
                rate: RateMode::Asymptotic,
                channel: ChannelMode::Idealized,
                base: config_at(n, 1e11),
            })?;
            Ok(Artifact { name: format!("fig10_{n}x{n}"), table: rows_table(&rows) })
        })
        .collect()
}

/// Rows of the max-distance comparison: antennas, carrier, block size (None
/// for asymptotic) and the published distance.
pub const TABLE2_ROWS: [(usize, f64, Option<u64>, f64); 7] = [
    (8, 1e11, None, 20.0),
    (1024, 1e11, None, 2374.0),
    (1024, 1e12, None, 125.0),
    (128, 1e11, None, 316.0),
    (128, 1e11, Some(200_000), 307.0),
    (128, 1e11, Some(2_000_000), 307.0),
    (128, 1e11, Some(200_000_000), 307.0),
];

pub fn table2() -> Result<Table> {
    let mut t = Table::new([
        "antennas",
        "frequency_hz",
        "atmo_loss_db_per_km",
        "mode",
        "block_total",
        "max_distance_m",
        "reference_m",
    ]);
    for (n, f, block, reference) in TABLE2_ROWS {
        let cfg = config_at(n, f);
        let rate = block.map_or(RateMode::Asymptotic, |m| RateMode::Finite(FiniteSizeConfig::half_split(m)));
        let d = max_distance(&cfg, &rate, ChannelMode::Idealized, 0.01)?;
        t.push(vec![
            n.into(),
            f.into(),
            cfg.atmo_loss_db_per_km.into(),
            if block.is_some() { "finite" } else { "asymptotic" }.into(),
            block.into(),
            d.distance_m.into(),
            reference.into(),
        ]);
    }
    Ok(t)
}

/// Generates every output series of a figure or table.
pub fn reproduce(id: &str) -> Result<Vec<Artifact>> {
    match id {
        "fig2a" => fig2(FREQUENCIES[0], id),
        "fig2b" => fig2(FREQUENCIES[1], id),
        "fig2c" => fig2(FREQUENCIES[2], id),
        "fig2d" => fig2(FREQUENCIES[3], id),
        "fig3" => fig3(),
        "fig4" => fig4(),
        "fig5" => fig5(),
        "fig6" => fig6(),
        "fig7" => fig7(),
        "fig10" => fig10(),
        "table2" => Ok(vec![Artifact { name: "table2".into(), table: table2()? }]),
        other => Err(Error::Request(format!(
            "unknown figure id `{other}`; available: {}",
            FIGURE_IDS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::Cell;

    #[test]
    fn unknown_id_lists_available() {
        let err = reproduce("fig9").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fig9") && msg.contains("table2") && msg.contains("fig2a"));
    }

    #[test]
    fn fig2a_has_eight_series() {
        let out = reproduce("fig2a").unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out[0].name, "fig2a_8x8");
        for a in &out {
            assert_eq!(a.table.rows.len(), DISTANCE_POINTS);
        }
    }

    #[test]
    fn fig7_is_a_surface() {
        let out = reproduce("fig7").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].table.header[0], "block_key");
        assert_eq!(out[0].table.rows.len(), 11 * SURFACE_POINTS);
    }

    #[test]
    fn labels() {
        assert_eq!(block_label(20_000), "m2e4");
        assert_eq!(block_label(200_000_000), "m2e8");
        assert_eq!(ghz(2.5e11), "250ghz");
    }

    #[test]
    fn table2_rows_near_reference() {
        let t = table2().unwrap();
        assert_eq!(t.rows.len(), TABLE2_ROWS.len());
        for row in &t.rows[..4] {
            let (Cell::Float(d), Cell::Float(reference)) = (&row[5], &row[6]) else { panic!() };
            assert!((d - reference).abs() / reference < 0.15, "{d} vs {reference}");
        }
    }
}
