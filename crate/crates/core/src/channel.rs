//! THz MIMO channel synthesis and its reduction to parallel lossy channels.
//!
//! A link matrix is a sum of `L` rank-one ULA path contributions. Transmit and
//! receive beamforming along the singular vectors turns each link into
//! independent SISO channels whose power transmittances are the squared
//! singular values. Alice's and Bob's links are paired index by index after
//! sorting, giving `r = min(rank_A, rank_B)` parallel channels.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{SystemConfig, CONSTANTS};
use crate::error::{Error, Result};

/// Which side of Charlie a link belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Link {
    /// Alice to Charlie.
    A,
    /// Bob to Charlie.
    B,
}

impl Link {
    fn stream(self) -> u64 {
        match self {
            Link::A => 0,
            Link::B => 1,
        }
    }
}

/// Dense complex matrix, `N_R x N_T` for a link.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(pub DMatrix<Complex64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        ComplexMatrix(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Row-major text export: a `rows cols` header line followed by one line
    /// per row of space-separated `re,im` pairs. Floats use the shortest
    /// representation that round-trips.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows(), self.cols());
        for i in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|j| {
                    let z = self.0[(i, j)];
                    format!("{},{}", z.re, z.im)
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix text".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dimension `{t}`"))))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse(format!("header needs `rows cols`, got `{header}`")));
        };
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
            let entries: Vec<&str> = line.split_whitespace().collect();
            if entries.len() != cols {
                return Err(Error::Parse(format!(
                    "row {i} has {} entries, expected {cols}",
                    entries.len()
                )));
            }
            for (j, e) in entries.iter().enumerate() {
                let (re, im) = e
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("entry `{e}` is not `re,im`")))?;
                let re: f64 = re.parse().map_err(|_| Error::Parse(format!("bad float `{re}`")))?;
                let im: f64 = im.parse().map_err(|_| Error::Parse(format!("bad float `{im}`")))?;
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        Ok(ComplexMatrix(m))
    }
}

/// One propagation path of a multipath draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathComponent {
    /// Angle of departure (rad).
    pub angle_tx: f64,
    /// Angle of arrival (rad).
    pub angle_rx: f64,
    /// Propagation delay (s).
    pub delay_s: f64,
    /// Power path loss gamma of this path.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultipathDraw {
    pub paths: Vec<PathComponent>,
}

/// ULA response vector with entries `exp(j 2 pi d k sin(angle)) / sqrt(n)`.
pub fn array_response(n_antennas: usize, angle_rad: f64, spacing_wl: f64) -> DVector<Complex64> {
    let scale = 1.0 / (n_antennas as f64).sqrt();
    let phase_step = 2.0 * PI * spacing_wl * angle_rad.sin();
    DVector::from_fn(n_antennas, |k, _| {
        Complex64::from_polar(scale, phase_step * k as f64)
    })
}

/// Power path loss `G_a^2 N_R N_T (lambda / 4 pi d)^2 10^(-delta d_km / 10)`.
pub fn path_loss(
    frequency_hz: f64,
    distance_m: f64,
    atmo_loss_db_per_km: f64,
    n_rx: usize,
    n_tx: usize,
    antenna_element_gain: f64,
) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::domain(
            "path_loss",
            format!("distance must be positive, got {distance_m} m"),
        ));
    }
    if !(frequency_hz > 0.0) {
        return Err(Error::domain("path_loss", format!("frequency {frequency_hz} Hz")));
    }
    let wavelength = CONSTANTS.light_speed / frequency_hz;
    let free_space = wavelength / (4.0 * PI * distance_m);
    let absorption_db = atmo_loss_db_per_km * distance_m / 1000.0;
    Ok(antenna_element_gain.powi(2)
        * (n_rx * n_tx) as f64
        * free_space.powi(2)
        * 10f64.powf(-absorption_db / 10.0))
}

fn link_geometry(cfg: &SystemConfig, link: Link) -> (usize, usize, usize, f64) {
    match link {
        Link::A => (cfg.n_rx_a, cfg.n_tx_a, cfg.multipath_a, cfg.distance_ac_m),
        Link::B => (cfg.n_rx_b, cfg.n_tx_b, cfg.multipath_b, cfg.distance_bc_m),
    }
}

/// Path loss of one link of `cfg`.
pub fn link_path_loss(cfg: &SystemConfig, link: Link) -> Result<f64> {
    let (n_rx, n_tx, _, d) = link_geometry(cfg, link);
    path_loss(
        cfg.frequency_hz,
        d,
        cfg.atmo_loss_db_per_km,
        n_rx,
        n_tx,
        cfg.antenna_element_gain,
    )
}

/// Draws a multipath geometry and assembles the link matrix.
///
/// Angles are uniform on [-pi/2, pi/2], delays uniform on one carrier period,
/// and every path carries the link's path loss. The A and B links use
/// separate streams of the same seeded generator.
pub fn synthesize_channel(
    cfg: &SystemConfig,
    link: Link,
    seed: u64,
) -> Result<(ComplexMatrix, MultipathDraw)> {
    let (n_rx, n_tx, paths, _) = link_geometry(cfg, link);
    let gamma = link_path_loss(cfg, link)?;
    let period = 1.0 / cfg.frequency_hz;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(link.stream());
    let draw = MultipathDraw {
        paths: (0..paths)
            .map(|_| PathComponent {
                angle_tx: rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
                angle_rx: rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
                delay_s: rng.random_range(0.0..period),
                loss: gamma,
            })
            .collect(),
    };

    let spacing = cfg.inter_antenna_spacing_wl;
    let mut h = DMatrix::<Complex64>::zeros(n_rx, n_tx);
    for p in &draw.paths {
        let coeff = Complex64::from_polar(
            p.loss.sqrt(),
            2.0 * PI * cfg.frequency_hz * p.delay_s,
        );
        let rx = array_response(n_rx, p.angle_rx, spacing);
        let tx = array_response(n_tx, p.angle_tx, spacing);
        h += (rx * tx.adjoint()) * coeff;
    }
    Ok((ComplexMatrix(h), draw))
}

/// Singular value decomposition `H = U diag(sigma) V^dagger`, sigma descending.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<Complex64>,
    pub v_t: DMatrix<Complex64>,
}

impl Decomposition {
    /// Numerical rank with the usual `max(m, n) * eps * sigma_max` cutoff.
    pub fn rank(&self) -> usize {
        let Some(&top) = self.singular_values.first() else {
            return 0;
        };
        let dim = self.u.nrows().max(self.v_t.ncols()) as f64;
        let cutoff = dim * f64::EPSILON * top;
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    /// Squared singular values clamped to [0, 1].
    pub fn transmittances(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| (s * s).min(1.0)).collect()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.singular_values.len();
        let mut us = self.u.columns(0, k).into_owned();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        ComplexMatrix(us * self.v_t.rows(0, k))
    }
}

pub fn decompose(h: &ComplexMatrix) -> Result<Decomposition> {
    if h.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::domain("decompose", "matrix has non-finite entries"));
    }
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::domain("decompose", "empty matrix"));
    }
    let svd = h.0.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let u_raw = svd.u.expect("requested U");
    let v_raw = svd.v_t.expect("requested V^dagger");
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u_raw.nrows(), order.len(), |r, c| u_raw[(r, order[c])]);
    let v_t = DMatrix::from_fn(order.len(), v_raw.ncols(), |r, c| v_raw[(order[r], c)]);
    Ok(Decomposition { singular_values, u, v_t })
}

/// One parallel lossy channel: transmittances and Eve's ancilla variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParallelChannel {
    pub t_a: f64,
    pub t_b: f64,
    pub w_a: f64,
    pub w_b: f64,
}

/// The `r` parallel channels feeding the key-rate engines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelChannelSet {
    pub channels: Vec<ParallelChannel>,
    /// Channels where at least one transmittance was clamped to 1.
    pub clamped: usize,
}

impl ParallelChannelSet {
    pub fn r(&self) -> usize {
        self.channels.len()
    }
}

/// Clamped transmittance of a link whose path loss may exceed unity at short
/// range. Zero distance is the limit `gamma -> inf`, i.e. full transmission.
fn clamped_link_transmittance(cfg: &SystemConfig, link: Link) -> Result<(f64, bool)> {
    let (_, _, _, d) = link_geometry(cfg, link);
    if d == 0.0 {
        return Ok((1.0, true));
    }
    let gamma = link_path_loss(cfg, link)?;
    Ok((gamma.min(1.0), gamma > 1.0))
}

/// Full-rank symmetric reproduction mode: every one of the
/// `min` antenna-rank channels sees the link path loss directly.
pub fn idealized_parallel_channels(cfg: &SystemConfig) -> Result<ParallelChannelSet> {
    let r = cfg
        .n_tx_a
        .min(cfg.n_rx_a)
        .min(cfg.n_tx_b.min(cfg.n_rx_b));
    let (t_a, clamp_a) = clamped_link_transmittance(cfg, Link::A)?;
    let (t_b, clamp_b) = clamped_link_transmittance(cfg, Link::B)?;
    let channel = ParallelChannel {
        t_a,
        t_b,
        w_a: cfg.ancilla_variance,
        w_b: cfg.ancilla_variance,
    };
    Ok(ParallelChannelSet {
        channels: vec![channel; r],
        clamped: if clamp_a || clamp_b { r } else { 0 },
    })
}

/// Both synthesized link matrices with their decompositions.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h_a: ComplexMatrix,
    pub h_b: ComplexMatrix,
    pub draw_a: MultipathDraw,
    pub draw_b: MultipathDraw,
    pub svd_a: Decomposition,
    pub svd_b: Decomposition,
}

impl ChannelRealization {
    pub fn new(cfg: &SystemConfig, seed: u64) -> Result<Self> {
        let (h_a, draw_a) = synthesize_channel(cfg, Link::A, seed)?;
        let (h_b, draw_b) = synthesize_channel(cfg, Link::B, seed)?;
        let svd_a = decompose(&h_a)?;
        let svd_b = decompose(&h_b)?;
        Ok(ChannelRealization { h_a, h_b, draw_a, draw_b, svd_a, svd_b })
    }

    pub fn parallel_channels(&self, ancilla_variance: f64) -> ParallelChannelSet {
        let r = self.svd_a.rank().min(self.svd_b.rank());
        let mut clamped = 0;
        let channels = self.svd_a.singular_values[..r]
            .iter()
            .zip(&self.svd_b.singular_values[..r])
            .map(|(sa, sb)| {
                let (ga, gb) = (sa * sa, sb * sb);
                if ga > 1.0 || gb > 1.0 {
                    clamped += 1;
                }
                ParallelChannel {
                    t_a: ga.min(1.0),
                    t_b: gb.min(1.0),
                    w_a: ancilla_variance,
                    w_b: ancilla_variance,
                }
            })
            .collect();
        ParallelChannelSet { channels, clamped }
    }

    /// Text dump of both link matrices in the `ComplexMatrix::to_text` format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# H_A");
        s.push_str(&self.h_a.to_text());
        let _ = writeln!(s, "# H_B");
        s.push_str(&self.h_b.to_text());
        s
    }
}

/// Random-realization mode: synthesize both links, decompose, and pair the
/// sorted singular values.
pub fn realized_parallel_channels(cfg: &SystemConfig, seed: u64) -> Result<ParallelChannelSet> {
    Ok(ChannelRealization::new(cfg, seed)?.parallel_channels(cfg.ancilla_variance))
}
