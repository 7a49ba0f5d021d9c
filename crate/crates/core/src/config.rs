//! System parameters, physical constants and thermal-noise physics.
//!
//! Units are fixed crate-wide: variances in shot-noise units (vacuum = 1),
//! distances in meters, frequencies in hertz, atmospheric loss in dB/km.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants at the precision used throughout the rate model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Planck constant h (J s).
    pub planck: f64,
    /// Boltzmann constant k_B (J/K).
    pub boltzmann: f64,
    /// Speed of light c (m/s).
    pub light_speed: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    planck: 6.626e-34,
    boltzmann: 1.38e-23,
    light_speed: 2.998e8,
};

/// Every physical and protocol parameter of one MDI link pair.
///
/// Alice talks to Charlie over link A, Bob over link B. Antenna counts are
/// per array; `multipath_*` is the number of propagation paths per link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub frequency_hz: f64,
    pub temperature_k: f64,
    pub distance_ac_m: f64,
    pub distance_bc_m: f64,
    pub n_tx_a: usize,
    pub n_rx_a: usize,
    pub n_tx_b: usize,
    pub n_rx_b: usize,
    pub multipath_a: usize,
    pub multipath_b: usize,
    pub atmo_loss_db_per_km: f64,
    /// Modulation variance V_M, shared by Alice and Bob (SNU).
    pub mod_variance: f64,
    /// Variance of Eve's EPR ancillas W (SNU).
    pub ancilla_variance: f64,
    pub det_eff_a: f64,
    pub det_eff_b: f64,
    /// Reverse-reconciliation efficiency beta.
    pub recon_eff: f64,
    pub antenna_element_gain: f64,
    /// Inter-antenna spacing in wavelengths.
    pub inter_antenna_spacing_wl: f64,
}

impl Default for SystemConfig {
    /// Room-temperature SISO link at 100 GHz with 1 m between Alice and Bob.
    fn default() -> Self {
        SystemConfig {
            frequency_hz: 1e11,
            temperature_k: 300.0,
            distance_ac_m: 0.5,
            distance_bc_m: 0.5,
            n_tx_a: 1,
            n_rx_a: 1,
            n_tx_b: 1,
            n_rx_b: 1,
            multipath_a: 1,
            multipath_b: 1,
            atmo_loss_db_per_km: 0.6,
            mod_variance: 1e5,
            ancilla_variance: 1.0,
            det_eff_a: 1.0,
            det_eff_b: 1.0,
            recon_eff: 1.0,
            antenna_element_gain: 30.0,
            inter_antenna_spacing_wl: 0.5,
        }
    }
}

impl SystemConfig {
    /// Symmetric scenario: `n x n` arrays on both links, full spatial
    /// multiplexing (L = n) and Charlie halfway between Alice and Bob.
    pub fn symmetric(
        antennas: usize,
        frequency_hz: f64,
        atmo_loss_db_per_km: f64,
        distance_ab_m: f64,
    ) -> Self {
        SystemConfig {
            frequency_hz,
            atmo_loss_db_per_km,
            ..SystemConfig::default()
        }
        .with_antennas(antennas)
        .with_distance_ab(distance_ab_m)
    }

    /// Places Charlie in the middle of a total Alice-Bob separation.
    pub fn with_distance_ab(mut self, distance_ab_m: f64) -> Self {
        self.distance_ac_m = distance_ab_m / 2.0;
        self.distance_bc_m = distance_ab_m / 2.0;
        self
    }

    pub fn with_antennas(mut self, n: usize) -> Self {
        self.n_tx_a = n;
        self.n_rx_a = n;
        self.n_tx_b = n;
        self.n_rx_b = n;
        self.multipath_a = n;
        self.multipath_b = n;
        self
    }

    pub fn with_detector_efficiency(mut self, eta: f64) -> Self {
        self.det_eff_a = eta;
        self.det_eff_b = eta;
        self
    }

    pub fn distance_ab_m(&self) -> f64 {
        self.distance_ac_m + self.distance_bc_m
    }

    pub fn wavelength_m(&self) -> f64 {
        CONSTANTS.light_speed / self.frequency_hz
    }

    /// Checks every field invariant, returning the config unchanged on success.
    ///
    /// The first violated invariant is reported by field name.
    pub fn validate(self) -> Result<Self> {
        positive_finite("frequency_hz", self.frequency_hz)?;
        positive_finite("temperature_k", self.temperature_k)?;
        non_negative_finite("distance_ac_m", self.distance_ac_m)?;
        non_negative_finite("distance_bc_m", self.distance_bc_m)?;

        for (field, n) in [
            ("n_tx_a", self.n_tx_a),
            ("n_rx_a", self.n_rx_a),
            ("n_tx_b", self.n_tx_b),
            ("n_rx_b", self.n_rx_b),
            ("multipath_a", self.multipath_a),
            ("multipath_b", self.multipath_b),
        ] {
            if n == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        let rank_a = self.n_tx_a.min(self.n_rx_a);
        if self.multipath_a > rank_a {
            return Err(Error::config(
                "multipath_a",
                format!("{} exceeds min(n_tx_a, n_rx_a) = {rank_a}", self.multipath_a),
            ));
        }
        let rank_b = self.n_tx_b.min(self.n_rx_b);
        if self.multipath_b > rank_b {
            return Err(Error::config(
                "multipath_b",
                format!("{} exceeds min(n_tx_b, n_rx_b) = {rank_b}", self.multipath_b),
            ));
        }

        non_negative_finite("atmo_loss_db_per_km", self.atmo_loss_db_per_km)?;
        positive_finite("mod_variance", self.mod_variance)?;
        if !(self.ancilla_variance.is_finite() && self.ancilla_variance >= 1.0) {
            return Err(Error::config(
                "ancilla_variance",
                format!("{} is below the vacuum level 1", self.ancilla_variance),
            ));
        }
        unit_interval_open_left("det_eff_a", self.det_eff_a)?;
        unit_interval_open_left("det_eff_b", self.det_eff_b)?;
        if !(0.0..=1.0).contains(&self.recon_eff) {
            return Err(Error::config(
                "recon_eff",
                format!("{} is outside [0, 1]", self.recon_eff),
            ));
        }
        positive_finite("antenna_element_gain", self.antenna_element_gain)?;
        positive_finite("inter_antenna_spacing_wl", self.inter_antenna_spacing_wl)?;
        Ok(self)
    }

    /// Parses the TOML config schema (keys are the field names above; any
    /// omitted key takes its default).
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}

fn positive_finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be positive and finite")))
    }
}

fn non_negative_finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be non-negative and finite")))
    }
}

fn unit_interval_open_left(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is outside (0, 1]")))
    }
}

/// Mean thermal photon number of the carrier mode, `1/(exp(h f / k_B T) - 1)`.
pub fn thermal_photon_number(frequency_hz: f64, temperature_k: f64) -> Result<f64> {
    if !(frequency_hz > 0.0 && temperature_k > 0.0) {
        return Err(Error::domain(
            "thermal_photon_number",
            format!("need f > 0 and T > 0, got f = {frequency_hz}, T = {temperature_k}"),
        ));
    }
    let x = CONSTANTS.planck * frequency_hz / (CONSTANTS.boltzmann * temperature_k);
    Ok(1.0 / x.exp_m1())
}

/// Variance split of each TMSV source: modulation plus thermal preparation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceVariances {
    pub v_mod: f64,
    pub v_thermal: f64,
    pub v_total: f64,
}

impl SourceVariances {
    pub fn new(v_mod: f64, v_thermal: f64) -> Self {
        let v_total = v_mod + v_thermal;
        // thermal part re-derived from the rounded total so the split is exact in f64
        SourceVariances { v_mod, v_thermal: v_total - v_mod, v_total }
    }

    /// Thermal part `2 n + 1` evaluated at the config's carrier and temperature.
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let n = thermal_photon_number(cfg.frequency_hz, cfg.temperature_k)?;
        Ok(SourceVariances::new(cfg.mod_variance, 2.0 * n + 1.0))
    }
}
