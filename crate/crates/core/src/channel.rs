//! Propagation and achievable-rate models for the VLC and RF links.
//!
//! Every function here is pure. Units are SI throughout (metres, radians,
//! watts, hertz, bit/s); conversion from the dB/dBm/degree forms used in
//! configuration files happens once, at load time.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a noise density in dBm/MHz into W/Hz.
pub fn dbm_per_mhz_to_w_per_hz(dbm_per_mhz: f64) -> f64 {
    10f64.powf((dbm_per_mhz - 30.0) / 10.0) / 1e6
}

/// Inverse of [`dbm_per_mhz_to_w_per_hz`].
pub fn w_per_hz_to_dbm_per_mhz(w_per_hz: f64) -> f64 {
    10.0 * (w_per_hz * 1e6).log10() + 30.0
}

/// Photodiode, LED and optics parameters of the optical links.
#[derive(Debug, Clone, PartialEq)]
pub struct VlcPhyParams {
    /// Effective photodiode detection area, m².
    pub pd_area: f64,
    /// Photodiode responsivity, A/W.
    pub responsivity: f64,
    pub filter_gain: f64,
    /// Refractive index of the optical concentrator.
    pub concentrator_index: f64,
    /// Half of the receiver field of view, radians.
    pub fov_half: f64,
    /// LED semi-angle at half power, radians.
    pub semi_angle_half_power: f64,
    /// Optical to electrical conversion efficiency.
    pub conversion_eff: f64,
    pub modulation_depth: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
}

impl Default for VlcPhyParams {
    fn default() -> Self {
        Self {
            pd_area: 1e-4,
            responsivity: 0.4,
            filter_gain: 1.0,
            concentrator_index: 1.5,
            fov_half: 45f64.to_radians(),
            semi_angle_half_power: 60f64.to_radians(),
            conversion_eff: 1.0,
            modulation_depth: 1.0,
            noise_psd: dbm_per_mhz_to_w_per_hz(-100.0),
        }
    }
}

impl VlcPhyParams {
    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.pd_area > 0.0) {
            return Err(Error::config("pd_area must be positive"));
        }
        if !(self.responsivity > 0.0) {
            return Err(Error::config("responsivity must be positive"));
        }
        if !(self.fov_half > 0.0 && self.fov_half < half_pi) {
            return Err(Error::config("field of view half-angle must lie in (0, 90) degrees"));
        }
        if !(self.semi_angle_half_power > 0.0 && self.semi_angle_half_power < half_pi) {
            return Err(Error::config("LED semi-angle must lie in (0, 90) degrees"));
        }
        if !(self.noise_psd > 0.0 && self.noise_psd.is_finite()) {
            return Err(Error::config("VLC noise PSD must be positive"));
        }
        if !(self.filter_gain >= 0.0 && self.concentrator_index > 0.0) {
            return Err(Error::config("filter gain and concentrator index must be positive"));
        }
        if !(self.conversion_eff > 0.0 && self.modulation_depth > 0.0) {
            return Err(Error::config(
                "conversion efficiency and modulation depth must be positive",
            ));
        }
        Ok(())
    }
}

/// How the configured fading mean is interpreted when drawing `|h|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FadingModel {
    /// `|h|²` is exponential in linear scale with mean `10^(mean_db/10)`.
    #[default]
    LinearMean,
    /// The fading term in dB is exponential with mean `mean_db`.
    DbMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfPhyParams {
    pub pathloss_exponent: f64,
    /// Reference distance of the path-loss law, m.
    pub reference_distance: f64,
    /// Standard deviation of log-normal shadowing, dB.
    pub shadowing_stddev: f64,
    pub fading_mean_db: f64,
    pub fading_model: FadingModel,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    /// Bandwidth of each RF link, Hz.
    pub bandwidth: f64,
}

impl Default for RfPhyParams {
    fn default() -> Self {
        Self {
            pathloss_exponent: 1.6,
            reference_distance: 1.0,
            shadowing_stddev: 1.8,
            fading_mean_db: 2.46,
            fading_model: FadingModel::LinearMean,
            noise_psd: dbm_per_mhz_to_w_per_hz(-57.0),
            bandwidth: 5e6,
        }
    }
}

impl RfPhyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::config("path-loss exponent must be positive"));
        }
        if !(self.reference_distance > 0.0) {
            return Err(Error::config("reference distance must be positive"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::config("RF bandwidth must be positive"));
        }
        if !(self.shadowing_stddev >= 0.0) {
            return Err(Error::config("shadowing deviation must be non-negative"));
        }
        if !(self.fading_mean_db > 0.0) {
            return Err(Error::config("fading mean must be positive"));
        }
        if !(self.noise_psd > 0.0 && self.noise_psd.is_finite()) {
            return Err(Error::config("RF noise PSD must be positive"));
        }
        Ok(())
    }

    /// Draws a shadowing term `X ~ N(0, σ²)` in dB.
    pub fn sample_shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.shadowing_stddev == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.shadowing_stddev)
            .expect("validated deviation")
            .sample(rng)
    }

    /// Draws a small-scale fading power `|h|²` (linear).
    pub fn sample_fading_power<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.fading_model {
            FadingModel::LinearMean => {
                let mean = 10f64.powf(self.fading_mean_db / 10.0);
                Exp::new(1.0 / mean).expect("validated mean").sample(rng)
            }
            FadingModel::DbMean => {
                let db = Exp::new(1.0 / self.fading_mean_db)
                    .expect("validated mean")
                    .sample(rng);
                10f64.powf(db / 10.0)
            }
        }
    }

    /// Fading power used when the channel is frozen at its mean.
    pub fn mean_fading_power(&self) -> f64 {
        10f64.powf(self.fading_mean_db / 10.0)
    }
}

/// Relative placement of a user's photodiode and an LED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub horizontal_dist: f64,
    pub vertical_dist: f64,
    pub irradiance_angle: f64,
    pub incidence_angle: f64,
}

impl LinkGeometry {
    /// Builds the geometry of an upward-facing receiver below a
    /// downward-facing LED, so irradiance and incidence angles coincide.
    pub fn new(horizontal_dist: f64, vertical_dist: f64) -> Self {
        let angle = horizontal_dist.atan2(vertical_dist);
        Self {
            horizontal_dist,
            vertical_dist,
            irradiance_angle: angle,
            incidence_angle: angle,
        }
    }
}

/// Lambertian emission order `m = -1 / log2(cos Ψ½)`.
pub fn lambertian_order(semi_angle_half_power: f64) -> Result<f64> {
    let c = semi_angle_half_power.cos();
    let in_range = semi_angle_half_power > 0.0 && semi_angle_half_power < std::f64::consts::FRAC_PI_2;
    if !(in_range && c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!(
            "cos of the half-power semi-angle must lie in (0, 1), got {c}"
        )));
    }
    Ok(-1.0 / c.log2())
}

/// Optical concentrator gain; zero outside the receiver field of view.
pub fn concentrator_gain(incidence_angle: f64, phy: &VlcPhyParams) -> f64 {
    if (0.0..=phy.fov_half).contains(&incidence_angle) {
        let s = phy.fov_half.sin();
        phy.concentrator_index * phy.concentrator_index / (s * s)
    } else {
        0.0
    }
}

/// Line-of-sight DC gain of a VLC link.
pub fn vlc_channel_gain(geom: &LinkGeometry, phy: &VlcPhyParams) -> f64 {
    let hc = concentrator_gain(geom.incidence_angle, phy);
    if hc == 0.0 {
        return 0.0;
    }
    // Parameters are validated at load, so the order is always defined here.
    let m = -1.0 / phy.semi_angle_half_power.cos().log2();
    let d2 = geom.horizontal_dist * geom.horizontal_dist + geom.vertical_dist * geom.vertical_dist;
    let lambertian = (m + 1.0) * phy.pd_area * phy.responsivity
        * geom.irradiance_angle.cos().powf(m)
        / (2.0 * std::f64::consts::PI * d2);
    lambertian * phy.filter_gain * hc * geom.incidence_angle.cos()
}

/// Achievable VLC rate in bit/s for a user given `bandwidth` Hz.
pub fn vlc_rate(power: f64, gain: f64, bandwidth: f64, phy: &VlcPhyParams) -> f64 {
    if power <= 0.0 || gain <= 0.0 || bandwidth <= 0.0 {
        return 0.0;
    }
    let signal = phy.conversion_eff * phy.modulation_depth * power * gain;
    bandwidth / 2.0 * (1.0 + signal * signal / (bandwidth * phy.noise_psd)).log2()
}

/// Path loss in dB. Distances below the reference distance are clamped to it.
pub fn rf_path_loss(distance: f64, shadowing_db: f64, phy: &RfPhyParams) -> f64 {
    let d = distance.max(phy.reference_distance);
    47.9 + 10.0 * phy.pathloss_exponent * (d / phy.reference_distance).log10() + shadowing_db
}

pub fn rf_channel_gain(pathloss_db: f64, fading_power: f64) -> f64 {
    10f64.powf(-pathloss_db / 10.0) * fading_power
}

/// Achievable RF rate in bit/s.
pub fn rf_rate(power: f64, gain: f64, phy: &RfPhyParams) -> f64 {
    if power <= 0.0 || gain <= 0.0 {
        return 0.0;
    }
    phy.bandwidth * (1.0 + power * gain / (phy.bandwidth * phy.noise_psd)).log2()
}

pub fn total_rate(rf: f64, vlc: f64) -> f64 {
    rf + vlc
}
