//! Experiment configuration as flat `key = value` text.
//!
//! Keys follow the simulation-parameter names with their units spelled out
//! (`p_max_vlc_w`, `noise_psd_vlc_dbm_per_mhz`, `psi_fov_deg`, ...). Every key
//! is optional and falls back to the defaults below; unknown keys are
//! rejected so that typos do not silently fall back to a default.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_per_mhz_to_w_per_hz, FadingModel, RfPhyParams, VlcPhyParams};
use crate::dqn::DqnConfig;
use crate::environment::{EnvParams, Position, RoomLayout};
use crate::error::{Error, Result};
use crate::tabular::evenly_spaced_levels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ql,
    #[default]
    Dqn,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ql => "ql",
            Algorithm::Dqn => "dqn",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ql" => Ok(Algorithm::Ql),
            "dqn" => Ok(Algorithm::Dqn),
            other => Err(Error::config(format!("unknown algorithm {other:?} (expected ql or dqn)"))),
        }
    }
}

/// How per-user target rates are chosen for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// Use `target_rates_mbps` as given.
    Preset,
    /// Draw each target uniformly from `[target_min_mbps, target_max_mbps]`.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub monte_carlo_runs: usize,
    pub max_iterations: usize,
    pub convergence_window: usize,
    pub frozen_channel: bool,

    pub n_users: usize,
    pub target_mode: TargetMode,
    pub target_rates_mbps: Vec<f64>,
    pub target_min_mbps: f64,
    pub target_max_mbps: f64,
    /// Fixed user coordinates; leave both empty for uniform random placement.
    pub user_x_m: Vec<f64>,
    pub user_y_m: Vec<f64>,

    pub room_width_m: f64,
    pub room_depth_m: f64,
    pub ceiling_height_m: f64,
    pub rf_ap_x_m: f64,
    pub rf_ap_y_m: f64,
    pub vlc_ap_x_m: Vec<f64>,
    pub vlc_ap_y_m: Vec<f64>,

    pub p_max_rf_w: f64,
    pub noise_psd_rf_dbm_per_mhz: f64,
    pub bandwidth_rf_mhz: f64,
    pub pathloss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_std_db: f64,
    pub fading_mean_db: f64,
    pub fading_model: FadingModel,

    pub p_max_vlc_w: f64,
    pub noise_psd_vlc_dbm_per_mhz: f64,
    pub bandwidth_vlc_mhz: f64,
    pub psi_fov_deg: f64,
    pub psi_half_power_deg: f64,
    pub pd_area_m2: f64,
    pub responsivity_a_per_w: f64,
    pub optical_filter_gain: f64,
    pub concentrator_index: f64,
    pub conversion_efficiency: f64,
    pub modulation_depth: f64,

    pub learning_rate: f64,
    pub discount: f64,
    /// Evenly spaced per-user levels from 0 to the AP's maximum power. With
    /// coarser grids most placements have no action inside both bands.
    pub vlc_power_levels: usize,
    pub rf_power_levels: usize,

    pub dqn_hidden_units: Vec<usize>,
    pub adam_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub replay_capacity: usize,
    pub minibatch_size: usize,
    pub state_norm_mbps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            seed: 0,
            monte_carlo_runs: 1000,
            max_iterations: 5000,
            convergence_window: 100,
            frozen_channel: false,

            n_users: 2,
            target_mode: TargetMode::Uniform,
            target_rates_mbps: vec![20.0, 12.0],
            target_min_mbps: 10.0,
            target_max_mbps: 25.0,
            user_x_m: Vec::new(),
            user_y_m: Vec::new(),

            room_width_m: 12.0,
            room_depth_m: 12.0,
            ceiling_height_m: 3.0,
            rf_ap_x_m: 0.0,
            rf_ap_y_m: 0.0,
            vlc_ap_x_m: vec![-3.0, -3.0, 3.0, 3.0],
            vlc_ap_y_m: vec![-3.0, 3.0, -3.0, 3.0],

            p_max_rf_w: 0.01,
            noise_psd_rf_dbm_per_mhz: -57.0,
            bandwidth_rf_mhz: 5.0,
            pathloss_exponent: 1.6,
            reference_distance_m: 1.0,
            shadowing_std_db: 1.8,
            fading_mean_db: 2.46,
            fading_model: FadingModel::LinearMean,

            p_max_vlc_w: 2.0,
            noise_psd_vlc_dbm_per_mhz: -100.0,
            bandwidth_vlc_mhz: 20.0,
            psi_fov_deg: 45.0,
            psi_half_power_deg: 60.0,
            pd_area_m2: 1e-4,
            responsivity_a_per_w: 0.4,
            optical_filter_gain: 1.0,
            concentrator_index: 1.5,
            conversion_efficiency: 1.0,
            modulation_depth: 1.0,

            learning_rate: 0.5,
            discount: 0.5,
            vlc_power_levels: 17,
            rf_power_levels: 17,

            dqn_hidden_units: vec![32, 32, 32],
            adam_learning_rate: 3e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            replay_capacity: 10_000,
            minibatch_size: 32,
            state_norm_mbps: 50.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serialises")
    }

    /// Selects the named target pair, e.g. `[20, 12]` Mbps.
    pub fn with_preset_targets(mut self, targets_mbps: &[f64]) -> Self {
        self.target_mode = TargetMode::Preset;
        self.target_rates_mbps = targets_mbps.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if self.convergence_window == 0 {
            return Err(Error::config("convergence_window must be at least 1"));
        }
        if self.max_iterations < self.convergence_window {
            return Err(Error::config("max_iterations must be at least convergence_window"));
        }
        if self.monte_carlo_runs == 0 {
            return Err(Error::config("monte_carlo_runs must be at least 1"));
        }
        if self.n_users == 0 {
            return Err(Error::config("n_users must be at least 1"));
        }
        match self.target_mode {
            TargetMode::Preset => {
                if self.target_rates_mbps.len() != self.n_users {
                    return Err(Error::config(format!(
                        "target_rates_mbps has {} entries for {} users",
                        self.target_rates_mbps.len(),
                        self.n_users
                    )));
                }
                if self.target_rates_mbps.iter().any(|t| !(*t > 0.0)) {
                    return Err(Error::config("target rates must be positive"));
                }
            }
            TargetMode::Uniform => {
                if !(self.target_min_mbps > 0.0 && self.target_max_mbps >= self.target_min_mbps) {
                    return Err(Error::config("target range must satisfy 0 < min <= max"));
                }
            }
        }
        if self.user_x_m.len() != self.user_y_m.len() {
            return Err(Error::config("user_x_m and user_y_m must have equal length"));
        }
        if !self.user_x_m.is_empty() && self.user_x_m.len() != self.n_users {
            return Err(Error::config("fixed user positions must cover every user"));
        }
        if self.vlc_ap_x_m.len() != self.vlc_ap_y_m.len() {
            return Err(Error::config("vlc_ap_x_m and vlc_ap_y_m must have equal length"));
        }
        if self.vlc_power_levels == 0 || self.rf_power_levels == 0 {
            return Err(Error::config("power level counts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::config("learning_rate must lie in [0, 1]"));
        }
        let env = self.env_params();
        env.validate()?;
        for p in self.fixed_positions().unwrap_or_default() {
            if !env.layout.contains(&p) {
                return Err(Error::config(format!("user position ({}, {}) lies outside the room", p.x, p.y)));
            }
        }
        self.dqn_config().validate()
    }

    pub fn layout(&self) -> RoomLayout {
        RoomLayout {
            width: self.room_width_m,
            depth: self.room_depth_m,
            ceiling_height: self.ceiling_height_m,
            rf_ap_position: Position::new(self.rf_ap_x_m, self.rf_ap_y_m),
            vlc_ap_positions: self
                .vlc_ap_x_m
                .iter()
                .zip(&self.vlc_ap_y_m)
                .map(|(x, y)| Position::new(*x, *y))
                .collect(),
        }
    }

    pub fn vlc_phy(&self) -> VlcPhyParams {
        VlcPhyParams {
            pd_area: self.pd_area_m2,
            responsivity: self.responsivity_a_per_w,
            filter_gain: self.optical_filter_gain,
            concentrator_index: self.concentrator_index,
            fov_half: self.psi_fov_deg.to_radians(),
            semi_angle_half_power: self.psi_half_power_deg.to_radians(),
            conversion_eff: self.conversion_efficiency,
            modulation_depth: self.modulation_depth,
            noise_psd: dbm_per_mhz_to_w_per_hz(self.noise_psd_vlc_dbm_per_mhz),
        }
    }

    pub fn rf_phy(&self) -> RfPhyParams {
        RfPhyParams {
            pathloss_exponent: self.pathloss_exponent,
            reference_distance: self.reference_distance_m,
            shadowing_stddev: self.shadowing_std_db,
            fading_mean_db: self.fading_mean_db,
            fading_model: self.fading_model,
            noise_psd: dbm_per_mhz_to_w_per_hz(self.noise_psd_rf_dbm_per_mhz),
            bandwidth: self.bandwidth_rf_mhz * 1e6,
        }
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            layout: self.layout(),
            vlc: self.vlc_phy(),
            rf: self.rf_phy(),
            vlc_bandwidth: self.bandwidth_vlc_mhz * 1e6,
            p_max_vlc: self.p_max_vlc_w,
            p_max_rf: self.p_max_rf_w,
            frozen_channel: self.frozen_channel,
        }
    }

    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            hidden_layers: self.dqn_hidden_units.clone(),
            learning_rate: self.adam_learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon_hat: self.adam_epsilon,
            replay_capacity: self.replay_capacity,
            batch_size: self.minibatch_size,
            discount: self.discount,
            rate_norm: self.state_norm_mbps * 1e6,
        }
    }

    pub fn vlc_levels(&self) -> Vec<f64> {
        evenly_spaced_levels(self.vlc_power_levels, self.p_max_vlc_w)
    }

    pub fn rf_levels(&self) -> Vec<f64> {
        evenly_spaced_levels(self.rf_power_levels, self.p_max_rf_w)
    }

    pub fn fixed_positions(&self) -> Option<Vec<Position>> {
        if self.user_x_m.is_empty() {
            return None;
        }
        Some(
            self.user_x_m
                .iter()
                .zip(&self.user_y_m)
                .map(|(x, y)| Position::new(*x, *y))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert!(text.contains("p_max_vlc_w = 2.0"));
        assert!(text.contains("psi_fov_deg = 45.0"));
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("p_max_vlc_w = 1.5\nalgorithm = \"ql\"\n").unwrap();
        assert_eq!(cfg.p_max_vlc_w, 1.5);
        assert_eq!(cfg.algorithm, Algorithm::Ql);
        assert_eq!(cfg.max_iterations, 5000);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = ExperimentConfig::from_toml_str("p_max_vcl_w = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("p_max_vcl_w"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("max_iterations = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("max_iterations = 50\n").is_err());
        assert!(ExperimentConfig::from_toml_str("monte_carlo_runs = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("target_mode = \"preset\"\ntarget_rates_mbps = [20.0]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("user_x_m = [7.0, 0.0]\nuser_y_m = [0.0, 0.0]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("psi_fov_deg = 95.0\n").is_err());
    }

    #[test]
    fn unit_conversions() {
        let cfg = ExperimentConfig::default();
        assert_relative_eq!(cfg.vlc_phy().noise_psd, 1e-19, max_relative = 1e-12);
        assert_relative_eq!(cfg.rf_phy().noise_psd, 10f64.powf(-8.7) / 1e6, max_relative = 1e-12);
        assert_eq!(cfg.rf_phy().bandwidth, 5e6);
        let vlc = cfg.vlc_levels();
        assert_eq!(vlc.len(), 17);
        assert_eq!((vlc[0], vlc[4], vlc[16]), (0.0, 0.5, 2.0));
        assert_eq!(cfg.rf_levels().len(), 17);
        assert_relative_eq!(cfg.rf_levels()[4], 0.0025, max_relative = 1e-12);
    }

    #[test]
    fn algorithm_parsing() {
        assert_eq!("QL".parse::<Algorithm>().unwrap(), Algorithm::Ql);
        assert_eq!("dqn".parse::<Algorithm>().unwrap(), Algorithm::Dqn);
        assert!("ddpg".parse::<Algorithm>().is_err());
    }
}
