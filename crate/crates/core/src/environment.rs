//! Indoor hybrid RF/VLC downlink: room geometry, user association,
//! bandwidth sharing and the per-step reward.
//!
//! Coordinates are metres with the origin at the centre of the room floor
//! plan. Rates are bit/s; utilities and rewards are expressed in Mbps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, LinkGeometry, RfPhyParams, VlcPhyParams};
use crate::error::{Error, Result};

const MBPS: f64 = 1e6;

/// Floor of the target band, bit/s.
pub const MIN_TARGET_BAND: f64 = 0.5 * MBPS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomLayout {
    pub width: f64,
    pub depth: f64,
    pub ceiling_height: f64,
    pub rf_ap_position: Position,
    pub vlc_ap_positions: Vec<Position>,
}

impl Default for RoomLayout {
    fn default() -> Self {
        Self {
            width: 12.0,
            depth: 12.0,
            ceiling_height: 3.0,
            rf_ap_position: Position::new(0.0, 0.0),
            vlc_ap_positions: vec![
                Position::new(-3.0, -3.0),
                Position::new(-3.0, 3.0),
                Position::new(3.0, -3.0),
                Position::new(3.0, 3.0),
            ],
        }
    }
}

impl RoomLayout {
    pub fn contains(&self, p: &Position) -> bool {
        p.x.abs() <= self.width / 2.0 && p.y.abs() <= self.depth / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0) {
            return Err(Error::config("room dimensions must be positive"));
        }
        if !(self.ceiling_height > 0.0) {
            return Err(Error::config("ceiling height must be positive"));
        }
        if !self.contains(&self.rf_ap_position) {
            return Err(Error::config("RF access point lies outside the room"));
        }
        if self.vlc_ap_positions.is_empty() {
            return Err(Error::config("at least one VLC access point is required"));
        }
        if let Some(i) = self.vlc_ap_positions.iter().position(|p| !self.contains(p)) {
            return Err(Error::config(format!("VLC access point {i} lies outside the room")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserConfig {
    pub position: Position,
    /// Target rate, bit/s.
    pub target_rate: f64,
    /// Tolerance above the target, bit/s.
    pub target_band: f64,
}

impl UserConfig {
    pub fn new(position: Position, target_rate: f64) -> Self {
        Self {
            position,
            target_rate,
            target_band: target_band(target_rate),
        }
    }
}

/// Draws `n_users` positions uniformly over the room footprint.
pub fn place_users(rng_seed: u64, layout: &RoomLayout, n_users: usize) -> Vec<Position> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (hw, hd) = (layout.width / 2.0, layout.depth / 2.0);
    (0..n_users)
        .map(|_| {
            let x = rng.random_range(-hw..=hw);
            let y = rng.random_range(-hd..=hd);
            Position::new(x, y)
        })
        .collect()
}

/// Assigns each user to the covering VLC AP with the smallest incidence
/// angle (lowest index on ties), or `None` when no AP covers it.
pub fn associate_users(
    positions: &[Position],
    layout: &RoomLayout,
    vlc_phy: &VlcPhyParams,
) -> Vec<Option<usize>> {
    positions
        .iter()
        .map(|user| {
            let mut best: Option<(usize, f64)> = None;
            for (l, ap) in layout.vlc_ap_positions.iter().enumerate() {
                let geom = LinkGeometry::new(user.distance_to(ap), layout.ceiling_height);
                if geom.incidence_angle > vlc_phy.fov_half {
                    continue;
                }
                match best {
                    Some((_, angle)) if angle <= geom.incidence_angle => {}
                    _ => best = Some((l, geom.incidence_angle)),
                }
            }
            best.map(|(l, _)| l)
        })
        .collect()
}

/// Splits each AP's bandwidth equally among its associated users.
pub fn allocate_bandwidth(association: &[Option<usize>], total_vlc_bw: f64) -> Vec<f64> {
    association
        .iter()
        .map(|a| match a {
            Some(l) => {
                let sharing = association.iter().filter(|b| **b == Some(*l)).count();
                total_vlc_bw / sharing as f64
            }
            None => 0.0,
        })
        .collect()
}

/// `max(0.05·T, 0.5 Mbps)`, in bit/s.
pub fn target_band(target_rate: f64) -> f64 {
    (0.05 * target_rate).max(MIN_TARGET_BAND)
}

/// `Σ_u B_u − |R_u − T_u|`, inputs in bit/s, result in Mbps.
pub fn utility(actual_rates: &[f64], targets: &[f64], bands: &[f64]) -> f64 {
    debug_assert_eq!(actual_rates.len(), targets.len());
    debug_assert_eq!(actual_rates.len(), bands.len());
    actual_rates
        .iter()
        .zip(targets)
        .zip(bands)
        .map(|((r, t), b)| (b - (r - t).abs()) / MBPS)
        .sum()
}

/// Per-user transmit powers of one access point, W.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerAction(pub Vec<f64>);

impl PowerAction {
    pub fn zeros(n_users: usize) -> Self {
        Self(vec![0.0; n_users])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointAction {
    pub vlc_actions: Vec<PowerAction>,
    pub rf_action: PowerAction,
}

/// Identifies an agent (one per access point).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentId {
    Vlc(usize),
    Rf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub actual_rates: Vec<f64>,
    pub rf_rates: Vec<f64>,
    pub vlc_rates: Vec<f64>,
    pub target_rates: Vec<f64>,
    pub target_bands: Vec<f64>,
    pub association: Vec<Option<usize>>,
    pub per_user_vlc_bandwidth: Vec<f64>,
    pub timestep: u64,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: NetworkState,
    reward: f64,
}

impl Step {
    pub fn reward(&self) -> f64 {
        self.reward
    }

    /// Reward seen by a given agent. Every agent receives the network utility.
    pub fn reward_for(&self, _agent: AgentId) -> f64 {
        self.reward
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub layout: RoomLayout,
    pub vlc: VlcPhyParams,
    pub rf: RfPhyParams,
    /// Total bandwidth of each VLC AP, Hz.
    pub vlc_bandwidth: f64,
    pub p_max_vlc: f64,
    pub p_max_rf: f64,
    /// Fix shadowing at 0 dB and fading at its mean instead of redrawing.
    pub frozen_channel: bool,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            layout: RoomLayout::default(),
            vlc: VlcPhyParams::default(),
            rf: RfPhyParams::default(),
            vlc_bandwidth: 20e6,
            p_max_vlc: 2.0,
            p_max_rf: 0.01,
            frozen_channel: false,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.vlc.validate()?;
        self.rf.validate()?;
        if !(self.vlc_bandwidth > 0.0) {
            return Err(Error::config("VLC bandwidth must be positive"));
        }
        if !(self.p_max_vlc >= 0.0 && self.p_max_rf >= 0.0) {
            return Err(Error::config("maximum powers must be non-negative"));
        }
        Ok(())
    }
}

/// Single-owner simulation of one room with static users.
#[derive(Debug, Clone)]
pub struct Environment {
    params: EnvParams,
    users: Vec<UserConfig>,
    vlc_gains: Vec<f64>,
    rf_distances: Vec<f64>,
    rng: ChaCha8Rng,
    state: NetworkState,
}

impl Environment {
    pub fn new(params: EnvParams, users: Vec<UserConfig>, rng: ChaCha8Rng) -> Result<Self> {
        params.validate()?;
        if users.is_empty() {
            return Err(Error::config("at least one user is required"));
        }
        for (u, user) in users.iter().enumerate() {
            if !params.layout.contains(&user.position) {
                return Err(Error::config(format!("user {} lies outside the room", u + 1)));
            }
            if !(user.target_rate > 0.0) {
                return Err(Error::config(format!("user {} needs a positive target rate", u + 1)));
            }
        }
        let positions: Vec<Position> = users.iter().map(|u| u.position).collect();
        let association = associate_users(&positions, &params.layout, &params.vlc);
        let bandwidth = allocate_bandwidth(&association, params.vlc_bandwidth);
        let height = params.layout.ceiling_height;
        let vlc_gains = positions
            .iter()
            .zip(&association)
            .map(|(p, a)| match a {
                Some(l) => {
                    let ap = &params.layout.vlc_ap_positions[*l];
                    channel::vlc_channel_gain(&LinkGeometry::new(p.distance_to(ap), height), &params.vlc)
                }
                None => 0.0,
            })
            .collect();
        let rf_distances = positions
            .iter()
            .map(|p| p.distance_to(&params.layout.rf_ap_position).hypot(height))
            .collect();
        let n = users.len();
        let state = NetworkState {
            actual_rates: vec![0.0; n],
            rf_rates: vec![0.0; n],
            vlc_rates: vec![0.0; n],
            target_rates: users.iter().map(|u| u.target_rate).collect(),
            target_bands: users.iter().map(|u| u.target_band).collect(),
            association,
            per_user_vlc_bandwidth: bandwidth,
            timestep: 0,
        };
        Ok(Self {
            params,
            users,
            vlc_gains,
            rf_distances,
            rng,
            state,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_vlc_aps(&self) -> usize {
        self.params.layout.vlc_ap_positions.len()
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn users(&self) -> &[UserConfig] {
        &self.users
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    /// Static VLC channel gain of each user towards its associated AP.
    pub fn vlc_gains(&self) -> &[f64] {
        &self.vlc_gains
    }

    /// 3-D distance of each user to the RF AP.
    pub fn rf_distances(&self) -> &[f64] {
        &self.rf_distances
    }

    /// Zeroes all rates and the iteration counter.
    pub fn reset(&mut self) -> &NetworkState {
        let n = self.n_users();
        self.state.actual_rates = vec![0.0; n];
        self.state.rf_rates = vec![0.0; n];
        self.state.vlc_rates = vec![0.0; n];
        self.state.timestep = 0;
        &self.state
    }

    fn check_action(&self, name: String, action: &PowerAction, p_max: f64) -> Result<()> {
        if action.0.len() != self.n_users() {
            return Err(Error::Shape {
                expected: self.n_users(),
                got: action.0.len(),
            });
        }
        if let Some(p) = action.0.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::Constraint {
                ap: name,
                detail: format!("negative or NaN power {p}"),
            });
        }
        let total = action.total();
        if total > p_max * (1.0 + 1e-9) {
            return Err(Error::Constraint {
                ap: name,
                detail: format!("total power {total} W exceeds {p_max} W"),
            });
        }
        Ok(())
    }

    /// Applies a joint power allocation, redraws the RF channel and returns
    /// the new state with the shared reward.
    pub fn step(&mut self, action: &JointAction) -> Result<Step> {
        if action.vlc_actions.len() != self.n_vlc_aps() {
            return Err(Error::Shape {
                expected: self.n_vlc_aps(),
                got: action.vlc_actions.len(),
            });
        }
        for (l, a) in action.vlc_actions.iter().enumerate() {
            self.check_action(format!("VLC AP {l}"), a, self.params.p_max_vlc)?;
        }
        self.check_action("RF AP".into(), &action.rf_action, self.params.p_max_rf)?;

        for u in 0..self.n_users() {
            let (shadowing, fading) = if self.params.frozen_channel {
                (0.0, self.params.rf.mean_fading_power())
            } else {
                let x = self.params.rf.sample_shadowing(&mut self.rng);
                let h = self.params.rf.sample_fading_power(&mut self.rng);
                (x, h)
            };
            let loss = channel::rf_path_loss(self.rf_distances[u], shadowing, &self.params.rf);
            let rf_gain = channel::rf_channel_gain(loss, fading);
            let rf = channel::rf_rate(action.rf_action.0[u], rf_gain, &self.params.rf);
            let vlc = match self.state.association[u] {
                Some(l) => channel::vlc_rate(
                    action.vlc_actions[l].0[u],
                    self.vlc_gains[u],
                    self.state.per_user_vlc_bandwidth[u],
                    &self.params.vlc,
                ),
                None => 0.0,
            };
            self.state.rf_rates[u] = rf;
            self.state.vlc_rates[u] = vlc;
            self.state.actual_rates[u] = channel::total_rate(rf, vlc);
        }
        self.state.timestep += 1;
        let reward = utility(
            &self.state.actual_rates,
            &self.state.target_rates,
            &self.state.target_bands,
        );
        Ok(Step {
            state: self.state.clone(),
            reward,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn env_with(users: Vec<UserConfig>, frozen: bool) -> Environment {
        let params = EnvParams {
            frozen_channel: frozen,
            ..EnvParams::default()
        };
        Environment::new(params, users, ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    fn zero_action(env: &Environment) -> JointAction {
        JointAction {
            vlc_actions: vec![PowerAction::zeros(env.n_users()); env.n_vlc_aps()],
            rf_action: PowerAction::zeros(env.n_users()),
        }
    }

    #[test]
    fn placement_is_deterministic_and_uniform() {
        let layout = RoomLayout::default();
        assert_eq!(place_users(5, &layout, 7), place_users(5, &layout, 7));
        assert_eq!(place_users(5, &layout, 2).len(), 2);
        let ps = place_users(9, &layout, 10_000);
        assert!(ps.iter().all(|p| layout.contains(p)));
        let mx = ps.iter().map(|p| p.x).sum::<f64>() / ps.len() as f64;
        let my = ps.iter().map(|p| p.y).sum::<f64>() / ps.len() as f64;
        assert!(mx.abs() < 0.5 && my.abs() < 0.5, "mean ({mx}, {my})");
    }

    #[test]
    fn association_rules() {
        let layout = RoomLayout::default();
        let phy = VlcPhyParams::default();
        let users = [Position::new(3.0, 3.0), Position::new(0.0, 0.0)];
        // atan(sqrt(18)/3) is about 54.7 degrees, past the 45 degree FOV
        assert!((18f64.sqrt() / 3.0).atan().to_degrees() > 54.0);
        assert_eq!(associate_users(&users, &layout, &phy), vec![Some(3), None]);

        // equidistant from AP 0 (-3,-3) and AP 1 (-3,3); widen the FOV so both cover it
        let wide = VlcPhyParams {
            fov_half: 50f64.to_radians(),
            ..phy
        };
        let mid = [Position::new(-3.0, 0.0)];
        assert_eq!(associate_users(&mid, &layout, &wide), vec![Some(0)]);
    }

    #[test]
    fn bandwidth_sharing() {
        let bw = allocate_bandwidth(&[Some(1), Some(1), Some(2), None], 20e6);
        assert_eq!(bw, vec![10e6, 10e6, 20e6, 0.0]);
    }

    #[test]
    fn target_bands() {
        assert_relative_eq!(target_band(20e6), 1e6, max_relative = 1e-12);
        assert_relative_eq!(target_band(12e6), 0.6e6, max_relative = 1e-12);
        assert_eq!(target_band(4e6), 0.5e6);
    }

    #[test]
    fn utility_values() {
        let t = [20e6, 12e6];
        let b = [1e6, 0.6e6];
        assert_relative_eq!(utility(&t, &t, &b), 1.6, max_relative = 1e-12);
        assert_relative_eq!(utility(&[19e6, 12e6], &t, &b), 0.6, max_relative = 1e-12);
    }

    #[test]
    fn zero_power_reward() {
        let users = vec![
            UserConfig::new(Position::new(3.0, 3.0), 20e6),
            UserConfig::new(Position::new(-3.0, -2.0), 12e6),
        ];
        let mut env = env_with(users, false);
        let action = zero_action(&env);
        let step = env.step(&action).unwrap();
        assert!(step.state.actual_rates.iter().all(|r| *r == 0.0));
        assert_relative_eq!(step.reward(), (1.0 - 20.0) + (0.6 - 12.0), max_relative = 1e-12);
        assert_eq!(step.reward_for(AgentId::Rf), step.reward_for(AgentId::Vlc(2)));
    }

    #[test]
    fn frozen_channel_repeats() {
        let users = vec![
            UserConfig::new(Position::new(2.0, 3.0), 20e6),
            UserConfig::new(Position::new(-3.0, -2.0), 12e6),
        ];
        let mut env = env_with(users, true);
        let mut action = zero_action(&env);
        action.rf_action = PowerAction(vec![0.005, 0.005]);
        action.vlc_actions[3] = PowerAction(vec![1.0, 0.5]);
        action.vlc_actions[0] = PowerAction(vec![0.5, 1.5]);
        let a = env.step(&action).unwrap();
        let b = env.step(&action).unwrap();
        assert_eq!(a.state.actual_rates, b.state.actual_rates);
        assert!(a.state.vlc_rates.iter().all(|r| *r > 0.0));
    }

    #[test]
    fn constraint_violation_is_an_error() {
        let users = vec![UserConfig::new(Position::new(0.0, 0.0), 10e6)];
        let mut env = env_with(users, false);
        let mut action = zero_action(&env);
        action.vlc_actions[1] = PowerAction(vec![2.5]);
        assert!(matches!(env.step(&action), Err(Error::Constraint { .. })));
        let mut action = zero_action(&env);
        action.rf_action = PowerAction(vec![0.02]);
        assert!(matches!(env.step(&action), Err(Error::Constraint { .. })));
        let mut action = zero_action(&env);
        action.rf_action = PowerAction(vec![0.0, 0.0]);
        assert!(matches!(env.step(&action), Err(Error::Shape { .. })));
    }

    #[test]
    fn uncovered_user_has_no_vlc_rate() {
        let users = vec![UserConfig::new(Position::new(0.0, 0.0), 10e6)];
        let mut env = env_with(users, false);
        let action = JointAction {
            vlc_actions: vec![PowerAction(vec![2.0]); 4],
            rf_action: PowerAction(vec![0.01]),
        };
        let step = env.step(&action).unwrap();
        assert_eq!(step.state.vlc_rates[0], 0.0);
        assert!(step.state.rf_rates[0] > 0.0);
    }

    #[test]
    fn invalid_layout_rejected() {
        let mut params = EnvParams::default();
        params.layout.vlc_ap_positions.push(Position::new(7.0, 0.0));
        let users = vec![UserConfig::new(Position::new(0.0, 0.0), 10e6)];
        assert!(Environment::new(params, users, ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    proptest! {
        #[test]
        fn step_invariants(
            seed in 0u64..1000,
            powers in proptest::collection::vec(0.0f64..1.0, 10),
            rf in proptest::collection::vec(0.0f64..0.005, 2),
        ) {
            let layout = RoomLayout::default();
            let pos = place_users(seed, &layout, 2);
            let users: Vec<_> = pos.iter().map(|p| UserConfig::new(*p, 15e6)).collect();
            let mut env = Environment::new(EnvParams::default(), users, ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let action = JointAction {
                vlc_actions: powers.chunks(2).take(4).map(|c| PowerAction(c.to_vec())).collect(),
                rf_action: PowerAction(rf),
            };
            let step = env.step(&action).unwrap();
            let s = &step.state;
            let per_ap: usize = (0..4).map(|l| s.association.iter().filter(|a| **a == Some(l)).count()).sum();
            prop_assert!(per_ap <= 2);
            let bound: f64 = s.target_bands.iter().sum::<f64>() / 1e6;
            prop_assert!(step.reward() <= bound + 1e-12);
            for u in 0..2 {
                prop_assert_eq!(s.actual_rates[u], s.rf_rates[u] + s.vlc_rates[u]);
                if s.association[u].is_none() {
                    prop_assert_eq!(s.vlc_rates[u], 0.0);
                }
            }
            prop_assert_eq!(step.reward_for(AgentId::Rf), step.reward_for(AgentId::Vlc(0)));
        }
    }
}
