//! Independent tabular Q-learning over the discretised joint user state.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::PowerAgent;
use crate::environment::{NetworkState, PowerAction};
use crate::error::{Error, Result};
use crate::exploration;

/// Relative slack allowed when comparing a power sum against its budget.
pub const POWER_SUM_TOLERANCE: f64 = 1e-9;

/// Whether `total` fits a power budget of `max_sum`.
pub fn within_budget(total: f64, max_sum: f64) -> bool {
    total <= max_sum * (1.0 + POWER_SUM_TOLERANCE)
}

/// Rate status of one user relative to its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RateStatus {
    Below = 1,
    Above = 2,
    Within = 3,
}

impl RateStatus {
    pub fn classify(actual: f64, target: f64, band: f64) -> Self {
        if actual < target {
            RateStatus::Below
        } else if actual > target + band {
            RateStatus::Above
        } else {
            RateStatus::Within
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteState {
    per_user: Vec<RateStatus>,
}

impl DiscreteState {
    pub fn codes(&self) -> Vec<u8> {
        self.per_user.iter().map(|s| s.code()).collect()
    }

    /// Joint index in `[0, 3^N)`, first user most significant.
    pub fn index(&self) -> usize {
        self.per_user
            .iter()
            .fold(0, |acc, s| acc * 3 + (s.code() as usize - 1))
    }

    pub fn num_states(n_users: usize) -> usize {
        3usize.pow(n_users as u32)
    }
}

pub fn discretize_state(actual: &[f64], targets: &[f64], bands: &[f64]) -> DiscreteState {
    debug_assert_eq!(actual.len(), targets.len());
    DiscreteState {
        per_user: actual
            .iter()
            .zip(targets)
            .zip(bands)
            .map(|((r, t), b)| RateStatus::classify(*r, *t, *b))
            .collect(),
    }
}

/// Feasible per-user power vectors of one access point.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    actions: Vec<PowerAction>,
    levels: Vec<f64>,
    max_sum: f64,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> &PowerAction {
        &self.actions[index]
    }

    pub fn actions(&self) -> &[PowerAction] {
        &self.actions
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn max_sum(&self) -> f64 {
        self.max_sum
    }
}

/// `count` evenly spaced levels from 0 to `p_max` inclusive.
pub fn evenly_spaced_levels(count: usize, p_max: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| p_max * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// All length-`n_users` vectors over `levels` whose sum fits `max_sum`,
/// in lexicographic order of level indices.
pub fn enumerate_actions(levels: &[f64], n_users: usize, max_sum: f64) -> Result<ActionSpace> {
    if levels.is_empty() {
        return Err(Error::config("power level set is empty"));
    }
    if levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::config("power levels must be finite and non-negative"));
    }
    if n_users == 0 {
        return Err(Error::config("action space needs at least one user"));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut actions = Vec::new();
    let mut current = Vec::with_capacity(n_users);
    extend(&sorted, n_users, max_sum, 0.0, &mut current, &mut actions);
    if actions.is_empty() {
        return Err(Error::config(format!(
            "no combination of levels {sorted:?} for {n_users} users fits {max_sum} W"
        )));
    }
    Ok(ActionSpace {
        actions,
        levels: sorted,
        max_sum,
    })
}

fn extend(
    levels: &[f64],
    n_users: usize,
    max_sum: f64,
    partial: f64,
    current: &mut Vec<f64>,
    out: &mut Vec<PowerAction>,
) {
    if current.len() == n_users {
        out.push(PowerAction(current.clone()));
        return;
    }
    for &level in levels {
        let total = partial + level;
        // levels are ascending, so nothing further fits either
        if !within_budget(total, max_sum) {
            break;
        }
        current.push(level);
        extend(levels, n_users, max_sum, total, current, out);
        current.pop();
    }
}

/// Dense state-action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    num_states: usize,
    num_actions: usize,
    learning_rate: f64,
    discount: f64,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize, learning_rate: f64, discount: f64) -> Self {
        Self {
            values: vec![0.0; num_states * num_actions],
            num_states,
            num_actions,
            learning_rate,
            discount,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select_action<R: Rng + ?Sized>(&self, state: usize, eps: f64, rng: &mut R) -> usize {
        exploration::epsilon_greedy(self.row(state), eps, rng)
    }

    /// `Q(s,a) ← (1−α)Q(s,a) + α(r + γ max_a' Q(s',a'))`.
    pub fn update(&mut self, state: usize, action: usize, reward: f64, next_state: usize) {
        let best_next = self
            .row(next_state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let old = self.get(state, action);
        let alpha = self.learning_rate;
        self.set(
            state,
            action,
            (1.0 - alpha) * old + alpha * (reward + self.discount * best_next),
        );
    }

    /// Writes `state,action,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(csv_err)?;
        w.write_record(["state", "action", "value"]).map_err(csv_err)?;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                w.write_record([s.to_string(), a.to_string(), self.get(s, a).to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Q-learning agent for one access point. Sees only the observed network
/// state and the shared reward.
#[derive(Debug, Clone)]
pub struct QLearningAgent {
    table: QTable,
    actions: ActionSpace,
    rng: ChaCha8Rng,
    pending: Option<(usize, usize)>,
}

impl QLearningAgent {
    pub fn new(
        actions: ActionSpace,
        n_users: usize,
        learning_rate: f64,
        discount: f64,
        rng: ChaCha8Rng,
    ) -> Self {
        let table = QTable::new(DiscreteState::num_states(n_users), actions.len(), learning_rate, discount);
        Self {
            table,
            actions,
            rng,
            pending: None,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    fn observe(state: &NetworkState) -> usize {
        discretize_state(&state.actual_rates, &state.target_rates, &state.target_bands).index()
    }
}

impl PowerAgent for QLearningAgent {
    fn select(&mut self, state: &NetworkState, eps: f64) -> usize {
        let s = Self::observe(state);
        let a = self.table.select_action(s, eps, &mut self.rng);
        self.pending = Some((s, a));
        a
    }

    fn learn(&mut self, reward: f64, next_state: &NetworkState) {
        if let Some((s, a)) = self.pending.take() {
            let next = Self::observe(next_state);
            self.table.update(s, a, reward, next);
        }
    }

    fn action_space(&self) -> &ActionSpace {
        &self.actions
    }

    fn dump(&self, path: &Path) -> Result<()> {
        self.table.write_csv(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn state_codes() {
        let code = |r: f64| discretize_state(&[r], &[20.0], &[1.0]).codes()[0];
        assert_eq!(code(19.0), 1);
        assert_eq!(code(21.5), 2);
        assert_eq!(code(20.5), 3);
        assert_eq!(code(20.0), 3);
        assert_eq!(code(21.0), 3);
    }

    #[test]
    fn joint_index() {
        let s = discretize_state(&[30.0, 10.0], &[20.0, 12.0], &[1.0, 0.6]);
        assert_eq!(s.codes(), vec![2, 1]);
        assert_eq!(s.index(), 3);
        let s = discretize_state(&[20.5, 12.1], &[20.0, 12.0], &[1.0, 0.6]);
        assert_eq!(s.index(), 8);
    }

    #[test]
    fn small_action_space() {
        let space = enumerate_actions(&[0.0, 1.0, 2.0], 2, 2.0).unwrap();
        let got: Vec<Vec<f64>> = space.actions().iter().map(|a| a.0.clone()).collect();
        assert_eq!(
            got,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 2.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![2.0, 0.0],
            ]
        );
        let single = enumerate_actions(&[0.0, 1.0, 2.0, 3.0], 1, 2.0).unwrap();
        assert_eq!(single.len(), 3);
        let zero = enumerate_actions(&[0.0], 4, 1.0).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero.get(0).0, vec![0.0; 4]);
    }

    #[test]
    fn infeasible_action_space() {
        assert!(enumerate_actions(&[1.0, 2.0], 3, 2.0).is_err());
        assert!(enumerate_actions(&[], 2, 2.0).is_err());
        assert!(enumerate_actions(&[-1.0, 0.0], 2, 2.0).is_err());
    }

    #[test]
    fn default_spaces_have_fifteen_actions() {
        let vlc = enumerate_actions(&evenly_spaced_levels(5, 2.0), 2, 2.0).unwrap();
        let rf = enumerate_actions(&evenly_spaced_levels(5, 0.01), 2, 0.01).unwrap();
        assert_eq!(vlc.len(), 15);
        assert_eq!(rf.len(), 15);
    }

    #[test]
    fn q_update_cases() {
        let mut q = QTable::new(2, 2, 0.5, 0.5);
        q.update(0, 1, 1.0, 1);
        assert_eq!(q.get(0, 1), 0.5);
        assert_eq!(q.values().iter().filter(|v| **v != 0.0).count(), 1);

        let mut frozen = QTable::new(2, 2, 0.0, 0.5);
        frozen.set(1, 0, 3.0);
        let before = frozen.clone();
        frozen.update(0, 0, 7.0, 1);
        assert_eq!(frozen, before);

        let mut assign = QTable::new(2, 2, 1.0, 0.0);
        assign.set(1, 1, 100.0);
        assign.update(0, 0, -2.25, 1);
        assert_eq!(assign.get(0, 0), -2.25);
    }

    #[test]
    fn select_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = QTable::new(1, 3, 0.5, 0.5);
        assert_eq!(q.select_action(0, 0.0, &mut rng), 0);
        q.set(0, 1, 5.0);
        q.set(0, 2, 5.0);
        assert_eq!(q.select_action(0, 0.0, &mut rng), 1);
    }

    #[test]
    fn select_uniform_when_eps_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = QTable::new(1, 3, 0.5, 0.5);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[q.select_action(0, 1.0, &mut rng)] += 1;
        }
        let expected = n as f64 / 3.0;
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let mut q = QTable::new(2, 2, 0.5, 0.5);
        q.set(1, 0, -0.25);
        q.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "state,action,value\n0,0,0\n0,1,0\n1,0,-0.25\n1,1,0\n");
    }

    proptest! {
        #[test]
        fn state_code_is_total(r in -50.0f64..80.0, t in 0.1f64..40.0, b in 0.01f64..5.0) {
            let s = RateStatus::classify(r, t, b);
            let branches = [r < t, r > t + b, t <= r && r <= t + b];
            prop_assert_eq!(branches.iter().filter(|x| **x).count(), 1);
            let expected = match branches.iter().position(|x| *x).unwrap() {
                0 => RateStatus::Below,
                1 => RateStatus::Above,
                _ => RateStatus::Within,
            };
            prop_assert_eq!(s, expected);
        }

        #[test]
        fn q_values_stay_bounded(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut q = QTable::new(9, 15, 0.5, 0.5);
            let r_max = 10.0;
            for _ in 0..5000 {
                let (s, a, s2) = (rng.random_range(0..9), rng.random_range(0..15), rng.random_range(0..9));
                q.update(s, a, rng.random_range(-r_max..r_max), s2);
            }
            let bound = r_max / (1.0 - 0.5);
            prop_assert!(q.values().iter().all(|v| v.is_finite() && v.abs() <= bound));
        }
    }
}
