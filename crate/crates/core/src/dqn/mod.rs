//! Deep Q-network agents: continuous rate observations, an MLP value
//! function trained with MSE and Adam from uniform experience replay.
//!
//! TD targets come from the same network being trained; there is no
//! separate target network.

mod adam;
mod mlp;
mod replay;

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamState};
pub use mlp::MlpParams;
pub use replay::{ReplayBuffer, Transition};

use crate::agent::PowerAgent;
use crate::environment::NetworkState;
use crate::error::{Error, Result};
use crate::exploration;
use crate::tabular::ActionSpace;

/// `[R1, T1, …, RN, TN] / norm`.
pub fn build_state_vector(actual: &[f64], targets: &[f64], norm: f64) -> Vec<f64> {
    debug_assert_eq!(actual.len(), targets.len());
    actual
        .iter()
        .zip(targets)
        .flat_map(|(r, t)| [r / norm, t / norm])
        .collect()
}

pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    params.forward(input)
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn stack_inputs<'a>(params: &MlpParams, rows: impl Iterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut stacked = Vec::new();
    for row in rows {
        params.check_input(row)?;
        stacked.extend_from_slice(row);
    }
    Ok(stacked)
}

/// `y_j = r_j + γ max_a Q(s_{j+1}, a)` using the online network.
pub fn td_targets(batch: &[Transition], params: &MlpParams, discount: f64) -> Result<Vec<f64>> {
    if discount == 0.0 || batch.is_empty() {
        return Ok(batch.iter().map(|t| t.reward).collect());
    }
    let inputs = stack_inputs(params, batch.iter().map(|t| t.next_state.as_slice()))?;
    let mut acts = Vec::new();
    params.forward_batch(&inputs, batch.len(), &mut acts);
    let q_next = acts.last().unwrap();
    Ok(batch
        .iter()
        .zip(q_next.chunks_exact(params.n_outputs()))
        .map(|(t, q)| t.reward + discount * max_of(q))
        .collect())
}

/// Batch loss `mean ½(y_j − Q(s_j, a_j))²` and its gradient, with targets
/// held constant.
pub fn mse_loss_and_grad(
    params: &MlpParams,
    batch: &[Transition],
    targets: &[f64],
) -> Result<(f64, MlpParams)> {
    if batch.len() != targets.len() {
        return Err(Error::Shape {
            expected: batch.len(),
            got: targets.len(),
        });
    }
    let mut grad = params.zeros_like();
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let n_out = params.n_outputs();
    if let Some(t) = batch.iter().find(|t| t.action_index >= n_out) {
        return Err(Error::Shape {
            expected: n_out,
            got: t.action_index + 1,
        });
    }
    let inputs = stack_inputs(params, batch.iter().map(|t| t.state.as_slice()))?;
    let mut acts = Vec::new();
    params.forward_batch(&inputs, batch.len(), &mut acts);
    let q = acts.last().unwrap();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut d_out = vec![0.0; batch.len() * n_out];
    for (j, (t, y)) in batch.iter().zip(targets).enumerate() {
        let residual = q[j * n_out + t.action_index] - y;
        loss += 0.5 * residual * residual * scale;
        d_out[j * n_out + t.action_index] = residual * scale;
    }
    params.backward_batch(&acts, &d_out, batch.len(), &mut grad);
    Ok((loss, grad))
}

pub fn mse_grad(params: &MlpParams, batch: &[Transition], targets: &[f64]) -> Result<MlpParams> {
    mse_loss_and_grad(params, batch, targets).map(|(_, g)| g)
}

pub fn mse_loss(params: &MlpParams, batch: &[Transition], targets: &[f64]) -> Result<f64> {
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let q = params.forward(&t.state)?[t.action_index];
        loss += 0.5 * (q - y) * (q - y);
    }
    Ok(loss / batch.len().max(1) as f64)
}

pub fn dqn_select_action<R: Rng + ?Sized>(
    params: &MlpParams,
    state: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    let q = params.forward(state)?;
    Ok(exploration::epsilon_greedy(&q, eps, rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub discount: f64,
    /// Divisor applied to rates (bit/s) before they enter the network.
    pub rate_norm: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![32, 32, 32],
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_hat: 1e-8,
            replay_capacity: 10_000,
            batch_size: 32,
            discount: 0.5,
            rate_norm: 50e6,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layers must have at least one unit"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("Adam learning rate must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon_hat > 0.0) {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 {
            return Err(Error::config("replay capacity and minibatch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("discount must lie in [0, 1)"));
        }
        if !(self.rate_norm > 0.0) {
            return Err(Error::config("state normalisation constant must be positive"));
        }
        Ok(())
    }

    pub fn topology(&self, n_users: usize, n_actions: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(2 * n_users);
        sizes.extend(&self.hidden_layers);
        sizes.push(n_actions);
        sizes
    }
}

/// DQN agent for one access point.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    params: MlpParams,
    adam: AdamState,
    replay: ReplayBuffer,
    actions: ActionSpace,
    config: DqnConfig,
    rng: ChaCha8Rng,
    seed: u64,
    pending: Option<(Vec<f64>, usize)>,
    last_loss: Option<f64>,
}

impl DqnAgent {
    /// Builds an agent whose weights, exploration and sampling all derive
    /// from `rng`; `seed` is only recorded in weight snapshots.
    pub fn new(
        actions: ActionSpace,
        n_users: usize,
        config: DqnConfig,
        mut rng: ChaCha8Rng,
        seed: u64,
    ) -> Self {
        let params = MlpParams::random(&config.topology(n_users, actions.len()), &mut rng);
        let adam = AdamState::new(params.len(), config.learning_rate)
            .with_betas(config.beta1, config.beta2)
            .with_epsilon(config.epsilon_hat);
        let replay = ReplayBuffer::new(config.replay_capacity);
        Self {
            params,
            adam,
            replay,
            actions,
            config,
            rng,
            seed,
            pending: None,
            last_loss: None,
        }
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn observe(&self, state: &NetworkState) -> Vec<f64> {
        build_state_vector(&state.actual_rates, &state.target_rates, self.config.rate_norm)
    }

    /// TD targets, MSE gradient, one Adam step. Returns the batch loss
    /// measured before the update.
    pub fn train_step(&mut self, minibatch: &[Transition]) -> Result<f64> {
        let targets = td_targets(minibatch, &self.params, self.config.discount)?;
        let (loss, grad) = mse_loss_and_grad(&self.params, minibatch, &targets)?;
        adam_step(&mut self.params, &grad, &mut self.adam);
        self.last_loss = Some(loss);
        Ok(loss)
    }
}

impl PowerAgent for DqnAgent {
    fn select(&mut self, state: &NetworkState, eps: f64) -> usize {
        let s = self.observe(state);
        let a = dqn_select_action(&self.params, &s, eps, &mut self.rng)
            .expect("observation width matches the network input");
        self.pending = Some((s, a));
        a
    }

    fn learn(&mut self, reward: f64, next_state: &NetworkState) {
        let Some((state, action_index)) = self.pending.take() else {
            return;
        };
        let next_state = self.observe(next_state);
        self.replay.push(Transition {
            state,
            action_index,
            reward,
            next_state,
        });
        if self.replay.len() >= self.config.batch_size {
            let batch = self
                .replay
                .sample(self.config.batch_size, &mut self.rng)
                .expect("buffer is non-empty");
            self.train_step(&batch)
                .expect("replayed transitions match the network shape");
        }
    }

    fn action_space(&self) -> &ActionSpace {
        &self.actions
    }

    fn dump(&self, path: &Path) -> Result<()> {
        self.params.write_csv(path, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    use crate::tabular::enumerate_actions;

    fn tr(state: Vec<f64>, action_index: usize, reward: f64, next_state: Vec<f64>) -> Transition {
        Transition {
            state,
            action_index,
            reward,
            next_state,
        }
    }

    #[test]
    fn state_vector() {
        let v = build_state_vector(&[20e6, 12e6], &[20e6, 12e6], 50e6);
        assert_eq!(v.len(), 4);
        for (a, b) in v.iter().zip([0.4, 0.4, 0.24, 0.24]) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        assert_eq!(build_state_vector(&[0.0; 3], &[0.0; 3], 50e6), vec![0.0; 6]);
    }

    /// 1 input, 1 hidden unit, 2 outputs:
    /// h = relu(2x − 0.5), q = [h + 0.1, −h + 1].
    fn tiny_net() -> MlpParams {
        let mut net = MlpParams::zeros(&[1, 1, 2]);
        {
            let (w, b) = net.layer_mut(0);
            w[0] = 2.0;
            b[0] = -0.5;
        }
        {
            let (w, b) = net.layer_mut(1);
            w.copy_from_slice(&[1.0, -1.0]);
            b.copy_from_slice(&[0.1, 1.0]);
        }
        net
    }

    #[test]
    fn td_target_cases() {
        let batch = vec![tr(vec![0.0], 0, 1.5, vec![1.0])];
        let net = tiny_net();
        assert_eq!(td_targets(&batch, &net, 0.0).unwrap(), vec![1.5]);
        assert_eq!(td_targets(&batch, &MlpParams::zeros(&[1, 1, 2]), 0.9).unwrap(), vec![1.5]);
        // s' = 1: h = 1.5, q = [1.6, −0.5], max = 1.6 → y = 1.5 + 0.5·1.6
        let y = td_targets(&batch, &net, 0.5).unwrap();
        assert_relative_eq!(y[0], 2.3, max_relative = 1e-12);
    }

    #[test]
    fn select_known_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = tiny_net();
        // x = 1: q = [1.6, −0.5]; x = 0: h = 0, q = [0.1, 1.0]
        assert_eq!(dqn_select_action(&net, &[1.0], 0.0, &mut rng).unwrap(), 0);
        assert_eq!(dqn_select_action(&net, &[0.0], 0.0, &mut rng).unwrap(), 1);
        let zero = MlpParams::zeros(&[4, 8, 5]);
        assert_eq!(dqn_select_action(&zero, &[0.1; 4], 0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn select_uniform_when_eps_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = tiny_net();
        let mut counts = [0f64; 2];
        for _ in 0..100_000 {
            counts[dqn_select_action(&net, &[1.0], 1.0, &mut rng).unwrap()] += 1.0;
        }
        let chi2: f64 = counts.iter().map(|c| (c - 50_000.0).powi(2) / 50_000.0).sum();
        // 99% quantile with one degree of freedom
        assert!(chi2 < 6.635, "chi2 = {chi2}");
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let net = tiny_net();
        let batch = vec![tr(vec![1.0], 0, 0.0, vec![0.0]), tr(vec![0.0], 1, 0.0, vec![0.0])];
        let targets = vec![1.6, 1.0];
        let g = mse_grad(&net, &batch, &targets).unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_scales_with_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpParams::random(&[4, 16, 16, 6], &mut rng);
        let batch: Vec<Transition> = (0..5)
            .map(|i| tr(vec![0.1 * i as f64, 0.3, -0.2, 0.5], i % 6, 0.0, vec![0.0; 4]))
            .collect();
        let preds: Vec<f64> = batch.iter().map(|t| net.forward(&t.state).unwrap()[t.action_index]).collect();
        let targets1: Vec<f64> = preds.iter().map(|p| p - 1.0).collect();
        let targets3: Vec<f64> = preds.iter().map(|p| p - 3.0).collect();
        let g1 = mse_grad(&net, &batch, &targets1).unwrap();
        let g3 = mse_grad(&net, &batch, &targets3).unwrap();
        for (a, b) in g1.as_slice().iter().zip(g3.as_slice()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn overfits_one_transition() {
        let rng = ChaCha8Rng::seed_from_u64(9);
        let actions = enumerate_actions(&[0.0, 1.0, 2.0], 2, 2.0).unwrap();
        let config = DqnConfig {
            discount: 0.0,
            ..DqnConfig::default()
        };
        let mut agent = DqnAgent::new(actions, 2, config, rng, 9);
        let batch = vec![tr(vec![0.4, 0.4, 0.24, 0.24], 3, 0.8, vec![0.1, 0.4, 0.3, 0.24])];
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            loss = agent.train_step(&batch).unwrap();
            assert!(loss >= 0.0);
        }
        assert!(loss < 1e-3);
        let q = agent.params().forward(&batch[0].state).unwrap()[3];
        assert_relative_eq!(q, 0.8, epsilon = 0.05);
    }

    #[test]
    fn identical_seeds_identical_agents() {
        let actions = enumerate_actions(&[0.0, 1.0, 2.0], 2, 2.0).unwrap();
        let make = || DqnAgent::new(actions.clone(), 2, DqnConfig::default(), ChaCha8Rng::seed_from_u64(4), 4);
        let (mut a, mut b) = (make(), make());
        let batch = vec![tr(vec![0.1, 0.2, 0.3, 0.4], 1, -3.0, vec![0.2, 0.2, 0.3, 0.4])];
        for _ in 0..20 {
            a.train_step(&batch).unwrap();
            b.train_step(&batch).unwrap();
        }
        assert_eq!(a.params(), b.params());
        assert_eq!(a.adam(), b.adam());
    }
}
