use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, ExperimentConfig, TargetMode};
use super::convergence::ConvergenceTracker;
use crate::agent::PowerAgent;
use crate::dqn::DqnAgent;
use crate::environment::{place_users, AgentId, Environment, JointAction, Position, UserConfig};
use crate::error::Result;
use crate::exploration::epsilon;
use crate::tabular::{enumerate_actions, QLearningAgent};

// Independent ChaCha streams carved out of one episode seed.
const TARGET_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const AGENT_STREAM_BASE: u64 = 16;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Users of one episode: positions and targets drawn from the seed (or
/// taken from the config when fixed).
pub fn episode_users(cfg: &ExperimentConfig, seed: u64) -> Vec<UserConfig> {
    let positions = cfg
        .fixed_positions()
        .unwrap_or_else(|| place_users(seed, &cfg.layout(), cfg.n_users));
    let targets: Vec<f64> = match cfg.target_mode {
        TargetMode::Preset => cfg.target_rates_mbps.iter().map(|t| t * 1e6).collect(),
        TargetMode::Uniform => {
            let mut rng = stream_rng(seed, TARGET_STREAM);
            (0..cfg.n_users)
                .map(|_| rng.random_range(cfg.target_min_mbps..=cfg.target_max_mbps) * 1e6)
                .collect()
        }
    };
    positions
        .into_iter()
        .zip(targets)
        .map(|(p, t)| UserConfig::new(p, t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub positions: Vec<Position>,
    /// bit/s per user.
    pub targets: Vec<f64>,
    pub bands: Vec<f64>,
    /// One rate trace (bit/s) per user, one entry per iteration.
    pub rates: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// 1-based start of the first converging window.
    pub convergence_iteration: Option<usize>,
    pub window: usize,
    pub wall_time: Duration,
}

impl EpisodeRecord {
    pub fn iterations(&self) -> usize {
        self.rewards.len()
    }

    /// Mean over users of `|mean rate − T|` across the converging window, Mbps.
    pub fn steady_state_gap(&self) -> Option<f64> {
        let start = self.convergence_iteration? - 1;
        let n = self.targets.len() as f64;
        let gap = self
            .rates
            .iter()
            .zip(&self.targets)
            .map(|(trace, t)| {
                let mean = trace[start..start + self.window].iter().sum::<f64>() / self.window as f64;
                (mean - t).abs() / 1e6
            })
            .sum::<f64>();
        Some(gap / n)
    }

    /// Records agree on everything except wall time.
    pub fn same_outcome(&self, other: &EpisodeRecord) -> bool {
        self.seed == other.seed
            && self.algorithm == other.algorithm
            && self.positions == other.positions
            && self.targets == other.targets
            && self.bands == other.bands
            && self.rates == other.rates
            && self.rewards == other.rewards
            && self.epsilons == other.epsilons
            && self.convergence_iteration == other.convergence_iteration
    }
}

type BoxedAgent = Box<dyn PowerAgent + Send>;

/// Builds one agent per VLC AP followed by the RF agent.
fn build_agents(cfg: &ExperimentConfig, n_vlc: usize, seed: u64) -> Result<Vec<(AgentId, BoxedAgent)>> {
    let vlc_space = enumerate_actions(&cfg.vlc_levels(), cfg.n_users, cfg.p_max_vlc_w)?;
    let rf_space = enumerate_actions(&cfg.rf_levels(), cfg.n_users, cfg.p_max_rf_w)?;
    let ids = (0..n_vlc).map(AgentId::Vlc).chain(std::iter::once(AgentId::Rf));
    Ok(ids
        .enumerate()
        .map(|(k, id)| {
            let space = match id {
                AgentId::Vlc(_) => vlc_space.clone(),
                AgentId::Rf => rf_space.clone(),
            };
            let rng = stream_rng(seed, AGENT_STREAM_BASE + k as u64);
            let agent: BoxedAgent = match cfg.algorithm {
                Algorithm::Ql => Box::new(QLearningAgent::new(
                    space,
                    cfg.n_users,
                    cfg.learning_rate,
                    cfg.discount,
                    rng,
                )),
                Algorithm::Dqn => Box::new(DqnAgent::new(space, cfg.n_users, cfg.dqn_config(), rng, seed)),
            };
            (id, agent)
        })
        .collect())
}

/// A finished episode together with its trained agents.
pub struct EpisodeRun {
    pub record: EpisodeRecord,
    pub agents: Vec<(AgentId, BoxedAgent)>,
}

/// Runs one episode until convergence or `max_iterations`.
pub fn run_episode(cfg: &ExperimentConfig, seed: u64) -> Result<EpisodeRecord> {
    run_episode_with_agents(cfg, seed).map(|run| run.record)
}

pub fn run_episode_with_agents(cfg: &ExperimentConfig, seed: u64) -> Result<EpisodeRun> {
    cfg.validate()?;
    let started = Instant::now();
    let users = episode_users(cfg, seed);
    let mut env = Environment::new(cfg.env_params(), users.clone(), stream_rng(seed, CHANNEL_STREAM))?;
    let mut agents = build_agents(cfg, env.n_vlc_aps(), seed)?;

    let n = cfg.n_users;
    let targets: Vec<f64> = users.iter().map(|u| u.target_rate).collect();
    let bands: Vec<f64> = users.iter().map(|u| u.target_band).collect();
    let tracker = ConvergenceTracker::new(targets.clone(), bands.clone(), cfg.convergence_window);
    let mut rates: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.max_iterations); n];
    let mut rewards = Vec::with_capacity(cfg.max_iterations);
    let mut epsilons = Vec::with_capacity(cfg.max_iterations);
    let mut convergence = None;

    let mut state = env.reset().clone();
    for t in 1..=cfg.max_iterations as u64 {
        let eps = epsilon(t);
        let mut joint = JointAction {
            vlc_actions: Vec::with_capacity(env.n_vlc_aps()),
            rf_action: Default::default(),
        };
        for (id, agent) in agents.iter_mut() {
            let a = agent.select(&state, eps);
            let power = agent.action_space().get(a).clone();
            match id {
                AgentId::Vlc(_) => joint.vlc_actions.push(power),
                AgentId::Rf => joint.rf_action = power,
            }
        }
        let step = env.step(&joint)?;
        for (id, agent) in agents.iter_mut() {
            agent.learn(step.reward_for(*id), &step.state);
        }
        for (trace, r) in rates.iter_mut().zip(&step.state.actual_rates) {
            trace.push(*r);
        }
        rewards.push(step.reward());
        epsilons.push(eps);
        state = step.state;
        if let Some(c) = tracker.check(&rates) {
            convergence = Some(c);
            break;
        }
    }

    let record = EpisodeRecord {
        seed,
        algorithm: cfg.algorithm,
        positions: users.iter().map(|u| u.position).collect(),
        targets,
        bands,
        rates,
        rewards,
        epsilons,
        convergence_iteration: convergence,
        window: cfg.convergence_window,
        wall_time: started.elapsed(),
    };
    Ok(EpisodeRun { record, agents })
}
