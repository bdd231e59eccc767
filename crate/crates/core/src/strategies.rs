//! Policies that pick an action for one agent: the ladder-step baseline, the
//! learned Q-network policy, uniform random play and fixed per-phase tables.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::{argmax, EnvStep, QNetwork, TrainingEnv};
use crate::error::{Error, Result};
use crate::firms::{AgentState, Phase};
use crate::game::{bid_amount, Action, Game, GameConfig, Observation, N_ACTIONS, OBS_DIM};
use crate::geology::InfoLevel;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    StandardLadder,
    RlOptimized,
    Random,
    Scripted,
}

impl PolicyKind {
    pub fn short(self) -> &'static str {
        match self {
            PolicyKind::StandardLadder => "SLS",
            PolicyKind::RlOptimized => "RLOS",
            PolicyKind::Random => "random",
            PolicyKind::Scripted => "scripted",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sls" | "ladder" | "standard" => Ok(PolicyKind::StandardLadder),
            "rlos" | "rl" | "dqn" => Ok(PolicyKind::RlOptimized),
            "random" => Ok(PolicyKind::Random),
            "scripted" => Ok(PolicyKind::Scripted),
            other => Err(Error::config(format!("unknown policy '{other}'"))),
        }
    }
}

pub trait Policy: Send + Sync {
    fn kind(&self) -> PolicyKind;
    fn act(&self, obs: &Observation, agent: &AgentState, rng: &mut SimRng) -> Result<Action>;
}

/// Data ladder and proceed rule of the baseline strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderParams {
    pub bidding: InfoLevel,
    pub exploration: InfoLevel,
    pub development: InfoLevel,
    /// Data bought while producing; sits outside the appraisal ladder.
    pub production: InfoLevel,
    /// Proceed when CE project value >= this multiple of remaining cost.
    pub proceed_multiplier: f64,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self {
            bidding: InfoLevel::Low,
            exploration: InfoLevel::Med,
            development: InfoLevel::High,
            production: InfoLevel::None,
            proceed_multiplier: 1.2,
        }
    }
}

impl LadderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bidding <= self.exploration && self.exploration <= self.development) {
            return Err(Error::config(
                "ladder data levels must be non-decreasing from bidding to development",
            ));
        }
        if !(self.proceed_multiplier > 0.0 && self.proceed_multiplier.is_finite()) {
            return Err(Error::config("proceed_multiplier must be > 0"));
        }
        Ok(())
    }

    pub fn eta(&self, phase: Phase) -> InfoLevel {
        match phase {
            Phase::Bidding => self.bidding,
            Phase::Exploration => self.exploration,
            Phase::Development => self.development,
            Phase::Production => self.production,
            Phase::Exited => InfoLevel::None,
        }
    }
}

/// Years left before first oil, counting the current phase's remainder.
fn years_to_production(agent: &AgentState, cfg: &GameConfig) -> u32 {
    let d = &cfg.durations;
    let age = agent.phase_age;
    match agent.phase {
        Phase::Bidding => d.bidding.saturating_sub(age) + d.exploration + d.development,
        Phase::Exploration => d.exploration.saturating_sub(age) + d.development,
        Phase::Development => d.development.saturating_sub(age),
        Phase::Production | Phase::Exited => 0,
    }
}

fn firm_discount(agent: &AgentState, cfg: &GameConfig) -> f64 {
    1.0 / (1.0 + cfg.npv_base_rate + agent.risk_premium)
}

/// Present value, at the firm's rate, of the production still ahead when
/// the lead is worth its certainty equivalent at the long-run price.
pub fn ce_project_value(agent: &AgentState, cfg: &GameConfig) -> Option<f64> {
    let belief = agent.belief?;
    let lambda = cfg.bid.risk_aversion * agent.risk_premium;
    let reserves = cfg
        .production
        .reserves_mmbbl(belief.certainty_equivalent(lambda));
    let d = firm_discount(agent, cfg);
    let lead_in = years_to_production(agent, cfg);
    let t_prod = cfg.durations.production;
    let start = if agent.phase == Phase::Production {
        agent.phase_age
    } else {
        0
    };
    let price = cfg.price_params.pbar;
    let pv = (start..t_prod)
        .map(|k| {
            let q = cfg.production.volume(reserves, k, t_prod);
            (price * q - cfg.costs.opex) * d.powi((lead_in + k - start) as i32)
        })
        .sum();
    Some(pv)
}

/// Present value of the capex still ahead, plus the bid while bidding.
pub fn remaining_cost(agent: &AgentState, cfg: &GameConfig) -> f64 {
    let d = firm_discount(agent, cfg);
    let dur = &cfg.durations;
    let costs = &cfg.costs;
    let age = agent.phase_age;
    let mut schedule: Vec<f64> = Vec::new();
    let mut bid = 0.0;
    match agent.phase {
        Phase::Bidding => {
            if let Some(b) = agent.belief {
                bid = bid_amount(&b, agent.risk_premium, &cfg.bid);
            }
            schedule.extend(std::iter::repeat_n(
                0.0,
                dur.bidding.saturating_sub(age) as usize,
            ));
            schedule.extend(std::iter::repeat_n(
                costs.annual_capex(Phase::Exploration, dur),
                dur.exploration as usize,
            ));
            schedule.extend(std::iter::repeat_n(
                costs.annual_capex(Phase::Development, dur),
                dur.development as usize,
            ));
        }
        Phase::Exploration => {
            let left = dur.exploration.saturating_sub(age) as usize;
            schedule.extend(std::iter::repeat_n(
                costs.annual_capex(Phase::Exploration, dur),
                left,
            ));
            schedule.extend(std::iter::repeat_n(
                costs.annual_capex(Phase::Development, dur),
                dur.development as usize,
            ));
        }
        Phase::Development => {
            let left = dur.development.saturating_sub(age) as usize;
            schedule.extend(std::iter::repeat_n(
                costs.annual_capex(Phase::Development, dur),
                left,
            ));
        }
        Phase::Production | Phase::Exited => {}
    }
    // Payment for the current year's step is due now, hence exponent k.
    let pv: f64 = schedule
        .iter()
        .enumerate()
        .map(|(k, c)| c * d.powi(k as i32))
        .sum();
    bid + pv
}

/// Baseline decision: fixed data ladder, proceed on a risk-adjusted hurdle.
pub fn ladder_action(agent: &AgentState, cfg: &GameConfig, params: &LadderParams) -> Action {
    match agent.phase {
        Phase::Exited => Action::DEFER,
        Phase::Production => Action::proceed(params.production),
        phase => {
            let value = ce_project_value(agent, cfg).unwrap_or(f64::NEG_INFINITY);
            let proceed = value >= params.proceed_multiplier * remaining_cost(agent, cfg);
            Action::new(proceed, params.eta(phase))
        }
    }
}

/// Argmax of the network's Q-values, ties to the lowest action index.
pub fn greedy_action(obs: &Observation, net: &QNetwork) -> Result<Action> {
    let q = net.predict(obs.as_slice())?;
    let idx = argmax(&q)?;
    Action::from_index(idx).ok_or_else(|| Error::Shape {
        expected: format!("{N_ACTIONS} Q outputs"),
        got: format!("{}", q.len()),
    })
}

pub fn epsilon_greedy<R: Rng + ?Sized>(
    obs: &Observation,
    net: &QNetwork,
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::domain(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    if rng.random::<f64>() < epsilon {
        Ok(Action::from_index(rng.random_range(0..N_ACTIONS)).expect("index in range"))
    } else {
        greedy_action(obs, net)
    }
}

#[derive(Debug, Clone)]
pub struct LadderPolicy {
    pub params: LadderParams,
    pub config: GameConfig,
}

impl Policy for LadderPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::StandardLadder
    }

    fn act(&self, _obs: &Observation, agent: &AgentState, _rng: &mut SimRng) -> Result<Action> {
        Ok(ladder_action(agent, &self.config, &self.params))
    }
}

/// Greedy play of a frozen network. Exited agents always defer.
#[derive(Debug, Clone)]
pub struct RlPolicy {
    pub net: QNetwork,
}

impl Policy for RlPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::RlOptimized
    }

    fn act(&self, obs: &Observation, agent: &AgentState, _rng: &mut SimRng) -> Result<Action> {
        if agent.phase == Phase::Exited {
            return Ok(Action::DEFER);
        }
        greedy_action(obs, &self.net)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn act(&self, _obs: &Observation, agent: &AgentState, rng: &mut SimRng) -> Result<Action> {
        if agent.phase == Phase::Exited {
            return Ok(Action::DEFER);
        }
        Ok(Action::from_index(rng.random_range(0..N_ACTIONS)).expect("index in range"))
    }
}

/// One fixed action per phase, in `Phase::index` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedPolicy {
    pub table: [Action; 5],
}

impl Policy for ScriptedPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Scripted
    }

    fn act(&self, _obs: &Observation, agent: &AgentState, _rng: &mut SimRng) -> Result<Action> {
        Ok(self.table[agent.phase.index()])
    }
}

/// The game seen through the learner-loop interface; league opponents play
/// the ladder.
#[derive(Debug, Clone)]
pub struct GameEnv {
    game: Game,
    ladder: LadderParams,
}

impl GameEnv {
    pub fn new(game: Game, ladder: LadderParams) -> Result<Self> {
        ladder.validate()?;
        Ok(Self { game, ladder })
    }

    pub fn game(&self) -> &Game {
        &self.game
    }
}

impl TrainingEnv for GameEnv {
    fn n_agents(&self) -> usize {
        self.game.n_agents()
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .game
            .reset_with_seed(seed)?
            .into_iter()
            .map(Observation::into_vec)
            .collect())
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let acts = actions
            .iter()
            .map(|&i| {
                Action::from_index(i).ok_or_else(|| Error::Shape {
                    expected: format!("action < {N_ACTIONS}"),
                    got: format!("{i}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = self.game.step(&acts)?;
        let mut step = EnvStep {
            observations: Vec::with_capacity(acts.len()),
            rewards: Vec::with_capacity(acts.len()),
            done: Vec::with_capacity(acts.len()),
            episode_done: out.episode_done,
        };
        for a in out.agents {
            step.rewards.push(a.reward);
            step.done.push(a.done);
            step.observations.push(a.observation.into_vec());
        }
        Ok(step)
    }

    fn baseline_action(&self, agent: usize) -> usize {
        ladder_action(self.game.agent(agent), self.game.config(), &self.ladder).index()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firms::{default_profiles, sample_agent_init, RiskPremiumParams};
    use crate::geology::{Belief, LeadSpec};
    use crate::rng::stream_rng;

    fn agent(phase: Phase, mu_log: f64, sigma_log: f64) -> AgentState {
        let p = &default_profiles(&RiskPremiumParams::default()).unwrap()[0];
        let mut a = sample_agent_init(p, 0, 0, &mut stream_rng(1, 5));
        a.phase = phase;
        a.belief = Some(Belief::prior(&LeadSpec {
            lead_id: 0,
            mu_log,
            sigma_log,
        }));
        a
    }

    #[test]
    fn ladder_levels_by_phase() {
        let cfg = GameConfig::default();
        let p = LadderParams::default();
        assert_eq!(
            ladder_action(&agent(Phase::Bidding, 6.0, 0.5), &cfg, &p).eta,
            InfoLevel::Low
        );
        assert_eq!(
            ladder_action(&agent(Phase::Exploration, 6.0, 0.5), &cfg, &p).eta,
            InfoLevel::Med
        );
        assert_eq!(
            ladder_action(&agent(Phase::Development, 6.0, 0.5), &cfg, &p).eta,
            InfoLevel::High
        );
        assert_eq!(
            ladder_action(&agent(Phase::Production, 6.0, 0.5), &cfg, &p),
            Action::proceed(InfoLevel::None)
        );
    }

    #[test]
    fn ladder_proceeds_on_large_leads_only() {
        let cfg = GameConfig::default();
        let p = LadderParams::default();
        assert!(ladder_action(&agent(Phase::Bidding, 6.6, 0.3), &cfg, &p).proceed);
        assert!(!ladder_action(&agent(Phase::Bidding, 4.0, 0.3), &cfg, &p).proceed);
    }

    #[test]
    fn non_monotone_ladder_is_rejected() {
        let p = LadderParams {
            exploration: InfoLevel::High,
            development: InfoLevel::Low,
            ..LadderParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn remaining_cost_by_hand() {
        let mut cfg = GameConfig::default();
        cfg.durations.development = 2;
        cfg.costs.development_capex = 100.0;
        let mut a = agent(Phase::Development, 6.0, 0.5);
        a.risk_premium = 0.25;
        // 50 now, 50 in a year at 25%.
        assert!((remaining_cost(&a, &cfg) - (50.0 + 40.0)).abs() < 1e-12);
        a.phase_age = 1;
        assert!((remaining_cost(&a, &cfg) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn zero_network_picks_first_action() {
        let net = QNetwork::zeros(crate::dqn::NetworkSpec::new(OBS_DIM, N_ACTIONS)).unwrap();
        let obs = Observation::from_vec(vec![0.5; OBS_DIM]);
        assert_eq!(
            greedy_action(&obs, &net).unwrap(),
            Action::from_index(0).unwrap()
        );
    }

    #[test]
    fn biased_network_picks_its_favorite() {
        let mut net = QNetwork::zeros(crate::dqn::NetworkSpec::new(OBS_DIM, N_ACTIONS)).unwrap();
        let mut bias = [0.0; N_ACTIONS];
        bias[6] = 1.0;
        net.set_output_bias(&bias).unwrap();
        let obs = Observation::from_vec(vec![0.5; OBS_DIM]);
        assert_eq!(greedy_action(&obs, &net).unwrap().index(), 6);
        let mut rng = stream_rng(0, 6);
        for _ in 0..100 {
            assert_eq!(
                epsilon_greedy(&obs, &net, 0.0, &mut rng).unwrap().index(),
                6
            );
        }
    }

    #[test]
    fn epsilon_one_is_uniform_and_half_is_half_greedy() {
        let mut net = QNetwork::zeros(crate::dqn::NetworkSpec::new(OBS_DIM, N_ACTIONS)).unwrap();
        let mut bias = [0.0; N_ACTIONS];
        bias[6] = 1.0;
        net.set_output_bias(&bias).unwrap();
        let obs = Observation::from_vec(vec![0.5; OBS_DIM]);
        let mut rng = stream_rng(3, 6);
        let mut counts = [0usize; N_ACTIONS];
        for _ in 0..10_000 {
            counts[epsilon_greedy(&obs, &net, 1.0, &mut rng).unwrap().index()] += 1;
        }
        let e = 10_000.0 / N_ACTIONS as f64;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum();
        // 7 dof, 0.999 quantile.
        assert!(chi2 < 24.32, "{counts:?}");

        // P(action 6) = 0.5 + 0.5/8 at epsilon 0.5.
        let hits = (0..10_000)
            .filter(|_| epsilon_greedy(&obs, &net, 0.5, &mut rng).unwrap().index() == 6)
            .count();
        let p = hits as f64 / 10_000.0;
        assert!((p - 0.5625).abs() < 0.02, "{p}");
    }
}
