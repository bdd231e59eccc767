//! The multi-agent lifecycle game.
//!
//! One step is one year for every agent. Within a step:
//!
//! 1. each live agent's `(u, eta)` is applied: deferring does nothing and
//!    costs nothing; proceeding pays the phase capex and the data order;
//! 2. bidders who proceed place a sealed bid computed from their posterior
//!    and the auction resolves once all bids are in;
//! 3. phase transitions fire when the phase's active years are complete
//!    (leaving exploration also needs the belief variance under the gate);
//! 4. the market advances one year along the pre-drawn scenario path.
//!
//! Agents that lose an auction stay in bidding and see a fresh lead the next
//! round. Rewards are undiscounted cash flows in USD MM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::firms::{sample_agent_init, AgentState, FirmProfile, Phase};
use crate::geology::{
    acquire_signal, realize_true_value, update_belief, Belief, InfoLevel, Lead, LeadSpec,
};
use crate::market::{generate_scenario, IndustryBaseline, MarketState};
use crate::rng::{named, SimRng, Stream};

use super::action::Action;
use super::auction::{bid_amount, run_auction, AuctionOutcome};
use super::config::GameConfig;
use super::observation::{CompetitorAggregate, Observation, ObservationEncoder};
use super::reward::{compute_reward, production_volume, RewardComponents};
use super::trace::{AgentStepRecord, StepRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub components: RewardComponents,
    /// Absorbing: once set it stays set.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub agents: Vec<AgentOutcome>,
    /// Market state the step's cash flows were priced at.
    pub market: MarketState,
    pub auction: Option<AuctionOutcome>,
    /// Whole-episode termination.
    pub episode_done: bool,
}

/// Per-agent cash-flow history kept for evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentLedger {
    /// Reward of every step the agent was live, indexed by year.
    pub rewards: Vec<f64>,
    /// Undiscounted capex, bids and data spend.
    pub capital_at_risk: f64,
    pub bids_placed: u32,
    /// Lead won at auction, with its realized value.
    pub won_lead: Option<Lead>,
    pub price_paid: f64,
}

impl AgentLedger {
    /// `sum_t r_t / (1 + rate)^t`.
    pub fn npv(&self, rate: f64) -> f64 {
        let df = 1.0 / (1.0 + rate);
        discounted_sum(&self.rewards, df)
    }
}

pub fn discounted_sum(rewards: &[f64], factor: f64) -> f64 {
    let mut acc = 0.0;
    let mut d = 1.0;
    for r in rewards {
        acc += d * r;
        d *= factor;
    }
    acc
}

#[derive(Debug, Clone)]
pub struct Game {
    config: GameConfig,
    profiles: Vec<FirmProfile>,
    catalog: Vec<LeadSpec>,
    encoder: ObservationEncoder,

    seed: u64,
    t: usize,
    market_path: Vec<MarketState>,
    agents: Vec<AgentState>,
    projects: Vec<Option<Lead>>,
    offer: Option<Lead>,
    round_age: u32,
    last_spend: Vec<f64>,
    last_volume: Vec<f64>,
    ledgers: Vec<AgentLedger>,
    done: bool,
    ignored_actions: u64,
    trace: Option<Vec<StepRecord>>,
    rng_leads: SimRng,
    rng_signals: SimRng,
    rng_auction: SimRng,
}

impl Game {
    pub fn new(
        config: GameConfig,
        profiles: Vec<FirmProfile>,
        catalog: Vec<LeadSpec>,
    ) -> Result<Self> {
        config.validate()?;
        if catalog.is_empty() {
            return Err(Error::config("lead catalog is empty"));
        }
        for spec in &catalog {
            spec.validate()?;
        }
        if profiles.is_empty() {
            return Err(Error::config("no firm profiles"));
        }
        if config.n_agents > profiles.len() {
            log::debug!(
                "{} agents over {} profiles: profiles recycled with fresh draws",
                config.n_agents,
                profiles.len()
            );
        }
        let baseline = IndustryBaseline::from_profiles(&profiles);
        let encoder = ObservationEncoder::new(&config, baseline);
        let seed = config.seed;
        let mut game = Self {
            config,
            profiles,
            catalog,
            encoder,
            seed,
            t: 0,
            market_path: Vec::new(),
            agents: Vec::new(),
            projects: Vec::new(),
            offer: None,
            round_age: 0,
            last_spend: Vec::new(),
            last_volume: Vec::new(),
            ledgers: Vec::new(),
            done: true,
            ignored_actions: 0,
            trace: None,
            rng_leads: named(seed, Stream::Leads),
            rng_signals: named(seed, Stream::Signals),
            rng_auction: named(seed, Stream::Auction),
        };
        game.reset_with_seed(seed)?;
        Ok(game)
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn encoder(&self) -> &ObservationEncoder {
        &self.encoder
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentState {
        &self.agents[i]
    }

    pub fn ledgers(&self) -> &[AgentLedger] {
        &self.ledgers
    }

    pub fn project(&self, i: usize) -> Option<&Lead> {
        self.projects[i].as_ref()
    }

    pub fn current_offer(&self) -> Option<&Lead> {
        self.offer.as_ref()
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn ignored_actions(&self) -> u64 {
        self.ignored_actions
    }

    pub fn market(&self) -> &MarketState {
        &self.market_path[self.t.min(self.market_path.len() - 1)]
    }

    pub fn market_path(&self) -> &[MarketState] {
        &self.market_path
    }

    /// Firm discount rate used for NPV: base rate plus risk premium.
    pub fn npv_rate(&self, agent: usize) -> f64 {
        self.config.npv_base_rate + self.agents[agent].risk_premium
    }

    pub fn set_record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<StepRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Reset with the seed from the config.
    pub fn reset(&mut self) -> Result<Vec<Observation>> {
        self.reset_with_seed(self.config.seed)
    }

    pub fn reset_with_seed(&mut self, seed: u64) -> Result<Vec<Observation>> {
        let cfg = &self.config;
        self.seed = seed;
        self.t = 0;
        self.done = false;
        self.ignored_actions = 0;
        self.round_age = 0;
        self.rng_leads = named(seed, Stream::Leads);
        self.rng_signals = named(seed, Stream::Signals);
        self.rng_auction = named(seed, Stream::Auction);

        let baseline = IndustryBaseline::from_profiles(&self.profiles);
        let mut market_rng = named(seed, Stream::Market);
        self.market_path = generate_scenario(
            &cfg.scenario,
            &cfg.price_params,
            &baseline,
            &cfg.aggregates,
            &mut market_rng,
        )?;

        let mut agent_rng = named(seed, Stream::Agents);
        let n_profiles = self.profiles.len();
        self.agents = (0..cfg.n_agents)
            .map(|i| {
                let pi = i % n_profiles;
                sample_agent_init(&self.profiles[pi], i, pi, &mut agent_rng)
            })
            .collect();
        let n = cfg.n_agents;
        self.projects = vec![None; n];
        self.last_spend = vec![0.0; n];
        self.last_volume = vec![0.0; n];
        self.ledgers = vec![AgentLedger::default(); n];
        if let Some(trace) = self.trace.as_mut() {
            trace.clear();
        }
        self.open_round();
        Ok(self.observations())
    }

    /// Draw the next lead and hand every bidder the common prior.
    fn open_round(&mut self) {
        self.round_age = 0;
        if !self.agents.iter().any(|a| a.phase == Phase::Bidding) {
            self.offer = None;
            return;
        }
        let idx = self.rng_leads.random_range(0..self.catalog.len());
        let lead = realize_true_value(&self.catalog[idx], &mut self.rng_leads);
        for a in self.agents.iter_mut().filter(|a| a.phase == Phase::Bidding) {
            a.belief = Some(Belief::prior(&lead.spec));
            a.active_lead = Some(lead.spec.lead_id);
            a.info_quality_held = InfoLevel::None;
            a.phase_age = 0;
        }
        self.offer = Some(lead);
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.agents.len()).map(|i| self.observe(i)).collect()
    }

    pub fn observe(&self, i: usize) -> Observation {
        let rivals = CompetitorAggregate {
            investment: self.last_spend.iter().sum::<f64>() - self.last_spend[i],
            production: self.last_volume.iter().sum::<f64>() - self.last_volume[i],
        };
        self.encoder
            .encode(self.t, self.market(), &self.agents[i], rivals)
    }

    /// Buy a signal on `lead` and fold it into the agent's belief.
    fn apply_information(&mut self, i: usize, eta: InfoLevel, lead: &Lead) -> Result<()> {
        if eta == InfoLevel::None {
            return Ok(());
        }
        let quality = self.config.costs.info.quality(eta);
        let signal = acquire_signal(lead, &quality, &mut self.rng_signals)?;
        let agent = &mut self.agents[i];
        let prior = agent.belief.unwrap_or_else(|| Belief::prior(&lead.spec));
        agent.belief = Some(update_belief(&prior, signal, &quality)?);
        agent.info_quality_held = agent.info_quality_held.max(eta);
        Ok(())
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Validation(
                "step called on a finished episode".into(),
            ));
        }
        let n = self.agents.len();
        if actions.len() != n {
            return Err(Error::Shape {
                expected: format!("{n} actions"),
                got: format!("{}", actions.len()),
            });
        }
        let market = *self.market();
        let durations = self.config.durations;
        let costs = self.config.costs;
        let phases_before: Vec<Phase> = self.agents.iter().map(|a| a.phase).collect();

        let mut capex = vec![0.0; n];
        let mut volume = vec![0.0; n];
        let mut bids: Vec<(usize, f64)> = Vec::new();
        let closing_round = self.round_age + 1 >= durations.bidding;

        for (i, &action) in actions.iter().enumerate() {
            let phase = self.agents[i].phase;
            if phase == Phase::Exited {
                if action != Action::DEFER {
                    self.ignored_actions += 1;
                }
                continue;
            }
            let eta = action.effective_eta();
            match phase {
                Phase::Bidding => {
                    if action.proceed {
                        let lead = self.offer.expect("bidders always have an open lead");
                        self.apply_information(i, eta, &lead)?;
                        if closing_round {
                            let a = &self.agents[i];
                            let belief = a.belief.expect("bidder belief");
                            bids.push((i, bid_amount(&belief, a.risk_premium, &self.config.bid)));
                            self.ledgers[i].bids_placed += 1;
                        }
                    }
                }
                Phase::Exploration | Phase::Development => {
                    if action.proceed {
                        let lead = self.projects[i].expect("project in exploration/development");
                        capex[i] = costs.annual_capex(phase, &durations);
                        self.apply_information(i, eta, &lead)?;
                        let dur = durations.get(phase);
                        let a = &mut self.agents[i];
                        a.phase_age = (a.phase_age + 1).min(dur);
                    }
                }
                Phase::Production => {
                    let lead = self.projects[i].expect("project in production");
                    let reserves = self.config.production.reserves_mmbbl(lead.true_value);
                    volume[i] = production_volume(
                        &self.agents[i],
                        reserves,
                        self.agents[i].phase_age,
                        &self.config.production,
                        durations.production,
                    );
                    self.apply_information(i, eta, &lead)?;
                }
                Phase::Exited => unreachable!(),
            }
        }

        let auction = if closing_round && self.offer.is_some() {
            let outcome = run_auction(&bids, &mut self.rng_auction);
            if let Some(w) = outcome.winner {
                capex[w] = outcome.price_paid;
            }
            Some(outcome)
        } else {
            None
        };

        // Rewards are computed against the phase the agent acted in.
        let gamma_t = self.config.gamma.powi(self.t as i32);
        let mut components = vec![RewardComponents::default(); n];
        for i in 0..n {
            if phases_before[i] == Phase::Exited {
                continue;
            }
            let r = compute_reward(
                &self.agents[i],
                actions[i],
                &market,
                volume[i],
                capex[i],
                &costs,
            );
            let total = r.total();
            let a = &mut self.agents[i];
            a.capital_spent += r.invested();
            a.cum_discounted_cash += gamma_t * total;
            let ledger = &mut self.ledgers[i];
            ledger.capital_at_risk += r.invested();
            ledger.rewards.push(total);
            components[i] = r;
        }

        self.advance_phases(auction.as_ref(), &volume);

        let trace_rec = self.trace.is_some().then(|| StepRecord {
            seed: self.seed,
            t: self.t,
            market,
            agents: (0..n)
                .map(|i| AgentStepRecord {
                    agent: i,
                    phase: phases_before[i],
                    phase_after: self.agents[i].phase,
                    action: actions[i].index(),
                    proceed: actions[i].proceed,
                    eta: actions[i].eta,
                    revenue: components[i].revenue,
                    opex: components[i].opex,
                    capex: components[i].capex,
                    info_cost: components[i].info_cost,
                    reward: components[i].total(),
                    bid: bids.iter().find(|(a, _)| *a == i).map(|(_, b)| *b),
                    won: auction.as_ref().and_then(|o| o.winner) == Some(i),
                })
                .collect(),
        });
        if let (Some(trace), Some(rec)) = (self.trace.as_mut(), trace_rec) {
            trace.push(rec);
        }

        self.last_spend = components.iter().map(|c| c.invested()).collect();
        self.last_volume = volume;
        self.t += 1;
        self.done =
            self.t >= self.config.horizon() || self.agents.iter().all(|a| a.phase == Phase::Exited);

        let observations = self.observations();
        let agents = observations
            .into_iter()
            .enumerate()
            .map(|(i, observation)| AgentOutcome {
                observation,
                reward: components[i].total(),
                components: components[i],
                done: self.done || self.agents[i].phase == Phase::Exited,
            })
            .collect();
        Ok(StepOutcome {
            agents,
            market,
            auction,
            episode_done: self.done,
        })
    }

    fn advance_phases(&mut self, auction: Option<&AuctionOutcome>, volume: &[f64]) {
        let durations = self.config.durations;
        let gate = self.config.variance_gate;
        let round_closed = auction.is_some();

        if let Some(w) = auction.and_then(|o| o.winner) {
            let lead = self.offer.expect("auctioned lead");
            self.projects[w] = Some(lead);
            let ledger = &mut self.ledgers[w];
            ledger.won_lead = Some(lead);
            ledger.price_paid = auction.map(|o| o.price_paid).unwrap_or(0.0);
            let a = &mut self.agents[w];
            a.phase = Phase::Exploration;
            a.phase_age = 0;
        }

        let reserves_of = |lead: &Lead| self.config.production.reserves_mmbbl(lead.true_value);
        for i in 0..self.agents.len() {
            let project = self.projects[i];
            let a = &mut self.agents[i];
            match a.phase {
                Phase::Exploration => {
                    let var = a.belief.map(|b| b.var_log).unwrap_or(f64::INFINITY);
                    if a.phase_age >= durations.exploration && var <= gate {
                        a.phase = Phase::Development;
                        a.phase_age = 0;
                    }
                }
                Phase::Development => {
                    if a.phase_age >= durations.development {
                        a.phase = Phase::Production;
                        a.phase_age = 0;
                        if let Some(lead) = project {
                            a.reserves += reserves_of(&lead) / 1000.0;
                        }
                    }
                }
                Phase::Production => {
                    a.reserves = (a.reserves - volume[i] / 1000.0).max(0.0);
                    a.phase_age += 1;
                    if a.phase_age >= durations.production {
                        a.phase = Phase::Exited;
                        a.belief = None;
                        a.active_lead = None;
                    }
                }
                Phase::Bidding | Phase::Exited => {}
            }
        }

        if round_closed {
            self.open_round();
        } else {
            self.round_age += 1;
            for a in self.agents.iter_mut().filter(|a| a.phase == Phase::Bidding) {
                a.phase_age = self.round_age;
            }
        }
    }
}
