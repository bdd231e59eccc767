use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::firms::{Phase, RiskPremiumParams};
use crate::geology::{CatalogSpec, InfoSchedule};
use crate::market::{AggregateDynamics, OuParams, ScenarioSpec};

/// Years per phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Durations {
    pub bidding: u32,
    pub exploration: u32,
    pub development: u32,
    pub production: u32,
}

impl Default for Durations {
    fn default() -> Self {
        Self {
            bidding: 1,
            exploration: 5,
            development: 7,
            production: 25,
        }
    }
}

impl Durations {
    pub fn get(&self, phase: Phase) -> u32 {
        match phase {
            Phase::Bidding => self.bidding,
            Phase::Exploration => self.exploration,
            Phase::Development => self.development,
            Phase::Production => self.production,
            Phase::Exited => 0,
        }
    }

    pub fn lifecycle_years(&self) -> u32 {
        self.bidding + self.exploration + self.development + self.production
    }
}

/// Capital and operating costs, USD MM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSchedule {
    /// Exploration well program, spread evenly over the exploration years.
    pub exploration_capex: f64,
    /// Development build-out, spread evenly over the development years.
    pub development_capex: f64,
    /// Operating cost per production year.
    pub opex: f64,
    pub info: InfoSchedule,
}

impl Default for CostSchedule {
    fn default() -> Self {
        Self {
            exploration_capex: 40.0,
            development_capex: 400.0,
            opex: 25.0,
            info: InfoSchedule::default(),
        }
    }
}

impl CostSchedule {
    /// Capex charged for one active year in `phase` (auctions excluded).
    pub fn annual_capex(&self, phase: Phase, durations: &Durations) -> f64 {
        match phase {
            Phase::Exploration => self.exploration_capex / f64::from(durations.exploration),
            Phase::Development => self.development_capex / f64::from(durations.development),
            _ => 0.0,
        }
    }

    /// Capex still ahead of an agent in `phase` after `age` active years.
    pub fn remaining_capex(&self, phase: Phase, age: u32, durations: &Durations) -> f64 {
        let left = |total: f64, dur: u32| total * (1.0 - f64::from(age.min(dur)) / f64::from(dur));
        match phase {
            Phase::Bidding => self.exploration_capex + self.development_capex,
            Phase::Exploration => {
                left(self.exploration_capex, durations.exploration) + self.development_capex
            }
            Phase::Development => left(self.development_capex, durations.development),
            Phase::Production | Phase::Exited => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BidParams {
    /// Fraction of the certainty-equivalent lead value that is bid.
    pub beta: f64,
    /// Risk shading per unit of risk premium: lambda = risk_aversion * r.
    pub risk_aversion: f64,
}

impl Default for BidParams {
    fn default() -> Self {
        Self {
            beta: 0.35,
            risk_aversion: 5.0,
        }
    }
}

/// Plateau-then-decline production profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProductionParams {
    pub plateau_years: u32,
    /// Exponential decline per year after the plateau.
    pub decline_rate: f64,
    /// In-ground value per barrel: reserves (MMbbl) = lead value / this.
    pub value_per_bbl: f64,
}

impl Default for ProductionParams {
    fn default() -> Self {
        Self {
            plateau_years: 5,
            decline_rate: 0.08,
            value_per_bbl: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub n_agents: usize,
    pub durations: Durations,
    pub costs: CostSchedule,
    /// Discount factor for the per-agent discounted cash ledger.
    pub gamma: f64,
    pub price_params: OuParams,
    pub scenario: ScenarioSpec,
    pub seed: u64,
    /// Maximum belief variance (log units) allowed to leave exploration.
    pub variance_gate: f64,
    pub bid: BidParams,
    pub production: ProductionParams,
    pub catalog: CatalogSpec,
    pub risk_premium: RiskPremiumParams,
    pub aggregates: AggregateDynamics,
    /// Rate added to each firm's risk premium when discounting NPV.
    pub npv_base_rate: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            n_agents: 10,
            durations: Durations::default(),
            costs: CostSchedule::default(),
            gamma: 0.95,
            price_params: OuParams::default(),
            scenario: ScenarioSpec::default(),
            seed: 0,
            variance_gate: 0.09,
            bid: BidParams::default(),
            production: ProductionParams::default(),
            catalog: CatalogSpec::default(),
            risk_premium: RiskPremiumParams::default(),
            aggregates: AggregateDynamics::default(),
            npv_base_rate: 0.0,
        }
    }
}

impl GameConfig {
    pub fn horizon(&self) -> usize {
        self.scenario.horizon_years
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::config(format!(
                "n_agents must be >= 2, got {}",
                self.n_agents
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        let d = &self.durations;
        if [d.bidding, d.exploration, d.development, d.production].contains(&0) {
            return Err(Error::config("phase durations must be >= 1"));
        }
        let c = &self.costs;
        let costs_ok = [c.exploration_capex, c.development_capex, c.opex]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !costs_ok {
            return Err(Error::config("costs must be finite and >= 0"));
        }
        c.info.validate()?;
        self.price_params
            .validate()
            .map_err(|e| Error::config(format!("price_params: {e}")))?;
        self.scenario.validate()?;
        self.catalog.validate()?;
        self.risk_premium.validate()?;
        if !(self.variance_gate > 0.0) {
            return Err(Error::config("variance_gate must be > 0"));
        }
        if !(self.bid.beta > 0.0) || self.bid.risk_aversion < 0.0 {
            return Err(Error::config("bid beta must be > 0 and risk_aversion >= 0"));
        }
        let p = &self.production;
        if p.plateau_years > d.production
            || !(0.0..1.0).contains(&p.decline_rate)
            || !(p.value_per_bbl > 0.0)
        {
            return Err(Error::config(
                "production needs plateau <= production years, decline in [0,1), value_per_bbl > 0",
            ));
        }
        if !(self.npv_base_rate > -1.0) {
            return Err(Error::config("npv_base_rate must be > -1"));
        }
        Ok(())
    }
}
