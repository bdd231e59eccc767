//! Net cash flow per agent-year and the production profile behind it.

use serde::{Deserialize, Serialize};

use crate::firms::{AgentState, Phase};
use crate::market::MarketState;

use super::action::Action;
use super::config::{CostSchedule, ProductionParams};

/// Decomposed reward, USD MM. `total = revenue - opex - capex - info_cost`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardComponents {
    /// `P_t q_t`, production phase only.
    pub revenue: f64,
    /// Operating cost, production phase only.
    pub opex: f64,
    /// Investment: auction payment, well program or development spend.
    pub capex: f64,
    pub info_cost: f64,
}

impl RewardComponents {
    pub fn total(&self) -> f64 {
        self.revenue - self.opex - self.capex - self.info_cost
    }

    /// Spend that counts toward capital at risk.
    pub fn invested(&self) -> f64 {
        self.capex + self.info_cost
    }
}

/// `delta_prod [P q - C_opr] - C_inv(u) - C_info(eta)`.
///
/// `capex` is the investment the proceed decision would trigger this year
/// (for a bidder, the auction payment if it won). Deferring cancels both
/// the investment and the data purchase.
pub fn compute_reward(
    agent: &AgentState,
    action: Action,
    market: &MarketState,
    volume: f64,
    capex: f64,
    costs: &CostSchedule,
) -> RewardComponents {
    let producing = agent.phase == Phase::Production;
    RewardComponents {
        revenue: if producing {
            market.price * volume
        } else {
            0.0
        },
        opex: if producing { costs.opex } else { 0.0 },
        capex: if action.proceed { capex } else { 0.0 },
        info_cost: costs.info.cost(action.effective_eta()),
    }
}

impl ProductionParams {
    /// Implied recoverable reserves (MMbbl) of a lead worth `value` USD MM.
    pub fn reserves_mmbbl(&self, value: f64) -> f64 {
        value / self.value_per_bbl
    }

    /// Lifetime volume per unit of plateau rate.
    fn profile_weight(&self, production_years: u32) -> f64 {
        (0..production_years).map(|t| self.shape(t)).sum()
    }

    fn shape(&self, t: u32) -> f64 {
        if t < self.plateau_years {
            1.0
        } else {
            (1.0 - self.decline_rate).powi((t - self.plateau_years + 1) as i32)
        }
    }

    /// Plateau rate that makes lifetime volume equal `reserves`.
    pub fn plateau_rate(&self, reserves: f64, production_years: u32) -> f64 {
        reserves / self.profile_weight(production_years)
    }

    /// Volume (MMbbl/yr) in production year `t` (0-based).
    pub fn volume(&self, reserves: f64, t: u32, production_years: u32) -> f64 {
        if t >= production_years {
            return 0.0;
        }
        self.plateau_rate(reserves, production_years) * self.shape(t)
    }
}

/// Volume for an agent in production; zero in every other phase.
pub fn production_volume(
    agent: &AgentState,
    lead_reserves: f64,
    t_in_prod: u32,
    params: &ProductionParams,
    production_years: u32,
) -> f64 {
    if agent.phase != Phase::Production {
        return 0.0;
    }
    params.volume(lead_reserves, t_in_prod, production_years)
}
