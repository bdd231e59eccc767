//! Fixed-length, normalized observation vectors.
//!
//! Layout (see [`FEATURE_NAMES`]):
//!
//! | idx   | feature                      | normalization                          |
//! |-------|------------------------------|----------------------------------------|
//! | 0     | oil price                    | / long-run mean price                  |
//! | 1     | volatility                   | / base sigma (raw if base sigma is 0)  |
//! | 2     | demand index                 | raw (base year 1.0)                    |
//! | 3-8   | industry aggregates          | / baseline mean of each aggregate      |
//! | 9     | elapsed time                 | t / horizon                            |
//! | 10-14 | phase one-hot                | Bidding .. Exited                      |
//! | 15    | phase age                    | / phase duration                       |
//! | 16    | firm reserves (BBOE)         | / 10                                   |
//! | 17    | information held             | level index / 3                        |
//! | 18    | holds a lead belief          | 0 / 1                                  |
//! | 19    | belief mean of ln value      | rescaled so the catalog range is [0,1] |
//! | 20    | belief std of ln value       | raw                                    |
//! | 21    | certainty-equivalent ln value| same rescaling as idx 19               |
//! | 22    | firm risk premium            | x 10                                   |
//! | 23    | competitor investment        | USD MM this year / 100                 |
//! | 24    | competitor production        | MMbbl this year / 10                   |

use serde::{Deserialize, Serialize};

use crate::firms::{AgentState, Phase};
use crate::market::{IndustryBaseline, MarketState};

use super::config::GameConfig;

pub const OBS_DIM: usize = 25;

pub const FEATURE_NAMES: [&str; OBS_DIM] = [
    "price",
    "volatility",
    "demand",
    "tot_inv",
    "tot_inv_up",
    "tot_inv_exp",
    "tot_prod",
    "tot_res",
    "tot_inc_res",
    "time",
    "phase_bidding",
    "phase_exploration",
    "phase_development",
    "phase_production",
    "phase_exited",
    "phase_age",
    "reserves",
    "info_held",
    "has_belief",
    "belief_mean",
    "belief_std",
    "ce_value",
    "risk_premium",
    "competitor_investment",
    "competitor_production",
];

/// Index of the certainty-equivalent value feature (the Q-grid state axis).
pub const CE_FEATURE: usize = 21;
/// First index of the phase one-hot block.
pub const PHASE_FEATURE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What an agent sees of its rivals this year.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompetitorAggregate {
    pub investment: f64,
    pub production: f64,
}

#[derive(Debug, Clone)]
pub struct ObservationEncoder {
    pbar: f64,
    sigma: f64,
    baseline: IndustryBaseline,
    horizon: f64,
    durations: super::config::Durations,
    mu_lo: f64,
    mu_span: f64,
    risk_aversion: f64,
}

impl ObservationEncoder {
    pub fn new(config: &GameConfig, baseline: IndustryBaseline) -> Self {
        let [lo, hi] = config.catalog.mu_log_range;
        Self {
            pbar: config.price_params.pbar,
            sigma: config.price_params.sigma_p,
            baseline,
            horizon: config.horizon() as f64,
            durations: config.durations,
            mu_lo: lo,
            mu_span: (hi - lo).max(1e-9),
            risk_aversion: config.bid.risk_aversion,
        }
    }

    /// Map a log value onto the catalog-normalized scale.
    pub fn normalize_log_value(&self, log_value: f64) -> f64 {
        (log_value - self.mu_lo) / self.mu_span
    }

    pub fn encode(
        &self,
        t: usize,
        market: &MarketState,
        agent: &AgentState,
        rivals: CompetitorAggregate,
    ) -> Observation {
        let mut v = Vec::with_capacity(OBS_DIM);
        let ratio = |x: f64, m: f64| if m > 0.0 { x / m } else { x };
        v.push(market.price / self.pbar);
        v.push(ratio(market.volatility, self.sigma));
        v.push(market.demand);
        v.push(ratio(market.tot_inv, self.baseline.tot_inv));
        v.push(ratio(market.tot_inv_up, self.baseline.tot_inv_up));
        v.push(ratio(market.tot_inv_exp, self.baseline.tot_inv_exp));
        v.push(ratio(market.tot_prod, self.baseline.tot_prod));
        v.push(ratio(market.tot_res, self.baseline.tot_res));
        v.push(ratio(market.tot_inc_res, self.baseline.tot_inc_res));
        v.push((t as f64 / self.horizon).min(1.0));

        let mut onehot = [0.0; 5];
        onehot[agent.phase.index()] = 1.0;
        v.extend_from_slice(&onehot);
        let dur = self.durations.get(agent.phase);
        v.push(if dur > 0 {
            f64::from(agent.phase_age) / f64::from(dur)
        } else {
            0.0
        });
        v.push(agent.reserves / 10.0);
        v.push(agent.info_quality_held.index() as f64 / 3.0);
        match &agent.belief {
            Some(b) => {
                let lambda = self.risk_aversion * agent.risk_premium;
                v.push(1.0);
                v.push(self.normalize_log_value(b.mean_log));
                v.push(b.std_log());
                v.push(self.normalize_log_value(b.mean_log - lambda * b.var_log));
            }
            None => v.extend_from_slice(&[0.0; 4]),
        }
        v.push(agent.risk_premium * 10.0);
        v.push(rivals.investment / 100.0);
        v.push(rivals.production / 10.0);
        debug_assert_eq!(v.len(), OBS_DIM);
        Observation(v)
    }
}

/// Phase encoded in an observation, if the one-hot block is well formed.
pub fn observed_phase(obs: &[f64]) -> Option<Phase> {
    let block = obs.get(PHASE_FEATURE..PHASE_FEATURE + 5)?;
    let idx = block.iter().position(|x| *x == 1.0)?;
    [
        Phase::Bidding,
        Phase::Exploration,
        Phase::Development,
        Phase::Production,
        Phase::Exited,
    ]
    .get(idx)
    .copied()
}
