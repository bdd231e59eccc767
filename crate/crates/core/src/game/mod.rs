//! Phase-structured multi-agent upstream game.

pub mod action;
pub mod auction;
pub mod config;
pub mod env;
pub mod observation;
pub mod reward;
pub mod trace;

pub use action::{Action, N_ACTIONS};
pub use auction::{bid_amount, run_auction, AuctionOutcome};
pub use config::{BidParams, CostSchedule, Durations, GameConfig, ProductionParams};
pub use env::{discounted_sum, AgentLedger, AgentOutcome, Game, StepOutcome};
pub use observation::{
    observed_phase, Observation, ObservationEncoder, CE_FEATURE, FEATURE_NAMES, OBS_DIM,
    PHASE_FEATURE,
};
pub use reward::{compute_reward, RewardComponents};
pub use trace::{read_trace_jsonl, write_trace_jsonl, AgentStepRecord, StepRecord};
