//! Firm profiles and live agent state.
//!
//! Profiles are Gaussian summaries of each operator's historical
//! investment, production and reserve statistics. The profile CSV carries a
//! `(min, mean, max)` triplet per variable; the standard deviation is taken
//! as `(max - min) / 4` unless an explicit `<variable>_std` column is given.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geology::{Belief, InfoLevel};
use crate::market::{csv_error, IndustryBaseline};
use crate::rng::std_normal;

/// The shipped top-ten offshore investor dataset.
pub const DEFAULT_PROFILES_CSV: &str = include_str!("../data/profiles.csv");

/// Profile variables in CSV column order.
pub const PROFILE_VARIABLES: [&str; 9] = [
    "inv",
    "up_inv_perc",
    "exp_inv_perc",
    "firm_volatility",
    "firm_return",
    "daily_prod",
    "year_res",
    "var_res",
    "inc_res",
];

const FRACTION_VARIABLES: [&str; 5] = [
    "up_inv_perc",
    "exp_inv_perc",
    "firm_volatility",
    "firm_return",
    "var_res",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FirmClass {
    #[serde(rename = "IOC")]
    Ioc,
    #[serde(rename = "NOC")]
    Noc,
}

impl fmt::Display for FirmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FirmClass::Ioc => "IOC",
            FirmClass::Noc => "NOC",
        })
    }
}

impl FromStr for FirmClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IOC" => Ok(FirmClass::Ioc),
            "NOC" => Ok(FirmClass::Noc),
            other => Err(Error::Validation(format!("unknown firm class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn from_range(min: f64, mean: f64, max: f64) -> Self {
        Self {
            mean,
            std: ((max - min) / 4.0).max(0.0),
        }
    }

    /// Draw truncated to `[lo, hi]` by rejection, clamping after 64 misses.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        if self.std == 0.0 {
            return self.mean.clamp(lo, hi);
        }
        for _ in 0..64 {
            let x = self.mean + self.std * std_normal(rng);
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
        self.mean.clamp(lo, hi)
    }
}

/// Coefficients of the firm risk premium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskPremiumParams {
    pub base: f64,
    /// Added for international oil companies.
    pub ioc_adjustment: f64,
    /// Multiplier on the mean firm volatility.
    pub volatility_loading: f64,
}

impl Default for RiskPremiumParams {
    fn default() -> Self {
        Self {
            base: 0.08,
            ioc_adjustment: 0.02,
            volatility_loading: 0.5,
        }
    }
}

impl RiskPremiumParams {
    pub fn validate(&self) -> Result<()> {
        if self.base < 0.0 || self.ioc_adjustment < 0.0 || self.volatility_loading < 0.0 {
            return Err(Error::config("risk premium coefficients must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmProfile {
    pub name: String,
    pub firm_class: FirmClass,
    /// Total investment, USD B/yr.
    pub inv: Gaussian,
    pub up_inv_perc: Gaussian,
    pub exp_inv_perc: Gaussian,
    pub firm_volatility: Gaussian,
    pub firm_return: Gaussian,
    /// MBOE/d.
    pub daily_prod: Gaussian,
    /// BBOE.
    pub year_res: Gaussian,
    pub var_res: Gaussian,
    /// BBOE/yr.
    pub inc_res: Gaussian,
    /// Fraction per year.
    pub risk_premium: f64,
}

impl FirmProfile {
    fn variable(&self, name: &str) -> &Gaussian {
        match name {
            "inv" => &self.inv,
            "up_inv_perc" => &self.up_inv_perc,
            "exp_inv_perc" => &self.exp_inv_perc,
            "firm_volatility" => &self.firm_volatility,
            "firm_return" => &self.firm_return,
            "daily_prod" => &self.daily_prod,
            "year_res" => &self.year_res,
            "var_res" => &self.var_res,
            "inc_res" => &self.inc_res,
            _ => unreachable!("unknown profile variable {name}"),
        }
    }

    /// Reserves-to-production ratio in years from the profile means.
    pub fn reserve_life_years(&self) -> Option<f64> {
        let annual_bboe = self.daily_prod.mean * 365.0 / 1000.0;
        (annual_bboe > 0.0).then(|| self.year_res.mean / annual_bboe)
    }
}

/// `base + ioc_adjustment [IOC] + volatility_loading * mean firm volatility`.
pub fn risk_premium_from_profile(profile: &FirmProfile, params: &RiskPremiumParams) -> f64 {
    let class_adj = match profile.firm_class {
        FirmClass::Ioc => params.ioc_adjustment,
        FirmClass::Noc => 0.0,
    };
    params.base + class_adj + params.volatility_loading * profile.firm_volatility.mean.max(0.0)
}

pub fn default_profiles(premium: &RiskPremiumParams) -> Result<Vec<FirmProfile>> {
    parse_profiles(
        DEFAULT_PROFILES_CSV.as_bytes(),
        "<default profiles>",
        premium,
    )
}

pub fn load_profiles(path: &Path, premium: &RiskPremiumParams) -> Result<Vec<FirmProfile>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    parse_profiles(file, &display, premium)
}

pub fn parse_profiles<R: Read>(
    reader: R,
    source: &str,
    premium: &RiskPremiumParams,
) -> Result<Vec<FirmProfile>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(source, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let schema_err = |message: String| Error::Schema {
        path: source.to_string(),
        message,
    };

    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut required = vec!["name".to_string(), "class".to_string()];
    for var in PROFILE_VARIABLES {
        for stat in ["min", "mean", "max"] {
            required.push(format!("{var}_{stat}"));
        }
    }
    for name in &required {
        if col(name).is_none() {
            return Err(schema_err(format!("missing column '{name}'")));
        }
    }
    for h in &headers {
        let optional_std = PROFILE_VARIABLES.iter().any(|v| *h == format!("{v}_std"));
        if !required.contains(h) && !optional_std {
            return Err(schema_err(format!("unknown column '{h}'")));
        }
    }

    let mut profiles = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| {
            record
                .get(col(name).expect("validated header"))
                .unwrap_or("")
        };
        let num = |name: &str| -> Result<f64> {
            let raw = field(name);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: source.to_string(),
                    line,
                    message: format!("column '{name}': invalid number '{raw}'"),
                })
        };
        let gaussian = |var: &str| -> Result<Gaussian> {
            let (min, mean, max) = (
                num(&format!("{var}_min"))?,
                num(&format!("{var}_mean"))?,
                num(&format!("{var}_max"))?,
            );
            let mut g = Gaussian::from_range(min, mean, max);
            let std_col = format!("{var}_std");
            if col(&std_col).is_some() && !field(&std_col).is_empty() {
                g.std = num(&std_col)?;
            }
            if g.std < 0.0 {
                return Err(Error::Validation(format!("{source}:{line}: {var} std < 0")));
            }
            Ok(g)
        };

        let name = field("name").to_string();
        let firm_class: FirmClass = field("class").parse()?;
        let inv = gaussian("inv")?;
        if inv.mean <= 0.0 {
            return Err(Error::Validation(format!(
                "{source}:{line}: firm '{name}' has non-positive mean investment {}",
                inv.mean
            )));
        }
        let mut profile = FirmProfile {
            name,
            firm_class,
            inv,
            up_inv_perc: gaussian("up_inv_perc")?,
            exp_inv_perc: gaussian("exp_inv_perc")?,
            firm_volatility: gaussian("firm_volatility")?,
            firm_return: gaussian("firm_return")?,
            daily_prod: gaussian("daily_prod")?,
            year_res: gaussian("year_res")?,
            var_res: gaussian("var_res")?,
            inc_res: gaussian("inc_res")?,
            risk_premium: 0.0,
        };
        profile.risk_premium = risk_premium_from_profile(&profile, premium);
        profiles.push(profile);
    }
    if profiles.len() < 2 {
        return Err(Error::Validation(format!(
            "{source}: need at least 2 firm profiles, found {}",
            profiles.len()
        )));
    }
    Ok(profiles)
}

/// Mean reserves-to-production ratio (years) over firms of one class.
pub fn rp_ratio(profiles: &[FirmProfile], class: FirmClass) -> Result<f64> {
    let mut ratios = Vec::new();
    for p in profiles.iter().filter(|p| p.firm_class == class) {
        match p.reserve_life_years() {
            Some(r) => ratios.push(r),
            None => log::warn!("excluding {} from R/P ratio: zero production", p.name),
        }
    }
    if ratios.is_empty() {
        return Err(Error::Validation(format!(
            "no {class} firm with positive production"
        )));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

impl IndustryBaseline {
    /// Industry totals as the sum of firm means.
    pub fn from_profiles(profiles: &[FirmProfile]) -> Self {
        let sum = |f: &dyn Fn(&FirmProfile) -> f64| profiles.iter().map(f).sum::<f64>();
        Self {
            tot_inv: sum(&|p| p.inv.mean),
            tot_inv_up: sum(&|p| p.inv.mean * p.up_inv_perc.mean),
            tot_inv_exp: sum(&|p| p.inv.mean * p.exp_inv_perc.mean),
            tot_prod: sum(&|p| p.daily_prod.mean),
            tot_res: sum(&|p| p.year_res.mean),
            tot_inc_res: sum(&|p| p.inc_res.mean),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Bidding,
    Exploration,
    Development,
    Production,
    Exited,
}

impl Phase {
    pub const LIVE: [Phase; 4] = [
        Phase::Bidding,
        Phase::Exploration,
        Phase::Development,
        Phase::Production,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Phase {
        match self {
            Phase::Bidding => Phase::Exploration,
            Phase::Exploration => Phase::Development,
            Phase::Development => Phase::Production,
            Phase::Production | Phase::Exited => Phase::Exited,
        }
    }

    pub fn is_live(self) -> bool {
        self != Phase::Exited
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: usize,
    /// Index into the profile list this agent was drawn from.
    pub profile_index: usize,
    pub firm_class: FirmClass,
    pub risk_premium: f64,
    /// Sampled annual capital budget, USD MM.
    pub capital_budget: f64,
    pub phase: Phase,
    /// Active years spent in the current phase.
    pub phase_age: u32,
    /// Proven reserves, BBOE.
    pub reserves: f64,
    /// Best information level acquired on the active lead.
    pub info_quality_held: InfoLevel,
    pub belief: Option<Belief>,
    pub active_lead: Option<u32>,
    /// Cumulative undiscounted spend (capex, bids and data), USD MM.
    pub capital_spent: f64,
    /// Discounted sum of rewards so far, USD MM.
    pub cum_discounted_cash: f64,
}

pub fn sample_agent_init<R: Rng + ?Sized>(
    profile: &FirmProfile,
    agent_id: usize,
    profile_index: usize,
    rng: &mut R,
) -> AgentState {
    let reserves = profile.year_res.sample_truncated(0.0, f64::INFINITY, rng);
    let budget_bn = profile.inv.sample_truncated(0.0, f64::INFINITY, rng);
    AgentState {
        agent_id,
        profile_index,
        firm_class: profile.firm_class,
        risk_premium: profile.risk_premium,
        capital_budget: budget_bn * 1000.0,
        phase: Phase::Bidding,
        phase_age: 0,
        reserves,
        info_quality_held: InfoLevel::None,
        belief: None,
        active_lead: None,
        capital_spent: 0.0,
        cum_discounted_cash: 0.0,
    }
}

/// Draw every profile variable, truncated to its admissible range.
pub fn sample_profile_draw<R: Rng + ?Sized>(
    profile: &FirmProfile,
    rng: &mut R,
) -> Vec<(String, f64)> {
    PROFILE_VARIABLES
        .iter()
        .map(|var| {
            let hi = if FRACTION_VARIABLES.contains(var) {
                1.0
            } else {
                f64::INFINITY
            };
            let v = profile.variable(var).sample_truncated(0.0, hi, rng);
            (var.to_string(), v)
        })
        .collect()
}
