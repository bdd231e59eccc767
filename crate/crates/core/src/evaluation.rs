//! Monte Carlo evaluation: episode runner, per-slice metric tables and
//! percentile bootstrap intervals.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::firms::{FirmClass, FirmProfile, Phase};
use crate::game::{Action, Game, GameConfig, StepRecord};
use crate::geology::{InfoLevel, LeadSpec};
use crate::market::{csv_error, Regime, ScenarioSpec};
use crate::rng::{derive_seed, named, Stream};
use crate::strategies::{LadderPolicy, Policy, PolicyKind, RandomPolicy, RlPolicy, ScriptedPolicy};

/// Which policy sits in which seat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    /// Every seat plays the same policy.
    Uniform(PolicyKind),
    /// Seats alternate `alt`/`std`; the pattern flips on odd episodes so
    /// each firm profile plays both sides equally often.
    Mixed { alt: PolicyKind, std: PolicyKind },
}

impl Assignment {
    pub fn kind(&self, episode: usize, seat: usize) -> PolicyKind {
        match *self {
            Assignment::Uniform(k) => k,
            Assignment::Mixed { alt, std } => {
                if (episode + seat).is_multiple_of(2) {
                    alt
                } else {
                    std
                }
            }
        }
    }
}

/// The policies an evaluation can hand out.
pub struct PolicySet {
    pub ladder: LadderPolicy,
    pub rl: Option<RlPolicy>,
    pub scripted: Option<ScriptedPolicy>,
    pub random: RandomPolicy,
}

impl PolicySet {
    pub fn get(&self, kind: PolicyKind) -> Result<&dyn Policy> {
        match kind {
            PolicyKind::StandardLadder => Ok(&self.ladder),
            PolicyKind::Random => Ok(&self.random),
            PolicyKind::RlOptimized => {
                self.rl.as_ref().map(|p| p as &dyn Policy).ok_or_else(|| {
                    Error::config("RL policy requested but no trained network supplied")
                })
            }
            PolicyKind::Scripted => self
                .scripted
                .as_ref()
                .map(|p| p as &dyn Policy)
                .ok_or_else(|| Error::config("scripted policy requested but no table supplied")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPlan {
    pub episodes: usize,
    pub master_seed: u64,
    /// Firm counts cycled over episodes.
    pub n_firms: Vec<usize>,
    /// Regimes cycled over episodes (after the firm-count cycle).
    pub regimes: Vec<Regime>,
    pub workers: usize,
    /// Episodes (from index 0) whose step trace is kept.
    pub trace_episodes: usize,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            episodes: 1000,
            master_seed: 0,
            n_firms: vec![6],
            regimes: vec![Regime::Neutral],
            workers: 1,
            trace_episodes: 0,
        }
    }
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_firms.is_empty() || self.n_firms.iter().any(|n| *n < 2) {
            return Err(Error::config("n_firms needs at least one entry, each >= 2"));
        }
        if self.regimes.is_empty() {
            return Err(Error::config("regimes needs at least one entry"));
        }
        Ok(())
    }

    pub fn episode_setup(&self, index: usize) -> (u64, usize, Regime) {
        let a = self.n_firms.len();
        let n = self.n_firms[index % a];
        let regime = self.regimes[(index / a) % self.regimes.len()];
        (derive_seed(self.master_seed, index as u64), n, regime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub agent: usize,
    pub policy: PolicyKind,
    pub firm_class: FirmClass,
    /// Discount rate used for `npv`.
    pub rate: f64,
    pub npv: f64,
    pub capital_at_risk: f64,
    pub bids_placed: u32,
    pub won: bool,
    pub won_value: Option<f64>,
    /// Set only for agents that placed a bid: NPV > 0.
    pub es_flag: Option<bool>,
    /// Requested `(phase, action)` for every live year.
    pub actions: Vec<(Phase, Action)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub seed: u64,
    pub n_firms: usize,
    pub regime: Regime,
    /// Winner of the first auction, if anyone bid.
    pub winner: Option<usize>,
    /// Realized value of the first lead offered (lead-size slicing).
    pub lead_value: f64,
    pub agents: Vec<AgentResult>,
    pub ignored_actions: u64,
}

impl EpisodeResult {
    /// Mean NPV of the agents playing `kind`, if any.
    pub fn mean_npv(&self, kind: PolicyKind) -> Option<f64> {
        mean(
            self.agents
                .iter()
                .filter(|a| a.policy == kind)
                .map(|a| a.npv),
        )
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Template for building one game per episode.
#[derive(Debug, Clone)]
pub struct GameSetup {
    pub config: GameConfig,
    pub profiles: Vec<FirmProfile>,
    pub catalog: Vec<LeadSpec>,
}

impl GameSetup {
    /// A game with `n_firms` seats in `regime`. The configured scenario is
    /// kept when it already has that regime; otherwise the regime's preset
    /// replaces it (starting price and horizon are kept).
    pub fn build(&self, n_firms: usize, regime: Regime) -> Result<Game> {
        let mut cfg = self.config.clone();
        cfg.n_agents = n_firms;
        if cfg.scenario.regime != regime {
            cfg.scenario = ScenarioSpec {
                initial_price: cfg.scenario.initial_price,
                ..ScenarioSpec::preset(regime, cfg.scenario.horizon_years)
            };
        }
        Game::new(cfg, self.profiles.clone(), self.catalog.clone())
    }
}

/// Play one episode to the end.
pub fn run_episode(
    game: &mut Game,
    index: usize,
    seed: u64,
    regime: Regime,
    policies: &PolicySet,
    assignment: &Assignment,
    record_trace: bool,
) -> Result<(EpisodeResult, Vec<StepRecord>)> {
    game.set_record_trace(record_trace);
    let mut obs = game.reset_with_seed(seed)?;
    let lead_value = game.current_offer().map_or(0.0, |l| l.true_value);
    let n = game.n_agents();
    let kinds: Vec<PolicyKind> = (0..n).map(|i| assignment.kind(index, i)).collect();
    let seat_policies: Vec<&dyn Policy> = kinds
        .iter()
        .map(|k| policies.get(*k))
        .collect::<Result<_>>()?;
    let mut rng = named(seed, Stream::Policy);
    let mut actions_log: Vec<Vec<(Phase, Action)>> = vec![Vec::new(); n];
    let mut winner = None;
    let mut first_auction = true;
    while !game.is_done() {
        let mut acts = Vec::with_capacity(n);
        for i in 0..n {
            let agent = game.agent(i);
            let a = seat_policies[i].act(&obs[i], agent, &mut rng)?;
            if agent.phase.is_live() {
                actions_log[i].push((agent.phase, a));
            }
            acts.push(a);
        }
        let out = game.step(&acts)?;
        if first_auction {
            if let Some(auction) = &out.auction {
                winner = auction.winner;
                first_auction = false;
            }
        }
        obs = out.agents.into_iter().map(|a| a.observation).collect();
    }
    let agents = (0..n)
        .map(|i| {
            let ledger = &game.ledgers()[i];
            let rate = game.npv_rate(i);
            let npv = ledger.npv(rate);
            if !npv.is_finite() {
                return Err(Error::domain(format!("non-finite NPV for agent {i}")));
            }
            Ok(AgentResult {
                agent: i,
                policy: kinds[i],
                firm_class: game.agent(i).firm_class,
                rate,
                npv,
                capital_at_risk: ledger.capital_at_risk,
                bids_placed: ledger.bids_placed,
                won: ledger.won_lead.is_some(),
                won_value: ledger.won_lead.map(|l| l.true_value),
                es_flag: (ledger.bids_placed > 0).then_some(npv > 0.0),
                actions: std::mem::take(&mut actions_log[i]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let result = EpisodeResult {
        index,
        seed,
        n_firms: n,
        regime,
        winner,
        lead_value,
        agents,
        ignored_actions: game.ignored_actions(),
    };
    Ok((result, game.take_trace()))
}

#[derive(Debug, Default)]
pub struct MonteCarloOutput {
    /// Sorted by episode index.
    pub results: Vec<EpisodeResult>,
    /// Traces of the first `trace_episodes` episodes, keyed by index.
    pub traces: BTreeMap<usize, Vec<StepRecord>>,
    /// `(episode index, message)` of episodes that failed and were dropped.
    pub faults: Vec<(usize, String)>,
}

/// Run episodes `range` of `plan` in parallel. Results do not depend on the
/// number of workers.
pub fn run_monte_carlo_range(
    setup: &GameSetup,
    policies: &PolicySet,
    assignment: &Assignment,
    plan: &EvalPlan,
    range: std::ops::Range<usize>,
) -> Result<MonteCarloOutput> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, Result<(EpisodeResult, Vec<StepRecord>)>)> = pool.install(|| {
        range
            .into_par_iter()
            .map(|index| {
                let (seed, n, regime) = plan.episode_setup(index);
                let res = setup.build(n, regime).and_then(|mut game| {
                    run_episode(
                        &mut game,
                        index,
                        seed,
                        regime,
                        policies,
                        assignment,
                        index < plan.trace_episodes,
                    )
                });
                (index, res)
            })
            .collect()
    });
    let mut out = MonteCarloOutput::default();
    for (index, res) in outcomes {
        match res {
            Ok((r, trace)) => {
                if !trace.is_empty() {
                    out.traces.insert(index, trace);
                }
                out.results.push(r);
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                log::warn!("episode {index} failed: {e}");
                out.faults.push((index, e.to_string()));
            }
        }
    }
    out.results.sort_by_key(|r| r.index);
    Ok(out)
}

pub fn run_monte_carlo(
    setup: &GameSetup,
    policies: &PolicySet,
    assignment: &Assignment,
    plan: &EvalPlan,
) -> Result<MonteCarloOutput> {
    run_monte_carlo_range(setup, policies, assignment, plan, 0..plan.episodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSpec {
    pub n_resamples: usize,
    pub ci_level: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            ci_level: 0.95,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_resamples < 100 {
            return Err(Error::config(format!(
                "n_resamples must be >= 100, got {}",
                self.n_resamples
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::config("ci_level must be in (0, 1)"));
        }
        Ok(())
    }
}

fn resampled_means<R: Rng + ?Sized>(values: &[f64], n_resamples: usize, rng: &mut R) -> Vec<f64> {
    let n = values.len();
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    means
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::UndefinedCi(format!(
            "need at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("bootstrap input contains non-finite values"));
    }
    Ok(())
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    values: &[f64],
    spec: &BootstrapSpec,
    rng: &mut R,
) -> Result<(f64, f64)> {
    spec.validate()?;
    check_values(values)?;
    let means = resampled_means(values, spec.n_resamples, rng);
    let tail = (1.0 - spec.ci_level) / 2.0;
    Ok((
        quantile_sorted(&means, tail),
        quantile_sorted(&means, 1.0 - tail),
    ))
}

/// One-sided percentile lower bound for the mean at `level`.
pub fn bootstrap_lower_bound<R: Rng + ?Sized>(
    values: &[f64],
    n_resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<f64> {
    BootstrapSpec {
        n_resamples,
        ci_level: level,
    }
    .validate()?;
    check_values(values)?;
    let means = resampled_means(values, n_resamples, rng);
    Ok(quantile_sorted(&means, 1.0 - level))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceKey {
    NFirms,
    Scenario,
    LeadSize,
}

impl SliceKey {
    pub fn file_stem(self) -> &'static str {
        match self {
            SliceKey::NFirms => "by_competition",
            SliceKey::Scenario => "by_scenario",
            SliceKey::LeadSize => "by_lead_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    /// Percent of bidding agents whose investment ended with NPV > 0.
    pub es_rate: Option<f64>,
    pub npv_mean: Option<f64>,
    pub npv_ci: Option<(f64, f64)>,
    pub raroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub slice: String,
    pub episodes: usize,
    pub alt: StrategyStats,
    pub std: StrategyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub key: SliceKey,
    pub rows: Vec<MetricsRow>,
}

fn strategy_stats<R: Rng + ?Sized>(
    episodes: &[&EpisodeResult],
    kind: PolicyKind,
    boot: &BootstrapSpec,
    rng: &mut R,
) -> StrategyStats {
    let agents: Vec<&AgentResult> = episodes
        .iter()
        .flat_map(|e| e.agents.iter())
        .filter(|a| a.policy == kind)
        .collect();
    let flags: Vec<bool> = agents.iter().filter_map(|a| a.es_flag).collect();
    let es_rate = (!flags.is_empty())
        .then(|| 100.0 * flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64);
    let per_episode: Vec<f64> = episodes.iter().filter_map(|e| e.mean_npv(kind)).collect();
    let npv_mean = mean(per_episode.iter().copied());
    let npv_ci = bootstrap_ci(&per_episode, boot, rng).ok();
    let capital = mean(agents.iter().map(|a| a.capital_at_risk));
    let agent_npv = mean(agents.iter().map(|a| a.npv));
    let raroc = match (agent_npv, capital) {
        (Some(v), Some(c)) if c > 0.0 => Some(v / c),
        _ => None,
    };
    StrategyStats {
        es_rate,
        npv_mean,
        npv_ci,
        raroc,
    }
}

/// Tercile labels of the first lead's realized value within `results`.
fn lead_size_labels(results: &[EpisodeResult]) -> Vec<&'static str> {
    let mut values: Vec<f64> = results.iter().map(|r| r.lead_value).collect();
    values.sort_by(f64::total_cmp);
    if values.is_empty() {
        return Vec::new();
    }
    let cut = |q: f64| values[((q * values.len() as f64) as usize).min(values.len() - 1)];
    let (c1, c2) = (cut(1.0 / 3.0), cut(2.0 / 3.0));
    results
        .iter()
        .map(|r| {
            if r.lead_value < c1 {
                "Small"
            } else if r.lead_value < c2 {
                "Medium"
            } else {
                "Large"
            }
        })
        .collect()
}

pub fn compute_metrics(
    results: &[EpisodeResult],
    key: SliceKey,
    alt: PolicyKind,
    std: PolicyKind,
    boot: &BootstrapSpec,
    seed: u64,
) -> Result<MetricsTable> {
    if results.is_empty() {
        return Err(Error::Validation("no episode results to summarize".into()));
    }
    boot.validate()?;
    let mut groups: Vec<(String, Vec<&EpisodeResult>)> = match key {
        SliceKey::NFirms => [2usize, 4, 6, 8, 10]
            .iter()
            .map(|n| {
                (
                    n.to_string(),
                    results.iter().filter(|r| r.n_firms == *n).collect(),
                )
            })
            .collect(),
        SliceKey::Scenario => [Regime::Resilient, Regime::Neutral, Regime::Heat]
            .iter()
            .map(|g| {
                (
                    g.table_label().to_string(),
                    results.iter().filter(|r| r.regime == *g).collect(),
                )
            })
            .collect(),
        SliceKey::LeadSize => {
            let labels = lead_size_labels(results);
            ["Small", "Medium", "Large"]
                .iter()
                .map(|l| {
                    let eps = results
                        .iter()
                        .zip(&labels)
                        .filter(|(_, x)| *x == l)
                        .map(|(r, _)| r)
                        .collect();
                    (l.to_string(), eps)
                })
                .collect()
        }
    };
    if key == SliceKey::NFirms {
        let extra: std::collections::BTreeSet<usize> = results
            .iter()
            .map(|r| r.n_firms)
            .filter(|n| ![2, 4, 6, 8, 10].contains(n))
            .collect();
        for n in extra {
            groups.push((
                n.to_string(),
                results.iter().filter(|r| r.n_firms == n).collect(),
            ));
        }
    }
    let mut rng = named(seed, Stream::Bootstrap);
    let mut rows = Vec::new();
    for (slice, eps) in groups {
        if eps.is_empty() {
            log::debug!("slice {slice} has no episodes; row omitted");
            continue;
        }
        rows.push(MetricsRow {
            episodes: eps.len(),
            alt: strategy_stats(&eps, alt, boot, &mut rng),
            std: strategy_stats(&eps, std, boot, &mut rng),
            slice,
        });
    }
    Ok(MetricsTable { key, rows })
}

pub const TABLE_HEADER: [&str; 12] = [
    "slice",
    "episodes",
    "es_alt",
    "es_std",
    "npv_alt",
    "npv_std",
    "raroc_alt",
    "raroc_std",
    "npv_alt_ci_low",
    "npv_alt_ci_high",
    "npv_std_ci_low",
    "npv_std_ci_high",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

pub fn write_table_csv(path: &Path, table: &MetricsTable) -> Result<()> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(&display, e))?;
    let err = |e| csv_error(&display, e);
    w.write_record(TABLE_HEADER).map_err(err)?;
    for r in &table.rows {
        w.write_record([
            r.slice.clone(),
            r.episodes.to_string(),
            cell(r.alt.es_rate),
            cell(r.std.es_rate),
            cell(r.alt.npv_mean),
            cell(r.std.npv_mean),
            cell(r.alt.raroc),
            cell(r.std.raroc),
            cell(r.alt.npv_ci.map(|c| c.0)),
            cell(r.alt.npv_ci.map(|c| c.1)),
            cell(r.std.npv_ci.map(|c| c.0)),
            cell(r.std.npv_ci.map(|c| c.1)),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&display, e))
}

pub fn read_table_csv(path: &Path, key: SliceKey) -> Result<MetricsTable> {
    let display = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(&display, e))?;
    let header = rdr.headers().map_err(|e| csv_error(&display, e))?.clone();
    if header.iter().collect::<Vec<_>>() != TABLE_HEADER {
        return Err(Error::Schema {
            path: display,
            message: format!("expected header {}", TABLE_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&display, e))?;
        let bad = |m: String| Error::Parse {
            path: display.clone(),
            line: i as u64 + 2,
            message: m,
        };
        let f = |j: usize| {
            parse_cell(&rec[j]).map_err(|e| bad(format!("column {}: {e}", TABLE_HEADER[j])))
        };
        let ci = |lo: Option<f64>, hi: Option<f64>| lo.zip(hi);
        rows.push(MetricsRow {
            slice: rec[0].to_string(),
            episodes: rec[1].parse().map_err(|e| bad(format!("episodes: {e}")))?,
            alt: StrategyStats {
                es_rate: f(2)?,
                npv_mean: f(4)?,
                raroc: f(6)?,
                npv_ci: ci(f(8)?, f(9)?),
            },
            std: StrategyStats {
                es_rate: f(3)?,
                npv_mean: f(5)?,
                raroc: f(7)?,
                npv_ci: ci(f(10)?, f(11)?),
            },
        });
    }
    Ok(MetricsTable { key, rows })
}

/// One row per episode: the per-policy mean NPV, for distribution plots.
pub fn write_distribution_csv(
    path: &Path,
    results: &[EpisodeResult],
    alt: PolicyKind,
    std: PolicyKind,
) -> Result<()> {
    let display = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(&display, e))?;
    let err = |e| csv_error(&display, e);
    w.write_record([
        "episode",
        "seed",
        "n_firms",
        "scenario",
        "lead_value",
        "npv_alt",
        "npv_std",
    ])
    .map_err(err)?;
    for r in results {
        w.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.n_firms.to_string(),
            r.regime.table_label().to_string(),
            r.lead_value.to_string(),
            cell(r.mean_npv(alt)),
            cell(r.mean_npv(std)),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&display, e))
}

/// Write the three slice tables next to each other in `dir`.
pub fn emit_tables(dir: &Path, tables: &[MetricsTable]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    tables
        .iter()
        .map(|t| {
            let path = dir.join(format!("{}.csv", t.key.file_stem()));
            write_table_csv(&path, t)?;
            Ok(path)
        })
        .collect()
}

/// Paired per-episode difference `mean NPV(alt) - mean NPV(std)` over
/// episodes where both policies are seated.
pub fn paired_npv_differences(
    results: &[EpisodeResult],
    alt: PolicyKind,
    std: PolicyKind,
) -> Vec<f64> {
    results
        .iter()
        .filter_map(|r| Some(r.mean_npv(alt)? - r.mean_npv(std)?))
        .collect()
}

/// Median data quality bought by `kind` in `phases`, over the years it
/// proceeded (deferring buys nothing), or `None` if there were none.
pub fn median_eta(
    results: &[EpisodeResult],
    kind: PolicyKind,
    phases: &[Phase],
) -> Option<InfoLevel> {
    median_level(results, kind, phases, true)
}

/// Like [`median_eta`] but over every live year, deferrals counting as `None`.
pub fn median_eta_all_years(
    results: &[EpisodeResult],
    kind: PolicyKind,
    phases: &[Phase],
) -> Option<InfoLevel> {
    median_level(results, kind, phases, false)
}

fn median_level(
    results: &[EpisodeResult],
    kind: PolicyKind,
    phases: &[Phase],
    proceed_only: bool,
) -> Option<InfoLevel> {
    let mut levels: Vec<usize> = results
        .iter()
        .flat_map(|r| r.agents.iter())
        .filter(|a| a.policy == kind)
        .flat_map(|a| a.actions.iter())
        .filter(|(p, a)| phases.contains(p) && (a.proceed || !proceed_only))
        .map(|(_, a)| a.effective_eta().index())
        .collect();
    if levels.is_empty() {
        return None;
    }
    levels.sort_unstable();
    InfoLevel::from_index(levels[(levels.len() - 1) / 2])
}

/// True if the agent's requested data level never falls as it moves
/// through bidding, exploration and development.
pub fn ladder_is_monotone(actions: &[(Phase, Action)]) -> bool {
    let appraisal: Vec<usize> = actions
        .iter()
        .filter(|(p, _)| matches!(p, Phase::Bidding | Phase::Exploration | Phase::Development))
        .map(|(_, a)| a.eta.index())
        .collect();
    appraisal.windows(2).all(|w| w[0] <= w[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn agent(policy: PolicyKind, npv: f64, bid: bool, capital: f64) -> AgentResult {
        AgentResult {
            agent: 0,
            policy,
            firm_class: FirmClass::Ioc,
            rate: 0.1,
            npv,
            capital_at_risk: capital,
            bids_placed: u32::from(bid),
            won: bid,
            won_value: None,
            es_flag: bid.then_some(npv > 0.0),
            actions: Vec::new(),
        }
    }

    fn episode(index: usize, agents: Vec<AgentResult>) -> EpisodeResult {
        EpisodeResult {
            index,
            seed: index as u64,
            n_firms: 6,
            regime: Regime::Neutral,
            winner: None,
            lead_value: index as f64,
            agents,
            ignored_actions: 0,
        }
    }

    #[test]
    fn es_rate_by_hand() {
        let k = PolicyKind::StandardLadder;
        let eps = vec![
            episode(0, vec![agent(k, 10.0, true, 5.0)]),
            episode(1, vec![agent(k, -3.0, true, 5.0)]),
            episode(2, vec![agent(k, 4.0, true, 5.0), agent(k, 0.0, false, 0.0)]),
        ];
        let t = compute_metrics(
            &eps,
            SliceKey::NFirms,
            PolicyKind::RlOptimized,
            k,
            &BootstrapSpec::default(),
            1,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        let s = &t.rows[0].std;
        assert!((s.es_rate.unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(t.rows[0].alt.npv_mean, None);
        // RAROC: mean npv (11/4) over mean capital (15/4).
        assert!((s.raroc.unwrap() - 11.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_give_degenerate_ci() {
        let (lo, hi) =
            bootstrap_ci(&[3.0; 10], &BootstrapSpec::default(), &mut stream_rng(0, 9)).unwrap();
        assert_eq!((lo, hi), (3.0, 3.0));
    }

    #[test]
    fn too_few_values_is_undefined() {
        let r = bootstrap_ci(&[1.0], &BootstrapSpec::default(), &mut stream_rng(0, 9));
        assert!(matches!(r, Err(Error::UndefinedCi(_))));
    }

    #[test]
    fn too_few_resamples_rejected() {
        let spec = BootstrapSpec {
            n_resamples: 50,
            ci_level: 0.95,
        };
        assert!(bootstrap_ci(&[1.0, 2.0], &spec, &mut stream_rng(0, 9)).is_err());
    }

    #[test]
    fn median_eta_picks_middle() {
        let k = PolicyKind::RlOptimized;
        let mut a = agent(k, 0.0, false, 0.0);
        a.actions = vec![
            (Phase::Bidding, Action::proceed(InfoLevel::High)),
            (Phase::Bidding, Action::proceed(InfoLevel::Low)),
            (Phase::Exploration, Action::proceed(InfoLevel::Med)),
            (Phase::Development, Action::proceed(InfoLevel::None)),
            (Phase::Exploration, Action::new(false, InfoLevel::High)),
            (Phase::Exploration, Action::new(false, InfoLevel::High)),
        ];
        let eps = vec![episode(0, vec![a])];
        assert_eq!(
            median_eta(&eps, k, &[Phase::Bidding, Phase::Exploration]),
            Some(InfoLevel::Med)
        );
        // Deferred years count as no data: [0, 0, 1, 2, 3] -> Low.
        assert_eq!(
            median_eta_all_years(&eps, k, &[Phase::Bidding, Phase::Exploration]),
            Some(InfoLevel::Low)
        );
        assert_eq!(
            median_eta(&eps, PolicyKind::StandardLadder, &[Phase::Bidding]),
            None
        );
    }

    #[test]
    fn monotone_check() {
        let up = [
            (Phase::Bidding, Action::proceed(InfoLevel::Low)),
            (Phase::Exploration, Action::new(false, InfoLevel::Med)),
            (Phase::Development, Action::proceed(InfoLevel::High)),
            (Phase::Production, Action::proceed(InfoLevel::None)),
        ];
        assert!(ladder_is_monotone(&up));
        let down = [
            (Phase::Bidding, Action::proceed(InfoLevel::High)),
            (Phase::Exploration, Action::proceed(InfoLevel::Low)),
        ];
        assert!(!ladder_is_monotone(&down));
    }
}
