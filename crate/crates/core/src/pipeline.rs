//! The three end-to-end runs behind the command line: calibrate, train and
//! evaluate. Each writes its artifacts plus a `manifest.json` into the
//! configured output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Manifest, RunConfig};
use crate::dqn::{
    export_qgrid, write_log_csv, write_qgrid_axes, write_qgrid_csv, Checkpoint, CheckpointPolicy,
    QGridSpec, QNetwork, Trainer, GRID_SIZE,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    bootstrap_lower_bound, compute_metrics, emit_tables, ladder_is_monotone, median_eta,
    median_eta_all_years, paired_npv_differences, run_monte_carlo, write_distribution_csv,
    Assignment, EvalPlan, GameSetup, MetricsTable, PolicySet, SliceKey,
};
use crate::firms::{default_profiles, load_profiles, Phase};
use crate::game::{write_trace_jsonl, CE_FEATURE, N_ACTIONS, OBS_DIM, PHASE_FEATURE};
use crate::geology::{read_catalog_csv, sample_lead_catalog, InfoLevel};
use crate::market::{calibrate_ou, read_price_csv, OuParams};
use crate::rng::{derive_seed, named, Stream};
use crate::strategies::{GameEnv, LadderPolicy, Policy, PolicyKind, RandomPolicy, RlPolicy};

/// Observation slot set to 1 when the agent holds a belief about a lead.
const BELIEF_FEATURE: usize = CE_FEATURE - 3;

/// Offset separating the Q-grid sample episodes from evaluation episodes.
const QGRID_SEED_SALT: u64 = 0x5147_5249_4400_0000;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Profiles and catalog for a run.
pub fn load_inputs(cfg: &RunConfig) -> Result<GameSetup> {
    let profiles = match &cfg.profile_csv {
        Some(p) => load_profiles(p, &cfg.game.risk_premium)?,
        None => default_profiles(&cfg.game.risk_premium)?,
    };
    let catalog = match &cfg.catalog_csv {
        Some(p) => read_catalog_csv(p)?,
        None => sample_lead_catalog(
            &cfg.game.catalog,
            &mut named(cfg.master_seed, Stream::Catalog),
        )?,
    };
    Ok(GameSetup {
        config: cfg.game.clone(),
        profiles,
        catalog,
    })
}

#[derive(Serialize)]
struct PriceSection {
    game: PriceParamsWrapper,
}

#[derive(Serialize)]
struct PriceParamsWrapper {
    price_params: OuParams,
}

pub const CALIBRATION_FILE: &str = "price_params.toml";

/// Fit the price process to a `date,price` CSV and write the result as a
/// config fragment (`price_params.toml`) that can be pasted into a run config.
pub fn calibrate(cfg: &RunConfig, prices_csv: &Path) -> Result<OuParams> {
    let prices = read_price_csv(prices_csv)?;
    let params = calibrate_ou(&prices, cfg.game.price_params.dt)?;
    params.validate()?;
    let text = toml::to_string(&PriceSection {
        game: PriceParamsWrapper {
            price_params: params,
        },
    })
    .map_err(|e| Error::Validation(format!("serializing calibration: {e}")))?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let out = dir.join(CALIBRATION_FILE);
    std::fs::write(&out, text).map_err(|e| Error::io(out.display().to_string(), e))?;
    let mut manifest = Manifest::new("calibrate", cfg)?;
    manifest.record_inputs(&[prices_csv])?;
    manifest.record_outputs(dir, &[out])?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(params)
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Episodes between intermediate checkpoints during training.
const CHECKPOINT_EVERY: usize = 100;

#[derive(Debug)]
pub struct TrainOutput {
    pub network: QNetwork,
    pub episodes_done: usize,
    pub finished: bool,
    pub checkpoint: PathBuf,
}

/// Train the shared Q-network. With `resume`, continue from that checkpoint;
/// it must come from the same trainer settings and seed.
pub fn train(
    cfg: &RunConfig,
    resume: Option<&Path>,
    stop_after: Option<usize>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let setup = load_inputs(cfg)?;
    let game = setup.build(cfg.game.n_agents, cfg.game.scenario.regime)?;
    let mut env = GameEnv::new(game, cfg.ladder)?;

    // Digest the resume checkpoint before training overwrites it.
    let mut manifest = Manifest::new("train", cfg)?;
    manifest.record_inputs(resume.as_slice())?;
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config != cfg.trainer || ck.master_seed != cfg.master_seed {
                return Err(Error::config(format!(
                    "checkpoint {} was written with different trainer settings or seed",
                    path.display()
                )));
            }
            log::info!("resuming from episode {}", ck.episode);
            Trainer::from_checkpoint(ck)?
        }
        None => Trainer::new(cfg.trainer.clone(), OBS_DIM, N_ACTIONS, cfg.master_seed)?,
    };
    let checkpoint = dir.join(CHECKPOINT_FILE);
    let policy = CheckpointPolicy {
        path: Some(checkpoint.clone()),
        every: CHECKPOINT_EVERY,
    };
    trainer.run(&mut env, stop_after, &policy)?;
    trainer.checkpoint().save(&checkpoint)?;
    let log_path = dir.join(TRAINING_LOG_FILE);
    write_log_csv(&log_path, trainer.log())?;

    manifest.record_outputs(dir, &[checkpoint.clone(), log_path])?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(TrainOutput {
        episodes_done: trainer.episode(),
        finished: trainer.is_finished(),
        network: trainer.into_network(),
        checkpoint,
    })
}

/// Load the network from a checkpoint and check it fits the game.
pub fn load_policy_network(path: &Path) -> Result<QNetwork> {
    let ck = Checkpoint::load(path)?;
    let spec = ck.net.spec();
    if spec.input != OBS_DIM || spec.output != N_ACTIONS {
        return Err(Error::Shape {
            expected: format!("network {OBS_DIM} -> {N_ACTIONS}"),
            got: format!("{} -> {}", spec.input, spec.output),
        });
    }
    Ok(ck.net)
}

/// Observations seen by ladder players holding a belief, over a few
/// episodes dedicated to shaping the Q-grid.
pub fn qgrid_sample(cfg: &RunConfig, setup: &GameSetup) -> Result<Vec<Vec<f64>>> {
    let ladder = LadderPolicy {
        params: cfg.ladder,
        config: cfg.game.clone(),
    };
    let mut game = setup.build(cfg.game.n_agents, cfg.game.scenario.regime)?;
    let mut sample = Vec::new();
    for i in 0..cfg.evaluation.qgrid_sample_episodes {
        let seed = derive_seed(cfg.master_seed ^ QGRID_SEED_SALT, i as u64);
        let mut obs = game.reset_with_seed(seed)?;
        let mut rng = named(seed, Stream::Policy);
        while !game.is_done() {
            let mut acts = Vec::with_capacity(obs.len());
            for (j, o) in obs.iter().enumerate() {
                let agent = game.agent(j);
                if agent.phase.is_live() && o.as_slice()[BELIEF_FEATURE] == 1.0 {
                    sample.push(o.as_slice().to_vec());
                }
                acts.push(ladder.act(o, agent, &mut rng)?);
            }
            obs = game
                .step(&acts)?
                .agents
                .into_iter()
                .map(|a| a.observation)
                .collect();
        }
    }
    Ok(sample)
}

/// Grid axes from a sample: rows sweep the certainty-equivalent value
/// feature over its quantiles, one template (the mean observation) per
/// phase present in the sample.
pub fn qgrid_spec(sample: &[Vec<f64>]) -> Result<QGridSpec> {
    let ce: Vec<f64> = sample.iter().map(|o| o[CE_FEATURE]).collect();
    let row_values = QGridSpec::quantile_rows(&ce, GRID_SIZE)?;
    let mut templates = Vec::new();
    let mut template_labels = Vec::new();
    for phase in Phase::LIVE {
        let rows: Vec<&Vec<f64>> = sample
            .iter()
            .filter(|o| o[PHASE_FEATURE + phase.index()] == 1.0)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; OBS_DIM];
        for o in &rows {
            for (m, v) in mean.iter_mut().zip(o.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        templates.push(mean);
        template_labels.push(phase.to_string());
    }
    Ok(QGridSpec {
        row_feature: CE_FEATURE,
        row_values,
        templates,
        template_labels,
        cols: GRID_SIZE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaMedians {
    /// Over years the policy proceeded and bought data.
    pub purchased: Option<InfoLevel>,
    /// Over every live year, deferrals counting as no data.
    pub all_years: Option<InfoLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    pub master_seed: u64,
    pub episodes: usize,
    pub alt: PolicyKind,
    pub std: PolicyKind,
    pub faults: Vec<(usize, String)>,
    pub ignored_actions: u64,
    /// Mean of per-episode `NPV(alt) - NPV(std)`.
    pub paired_npv_diff_mean: Option<f64>,
    /// One-sided 90% bootstrap lower bound of the same.
    pub paired_npv_diff_lower90: Option<f64>,
    /// Median data level in bidding and exploration, per policy.
    pub eta_alt: EtaMedians,
    pub eta_std: EtaMedians,
    /// Share of ladder players whose requested data level never fell.
    pub std_monotone_share: Option<f64>,
}

#[derive(Debug)]
pub struct EvalOutput {
    pub tables: Vec<MetricsTable>,
    pub summary: EvalSummary,
    pub files: Vec<PathBuf>,
}

/// Monte Carlo evaluation of the trained policy (or a random one without a
/// checkpoint) against the ladder, seats alternating between the two.
pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let setup = load_inputs(cfg)?;
    let net = checkpoint.map(load_policy_network).transpose()?;
    let alt = if net.is_some() {
        PolicyKind::RlOptimized
    } else {
        PolicyKind::Random
    };
    let std = PolicyKind::StandardLadder;
    let policies = PolicySet {
        ladder: LadderPolicy {
            params: cfg.ladder,
            config: cfg.game.clone(),
        },
        rl: net.clone().map(|net| RlPolicy { net }),
        scripted: None,
        random: RandomPolicy,
    };
    let ev = &cfg.evaluation;
    let plan = EvalPlan {
        episodes: ev.episodes,
        master_seed: cfg.master_seed,
        n_firms: ev.n_firms.clone(),
        regimes: ev.regimes.clone(),
        workers: cfg.workers,
        trace_episodes: ev.trace_episodes.unwrap_or(ev.episodes),
    };
    let out = run_monte_carlo(&setup, &policies, &Assignment::Mixed { alt, std }, &plan)?;
    if out.results.is_empty() {
        return Err(Error::Validation("every evaluation episode failed".into()));
    }

    let mut files = Vec::new();
    let tables = [SliceKey::NFirms, SliceKey::Scenario, SliceKey::LeadSize]
        .into_iter()
        .map(|k| compute_metrics(&out.results, k, alt, std, &cfg.bootstrap, cfg.master_seed))
        .collect::<Result<Vec<_>>>()?;
    files.extend(emit_tables(dir, &tables)?);
    let dist = dir.join("distributions.csv");
    write_distribution_csv(&dist, &out.results, alt, std)?;
    files.push(dist);

    let trace_dir = dir.join("traces");
    create_dir(&trace_dir)?;
    for (index, trace) in &out.traces {
        let path = trace_dir.join(format!("episode_{index:05}.jsonl"));
        write_trace_jsonl(&path, trace)?;
        files.push(path);
    }

    if let Some(net) = &net {
        let spec = qgrid_spec(&qgrid_sample(cfg, &setup)?)?;
        let grid = export_qgrid(net, &spec)?;
        let path = dir.join("qgrid.csv");
        write_qgrid_csv(&path, &grid)?;
        files.push(path);
        let path = dir.join("qgrid_axes.json");
        write_qgrid_axes(&path, &spec)?;
        files.push(path);
    }

    let summary = summarize(cfg, &out.results, &out.faults, alt, std)?;
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Validation(format!("serializing summary: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
    files.push(path);

    let mut manifest = Manifest::new("evaluate", cfg)?;
    manifest.record_inputs(checkpoint.as_slice())?;
    manifest.record_outputs(dir, &files)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(EvalOutput {
        tables,
        summary,
        files,
    })
}

fn summarize(
    cfg: &RunConfig,
    results: &[crate::evaluation::EpisodeResult],
    faults: &[(usize, String)],
    alt: PolicyKind,
    std: PolicyKind,
) -> Result<EvalSummary> {
    let diffs = paired_npv_differences(results, alt, std);
    let mean = (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64);
    let lower = if diffs.len() >= 2 {
        let mut rng = named(cfg.master_seed, Stream::Bootstrap);
        Some(bootstrap_lower_bound(
            &diffs,
            cfg.bootstrap.n_resamples,
            0.90,
            &mut rng,
        )?)
    } else {
        None
    };
    let appraisal = [Phase::Bidding, Phase::Exploration];
    let eta = |k| EtaMedians {
        purchased: median_eta(results, k, &appraisal),
        all_years: median_eta_all_years(results, k, &appraisal),
    };
    let ladders: Vec<bool> = results
        .iter()
        .flat_map(|r| r.agents.iter())
        .filter(|a| a.policy == std)
        .map(|a| ladder_is_monotone(&a.actions))
        .collect();
    let share = (!ladders.is_empty())
        .then(|| ladders.iter().filter(|m| **m).count() as f64 / ladders.len() as f64);
    let mut fault_map: BTreeMap<usize, String> = BTreeMap::new();
    fault_map.extend(faults.iter().cloned());
    Ok(EvalSummary {
        config_hash: cfg.hash()?,
        master_seed: cfg.master_seed,
        episodes: results.len(),
        alt,
        std,
        faults: fault_map.into_iter().collect(),
        ignored_actions: results.iter().map(|r| r.ignored_actions).sum(),
        paired_npv_diff_mean: mean,
        paired_npv_diff_lower90: lower,
        eta_alt: eta(alt),
        eta_std: eta(std),
        std_monotone_share: share,
    })
}
