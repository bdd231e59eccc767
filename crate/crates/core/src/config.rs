//! Run configuration: one TOML file, strict keys, explicit override order
//! (command-line flag, then file, then built-in default).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dqn::TrainerConfig;
use crate::error::{Error, Result};
use crate::evaluation::BootstrapSpec;
use crate::game::GameConfig;
use crate::market::{Regime, ScenarioSpec};
use crate::strategies::LadderParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub episodes: usize,
    /// Firm counts cycled over evaluation episodes.
    pub n_firms: Vec<usize>,
    /// Regimes cycled over evaluation episodes.
    pub regimes: Vec<Regime>,
    /// Episodes whose step trace is written; all when absent.
    pub trace_episodes: Option<usize>,
    /// Episodes played by the ladder policy to build the Q-grid axes.
    pub qgrid_sample_episodes: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 1000,
            n_firms: vec![6],
            regimes: vec![Regime::Neutral],
            trace_episodes: None,
            qgrid_sample_episodes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub game: GameConfig,
    pub trainer: TrainerConfig,
    pub ladder: LadderParams,
    pub bootstrap: BootstrapSpec,
    pub evaluation: EvalSettings,
    /// Firm profile table; the built-in one when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_csv: Option<PathBuf>,
    /// Lead catalog; generated from `game.catalog` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog_csv: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            game: GameConfig::default(),
            trainer: TrainerConfig::default(),
            ladder: LadderParams::default(),
            bootstrap: BootstrapSpec::default(),
            evaluation: EvalSettings::default(),
            profile_csv: None,
            catalog_csv: None,
            output_dir: PathBuf::from("runs/default"),
            workers: 1,
        }
    }
}

/// Values given on the command line; `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub agents: Option<usize>,
    pub scenario: Option<Regime>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema {
            path: source.to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("serializing config: {e}")))
    }

    /// Read a TOML config, or the config embedded in a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: display.clone(),
                message: e.to_string(),
            })?;
            m.config
        } else {
            Self::from_toml_str(&text, &display)?
        };
        // Relative input paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        Ok(Self {
            profile_csv: cfg.profile_csv.map(rebase),
            catalog_csv: cfg.catalog_csv.map(rebase),
            ..cfg
        })
    }

    /// Apply a named hyperparameter set to the trainer section.
    ///
    /// `desk` also shrinks the market to six firms.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = TrainerConfig::preset(name)?;
        self.trainer.alpha = p.alpha;
        self.trainer.gamma = p.gamma;
        self.trainer.epsilon_start = p.epsilon_start;
        if name == "desk" {
            self.trainer.episodes = p.episodes;
            self.game.n_agents = 6;
        }
        Ok(())
    }

    /// Flag values win over file values. The preset goes first so explicit
    /// flags still override it.
    pub fn apply_overrides(
        &mut self,
        o: &Overrides,
        episodes_target: EpisodesTarget,
    ) -> Result<()> {
        if let Some(p) = &o.preset {
            self.apply_preset(p)?;
        }
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(n) = o.episodes {
            match episodes_target {
                EpisodesTarget::Training => self.trainer.episodes = n,
                EpisodesTarget::Evaluation => self.evaluation.episodes = n,
            }
        }
        if let Some(n) = o.agents {
            self.game.n_agents = n;
            self.evaluation.n_firms = vec![n];
        }
        if let Some(r) = o.scenario {
            self.game.scenario = ScenarioSpec {
                initial_price: self.game.scenario.initial_price,
                ..ScenarioSpec::preset(r, self.game.scenario.horizon_years)
            };
            self.evaluation.regimes = vec![r];
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.trainer.validate()?;
        self.ladder.validate()?;
        self.bootstrap.validate()?;
        if self.workers == 0 {
            return Err(Error::config("workers must be >= 1"));
        }
        let e = &self.evaluation;
        if e.n_firms.is_empty() || e.n_firms.iter().any(|n| *n < 2) {
            return Err(Error::config("evaluation.n_firms needs entries >= 2"));
        }
        if e.regimes.is_empty() {
            return Err(Error::config("evaluation.regimes must not be empty"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form. Where outputs go and how many
    /// threads produce them do not change the results, so neither is hashed.
    pub fn hash(&self) -> Result<String> {
        let canonical = Self {
            output_dir: PathBuf::new(),
            workers: 1,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical)
            .map_err(|e| Error::Validation(format!("hashing config: {e}")))?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodesTarget {
    Training,
    Evaluation,
}

/// Written next to every run's outputs; enough to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub config: RunConfig,
    /// Input files besides the config (checkpoints, price series), with
    /// their SHA-256.
    pub inputs: Vec<(String, String)>,
    /// Output files relative to the run directory, with their SHA-256.
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash()?,
            master_seed: config.master_seed,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Record the digest of each file (paths relative to `dir`).
    pub fn record_outputs(&mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let rel = f.strip_prefix(dir).unwrap_or(f).display().to_string();
            self.outputs.push((rel, file_digest(f)?));
        }
        Ok(())
    }

    /// Record the digest of an input file, plus the config's own input tables.
    pub fn record_inputs(&mut self, files: &[&Path]) -> Result<()> {
        let tables = [&self.config.profile_csv, &self.config.catalog_csv];
        let table_paths: Vec<PathBuf> = tables.into_iter().flatten().cloned().collect();
        for f in files
            .iter()
            .copied()
            .chain(table_paths.iter().map(PathBuf::as_path))
        {
            self.inputs.push((f.display().to_string(), file_digest(f)?));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("serializing manifest: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}
