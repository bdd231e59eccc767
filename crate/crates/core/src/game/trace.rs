//! Per-step episode records, written as JSON lines.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::firms::Phase;
use crate::geology::InfoLevel;
use crate::market::MarketState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStepRecord {
    pub agent: usize,
    pub phase: Phase,
    pub phase_after: Phase,
    pub action: usize,
    pub proceed: bool,
    pub eta: InfoLevel,
    pub revenue: f64,
    pub opex: f64,
    pub capex: f64,
    pub info_cost: f64,
    pub reward: f64,
    pub bid: Option<f64>,
    pub won: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub seed: u64,
    pub t: usize,
    pub market: MarketState,
    pub agents: Vec<AgentStepRecord>,
}

pub fn write_trace_jsonl(path: &Path, records: &[StepRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| Error::Validation(format!("serializing trace: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_trace_jsonl(path: &Path) -> Result<Vec<StepRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
