//! Benchmark protocol: every subject in turn is the target, the rest are
//! sources, and each strategy is scored on held-out target epochs as labeled
//! target epochs are added two at a time.

mod report;
mod run;

use std::fmt;
use std::str::FromStr;

use crate::csp::DEFAULT_FILTERS_PER_CLASS;
use crate::error::{Error, Result};

pub use report::{
    read_results, read_summary, save_summary, write_results, write_summary, RESULTS_HEADER, SUMMARY_HEADER,
};
pub use run::{draw_pool, run_benchmark, run_cell, run_strategy, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Target epochs only.
    Bl1,
    /// Source epochs only.
    Bl2,
    /// Target and source epochs pooled.
    Bl3,
    /// KL-weighted covariance fusion.
    Cm1,
    /// Covariance fusion with selected sources.
    Cm2,
    /// Weighted ensemble of per-source models.
    Ma,
    /// Kernel-mean-matching instance weights.
    Ia,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Bl1,
        Strategy::Bl2,
        Strategy::Bl3,
        Strategy::Cm1,
        Strategy::Cm2,
        Strategy::Ma,
        Strategy::Ia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Bl1 => "BL1",
            Strategy::Bl2 => "BL2",
            Strategy::Bl3 => "BL3",
            Strategy::Cm1 => "CM1",
            Strategy::Cm2 => "CM2",
            Strategy::Ma => "MA",
            Strategy::Ia => "IA",
        }
    }

    /// True for the four strategies that adapt source data to the target.
    pub fn is_transfer(self) -> bool {
        matches!(self, Strategy::Cm1 | Strategy::Cm2 | Strategy::Ma | Strategy::Ia)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown strategy {s:?}")))
    }
}

/// Parses a comma-separated strategy list such as `BL1,CM2,IA`, or `all`.
pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Strategy::ALL.to_vec());
    }
    let mut out: Vec<Strategy> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let s: Strategy = part.parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::config("no strategies given"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Epochs reserved per target subject as the labeled pool, half per class.
    pub pool_size: usize,
    pub m_step: usize,
    pub m_max: usize,
    pub repetitions: usize,
    pub filters_per_class: usize,
    pub base_seed: u64,
    pub strategies: Vec<Strategy>,
    pub cm1_lambda: f64,
    /// Worker threads; `None` uses one per available core.
    pub workers: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            pool_size: 40,
            m_step: 2,
            m_max: 40,
            repetitions: 30,
            filters_per_class: DEFAULT_FILTERS_PER_CLASS,
            base_seed: 1,
            strategies: Strategy::ALL.to_vec(),
            cm1_lambda: 0.5,
            workers: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.pool_size % 2 != 0 {
            return Err(Error::config(format!("pool size must be even and positive, got {}", self.pool_size)));
        }
        if self.m_step == 0 || self.m_step % 2 != 0 {
            return Err(Error::config(format!("m step must be even and positive, got {}", self.m_step)));
        }
        if self.m_max > self.pool_size {
            return Err(Error::config(format!(
                "m max {} exceeds the pool size {}",
                self.m_max, self.pool_size
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::config("at least one repetition is required"));
        }
        if self.filters_per_class == 0 {
            return Err(Error::config("at least one filter per class is required"));
        }
        if self.strategies.is_empty() {
            return Err(Error::config("no strategies selected"));
        }
        if !(0.0..=1.0).contains(&self.cm1_lambda) {
            return Err(Error::config(format!("CM1 lambda must lie in [0, 1], got {}", self.cm1_lambda)));
        }
        if self.workers == Some(0) {
            return Err(Error::config("worker count must be positive"));
        }
        Ok(())
    }

    /// `0, m_step, 2·m_step, …` up to `m_max`.
    pub fn m_values(&self) -> Vec<usize> {
        (0..=self.m_max).step_by(self.m_step.max(1)).collect()
    }
}

/// Accuracy of one strategy for one (target, m, repetition) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub subject: String,
    pub strategy: Strategy,
    pub m: usize,
    pub rep: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub records: Vec<Record>,
    /// Test epochs per target subject, in subject order.
    pub test_sizes: Vec<(String, usize)>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one strategy at one `m`.
    pub fn cell(&self, strategy: Strategy, m: usize) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.strategy == strategy && r.m == m)
    }
}

/// Mean and sample standard deviation of one strategy at one `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub m: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Averages over subjects and repetitions, ordered by strategy then `m`.
pub fn summarize(table: &ResultTable) -> Vec<SummaryRow> {
    let mut keys: Vec<(Strategy, usize)> = table.records.iter().map(|r| (r.strategy, r.m)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(strategy, m)| {
            let acc: Vec<f64> = table.cell(strategy, m).map(|r| r.accuracy).collect();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let std = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                strategy,
                m,
                mean,
                std,
                count: acc.len(),
            }
        })
        .collect()
}
