//! Seeded Monte Carlo experiments over independent tables.
//!
//! Each trial derives its seed from `(master_seed, trial_index)`, so trials
//! can run in any order on any number of threads. Per-trial results are
//! integer counts and aggregation uses exact integer sums; the resulting
//! statistics are bit-identical however the work is scheduled.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::{derive_seed, KeyId, ProbeMode, ProbeParams};
use crate::table::{RobinHoodTable, TableError, TableMode};

/// Stream index used to derive a trial's deletion RNG seed from its probe seed.
const DELETION_STREAM: u64 = 0x6465_6c65_7465;

/// Keys used for unsuccessful searches start here; inserted keys count up from 0.
const ABSENT_KEY_BASE: KeyId = 1 << 63;

pub const DEFAULT_SEARCH_SAMPLES: usize = 1024;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub alpha: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub mode: TableMode,
    pub probe_mode: ProbeMode,
    /// Total insertions divided by `n`; equal to `alpha` for fill-only runs.
    pub insertion_factor: f64,
    /// Unsuccessful searches per trial.
    pub search_samples: usize,
}

impl SimConfig {
    /// Fill-only insert experiment.
    pub fn fill(n: usize, alpha: f64, trials: usize, master_seed: u64) -> Self {
        Self {
            n,
            alpha,
            trials,
            master_seed,
            mode: TableMode::InsertOnly,
            probe_mode: ProbeMode::FullyRandom,
            insertion_factor: alpha,
            search_samples: DEFAULT_SEARCH_SAMPLES,
        }
    }

    /// Fill to `alpha`, then alternate deletions and insertions until
    /// `insertion_factor * n` keys have been inserted in total.
    pub fn churn(
        n: usize,
        alpha: f64,
        trials: usize,
        master_seed: u64,
        mode: TableMode,
        insertion_factor: f64,
    ) -> Self {
        Self {
            mode,
            insertion_factor,
            ..Self::fill(n, alpha, trials, master_seed)
        }
    }

    pub fn with_probe_mode(mut self, probe_mode: ProbeMode) -> Self {
        self.probe_mode = probe_mode;
        self
    }

    /// Keys present after the fill phase.
    pub fn fill_keys(&self) -> usize {
        (self.alpha * self.n as f64 - 1e-9).ceil().max(0.0) as usize
    }

    /// Keys inserted over the whole trial.
    pub fn total_insertions(&self) -> usize {
        let total = (self.insertion_factor * self.n as f64 - 1e-9)
            .ceil()
            .max(0.0) as usize;
        total.max(self.fill_keys())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.fill_keys() == 0 {
            return bad(format!("alpha * n rounds to zero keys for n = {}", self.n));
        }
        if !self.insertion_factor.is_finite() || self.insertion_factor < self.alpha - 1e-12 {
            return bad(format!(
                "insertion factor {} is below alpha {}",
                self.insertion_factor, self.alpha
            ));
        }
        if self.mode == TableMode::InsertOnly && self.total_insertions() > self.fill_keys() {
            return bad(
                "insert-only tables cannot churn; set the insertion factor to alpha".into(),
            );
        }
        ProbeParams::new(self.master_seed, self.n)
            .validate(self.probe_mode)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))
    }
}

/// Sample mean and standard deviation (`n - 1` divisor, zero for one sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub stddev: f64,
}

impl MeanStd {
    /// From exact sums of integer observations `x / scale`.
    fn from_sums(sum: u128, sum_sq: u128, count: u64, scale: f64) -> Self {
        let c = count as u128;
        let mean = sum as f64 / count as f64 / scale;
        let stddev = if count < 2 {
            0.0
        } else {
            // c * sum_sq - sum^2 is exact and non-negative.
            let num = c * sum_sq - sum * sum;
            (num as f64 / (count as f64 * (count - 1) as f64)).sqrt() / scale
        };
        Self { mean, stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub table_size: usize,
    /// Live keys per table at the end of each trial.
    pub keys_per_trial: usize,
    pub trial_count: u64,
    /// Fraction of live keys at each age.
    pub per_age: BTreeMap<u32, MeanStd>,
    pub successful_cost: MeanStd,
    /// Absent when no unsuccessful searches were sampled.
    pub unsuccessful_cost: Option<MeanStd>,
    /// Maximum age reached in a trial, mapped to the number of such trials.
    pub max_age_distribution: BTreeMap<u32, u64>,
}

impl SimStats {
    pub fn load(&self) -> f64 {
        self.keys_per_trial as f64 / self.table_size as f64
    }

    /// Mean cell-tail fractions `s_i` rebuilt from the per-age key fractions.
    pub fn mean_tails(&self) -> BTreeMap<u32, f64> {
        let load = self.load();
        let mut acc = 0.0;
        let mut out = BTreeMap::new();
        for (&age, ms) in self.per_age.iter().rev() {
            acc += ms.mean * load;
            out.insert(age, acc);
        }
        out
    }

    pub fn mean_fractions(&self) -> BTreeMap<u32, f64> {
        self.per_age.iter().map(|(&a, ms)| (a, ms.mean)).collect()
    }

    /// Largest maximum age over all trials.
    pub fn max_age(&self) -> u32 {
        self.max_age_distribution
            .keys()
            .next_back()
            .copied()
            .unwrap_or(0)
    }

    pub fn mean_max_age(&self) -> f64 {
        let total: u64 = self
            .max_age_distribution
            .iter()
            .map(|(&a, &c)| a as u64 * c)
            .sum();
        total as f64 / self.trial_count as f64
    }
}

/// Integer outcome of a single trial.
#[derive(Debug, Clone)]
struct TrialRecord {
    age_counts: Vec<u64>,
    probe_total: u64,
    miss_total: u64,
    max_age: u32,
}

fn run_trial(cfg: &SimConfig, index: u64) -> Result<TrialRecord, SimError> {
    let seed = derive_seed(cfg.master_seed, index);
    let params = ProbeParams::new(seed, cfg.n);
    let mut table = RobinHoodTable::new(params, cfg.probe_mode, cfg.mode)?;
    let fill = cfg.fill_keys() as KeyId;
    let total = cfg.total_insertions() as KeyId;
    for key in 0..fill {
        table.insert_fast(key)?;
    }
    if total > fill {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DELETION_STREAM));
        for key in fill..total {
            table.delete_random(&mut rng)?;
            table.insert_fast(key)?;
        }
    }
    let age_counts = table.age_counts().to_vec();
    let probe_total = age_counts
        .iter()
        .enumerate()
        .map(|(age, &c)| age as u64 * c)
        .sum();
    let miss_total = (0..cfg.search_samples as KeyId)
        .map(|i| table.search(ABSENT_KEY_BASE + i).probes() as u64)
        .sum();
    Ok(TrialRecord {
        age_counts,
        probe_total,
        miss_total,
        max_age: table.max_age(),
    })
}

fn aggregate(cfg: &SimConfig, records: &[TrialRecord]) -> SimStats {
    let trials = records.len() as u64;
    let keys = cfg.fill_keys();
    let max_age = records.iter().map(|r| r.max_age).max().unwrap_or(0);

    let mut per_age = BTreeMap::new();
    for age in 1..=max_age as usize {
        let (mut sum, mut sum_sq) = (0u128, 0u128);
        for r in records {
            let c = r.age_counts.get(age).copied().unwrap_or(0) as u128;
            sum += c;
            sum_sq += c * c;
        }
        per_age.insert(
            age as u32,
            MeanStd::from_sums(sum, sum_sq, trials, keys as f64),
        );
    }

    let sums = |f: &dyn Fn(&TrialRecord) -> u64| {
        records.iter().fold((0u128, 0u128), |(s, sq), r| {
            let x = f(r) as u128;
            (s + x, sq + x * x)
        })
    };
    let (ps, psq) = sums(&|r| r.probe_total);
    let successful_cost = MeanStd::from_sums(ps, psq, trials, keys as f64);
    let unsuccessful_cost = (cfg.search_samples > 0).then(|| {
        let (ms, msq) = sums(&|r| r.miss_total);
        MeanStd::from_sums(ms, msq, trials, cfg.search_samples as f64)
    });

    let mut max_age_distribution = BTreeMap::new();
    for r in records {
        *max_age_distribution.entry(r.max_age).or_insert(0) += 1;
    }

    SimStats {
        table_size: cfg.n,
        keys_per_trial: keys,
        trial_count: trials,
        per_age,
        successful_cost,
        unsuccessful_cost,
        max_age_distribution,
    }
}

/// Runs the experiment on the global rayon pool.
pub fn run_experiment(cfg: &SimConfig) -> Result<SimStats, SimError> {
    cfg.validate()?;
    let records = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|k| run_trial(cfg, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(cfg, &records))
}

/// Runs the experiment on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(cfg: &SimConfig, threads: usize) -> Result<SimStats, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::ThreadPool(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub mean_max_age: f64,
    pub max_max_age: u32,
}

/// Maximum-age summary for each table size, all other settings from `base`.
pub fn max_age_scaling(base: &SimConfig, sizes: &[usize]) -> Result<Vec<ScalingRow>, SimError> {
    if sizes.is_empty() {
        return Err(SimError::InvalidConfig("no table sizes given".into()));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n < 16) {
        return Err(SimError::InvalidConfig(format!(
            "table size {n} is below 16"
        )));
    }
    sizes
        .iter()
        .map(|&n| {
            let stats = run_experiment(&SimConfig { n, ..base.clone() })?;
            Ok(ScalingRow {
                n,
                mean_max_age: stats.mean_max_age(),
                max_max_age: stats.max_age(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fill_run() {
        let mut cfg = SimConfig::fill(16, 0.5, 1, 7);
        cfg.insertion_factor = 0.5;
        let stats = run_experiment(&cfg).unwrap();
        assert_eq!(stats.keys_per_trial, 8);
        let total: f64 = stats.per_age.values().map(|m| m.mean).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(stats.per_age.values().all(|m| m.stddev == 0.0));
        assert_eq!(stats.max_age_distribution.values().sum::<u64>(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::fill(16, 1.0, 1, 0).validate().is_err());
        assert!(SimConfig::fill(16, 0.5, 0, 0).validate().is_err());
        assert!(SimConfig::fill(100, 0.5, 1, 0)
            .with_probe_mode(ProbeMode::DoubleHashing)
            .validate()
            .is_err());
        let mut c = SimConfig::fill(16, 0.5, 1, 0);
        c.insertion_factor = 2.0;
        assert!(c.validate().is_err());
        c.mode = TableMode::TombstoneDeletion;
        assert!(c.validate().is_ok());
        c.insertion_factor = 0.4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mean_std_matches_float_formula() {
        let xs = [3u64, 5, 9, 10];
        let sum: u128 = xs.iter().map(|&x| x as u128).sum();
        let sq: u128 = xs.iter().map(|&x| (x * x) as u128).sum();
        let ms = MeanStd::from_sums(sum, sq, 4, 2.0);
        let mean = 27.0 / 4.0;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((ms.mean - mean / 2.0).abs() < 1e-12);
        assert!((ms.stddev - var.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = SimConfig::churn(1024, 0.9, 12, 99, TableMode::TombstoneDeletion, 2.0);
        let a = run_experiment_with_threads(&cfg, 1).unwrap();
        let b = run_experiment_with_threads(&cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tails_rebuild_load() {
        let stats = run_experiment(&SimConfig::fill(1024, 0.75, 4, 3)).unwrap();
        let tails = stats.mean_tails();
        assert!((tails[&1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn scaling_rows() {
        let base = SimConfig::fill(16, 0.9, 3, 5);
        let rows = max_age_scaling(&base, &[1024]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 1024);
        assert!(rows[0].max_max_age as f64 >= rows[0].mean_max_age);
        assert!(max_age_scaling(&base, &[]).is_err());
        assert!(max_age_scaling(&base, &[8]).is_err());
    }
}
