//! The five-table reproduction run behind `rhfluid repro`.

use std::collections::BTreeMap;

use anyhow::Result;
use robinhood_fluid::fluid::{
    insert_only_fill, no_tombstone_equilibrium, no_tombstone_evolve, tombstone_evolve, SolverConfig,
};
use robinhood_fluid::probe::ProbeMode;
use robinhood_fluid::sim::{run_experiment_with_threads, SimConfig};
use robinhood_fluid::{compare, tails_to_key_fractions, TableMode};

use crate::output::Section;

pub struct ReproConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub dt: f64,
    pub threads: usize,
}

fn section(
    title: &str,
    theory: &BTreeMap<u32, f64>,
    sim: SimConfig,
    threads: usize,
) -> Result<Section> {
    let stats = run_experiment_with_threads(&sim, threads)?;
    Ok(Section {
        title: title.to_string(),
        report: compare(theory, &stats)?,
    })
}

pub fn run(cfg: &ReproConfig) -> Result<Vec<Section>> {
    let solver = SolverConfig::default().with_dt(cfg.dt);
    let (n, trials, seed, threads) = (cfg.n, cfg.trials, cfg.seed, cfg.threads);
    let mut sections = Vec::new();

    let fill95 = insert_only_fill(0.95, &solver)?;
    let theory = tails_to_key_fractions(&fill95.s, 0.95)?;
    sections.push(section(
        "insert-only random probing",
        &theory,
        SimConfig::fill(n, 0.95, trials, seed),
        threads,
    )?);
    sections.push(section(
        "insert-only double hashing",
        &theory,
        SimConfig::fill(n, 0.95, trials, seed).with_probe_mode(ProbeMode::DoubleHashing),
        threads,
    )?);

    let fill90 = insert_only_fill(0.9, &solver)?;
    let tomb = tombstone_evolve(&fill90, 2.0, 0.9, &solver)?;
    sections.push(section(
        "tombstone churn to 2n",
        &tails_to_key_fractions(&tomb.s, 0.9)?,
        SimConfig::churn(n, 0.9, trials, seed, TableMode::TombstoneDeletion, 2.0),
        threads,
    )?);

    let plain = no_tombstone_evolve(&fill90, 2.0, 0.9, &solver)?;
    sections.push(section(
        "no-tombstone churn to 2n",
        &tails_to_key_fractions(&plain.s, 0.9)?,
        SimConfig::churn(n, 0.9, trials, seed, TableMode::HardDeletion, 2.0),
        threads,
    )?);

    let long = no_tombstone_evolve(&plain, 10.0, 0.9, &solver)?;
    let eq = no_tombstone_equilibrium(0.9, solver.depth)?;
    let sim = SimConfig::churn(n, 0.9, trials, seed, TableMode::HardDeletion, 10.0);
    let stats = run_experiment_with_threads(&sim, threads)?;
    for (title, tail) in [
        ("no-tombstone churn to 10n", &long.s),
        ("no-tombstone equilibrium vs churn to 10n", &eq),
    ] {
        sections.push(Section {
            title: title.to_string(),
            report: compare(&tails_to_key_fractions(tail, 0.9)?, &stats)?,
        });
    }
    Ok(sections)
}
