mod output;
mod repro;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use robinhood_fluid::compare::compare_means;
use robinhood_fluid::fluid::{
    celis_tails, insert_only_fill, no_tombstone_equilibrium, no_tombstone_evolve, tombstone_evolve,
    unsuccessful_search_cost, AgeTail, FluidState, SolverConfig, TombstoneVariant,
};
use robinhood_fluid::probe::ProbeMode;
use robinhood_fluid::sim::{
    max_age_scaling, run_experiment_with_threads, MeanStd, SimConfig, SimStats,
    DEFAULT_SEARCH_SAMPLES,
};
use robinhood_fluid::{tails_to_key_fractions, CompareError, FluidError, SimError, TableMode};

use output::{Format, Output, Row, Series};

#[derive(Parser)]
#[command(
    name = "rhfluid",
    version,
    about = "Robin Hood hashing: fluid limits and simulations"
)]
struct Cli {
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for simulations (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fluid-limit equations.
    #[command(subcommand)]
    Ode(Ode),
    /// Monte Carlo experiments.
    #[command(subcommand)]
    Sim(Sim),
    /// Score a simulation against a theory file.
    Compare {
        #[arg(long)]
        theory: PathBuf,
        #[arg(long)]
        sim: PathBuf,
        /// Trial count, required when the simulation file is CSV.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Maximum age across table sizes.
    Scaling {
        #[arg(long)]
        alpha: f64,
        /// Comma-separated table sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "random")]
        probe: Probe,
    },
    /// Run every reference experiment: theory side by side with simulation.
    Repro {
        #[arg(long, default_value_t = 65536)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        dt: f64,
    },
}

#[derive(Args)]
struct Solver {
    #[arg(long, default_value_t = 1e-6)]
    dt: f64,
    /// Initial truncation depth; grows automatically when needed.
    #[arg(long, default_value_t = 64)]
    depth: usize,
    /// Print cell tails s_i instead of per-age key fractions.
    #[arg(long)]
    tails: bool,
}

impl Solver {
    fn config(&self) -> SolverConfig {
        SolverConfig::default()
            .with_dt(self.dt)
            .with_depth(self.depth)
    }
}

#[derive(Subcommand)]
enum Ode {
    /// Insert-only filling to load alpha.
    Insert {
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        solver: Solver,
    },
    /// Closed-form insert-only recurrence at load beta.
    Recurrence {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 64)]
        depth: usize,
        #[arg(long)]
        tails: bool,
    },
    /// Fill to alpha, then churn with tombstones.
    Tombstone {
        #[arg(long)]
        alpha: f64,
        /// Total insertions divided by n.
        #[arg(long, default_value_t = 2.0)]
        insertions: f64,
        #[arg(long, value_enum, default_value = "as-written")]
        variant: Variant,
        #[command(flatten)]
        solver: Solver,
    },
    /// Fill to alpha, then churn without tombstones.
    NoTombstone {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        insertions: f64,
        #[command(flatten)]
        solver: Solver,
    },
    /// Equilibrium tail of churn without tombstones.
    Equilibrium {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 64)]
        depth: usize,
        #[arg(long)]
        tails: bool,
    },
}

#[derive(Subcommand)]
enum Sim {
    Run {
        #[arg(long, value_enum, default_value = "insert-only")]
        mode: Mode,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "random")]
        probe: Probe,
        /// Total insertions divided by n (default: alpha, i.e. fill only).
        #[arg(long)]
        insertions: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SEARCH_SAMPLES)]
        search_samples: usize,
        /// Print mean cell tails instead of per-age key fractions.
        #[arg(long)]
        tails: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Conservation,
    AsWritten,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    InsertOnly,
    Tombstone,
    NoTombstone,
}

#[derive(Clone, Copy, ValueEnum)]
enum Probe {
    Random,
    Double,
}

impl From<Probe> for ProbeMode {
    fn from(p: Probe) -> Self {
        match p {
            Probe::Random => ProbeMode::FullyRandom,
            Probe::Double => ProbeMode::DoubleHashing,
        }
    }
}

fn tail_series(s: &AgeTail, load: f64, tails: bool) -> Result<Series> {
    let rows = if tails {
        (1..=s.support().max(1))
            .map(|i| Row {
                age: i as u32,
                value: s.get(i),
                stddev: None,
            })
            .collect()
    } else if load == 0.0 {
        vec![Row {
            age: 1,
            value: 0.0,
            stddev: None,
        }]
    } else {
        tails_to_key_fractions(s, load)?
            .into_iter()
            .map(|(age, value)| Row {
                age,
                value,
                stddev: None,
            })
            .collect()
    };
    let successful = if load > 0.0 {
        (1..=s.support()).map(|i| s.get(i)).sum::<f64>() / load
    } else {
        0.0
    };
    Ok(Series {
        rows,
        summary: vec![
            ("depth".into(), s.depth() as f64),
            ("successful_search_cost".into(), successful),
            (
                "unsuccessful_search_cost".into(),
                unsuccessful_search_cost(s),
            ),
        ],
        sim: None,
    })
}

fn state_series(state: &FluidState, load: f64, tails: bool) -> Result<Series> {
    let mut series = tail_series(&state.s, load, tails)?;
    series.summary.extend([
        ("t".into(), state.t),
        ("inserted_mass".into(), state.inserted_mass),
        ("tombstones".into(), state.u.get(1)),
    ]);
    Ok(series)
}

fn run_ode(cmd: Ode) -> Result<Output> {
    let series = match cmd {
        Ode::Insert { alpha, solver } => {
            let state = insert_only_fill(alpha, &solver.config())?;
            state_series(&state, alpha, solver.tails)?
        }
        Ode::Recurrence { beta, depth, tails } => {
            tail_series(&celis_tails(beta, depth)?, beta, tails)?
        }
        Ode::Tombstone {
            alpha,
            insertions,
            variant,
            solver,
        } => {
            let variant = match variant {
                Variant::Conservation => TombstoneVariant::ConservationConsistent,
                Variant::AsWritten => TombstoneVariant::AsWritten,
            };
            let cfg = solver.config().with_variant(variant);
            let start = insert_only_fill(alpha, &cfg)?;
            let end = tombstone_evolve(&start, insertions, alpha, &cfg)?;
            state_series(&end, alpha, solver.tails)?
        }
        Ode::NoTombstone {
            alpha,
            insertions,
            solver,
        } => {
            let cfg = solver.config();
            let start = insert_only_fill(alpha, &cfg)?;
            let end = no_tombstone_evolve(&start, insertions, alpha, &cfg)?;
            state_series(&end, alpha, solver.tails)?
        }
        Ode::Equilibrium {
            alpha,
            depth,
            tails,
        } => tail_series(&no_tombstone_equilibrium(alpha, depth)?, alpha, tails)?,
    };
    Ok(Output::Series(series))
}

fn sim_series(stats: SimStats, tails: bool) -> Series {
    let rows = if tails {
        stats
            .mean_tails()
            .into_iter()
            .map(|(age, value)| Row {
                age,
                value,
                stddev: None,
            })
            .collect()
    } else {
        stats
            .per_age
            .iter()
            .map(|(&age, ms)| Row {
                age,
                value: ms.mean,
                stddev: Some(ms.stddev),
            })
            .collect()
    };
    let mut summary = vec![
        ("trials".into(), stats.trial_count as f64),
        ("keys_per_trial".into(), stats.keys_per_trial as f64),
        ("successful_search_cost".into(), stats.successful_cost.mean),
        (
            "successful_search_cost_stddev".into(),
            stats.successful_cost.stddev,
        ),
    ];
    if let Some(u) = stats.unsuccessful_cost {
        summary.push(("unsuccessful_search_cost".into(), u.mean));
        summary.push(("unsuccessful_search_cost_stddev".into(), u.stddev));
    }
    summary.push(("mean_max_age".into(), stats.mean_max_age()));
    summary.push(("max_age".into(), stats.max_age() as f64));
    Series {
        rows,
        summary,
        sim: Some(stats),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(s)
}

fn is_json(text: &str) -> bool {
    matches!(text.trim_start().chars().next(), Some('{') | Some('['))
}

fn read_csv_rows(text: &str, path: &Path) -> Result<Vec<Row>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<Row>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn read_theory(path: &Path) -> Result<BTreeMap<u32, f64>> {
    let text = read_to_string(path)?;
    let rows = if is_json(&text) {
        serde_json::from_str::<Series>(&text)
            .with_context(|| format!("parsing {}", path.display()))?
            .rows
    } else {
        read_csv_rows(&text, path)?
    };
    Ok(rows.into_iter().map(|r| (r.age, r.value)).collect())
}

fn read_sim(path: &Path, trials: Option<u64>) -> Result<(BTreeMap<u32, MeanStd>, u64)> {
    let text = read_to_string(path)?;
    if is_json(&text) {
        let series: Series =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(stats) = series.sim {
            return Ok((stats.per_age, stats.trial_count));
        }
        bail!("{} holds no simulation statistics", path.display());
    }
    let Some(trials) = trials else {
        return Err(
            UsageError("--trials is required when the simulation file is CSV".into()).into(),
        );
    };
    let per_age = read_csv_rows(&text, path)?
        .into_iter()
        .map(|r| {
            (
                r.age,
                MeanStd {
                    mean: r.value,
                    stddev: r.stddev.unwrap_or(0.0),
                },
            )
        })
        .collect();
    Ok((per_age, trials))
}

fn run(cli: Cli) -> Result<Output> {
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(match cli.command {
        Command::Ode(cmd) => run_ode(cmd)?,
        Command::Sim(Sim::Run {
            mode,
            n,
            alpha,
            trials,
            seed,
            probe,
            insertions,
            search_samples,
            tails,
        }) => {
            let mode = match mode {
                Mode::InsertOnly => TableMode::InsertOnly,
                Mode::Tombstone => TableMode::TombstoneDeletion,
                Mode::NoTombstone => TableMode::HardDeletion,
            };
            let cfg = SimConfig {
                search_samples,
                probe_mode: probe.into(),
                ..SimConfig::churn(n, alpha, trials, seed, mode, insertions.unwrap_or(alpha))
            };
            Output::Series(sim_series(
                run_experiment_with_threads(&cfg, threads)?,
                tails,
            ))
        }
        Command::Compare {
            theory,
            sim,
            trials,
        } => {
            let theory = read_theory(&theory)?;
            let (per_age, trials) = read_sim(&sim, trials)?;
            Output::Comparison(compare_means(&theory, &per_age, trials)?)
        }
        Command::Scaling {
            alpha,
            sizes,
            trials,
            seed,
            probe,
        } => {
            let base = SimConfig::fill(sizes.first().copied().unwrap_or(16), alpha, trials, seed)
                .with_probe_mode(probe.into());
            let pool = rayon_pool(threads)?;
            Output::Scaling(pool.install(|| max_age_scaling(&base, &sizes))?)
        }
        Command::Repro {
            n,
            trials,
            seed,
            dt,
        } => Output::Repro(repro::run(&repro::ReproConfig {
            n,
            trials,
            seed,
            dt,
            threads,
        })?),
    })
}

fn rayon_pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

fn emit(cli_out: Option<&Path>, format: Format, output: &Output) -> Result<()> {
    match cli_out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            output::write(&mut w, output, format)?;
            w.flush()
                .with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            output::write(&mut w, output, format)?;
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Bad argument values are usage errors; everything else is numerical or I/O.
fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(
                c.downcast_ref::<FluidError>(),
                Some(FluidError::InvalidArgument(_))
            )
            || matches!(
                c.downcast_ref::<SimError>(),
                Some(SimError::InvalidConfig(_))
            )
            || matches!(
                c.downcast_ref::<CompareError>(),
                Some(CompareError::InvalidArgument(_))
            )
    });
    if usage {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let format = cli.format;
    let out = cli.out.clone();
    match run(cli).and_then(|o| emit(out.as_deref(), format, &o)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
