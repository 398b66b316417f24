//! Conversions between tail and per-age views, and theory-vs-simulation scoring.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::AgeTail;
use crate::sim::{MeanStd, SimStats};

/// Slack on `s_1 <= load`.
const LOAD_SLACK: f64 = 1e-9;

/// Ages whose theory value is below this and whose simulated mean is zero
/// do not contribute to `max_abs_z`.
const NEGLIGIBLE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("comparison needs at least 2 trials, got {0}")]
    TooFewTrials(u64),
}

/// Per-age key fractions `(s_i - s_{i+1}) / load` for ages `1..=support`
/// (age 1 alone for an all-zero tail).
pub fn tails_to_key_fractions(s: &AgeTail, load: f64) -> Result<BTreeMap<u32, f64>, CompareError> {
    if !(load > 0.0 && load <= 1.0) {
        return Err(CompareError::InvalidArgument(format!(
            "load must lie in (0, 1], got {load}"
        )));
    }
    if s.get(1) > load + LOAD_SLACK {
        return Err(CompareError::InvalidArgument(format!(
            "s1 = {} exceeds the load {load}",
            s.get(1)
        )));
    }
    let top = s.support().max(1);
    Ok((1..=top)
        .map(|i| (i as u32, (s.get(i) - s.get(i + 1)) / load))
        .collect())
}

/// Inverse of [`tails_to_key_fractions`]: `s_i = load * sum_{j>=i} f_j`.
pub fn key_fractions_to_tails(fractions: &BTreeMap<u32, f64>, load: f64) -> Vec<f64> {
    let top = fractions.keys().next_back().copied().unwrap_or(0) as usize;
    let mut s = vec![0.0; top];
    let mut acc = 0.0;
    for i in (1..=top).rev() {
        acc += fractions.get(&(i as u32)).copied().unwrap_or(0.0);
        s[i - 1] = acc * load;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub age: u32,
    pub theory: f64,
    pub sim_mean: f64,
    pub sim_stddev: f64,
    pub abs_diff: f64,
    /// `(sim_mean - theory) / (sim_stddev / sqrt(trials))`; `None` when the
    /// simulated spread is zero.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub trials: u64,
    pub rows: Vec<ComparisonRow>,
    pub max_abs_diff: f64,
    pub max_abs_z: f64,
}

impl ComparisonReport {
    pub fn row(&self, age: u32) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.age == age)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4}  {:>14}  {:>14}  {:>14}  {:>12}  {:>8}",
            "age", "theory", "sim mean", "sim stddev", "|diff|", "z"
        )?;
        for r in &self.rows {
            let z = r.z.map_or_else(|| "-".to_string(), |z| format!("{z:.3}"));
            writeln!(
                f,
                "{:>4}  {:>14.10}  {:>14.10}  {:>14.10}  {:>12.3e}  {:>8}",
                r.age, r.theory, r.sim_mean, r.sim_stddev, r.abs_diff, z
            )?;
        }
        write!(
            f,
            "trials {}  max |diff| {:.3e}  max |z| {:.3}",
            self.trials, self.max_abs_diff, self.max_abs_z
        )
    }
}

/// Scores simulated per-age means against theory fractions.
pub fn compare(
    theory: &BTreeMap<u32, f64>,
    sim: &SimStats,
) -> Result<ComparisonReport, CompareError> {
    compare_means(theory, &sim.per_age, sim.trial_count)
}

/// [`compare`] on bare per-age statistics.
pub fn compare_means(
    theory: &BTreeMap<u32, f64>,
    sim: &BTreeMap<u32, MeanStd>,
    trials: u64,
) -> Result<ComparisonReport, CompareError> {
    if trials < 2 {
        return Err(CompareError::TooFewTrials(trials));
    }
    let mut ages: Vec<u32> = theory.keys().chain(sim.keys()).copied().collect();
    ages.sort_unstable();
    ages.dedup();

    let se_scale = (trials as f64).sqrt();
    let mut max_abs_diff = 0.0f64;
    let mut max_abs_z = 0.0f64;
    let rows = ages
        .into_iter()
        .map(|age| {
            let t = theory.get(&age).copied().unwrap_or(0.0);
            let ms = sim.get(&age).copied().unwrap_or(MeanStd {
                mean: 0.0,
                stddev: 0.0,
            });
            let diff = ms.mean - t;
            let z = (ms.stddev > 0.0).then(|| diff / (ms.stddev / se_scale));
            max_abs_diff = max_abs_diff.max(diff.abs());
            let negligible = t < NEGLIGIBLE && ms.mean == 0.0;
            if let (Some(z), false) = (z, negligible) {
                max_abs_z = max_abs_z.max(z.abs());
            }
            ComparisonRow {
                age,
                theory: t,
                sim_mean: ms.mean,
                sim_stddev: ms.stddev,
                abs_diff: diff.abs(),
                z,
            }
        })
        .collect();
    Ok(ComparisonReport {
        trials,
        rows,
        max_abs_diff,
        max_abs_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{celis_tails, Tail};
    use proptest::prelude::*;

    #[test]
    fn single_age_tail() {
        let f = tails_to_key_fractions(&Tail::new(vec![0.5, 0.0]).unwrap(), 0.5).unwrap();
        assert_eq!(f, BTreeMap::from([(1, 1.0)]));
    }

    #[test]
    fn rejects_bad_load() {
        let s = Tail::new(vec![0.5]).unwrap();
        assert!(tails_to_key_fractions(&s, 0.0).is_err());
        assert!(tails_to_key_fractions(&s, 0.4).is_err());
    }

    #[test]
    fn celis_age_four() {
        let f = tails_to_key_fractions(&celis_tails(0.95, 32).unwrap(), 0.95).unwrap();
        assert!((f[&4] - 0.303363594).abs() < 1e-8);
    }

    fn ms(mean: f64, stddev: f64) -> MeanStd {
        MeanStd { mean, stddev }
    }

    #[test]
    fn identical_inputs_have_zero_diff() {
        let theory = BTreeMap::from([(1, 0.4), (2, 0.6)]);
        let sim = BTreeMap::from([(1, ms(0.4, 0.01)), (2, ms(0.6, 0.01))]);
        let r = compare_means(&theory, &sim, 10).unwrap();
        assert_eq!(r.max_abs_diff, 0.0);
        assert_eq!(r.max_abs_z, 0.0);
    }

    #[test]
    fn disjoint_supports() {
        let theory = BTreeMap::from([(1, 1.0)]);
        let sim = BTreeMap::from([(2, ms(1.0, 0.0))]);
        let r = compare_means(&theory, &sim, 5).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r
            .rows
            .iter()
            .all(|row| row.theory == 0.0 || row.sim_mean == 0.0));
        assert!(r.rows.iter().all(|row| row.z.is_none()));
    }

    #[test]
    fn z_uses_standard_error() {
        let theory = BTreeMap::from([(1, 0.5)]);
        let sim = BTreeMap::from([(1, ms(0.52, 0.04))]);
        let r = compare_means(&theory, &sim, 100).unwrap();
        assert!((r.rows[0].z.unwrap() - 5.0).abs() < 1e-9);
        assert!(compare_means(&theory, &sim, 1).is_err());
    }

    #[test]
    fn negligible_ages_skip_z() {
        let theory = BTreeMap::from([(1, 1.0), (9, 1e-12)]);
        let sim = BTreeMap::from([(1, ms(1.0, 0.1)), (9, ms(0.0, 1e-20))]);
        let r = compare_means(&theory, &sim, 4).unwrap();
        assert_eq!(r.max_abs_z, 0.0);
    }

    fn fraction_map() -> impl Strategy<Value = BTreeMap<u32, f64>> {
        prop::collection::vec(0.0f64..1.0, 1..12).prop_map(|v| {
            let total: f64 = v.iter().sum::<f64>().max(1e-9);
            (1..).zip(v.into_iter().map(|x| x / total)).collect()
        })
    }

    proptest! {
        #[test]
        fn fractions_and_tails_invert(f in fraction_map(), load in 0.05f64..0.99) {
            let s = key_fractions_to_tails(&f, load);
            let back = tails_to_key_fractions(&Tail::from_raw(s.clone()), load).unwrap();
            for (age, v) in &f {
                prop_assert!((back.get(age).copied().unwrap_or(0.0) - v).abs() < 1e-12);
            }
            let rebuilt = key_fractions_to_tails(&back, load);
            for (a, b) in s.iter().zip(&rebuilt) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn diff_is_symmetric(a in fraction_map(), b in fraction_map()) {
            let as_sim = |m: &BTreeMap<u32, f64>| -> BTreeMap<u32, MeanStd> {
                m.iter().map(|(&k, &v)| (k, ms(v, 0.1))).collect()
            };
            let ab = compare_means(&a, &as_sim(&b), 10).unwrap();
            let ba = compare_means(&b, &as_sim(&a), 10).unwrap();
            prop_assert_eq!(ab.rows.len(), ba.rows.len());
            for (x, y) in ab.rows.iter().zip(&ba.rows) {
                prop_assert_eq!(x.abs_diff, y.abs_diff);
            }
            prop_assert_eq!(ab.max_abs_diff, ba.max_abs_diff);
        }
    }
}
