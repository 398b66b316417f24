//! Detection of doubly exponential tail decay.
//!
//! A tail of the form `s_i = c1 * c2^(2^(i - c3))` has successive ratios
//! `r_i = s_{i+1} / s_i` whose logarithms double from one age to the next.
//! A geometric tail has constant ratios instead. The check looks at the
//! growth `g_i = ln r_{i+1} / ln r_i` and accepts once it stays well above 1.

use serde::{Deserialize, Serialize};

use super::{AgeTail, FluidError};

/// Values below this are treated as underflowed and ignored.
const FLOOR: f64 = 1e-300;

/// Growth factor of the log-ratios required from the crossover on.
/// Exact doubly exponential decay gives 2, geometric decay gives 1.
const MIN_GROWTH: f64 = 1.5;

/// Fewest growth factors that must be observed past the crossover.
const MIN_WITNESSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    /// First age from which the log-ratios keep growing.
    pub crossover: usize,
    /// Base fitted by least squares to `ln s_i ~ a + 2^i ln c2` over the
    /// ages from the crossover on.
    pub c2: f64,
    /// Largest `c` with `s_{i+1} <= s_i^2 / c` for every checked age.
    pub envelope_constant: f64,
    /// Observed growth factors `g_i`, indexed from the crossover.
    pub growth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum DecayVerdict {
    DoublyExponential(DecayEnvelope),
    /// Nothing beyond age 1; the bound holds trivially.
    Degenerate,
    NotDetected,
}

impl DecayVerdict {
    /// True for every verdict except [`DecayVerdict::NotDetected`].
    pub fn passes(&self) -> bool {
        !matches!(self, DecayVerdict::NotDetected)
    }
}

pub fn decay_envelope_check(s: &AgeTail) -> Result<DecayVerdict, FluidError> {
    let v = s.values();
    if v.first().is_none_or(|&x| x <= 0.0) {
        return Err(FluidError::InvalidArgument(
            "decay check needs s1 > 0".into(),
        ));
    }
    if v[1..].iter().all(|&x| x == 0.0) {
        return Ok(DecayVerdict::Degenerate);
    }
    let len = v.iter().take_while(|&&x| x >= FLOOR).count();
    let log_ratio: Vec<f64> = (0..len.saturating_sub(1))
        .map(|i| (v[i + 1] / v[i]).ln())
        .collect();
    let growth: Vec<f64> = log_ratio
        .windows(2)
        .map(|w| if w[0] < 0.0 { w[1] / w[0] } else { f64::NAN })
        .collect();

    // Smallest index with all later growth factors above the threshold.
    let mut start = growth.len();
    while start > 0 && growth[start - 1] >= MIN_GROWTH {
        start -= 1;
    }
    if growth.len() - start < MIN_WITNESSES {
        return Ok(DecayVerdict::NotDetected);
    }

    // Ages start..start + witnesses + 2 (0-based) take part in the fit.
    let ages: Vec<usize> = (start..len).collect();
    let xs: Vec<f64> = ages.iter().map(|&i| 2f64.powi(i as i32 + 1)).collect();
    let ys: Vec<f64> = ages.iter().map(|&i| v[i].ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let c2 = (sxy / sxx).exp();

    let envelope_constant = ages
        .windows(2)
        .map(|w| v[w[0]] * v[w[0]] / v[w[1]])
        .fold(f64::INFINITY, f64::min);

    Ok(DecayVerdict::DoublyExponential(DecayEnvelope {
        crossover: start + 1,
        c2,
        envelope_constant,
        growth: growth[start..].to_vec(),
    }))
}
