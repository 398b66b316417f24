//! Closed-form tails that need no integration.

use super::{check_load, level::no_tombstone_scalars, AgeTail, FluidError, Tail};

/// Insert-only tails at load `beta` from Celis's recurrence
///
/// ```text
/// s_1 = beta,   s_{i+1} = 1 - (1 - beta) exp(s_1 + ... + s_i)
/// ```
///
/// Once a term is non-positive the tail has died out and the rest are zero.
/// Terms below about `1e-15` are dominated by cancellation.
pub fn celis_tails(beta: f64, depth: usize) -> Result<AgeTail, FluidError> {
    check_load("beta", beta)?;
    if depth == 0 {
        return Err(FluidError::InvalidArgument("depth must be positive".into()));
    }
    let log_empty = (-beta).ln_1p();
    let mut s = vec![0.0; depth];
    s[0] = beta;
    let mut sum = beta;
    for i in 1..depth {
        // 1 - (1 - beta) e^sum, evaluated as -expm1(ln(1 - beta) + sum).
        let next = -(log_empty + sum).exp_m1();
        if next <= 0.0 {
            break;
        }
        s[i] = next.min(s[i - 1]);
        sum += s[i];
    }
    Ok(Tail::from_raw(s))
}

/// Equilibrium tail under alternating deletions without tombstones:
///
/// ```text
/// p_1 = 1 / (2 - alpha),  p_i = p_{i-1} s_{i-1},
/// s_i = p_i / (p_i + z),  z = (1 - alpha) / (alpha (2 - alpha))
/// ```
///
/// `s_1` equals `alpha` identically and is stored exactly.
pub fn no_tombstone_equilibrium(alpha: f64, depth: usize) -> Result<AgeTail, FluidError> {
    check_load("alpha", alpha)?;
    if alpha == 0.0 {
        return Err(FluidError::InvalidArgument("alpha must be positive".into()));
    }
    if depth == 0 {
        return Err(FluidError::InvalidArgument("depth must be positive".into()));
    }
    let (p1, _) = no_tombstone_scalars(alpha);
    let z = (1.0 - alpha) / (alpha * (2.0 - alpha));
    let mut s = Vec::with_capacity(depth);
    let mut p = p1;
    for i in 0..depth {
        let si = if i == 0 { alpha } else { p / (p + z) };
        s.push(si);
        p *= si;
    }
    Ok(Tail::from_raw(s))
}

/// Expected probes of an unsuccessful search that stops at the first cell
/// younger than the probe index:
///
/// ```text
/// sum_{j=1}^{K+1} prod_{k<j} s_k
/// ```
///
/// This equals `sum_j p_j` for the insert-only level distribution. A
/// `sum_j j p_j` form is sometimes quoted for the same quantity; it counts
/// something else and is not used here.
pub fn unsuccessful_search_cost(s: &AgeTail) -> f64 {
    let mut total = 0.0;
    let mut prefix = 1.0;
    for &sk in s.values() {
        total += prefix;
        prefix *= sk;
        if prefix == 0.0 {
            return total;
        }
    }
    total + prefix
}
