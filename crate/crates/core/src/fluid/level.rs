//! Equilibria of the level process.

use super::{
    check_load, AgeTail, FluidError, LevelDistribution, LevelMethod, SolverConfig, TombTail,
};

const ITERATION_CAP: usize = 100_000;

/// Ratio beyond which deeper levels are treated as unreachable.
const UNREACHABLE_RATIO: f64 = 1e250;

/// Insert-only equilibrium: `p_1 = 1`, `p_i = p_{i-1} s_{i-1}`.
pub fn level_insert_only(s: &AgeTail) -> LevelDistribution {
    let mut p = Vec::with_capacity(s.depth());
    let mut acc = 1.0;
    for &si in s.values() {
        p.push(acc);
        acc *= si;
    }
    if p.is_empty() {
        p.push(1.0);
    }
    LevelDistribution { p, q: 0.0 }
}

/// Deletion-state probability and `p_1` under alternating deletions without
/// tombstones at load `alpha`. Only `p_1` is returned in `p`.
pub fn no_tombstone_level(alpha: f64) -> Result<LevelDistribution, FluidError> {
    check_load("alpha", alpha)?;
    if alpha == 0.0 {
        return Err(FluidError::InvalidArgument("alpha must be positive".into()));
    }
    let (p1, q) = no_tombstone_scalars(alpha);
    Ok(LevelDistribution { p: vec![p1], q })
}

pub(crate) fn no_tombstone_scalars(alpha: f64) -> (f64, f64) {
    (1.0 / (2.0 - alpha), (1.0 - alpha) / (2.0 - alpha))
}

fn check_pair(s: &AgeTail, u: &TombTail) -> Result<(), FluidError> {
    if s.get(1) + u.get(1) > 1.0 + 1e-12 {
        return Err(FluidError::InvalidArgument(format!(
            "s1 + u1 = {} exceeds 1",
            s.get(1) + u.get(1)
        )));
    }
    Ok(())
}

fn padded(t: &[f64], depth: usize) -> Vec<f64> {
    let mut v = t.to_vec();
    v.resize(depth, 0.0);
    v
}

/// Level equilibrium with tombstones, truncated at the common depth of `s`
/// and `u`. Satisfies
///
/// ```text
/// p_1 = 1 - q
/// p_i = p_{i-1} s_{i-1} + sum_{j >= i-1} (p_j - p_{j+1}) u_{j+1},   i >= 2
/// q   = sum_{j >= 1} (p_j - p_{j+1}) (1 - s_1 - u_{j+1})
/// ```
///
/// with `p_{K+1} = u_{K+1} = 0`.
pub fn tombstone_level_equilibrium(
    s: &AgeTail,
    u: &TombTail,
    cfg: &SolverConfig,
) -> Result<LevelDistribution, FluidError> {
    check_pair(s, u)?;
    match cfg.level_method {
        LevelMethod::Direct => {
            let depth = s.depth().max(u.depth()).max(1);
            let (s, u) = (padded(s.values(), depth), padded(u.values(), depth));
            let mut p = Vec::new();
            let q = solve_direct(&s, &u, &mut p);
            Ok(LevelDistribution { p, q })
        }
        LevelMethod::Iterative => tombstone_level_iterate(s, u, None, cfg).map(|(l, _)| l),
    }
}

/// Exact solve of the truncated balance equations.
///
/// Writing `pi_j = p_j - p_{j+1}` for the probability of level exactly `j`,
/// the `i`-th equation rearranges to
///
/// ```text
/// pi_{i-1} (s_{i-1} + u_i) = sum_{j >= i} pi_j (1 - s_{i-1} - u_{j+1})
/// ```
///
/// which determines the level masses from the deepest level upward. All terms
/// are non-negative because `s_{i-1} + u_{j+1} <= s_1 + u_1 <= 1`.
pub(crate) fn solve_direct(s: &[f64], u: &[f64], p: &mut Vec<f64>) -> f64 {
    let k = s.len();
    debug_assert_eq!(u.len(), k);
    let u_at = |i: usize| if i <= k { u[i - 1] } else { 0.0 };

    let mut pi = vec![0.0; k + 1];
    pi[k] = 1.0;
    // Running sums over j >= i of pi_j and pi_j u_{j+1}.
    let mut mass = 1.0;
    let mut weighted = 0.0;
    for i in (2..=k).rev() {
        let up = s[i - 2] + u_at(i);
        let down = ((1.0 - s[i - 2]) * mass - weighted).max(0.0);
        if up <= 0.0 || down > up * UNREACHABLE_RATIO {
            // Level i cannot be reached from i-1, so nothing at or above i is.
            pi[i..].iter_mut().for_each(|x| *x = 0.0);
            pi[i - 1] = 1.0;
            mass = 1.0;
            weighted = u_at(i);
            continue;
        }
        pi[i - 1] = down / up;
        mass += pi[i - 1];
        weighted += pi[i - 1] * u_at(i);
        if mass > 1e200 {
            let scale = 1.0 / mass;
            pi[i - 1..].iter_mut().for_each(|x| *x *= scale);
            mass = 1.0;
            weighted *= scale;
        }
    }
    let s1 = s.first().copied().unwrap_or(0.0);
    let q_raw = ((1.0 - s1) * mass - weighted).max(0.0);
    let scale = 1.0 / (mass + q_raw);
    p.clear();
    p.resize(k, 0.0);
    let mut acc = 0.0;
    for j in (1..=k).rev() {
        acc += pi[j] * scale;
        p[j - 1] = acc;
    }
    q_raw * scale
}

/// One application of the level-chain update. Returns the new `q`.
fn chain_update(s: &[f64], u: &[f64], p: &[f64], next: &mut [f64]) -> f64 {
    let k = p.len();
    let u_at = |i: usize| if i <= k { u[i - 1] } else { 0.0 };
    let p_at = |i: usize| if i <= k { p[i - 1] } else { 0.0 };
    let s1 = s[0];
    let mut q = 0.0;
    // tail = sum_{j >= i-1} (p_j - p_{j+1}) u_{j+1}, built from the top down.
    let mut tail = 0.0;
    for i in (2..=k).rev() {
        let j = i - 1;
        tail += (p_at(j) - p_at(j + 1)) * u_at(j + 1);
        next[i - 1] = p_at(i - 1) * s[i - 2] + tail;
    }
    for j in 1..=k {
        q += (p_at(j) - p_at(j + 1)) * (1.0 - s1 - u_at(j + 1));
    }
    next[0] = 1.0 - q;
    q
}

/// Damped fixed-point iteration of the level chain from `warm` (or from a
/// fresh key at level 1). Returns the equilibrium and the iteration count.
///
/// The undamped chain can be periodic (an empty table alternates between the
/// deletion state and level 1), so each step averages with the previous
/// iterate.
pub fn tombstone_level_iterate(
    s: &AgeTail,
    u: &TombTail,
    warm: Option<&LevelDistribution>,
    cfg: &SolverConfig,
) -> Result<(LevelDistribution, usize), FluidError> {
    check_pair(s, u)?;
    let depth = s.depth().max(u.depth()).max(1);
    let (s, u) = (padded(s.values(), depth), padded(u.values(), depth));
    let mut p = match warm {
        Some(w) => padded(&w.p, depth),
        None => {
            let mut p = vec![0.0; depth];
            p[0] = 1.0;
            p
        }
    };
    let mut next = vec![0.0; depth];
    let mut change = f64::INFINITY;
    for it in 1..=ITERATION_CAP {
        chain_update(&s, &u, &p, &mut next);
        change = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < cfg.fixed_point_tol {
            let mut p = next;
            let mut scratch = vec![0.0; depth];
            let q = chain_update(&s, &u, &p, &mut scratch);
            p[0] = 1.0 - q;
            return Ok((LevelDistribution { p, q }, it));
        }
        for (a, b) in p.iter_mut().zip(&next) {
            *a = 0.5 * (*a + b);
        }
    }
    Err(FluidError::Convergence {
        iterations: ITERATION_CAP,
        change,
    })
}

/// Largest violation of the balance equations by `level`.
pub fn tombstone_level_residual(s: &AgeTail, u: &TombTail, level: &LevelDistribution) -> f64 {
    let depth = s.depth().max(u.depth()).max(level.p.len()).max(1);
    let (s, u, p) = (
        padded(s.values(), depth),
        padded(u.values(), depth),
        padded(&level.p, depth),
    );
    let mut next = vec![0.0; depth];
    let q = chain_update(&s, &u, &p, &mut next);
    let mut worst = (q - level.q).abs().max((p[0] + level.q - 1.0).abs());
    for (a, b) in p.iter().zip(&next) {
        worst = worst.max((a - b).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::Tail;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tail(v: &[f64]) -> Tail {
        Tail::new(v.to_vec()).unwrap()
    }

    #[test]
    fn insert_only_products() {
        assert_eq!(level_insert_only(&Tail::zeros(3)).p, vec![1.0, 0.0, 0.0]);
        assert_eq!(
            level_insert_only(&tail(&[0.5, 0.25, 0.0])).p,
            vec![1.0, 0.5, 0.125]
        );
    }

    #[test]
    fn insert_only_matches_term_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut v: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let lvl = level_insert_only(&tail(&v));
            for i in 1..=10 {
                let direct: f64 = v[..i - 1].iter().product();
                assert!((lvl.p(i) - direct).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn no_tombstone_closed_form() {
        let l = no_tombstone_level(0.9).unwrap();
        assert!((l.q - 1.0 / 11.0).abs() < 1e-15);
        assert!((l.p[0] - 10.0 / 11.0).abs() < 1e-15);
        assert!((l.q + l.p[0] - 1.0).abs() < 1e-15);
        let tiny = no_tombstone_level(1e-12).unwrap();
        assert!((tiny.q - 0.5).abs() < 1e-11);
        assert!(no_tombstone_level(1.0).is_err());
        assert!(no_tombstone_level(0.0).is_err());
    }

    #[test]
    fn tombstone_reduces_to_no_tombstone() {
        let cfg = SolverConfig::default();
        for alpha in [0.3, 0.9, 0.99] {
            let s = tail(&[alpha, alpha * 0.8, alpha * 0.3, 0.01]);
            let l = tombstone_level_equilibrium(&s, &Tail::zeros(4), &cfg).unwrap();
            assert!((l.p[0] - 1.0 / (2.0 - alpha)).abs() < 1e-14);
            assert!((l.q - (1.0 - alpha) / (2.0 - alpha)).abs() < 1e-14);
            // With no tombstones the deeper levels follow p_i = p_{i-1} s_{i-1}.
            for i in 2..=4 {
                assert!((l.p(i) - l.p(i - 1) * s.get(i - 1)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_table_level() {
        let cfg = SolverConfig::default();
        let l = tombstone_level_equilibrium(&Tail::zeros(5), &Tail::zeros(5), &cfg).unwrap();
        assert_eq!(l.q, 0.5);
        assert_eq!(l.p[0], 0.5);
        assert!(l.p[1..].iter().all(|&x| x == 0.0));
        let it = SolverConfig {
            level_method: LevelMethod::Iterative,
            ..cfg
        };
        let l2 = tombstone_level_equilibrium(&Tail::zeros(5), &Tail::zeros(5), &it).unwrap();
        assert!((l2.q - 0.5).abs() < 1e-11);
    }

    #[test]
    fn rejects_overfull() {
        let cfg = SolverConfig::default();
        assert!(tombstone_level_equilibrium(&tail(&[0.7]), &tail(&[0.4]), &cfg).is_err());
    }

    fn random_pair(rng: &mut ChaCha8Rng, k: usize) -> (Tail, Tail) {
        let total: f64 = rng.gen_range(0.3..0.98);
        let s1 = total * rng.gen_range(0.5..0.95);
        let u1 = total - s1;
        let mut s = vec![s1];
        let mut u = vec![u1];
        for _ in 1..k {
            s.push(s.last().unwrap() * rng.gen_range(0.3..1.0));
            u.push(u.last().unwrap() * rng.gen_range(0.3..1.0));
        }
        (tail(&s), tail(&u))
    }

    #[test]
    fn direct_and_iterative_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = SolverConfig::default();
        let it = SolverConfig {
            level_method: LevelMethod::Iterative,
            ..cfg
        };
        for _ in 0..50 {
            let (s, u) = random_pair(&mut rng, 12);
            let a = tombstone_level_equilibrium(&s, &u, &cfg).unwrap();
            let b = tombstone_level_equilibrium(&s, &u, &it).unwrap();
            assert!((a.q - b.q).abs() < 1e-10, "{} vs {}", a.q, b.q);
            for (x, y) in a.p.iter().zip(&b.p) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!((a.p[0] + a.q - 1.0).abs() < 1e-15);
            assert!(tombstone_level_residual(&s, &u, &a) < cfg.fixed_point_tol);
        }
    }

    #[test]
    fn warm_start_converges_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SolverConfig::default();
        let (s, u) = random_pair(&mut rng, 10);
        let (cold, n_cold) = tombstone_level_iterate(&s, &u, None, &cfg).unwrap();
        let (_, n_warm) = tombstone_level_iterate(&s, &u, Some(&cold), &cfg).unwrap();
        assert!(n_warm < n_cold);
        assert!(n_warm <= 2);
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s, u) = random_pair(&mut rng, 10);
        let cfg = SolverConfig {
            fixed_point_tol: 1e-300,
            ..SolverConfig::default()
        };
        // A tolerance below round-off can never be met.
        let r = tombstone_level_iterate(&s, &u, None, &cfg);
        assert!(matches!(r, Err(FluidError::Convergence { .. })));
    }

    /// Simulates the level chain directly and returns empirical frequencies of
    /// the deletion state and of each exact level.
    fn simulate_chain(s: &Tail, u: &Tail, steps: usize, seed: u64) -> (f64, Vec<f64>) {
        let k = s.depth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = 0usize; // 0 is the deletion state
        let mut q_count = 0usize;
        let mut counts = vec![0usize; k + 2];
        let s1 = s.get(1);
        let u1 = u.get(1);
        for _ in 0..steps {
            if level == 0 {
                q_count += 1;
                level = 1;
                continue;
            }
            counts[level.min(k + 1)] += 1;
            let j = level;
            let x: f64 = rng.gen();
            // Cell outcomes: empty, tombstone <= j (place), tombstone > j
            // (advance), live >= j (advance), live a < j (swap to a + 1).
            let empty = 1.0 - s1 - u1;
            let tomb_le = u1 - u.get(j + 1);
            let tomb_gt = u.get(j + 1);
            let live_ge = s.get(j);
            if x < empty + tomb_le {
                level = 0;
            } else if x < empty + tomb_le + tomb_gt + live_ge {
                level = j + 1;
            } else {
                // Resident age a < j with probability s_a - s_{a+1}.
                let mut y = x - (empty + tomb_le + tomb_gt + live_ge);
                let mut a = 1;
                while a < j - 1 && y >= s.get(a) - s.get(a + 1) {
                    y -= s.get(a) - s.get(a + 1);
                    a += 1;
                }
                level = a + 1;
            }
            if level > k {
                // Truncation: the deepest level cannot advance further.
                level = k;
            }
        }
        let total = steps as f64;
        let pi: Vec<f64> = counts[1..=k].iter().map(|&c| c as f64 / total).collect();
        (q_count as f64 / total, pi)
    }

    #[test]
    fn matches_monte_carlo_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = SolverConfig::default();
        for trial in 0..2 {
            let (s, u) = random_pair(&mut rng, 8);
            // Make the deepest tails negligible so truncation does not matter.
            let mut sv = s.values().to_vec();
            let mut uv = u.values().to_vec();
            sv[7] = 0.0;
            uv[7] = 0.0;
            sv[6] *= 1e-3;
            uv[6] *= 1e-3;
            let (s, u) = (tail(&sv), tail(&uv));
            let l = tombstone_level_equilibrium(&s, &u, &cfg).unwrap();
            let (q_emp, pi_emp) = simulate_chain(&s, &u, 10_000_000, 100 + trial);
            assert!((l.q - q_emp).abs() < 1e-3, "q {} vs {}", l.q, q_emp);
            for i in 1..=8 {
                let exact = l.p(i) - l.p(i + 1);
                assert!(
                    (exact - pi_emp[i - 1]).abs() < 1e-3,
                    "level {i}: {exact} vs {}",
                    pi_emp[i - 1]
                );
            }
        }
    }

    #[test]
    fn no_tombstone_two_state_chain() {
        // Deletion state and "placing" state at fixed s1 = alpha.
        let alpha = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut deleting = false;
        let mut q_count = 0u64;
        let steps = 10_000_000u64;
        for _ in 0..steps {
            if deleting {
                q_count += 1;
                deleting = false;
            } else if rng.gen::<f64>() < 1.0 - alpha {
                deleting = true;
            }
        }
        let q = no_tombstone_level(alpha).unwrap().q;
        assert!((q - q_count as f64 / steps as f64).abs() < 1e-3);
    }
}
