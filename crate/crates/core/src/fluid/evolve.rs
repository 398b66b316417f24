//! Forward Euler integration of the tail equations.
//!
//! Every integrator advances in fixed steps of `dt` scaled time and shortens
//! only its final step, so that the stop quantity (the load during filling,
//! the inserted mass during churn) lands exactly on its target.

use super::level::{no_tombstone_scalars, solve_direct};
use super::{
    check_load, AgeTail, FluidError, FluidState, LevelDistribution, LevelMethod, SolverConfig,
    Tail, TombstoneVariant,
};

/// Largest round-off excursion outside `[0, 1]` tolerated before clamping.
const EXCURSION: f64 = 1e-12;

/// Tolerance on `s_1 = alpha` when a churn phase starts.
const START_LOAD_TOL: f64 = 1e-9;

/// A borrowed view of the integrator state after a step.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub t: f64,
    pub inserted_mass: f64,
    pub s: &'a [f64],
    pub u: &'a [f64],
}

fn clamp_unit(v: &mut [f64]) {
    for x in v.iter_mut() {
        debug_assert!(
            *x > -EXCURSION && *x < 1.0 + EXCURSION,
            "tail value {x} left [0, 1]"
        );
        *x = x.clamp(0.0, 1.0);
    }
}

fn debug_check_monotone(v: &[f64]) {
    debug_assert!(
        v.windows(2).all(|w| w[0] + EXCURSION >= w[1]),
        "tail lost monotonicity: {v:?}"
    );
}

/// Doubles the depth while the deepest tail mass is above tolerance.
fn maybe_extend(s: &mut Vec<f64>, u: &mut Vec<f64>, cfg: &SolverConfig) -> Result<(), FluidError> {
    loop {
        let k = s.len();
        let mass = s[k - 1] + u[k - 1];
        if mass <= cfg.tail_tol {
            return Ok(());
        }
        if 2 * k > cfg.max_depth {
            return Err(FluidError::Truncation { depth: k, mass });
        }
        s.resize(2 * k, 0.0);
        u.resize(2 * k, 0.0);
    }
}

fn padded(t: &Tail, depth: usize) -> Vec<f64> {
    let mut v = t.values().to_vec();
    if v.len() < depth {
        v.resize(depth, 0.0);
    }
    v
}

/// Integrates the insert-only equations from an empty table until `s_1`
/// reaches `alpha` and returns the tail at that load.
pub fn insert_only_evolve(alpha: f64, cfg: &SolverConfig) -> Result<AgeTail, FluidError> {
    insert_only_fill(alpha, cfg).map(|state| state.s)
}

pub fn insert_only_fill(alpha: f64, cfg: &SolverConfig) -> Result<FluidState, FluidError> {
    insert_only_fill_observed(alpha, cfg, |_| {})
}

/// Insert-only filling:
///
/// ```text
/// ds_i/dt = p_i (1 - s_i),   p_i = s_1 s_2 ... s_{i-1}
/// ```
///
/// `observer` sees the state after every step.
pub fn insert_only_fill_observed<F>(
    alpha: f64,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<FluidState, FluidError>
where
    F: FnMut(Snapshot<'_>),
{
    cfg.validate()?;
    check_load("alpha", alpha)?;
    let mut s = vec![0.0; cfg.depth];
    let mut u = vec![0.0; cfg.depth];
    let mut ds = vec![0.0; cfg.depth];
    let mut t = 0.0;
    let mut mass = 0.0;

    while s[0] < alpha {
        let k = s.len();
        ds.resize(k, 0.0);
        let mut p = 1.0;
        let mut active = k;
        for i in 0..k {
            ds[i] = p * (1.0 - s[i]);
            p *= s[i];
            if p == 0.0 {
                active = i + 1;
                break;
            }
        }
        let rate = ds[0];
        let (h, last) = if s[0] + cfg.dt * rate >= alpha {
            ((alpha - s[0]) / rate, true)
        } else {
            (cfg.dt, false)
        };
        for i in 0..active {
            s[i] += h * ds[i];
        }
        mass += h * rate;
        t += h;
        if last {
            s[0] = alpha;
        }
        clamp_unit(&mut s[..active.min(k)]);
        debug_check_monotone(&s);
        maybe_extend(&mut s, &mut u, cfg)?;
        observer(Snapshot {
            t,
            inserted_mass: mass,
            s: &s,
            u: &u,
        });
    }
    Ok(FluidState {
        t,
        s: Tail::from_raw(s),
        u: Tail::from_raw(u),
        inserted_mass: mass,
    })
}

fn check_churn_start(start: &FluidState, alpha: f64) -> Result<(), FluidError> {
    check_load("alpha", alpha)?;
    if alpha == 0.0 {
        return Err(FluidError::InvalidArgument("alpha must be positive".into()));
    }
    if (start.s.get(1) - alpha).abs() > START_LOAD_TOL {
        return Err(FluidError::Precondition(format!(
            "churn must start at s1 = alpha = {alpha}, got s1 = {}",
            start.s.get(1)
        )));
    }
    Ok(())
}

pub fn no_tombstone_evolve(
    start: &FluidState,
    target_inserted_mass: f64,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<FluidState, FluidError> {
    no_tombstone_evolve_observed(start, target_inserted_mass, alpha, cfg, |_| {})
}

/// Alternating deletions and insertions, deleted cells simply emptied:
///
/// ```text
/// ds_i/dt = p_i (1 - s_i) - q s_i / alpha
/// p_1 = 1 / (2 - alpha),  p_i = p_{i-1} s_{i-1},  q = (1 - alpha) / (2 - alpha)
/// ```
///
/// Completed insertions accrue at rate `q`. The creation term uses
/// `1 - s_i` (an empty cell or a resident younger than `i`); its fixed
/// point is exactly [`super::no_tombstone_equilibrium`].
pub fn no_tombstone_evolve_observed<F>(
    start: &FluidState,
    target_inserted_mass: f64,
    alpha: f64,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<FluidState, FluidError>
where
    F: FnMut(Snapshot<'_>),
{
    cfg.validate()?;
    check_churn_start(start, alpha)?;
    let (p1, q) = no_tombstone_scalars(alpha);
    let depth = cfg.depth.max(start.s.depth());
    let mut s = padded(&start.s, depth);
    let mut u = vec![0.0; s.len()];
    let mut ds = vec![0.0; s.len()];
    let mut t = start.t;
    let mut mass = start.inserted_mass;
    let decay = q / alpha;

    while mass < target_inserted_mass {
        let k = s.len();
        ds.resize(k, 0.0);
        let mut p = p1;
        let mut active = k;
        for i in 0..k {
            ds[i] = p * (1.0 - s[i]) - decay * s[i];
            p *= s[i];
            if p == 0.0 && s[i] == 0.0 {
                active = i + 1;
                break;
            }
        }
        let (h, last) = if mass + cfg.dt * q >= target_inserted_mass {
            ((target_inserted_mass - mass) / q, true)
        } else {
            (cfg.dt, false)
        };
        for i in 0..active {
            s[i] += h * ds[i];
        }
        t += h;
        mass = if last {
            target_inserted_mass
        } else {
            mass + h * q
        };
        clamp_unit(&mut s[..active]);
        debug_check_monotone(&s);
        u.resize(s.len(), 0.0);
        maybe_extend(&mut s, &mut u, cfg)?;
        observer(Snapshot {
            t,
            inserted_mass: mass,
            s: &s,
            u: &u,
        });
    }
    let k = s.len();
    Ok(FluidState {
        t,
        s: Tail::from_raw(s),
        u: Tail::from_raw(vec![0.0; k]),
        inserted_mass: mass,
    })
}

pub fn tombstone_evolve(
    start: &FluidState,
    target_inserted_mass: f64,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<FluidState, FluidError> {
    tombstone_evolve_observed(start, target_inserted_mass, alpha, cfg, |_| {})
}

/// Alternating deletions and insertions with tombstones:
///
/// ```text
/// ds_i/dt = sum_{j>=i} (p_j - p_{j+1}) (1 - X - u_{j+1}) - q s_i / alpha
/// du_i/dt = q s_i / alpha - sum_{j>=i} p_j (u_j - u_{j+1})
/// ```
///
/// with `X = s_i` or `X = s_1` depending on [`TombstoneVariant`], and the
/// level equilibrium `(p, q)` re-solved from the current tails every step.
/// The deletion denominator `s_1` is replaced by `alpha`, its constant value
/// during churn.
pub fn tombstone_evolve_observed<F>(
    start: &FluidState,
    target_inserted_mass: f64,
    alpha: f64,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<FluidState, FluidError>
where
    F: FnMut(Snapshot<'_>),
{
    cfg.validate()?;
    check_churn_start(start, alpha)?;
    let depth = cfg.depth.max(start.s.depth()).max(start.u.depth());
    let mut s = padded(&start.s, depth);
    let mut u = padded(&start.u, depth);
    let mut ds = vec![0.0; depth];
    let mut du = vec![0.0; depth];
    let mut p = Vec::with_capacity(depth);
    let mut warm: Option<LevelDistribution> = None;
    let mut t = start.t;
    let mut mass = start.inserted_mass;
    let decay = 1.0 / alpha;

    while mass < target_inserted_mass {
        let k = s.len();
        // Levels and tails beyond the deepest non-zero entry stay zero.
        let support = s
            .iter()
            .zip(&u)
            .rposition(|(a, b)| *a > 0.0 || *b > 0.0)
            .map_or(0, |i| i + 1);
        let active = (support + 2).min(k);

        let q = match cfg.level_method {
            LevelMethod::Direct => solve_direct(&s[..active], &u[..active], &mut p),
            LevelMethod::Iterative => {
                let st = Tail::from_raw(s[..active].to_vec());
                let ut = Tail::from_raw(u[..active].to_vec());
                let (level, _) =
                    super::level::tombstone_level_iterate(&st, &ut, warm.as_ref(), cfg)?;
                p.clear();
                p.extend_from_slice(&level.p);
                let q = level.q;
                warm = Some(level);
                q
            }
        };
        if q <= 0.0 {
            return Err(FluidError::Precondition(
                "no insertion can complete: the table has no free cell".into(),
            ));
        }

        ds.resize(k, 0.0);
        du.resize(k, 0.0);
        let p_at = |i: usize| if i < active { p[i] } else { 0.0 };
        let u_at = |i: usize| if i < k { u[i] } else { 0.0 };
        // Suffix sums over j >= i (0-based j): b = sum (p_j - p_{j+1}) u_{j+1},
        // c = sum p_j (u_j - u_{j+1}).
        let mut b = 0.0;
        let mut c = 0.0;
        for i in (0..active).rev() {
            b += (p_at(i) - p_at(i + 1)) * u_at(i + 1);
            c += p_at(i) * (u_at(i) - u_at(i + 1));
            let x = match cfg.variant {
                TombstoneVariant::AsWritten => s[i],
                TombstoneVariant::ConservationConsistent => s[0],
            };
            let deleted = q * s[i] * decay;
            ds[i] = (1.0 - x) * p_at(i) - b - deleted;
            du[i] = deleted - c;
        }

        let (h, last) = if mass + cfg.dt * q >= target_inserted_mass {
            ((target_inserted_mass - mass) / q, true)
        } else {
            (cfg.dt, false)
        };
        for i in 0..active {
            s[i] += h * ds[i];
            u[i] += h * du[i];
        }
        t += h;
        mass = if last {
            target_inserted_mass
        } else {
            mass + h * q
        };
        clamp_unit(&mut s[..active]);
        clamp_unit(&mut u[..active]);
        debug_check_monotone(&s);
        debug_check_monotone(&u);
        maybe_extend(&mut s, &mut u, cfg)?;
        observer(Snapshot {
            t,
            inserted_mass: mass,
            s: &s,
            u: &u,
        });
    }
    Ok(FluidState {
        t,
        s: Tail::from_raw(s),
        u: Tail::from_raw(u),
        inserted_mass: mass,
    })
}
