//! Reference values reproduced by the default solvers.

use robinhood_fluid::fluid::{
    celis_tails, insert_only_fill, no_tombstone_equilibrium, no_tombstone_evolve,
    no_tombstone_evolve_observed, tombstone_evolve, tombstone_evolve_observed, SolverConfig,
    TombstoneVariant,
};
use robinhood_fluid::tails_to_key_fractions;

#[test]
fn insert_only_at_095() {
    let cfg = SolverConfig::default();
    let s = insert_only_fill(0.95, &cfg).unwrap().s;
    let f = tails_to_key_fractions(&s, 0.95).unwrap();
    assert!((f[&1] - 0.083458).abs() <= 1e-5, "{}", f[&1]);
    assert!((f[&7] - 0.000012417).abs() <= 1e-7, "{}", f[&7]);
    let exact = tails_to_key_fractions(&celis_tails(0.95, 64).unwrap(), 0.95).unwrap();
    for (age, v) in &exact {
        assert!((f.get(age).copied().unwrap_or(0.0) - v).abs() <= 1e-4);
    }
}

#[test]
fn no_tombstone_churn_to_twice_n() {
    let cfg = SolverConfig::default();
    let start = insert_only_fill(0.9, &cfg).unwrap();
    let mut drift = 0.0f64;
    let end = no_tombstone_evolve_observed(&start, 2.0, 0.9, &cfg, |snap| {
        drift = drift.max((snap.s[0] - 0.9).abs());
    })
    .unwrap();
    assert!(drift < 10.0 * cfg.dt);
    let f = tails_to_key_fractions(&end.s, 0.9).unwrap();
    assert!((f[&1] - 0.0109912456).abs() <= 1e-5, "{}", f[&1]);
    assert!((f[&12] - 0.0000159736).abs() <= 1e-6, "{}", f[&12]);
}

#[test]
fn no_tombstone_churn_approaches_equilibrium() {
    let cfg = SolverConfig::default().with_dt(1e-5);
    let start = insert_only_fill(0.9, &cfg).unwrap();
    let end = no_tombstone_evolve(&start, 10.0, 0.9, &cfg).unwrap();
    let eq = no_tombstone_equilibrium(0.9, 64).unwrap();
    for i in 1..=64 {
        assert!((end.s.get(i) - eq.get(i)).abs() < 1e-3, "age {i}");
    }
    let fe = tails_to_key_fractions(&end.s, 0.9).unwrap();
    let fq = tails_to_key_fractions(&eq, 0.9).unwrap();
    for (age, v) in &fq {
        assert!(
            (fe.get(age).copied().unwrap_or(0.0) - v).abs() < 1e-3,
            "age {age}"
        );
    }
}

#[test]
fn tombstone_churn_to_twice_n() {
    let cfg = SolverConfig::default();
    let start = insert_only_fill(0.9, &cfg).unwrap();
    let end = tombstone_evolve(&start, 2.0, 0.9, &cfg).unwrap();
    let f = tails_to_key_fractions(&end.s, 0.9).unwrap();
    assert!((f[&15] - 0.3239990269).abs() <= 1e-4, "{}", f[&15]);
    assert!((f[&18] - 0.0000292668).abs() <= 1e-5, "{}", f[&18]);
    assert!(f[&1] <= 1e-8, "{}", f[&1]);
}

#[test]
fn conservation_variant_keeps_load() {
    let cfg = SolverConfig::default()
        .with_dt(1e-5)
        .with_variant(TombstoneVariant::ConservationConsistent);
    let start = insert_only_fill(0.9, &cfg).unwrap();
    let mut drift = 0.0f64;
    tombstone_evolve_observed(&start, 2.0, 0.9, &cfg, |snap| {
        drift = drift.max((snap.s[0] - 0.9).abs());
    })
    .unwrap();
    assert!(drift < 10.0 * cfg.dt, "{drift}");
}
