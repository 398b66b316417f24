//! The table against a straight-line reimplementation of the placement rules.

use std::collections::BTreeMap;

use proptest::prelude::*;
use robinhood_fluid::probe::{probe_at, ProbeMode, ProbeParams};
use robinhood_fluid::table::{CellState, RobinHoodTable, TableMode};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Cell {
    Empty,
    Live(u64, u32),
    Tomb(u32),
}

struct Naive {
    cells: Vec<Cell>,
    params: ProbeParams,
    probe: ProbeMode,
    mode: TableMode,
}

impl Naive {
    fn insert(&mut self, key: u64) {
        let (mut key, mut age) = (key, 1u32);
        loop {
            let c = probe_at(key, age as u64, &self.params, self.probe).unwrap();
            match self.cells[c] {
                Cell::Empty => {
                    self.cells[c] = Cell::Live(key, age);
                    return;
                }
                Cell::Tomb(t) if self.mode == TableMode::TombstoneDeletion && t <= age => {
                    self.cells[c] = Cell::Live(key, age);
                    return;
                }
                Cell::Live(k, a) if a < age => {
                    self.cells[c] = Cell::Live(key, age);
                    key = k;
                    age = a + 1;
                }
                _ => age += 1,
            }
        }
    }

    fn delete(&mut self, key: u64) {
        let c = self
            .cells
            .iter()
            .position(|x| matches!(x, Cell::Live(k, _) if *k == key))
            .unwrap();
        let Cell::Live(_, a) = self.cells[c] else {
            unreachable!()
        };
        self.cells[c] = if self.mode == TableMode::TombstoneDeletion {
            Cell::Tomb(a)
        } else {
            Cell::Empty
        };
    }

    fn histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for c in &self.cells {
            if let Cell::Live(_, a) = c {
                *h.entry(*a).or_insert(0) += 1;
            }
        }
        h
    }

    fn live_keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self
            .cells
            .iter()
            .filter_map(|c| match c {
                Cell::Live(k, _) => Some(*k),
                _ => None,
            })
            .collect();
        keys.sort_unstable();
        keys
    }
}

fn as_naive(c: CellState) -> Cell {
    match c {
        CellState::Empty => Cell::Empty,
        CellState::Live { key, age } => Cell::Live(key, age),
        CellState::Tombstone { age } => Cell::Tomb(age),
    }
}

#[derive(Clone, Debug)]
enum Op {
    Insert,
    /// Delete the live key at this position (mod live count) in sorted order.
    Delete(usize),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![3 => Just(Op::Insert), 2 => any::<usize>().prop_map(Op::Delete)],
        1..160,
    )
}

fn run(
    n: usize,
    seed: u64,
    probe: ProbeMode,
    mode: TableMode,
    ops: &[Op],
) -> Result<(), TestCaseError> {
    let params = ProbeParams::new(seed, n);
    let mut table = RobinHoodTable::new(params, probe, mode).unwrap();
    let mut naive = Naive {
        cells: vec![Cell::Empty; n],
        params,
        probe,
        mode,
    };
    let mut next = 0u64;
    for op in ops {
        match op {
            Op::Insert if table.len() < 48.min(n - 1) => {
                table.insert(next).unwrap();
                naive.insert(next);
                next += 1;
            }
            Op::Delete(i) if mode != TableMode::InsertOnly && !table.is_empty() => {
                let keys = naive.live_keys();
                let key = keys[i % keys.len()];
                table.delete_key(key).unwrap();
                naive.delete(key);
            }
            _ => {}
        }
        for c in 0..n {
            prop_assert_eq!(as_naive(table.cell(c)), naive.cells[c], "cell {}", c);
        }
    }
    let counts: BTreeMap<u32, usize> = table
        .age_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(a, &c)| (a as u32, c as usize))
        .collect();
    prop_assert_eq!(counts, naive.histogram());
    prop_assert!(table.check_invariants().is_ok());
    Ok(())
}

fn modes() -> impl Strategy<Value = TableMode> {
    prop_oneof![
        Just(TableMode::InsertOnly),
        Just(TableMode::TombstoneDeletion),
        Just(TableMode::HardDeletion),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_probing_matches_naive(
        n in 2usize..=64, seed in any::<u64>(), mode in modes(), ops in ops()
    ) {
        run(n, seed, ProbeMode::FullyRandom, mode, &ops)?;
    }

    #[test]
    fn double_hashing_matches_naive(
        shift in 1u32..=6, seed in any::<u64>(), mode in modes(), ops in ops()
    ) {
        run(1 << shift, seed, ProbeMode::DoubleHashing, mode, &ops)?;
    }
}
