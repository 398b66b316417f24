//! The discrete Robin Hood table.
//!
//! Cells hold only a key identifier and its age, the index of the probe
//! position the key occupies. On a collision the older key keeps the cell.
//! Three deletion regimes are supported: none, tombstones (deleted cells keep
//! their age as a landmark), and hard deletion (cells become empty and the
//! table relies on its per-age counters to bound searches).

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::{mix64, KeyId, ProbeError, ProbeMode, ProbeParams, Prober};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("key {0} is already live in the table")]
    DuplicateKey(KeyId),
    #[error("key {0} is not live in the table")]
    MissingKey(KeyId),
    #[error("table is full")]
    Full,
    #[error("table holds no live keys")]
    Empty,
    #[error("deletion is not supported in insert-only mode")]
    DeletionUnsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMode {
    #[default]
    InsertOnly,
    /// Deleted keys leave a tombstone carrying their age.
    TombstoneDeletion,
    /// Deleted keys leave an empty cell; nothing else moves.
    HardDeletion,
}

/// Public view of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Empty,
    Live { key: KeyId, age: u32 },
    Tombstone { age: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Empty,
    /// `entry` indexes the dense live-key registry.
    Live {
        key: KeyId,
        age: u32,
        entry: u32,
    },
    /// The deleted key is kept only so invariants can be re-derived.
    Tombstone {
        key: KeyId,
        age: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementReport {
    /// Probe attempts consumed, including the final successful one.
    pub steps: u64,
    /// Final age of every key whose cell changed, in placement order.
    pub final_ages: Vec<(KeyId, u32)>,
    /// Final age of the key that was inserted.
    pub inserted_age: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    Found { probes: u32 },
    NotFound { probes: u32 },
}

impl SearchOutcome {
    pub fn probes(&self) -> u32 {
        match *self {
            SearchOutcome::Found { probes } | SearchOutcome::NotFound { probes } => probes,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, SearchOutcome::Found { .. })
    }
}

#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix64(self.0 ^ u64::from(b));
        }
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = mix64(n);
    }
}

type KeyIndex = HashMap<KeyId, u32, BuildHasherDefault<KeyHasher>>;

#[derive(Debug, Clone, Copy)]
struct Hand {
    key: KeyId,
    age: u32,
    entry: u32,
}

/// A Robin Hood table over `n` cells with random probe sequences.
#[derive(Clone)]
pub struct RobinHoodTable {
    cells: Vec<Slot>,
    /// Dense registry of live keys and their cells, swap-removed on deletion.
    live: Vec<(KeyId, usize)>,
    index: KeyIndex,
    /// `age_counts[a]` is the number of live keys of age exactly `a`.
    age_counts: Vec<u64>,
    max_age: u32,
    step_count: u64,
    mode: TableMode,
    prober: Prober,
}

impl std::fmt::Debug for RobinHoodTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RobinHoodTable")
            .field("n", &self.cells.len())
            .field("live", &self.live.len())
            .field("max_age", &self.max_age)
            .field("step_count", &self.step_count)
            .field("mode", &self.mode)
            .finish()
    }
}

impl RobinHoodTable {
    pub fn new(
        params: ProbeParams,
        probe_mode: ProbeMode,
        mode: TableMode,
    ) -> Result<Self, TableError> {
        let prober = Prober::new(params, probe_mode)?;
        Ok(Self {
            cells: vec![Slot::Empty; params.table_size],
            live: Vec::new(),
            index: KeyIndex::default(),
            age_counts: vec![0],
            max_age: 0,
            step_count: 0,
            mode,
            prober,
        })
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn load(&self) -> f64 {
        self.live.len() as f64 / self.cells.len() as f64
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    pub fn prober(&self) -> &Prober {
        &self.prober
    }

    /// Cumulative probe attempts over all insertions.
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn max_age(&self) -> u32 {
        self.max_age
    }

    /// Counts of live keys indexed by exact age; index 0 is always zero.
    pub fn age_counts(&self) -> &[u64] {
        &self.age_counts[..=self.max_age as usize]
    }

    pub fn contains(&self, key: KeyId) -> bool {
        self.index.contains_key(&key)
    }

    pub fn cell(&self, i: usize) -> CellState {
        match self.cells[i] {
            Slot::Empty => CellState::Empty,
            Slot::Live { key, age, .. } => CellState::Live { key, age },
            Slot::Tombstone { age, .. } => CellState::Tombstone { age },
        }
    }

    pub fn tombstone_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, Slot::Tombstone { .. }))
            .count()
    }

    /// Inserts `key` and reports every key whose cell changed.
    pub fn insert(&mut self, key: KeyId) -> Result<PlacementReport, TableError> {
        let mut moves: Vec<(KeyId, u32)> = Vec::new();
        let (steps, inserted_age) = self.place(key, |k, age| moves.push((k, age)))?;
        // A key can be placed more than once in one insertion; keep its last age.
        let mut final_ages: Vec<(KeyId, u32)> = Vec::with_capacity(moves.len());
        for (i, &(k, age)) in moves.iter().enumerate() {
            if !moves[i + 1..].iter().any(|&(later, _)| later == k) {
                final_ages.push((k, age));
            }
        }
        Ok(PlacementReport {
            steps,
            final_ages,
            inserted_age,
        })
    }

    /// Inserts `key` without collecting moves. Returns `(steps, inserted_age)`.
    pub fn insert_fast(&mut self, key: KeyId) -> Result<(u64, u32), TableError> {
        self.place(key, |_, _| {})
    }

    fn place<F: FnMut(KeyId, u32)>(
        &mut self,
        key: KeyId,
        mut on_place: F,
    ) -> Result<(u64, u32), TableError> {
        if self.index.contains_key(&key) {
            return Err(TableError::DuplicateKey(key));
        }
        if self.live.len() == self.cells.len() {
            return Err(TableError::Full);
        }
        let entry = self.live.len() as u32;
        self.live.push((key, usize::MAX));
        self.index.insert(key, entry);

        let mut hand = Hand { key, age: 1, entry };
        let mut steps = 0u64;
        let mut inserted_age = 0;
        loop {
            steps += 1;
            let c = self.prober.cell(hand.key, u64::from(hand.age));
            match self.cells[c] {
                Slot::Empty => {
                    self.put(c, hand);
                    break;
                }
                Slot::Tombstone { age, .. }
                    if self.mode == TableMode::TombstoneDeletion && age <= hand.age =>
                {
                    self.put(c, hand);
                    break;
                }
                Slot::Live {
                    key: rkey,
                    age: rage,
                    entry: rentry,
                } if rage < hand.age => {
                    self.age_counts[rage as usize] -= 1;
                    self.put(c, hand);
                    if hand.key == key {
                        inserted_age = hand.age;
                    }
                    on_place(hand.key, hand.age);
                    hand = Hand {
                        key: rkey,
                        age: rage + 1,
                        entry: rentry,
                    };
                }
                _ => hand.age += 1,
            }
        }
        if hand.key == key {
            inserted_age = hand.age;
        }
        on_place(hand.key, hand.age);
        self.step_count += steps;
        self.refresh_max_age();
        Ok((steps, inserted_age))
    }

    fn put(&mut self, c: usize, hand: Hand) {
        self.cells[c] = Slot::Live {
            key: hand.key,
            age: hand.age,
            entry: hand.entry,
        };
        self.live[hand.entry as usize].1 = c;
        let a = hand.age as usize;
        if a >= self.age_counts.len() {
            self.age_counts.resize(a + 1, 0);
        }
        self.age_counts[a] += 1;
        self.max_age = self.max_age.max(hand.age);
    }

    fn refresh_max_age(&mut self) {
        while self.max_age > 0 && self.age_counts[self.max_age as usize] == 0 {
            self.max_age -= 1;
        }
    }

    /// Deletes a live key chosen uniformly at random from `rng`.
    pub fn delete_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<KeyId, TableError> {
        self.check_deletable()?;
        let entry = rng.gen_range(0..self.live.len());
        Ok(self.remove_entry(entry))
    }

    /// Deletes a specific live key.
    pub fn delete_key(&mut self, key: KeyId) -> Result<(), TableError> {
        self.check_deletable()?;
        let entry = *self.index.get(&key).ok_or(TableError::MissingKey(key))?;
        self.remove_entry(entry as usize);
        Ok(())
    }

    fn check_deletable(&self) -> Result<(), TableError> {
        if self.mode == TableMode::InsertOnly {
            return Err(TableError::DeletionUnsupported);
        }
        if self.live.is_empty() {
            return Err(TableError::Empty);
        }
        Ok(())
    }

    fn remove_entry(&mut self, entry: usize) -> KeyId {
        let (key, c) = self.live.swap_remove(entry);
        self.index.remove(&key);
        if let Some(&(moved_key, moved_cell)) = self.live.get(entry) {
            self.index.insert(moved_key, entry as u32);
            if let Slot::Live { entry: e, .. } = &mut self.cells[moved_cell] {
                *e = entry as u32;
            }
        }
        let Slot::Live { age, .. } = self.cells[c] else {
            unreachable!("registry points at a non-live cell");
        };
        self.age_counts[age as usize] -= 1;
        self.cells[c] = match self.mode {
            TableMode::TombstoneDeletion => Slot::Tombstone { key, age },
            _ => Slot::Empty,
        };
        self.refresh_max_age();
        key
    }

    /// Standard search with the mode's early-termination rules.
    ///
    /// `probes` counts cells examined. Searching past the maximum live age
    /// stops without examining another cell.
    pub fn search(&self, key: KeyId) -> SearchOutcome {
        let witnesses = self.mode != TableMode::HardDeletion;
        let mut j = 1u32;
        loop {
            if j > self.max_age {
                return SearchOutcome::NotFound { probes: j - 1 };
            }
            let c = self.prober.cell(key, u64::from(j));
            match self.cells[c] {
                Slot::Live { key: k, .. } if k == key => {
                    return SearchOutcome::Found { probes: j };
                }
                Slot::Empty if witnesses => return SearchOutcome::NotFound { probes: j },
                Slot::Live { age, .. } | Slot::Tombstone { age, .. } if witnesses && age < j => {
                    return SearchOutcome::NotFound { probes: j };
                }
                _ => j += 1,
            }
        }
    }

    /// Fraction of live keys of each age.
    pub fn age_histogram(&self) -> Result<BTreeMap<u32, f64>, TableError> {
        if self.live.is_empty() {
            return Err(TableError::Empty);
        }
        let total = self.live.len() as f64;
        Ok(self
            .age_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(a, &c)| (a as u32, c as f64 / total))
            .collect())
    }

    /// Mean probes of a successful search over all live keys, i.e. mean age.
    pub fn successful_search_cost(&self) -> Result<f64, TableError> {
        if self.live.is_empty() {
            return Err(TableError::Empty);
        }
        let total: u64 = self
            .age_counts()
            .iter()
            .enumerate()
            .map(|(a, &c)| a as u64 * c)
            .sum();
        Ok(total as f64 / self.live.len() as f64)
    }

    /// Re-derives every bookkeeping invariant from the cells.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut counts = vec![0u64; self.age_counts.len().max(1)];
        let mut live_cells = 0usize;
        for (c, slot) in self.cells.iter().enumerate() {
            if let Slot::Live { key, age, entry } = *slot {
                live_cells += 1;
                if age == 0 {
                    return Err(format!("cell {c} holds age 0"));
                }
                if age as usize >= counts.len() {
                    return Err(format!("age {age} beyond counters"));
                }
                counts[age as usize] += 1;
                if self.live.get(entry as usize) != Some(&(key, c)) {
                    return Err(format!("registry mismatch at cell {c}"));
                }
                if self.index.get(&key) != Some(&entry) {
                    return Err(format!("index mismatch for key {key}"));
                }
                if self.prober.cell(key, u64::from(age)) != c {
                    return Err(format!(
                        "key {key} of age {age} is not at its probe position"
                    ));
                }
            }
            if let Slot::Tombstone { .. } = slot {
                if self.mode != TableMode::TombstoneDeletion {
                    return Err(format!("tombstone at cell {c} outside tombstone mode"));
                }
            }
        }
        if live_cells != self.live.len() || self.index.len() != self.live.len() {
            return Err("live count mismatch".into());
        }
        if counts[..] != self.age_counts[..] {
            return Err("age counters disagree with cells".into());
        }
        let max = counts.iter().rposition(|&c| c > 0).unwrap_or(0) as u32;
        if max != self.max_age {
            return Err(format!("max age {} but cells say {max}", self.max_age));
        }
        if self.mode != TableMode::HardDeletion {
            // Every earlier probe position holds an entry at least as old as its index.
            for slot in &self.cells {
                let (key, age) = match *slot {
                    Slot::Live { key, age, .. } | Slot::Tombstone { key, age } => (key, age),
                    Slot::Empty => continue,
                };
                for j in 1..age {
                    let earlier = self.cells[self.prober.cell(key, u64::from(j))];
                    let ok = match earlier {
                        Slot::Empty => false,
                        Slot::Live { age: a, .. } | Slot::Tombstone { age: a, .. } => a >= j,
                    };
                    if !ok {
                        return Err(format!(
                            "key {key} at age {age} skipped probe {j} holding {earlier:?}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
