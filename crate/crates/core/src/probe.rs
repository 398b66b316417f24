//! Probe sequences for keys.
//!
//! A probe sequence is never stored. The `j`-th position of a key is computed
//! on demand from `(seed, key, j)` by a counter-mode pseudo-random function, so
//! sequences are conceptually infinite and replay identically across runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque key identifier. Tables never store payloads.
pub type KeyId = u64;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const DOUBLE_HASH_DOMAIN: u64 = 0xd0b1_e5a1_7c3f_0001;
const SEED_DERIVATION_DOMAIN: u64 = 0x5eed_de71_a7e0_0002;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("probe index must be at least 1")]
    ZeroProbeIndex,
    #[error("table size must be at least 1")]
    EmptyTable,
    #[error("double hashing needs a power-of-two table size, got {0}")]
    NotPowerOfTwo(usize),
}

/// How the positions of a key's probe sequence are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    /// Every position is an independent uniform cell.
    #[default]
    FullyRandom,
    /// `a, a + b, a + 2b, ...` modulo the table size, with `b` odd.
    DoubleHashing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub seed: u64,
    pub table_size: usize,
}

impl ProbeParams {
    pub fn new(seed: u64, table_size: usize) -> Self {
        Self { seed, table_size }
    }

    pub fn validate(&self, mode: ProbeMode) -> Result<(), ProbeError> {
        if self.table_size == 0 {
            return Err(ProbeError::EmptyTable);
        }
        if mode == ProbeMode::DoubleHashing && !self.table_size.is_power_of_two() {
            return Err(ProbeError::NotPowerOfTwo(self.table_size));
        }
        Ok(())
    }
}

/// SplitMix64 output finaliser. A bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-mode pseudo-random function of `(seed, key, counter)`.
///
/// For a fixed `(seed, key)` the outputs over `counter` are a SplitMix64 stream
/// whose starting state is itself a mixed function of seed and key.
#[inline]
pub fn prf(seed: u64, key: u64, counter: u64) -> u64 {
    let base = mix64(seed ^ mix64(key));
    mix64(base.wrapping_add(counter.wrapping_mul(GOLDEN_GAMMA)))
}

/// Derives an independent 64-bit seed for sub-stream `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    prf(master ^ SEED_DERIVATION_DOMAIN, index, 0)
}

/// Maps a uniform 64-bit value onto `[0, n)` by multiply-shift.
#[inline]
fn reduce(h: u64, n: usize) -> usize {
    ((h as u128 * n as u128) >> 64) as usize
}

/// The arithmetic progression `start, start + stride, ...` modulo `modulus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArithmeticProbe {
    pub start: usize,
    pub stride: usize,
    pub modulus: usize,
}

impl ArithmeticProbe {
    /// Position `j` (1-based) of the progression.
    #[inline]
    pub fn at(&self, j: u64) -> usize {
        let step = (j - 1) as u128 * self.stride as u128;
        ((self.start as u128 + step) % self.modulus as u128) as usize
    }
}

/// A validated probe generator for one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prober {
    params: ProbeParams,
    mode: ProbeMode,
}

impl Prober {
    pub fn new(params: ProbeParams, mode: ProbeMode) -> Result<Self, ProbeError> {
        params.validate(mode)?;
        Ok(Self { params, mode })
    }

    pub fn params(&self) -> ProbeParams {
        self.params
    }

    pub fn mode(&self) -> ProbeMode {
        self.mode
    }

    pub fn table_size(&self) -> usize {
        self.params.table_size
    }

    /// Start and odd stride of a key's double-hashing progression.
    pub fn double_hash_progression(&self, key: KeyId) -> ArithmeticProbe {
        let n = self.params.table_size;
        let seed = self.params.seed ^ DOUBLE_HASH_DOMAIN;
        let start = reduce(prf(seed, key, 0), n);
        // n is a power of two, so any odd stride is a unit mod n.
        let stride = (prf(seed, key, 1) as usize | 1) & (n - 1);
        ArithmeticProbe {
            start,
            stride,
            modulus: n,
        }
    }

    /// Cell examined at probe index `j >= 1`.
    #[inline]
    pub fn cell(&self, key: KeyId, j: u64) -> usize {
        debug_assert!(j >= 1);
        match self.mode {
            ProbeMode::FullyRandom => reduce(prf(self.params.seed, key, j), self.params.table_size),
            ProbeMode::DoubleHashing => self.double_hash_progression(key).at(j),
        }
    }
}

/// Cell examined by `key` at probe index `j` (1-based).
pub fn probe_at(
    key: KeyId,
    j: u64,
    params: &ProbeParams,
    mode: ProbeMode,
) -> Result<usize, ProbeError> {
    if j == 0 {
        return Err(ProbeError::ZeroProbeIndex);
    }
    Ok(Prober::new(*params, mode)?.cell(key, j))
}
