//! Standard and blocked Bloom filters over primary keys.
//!
//! Both modes derive probe positions from two independent 64-bit hashes
//! combined by double hashing. The blocked mode uses the first hash to select
//! a 512-bit block (one cache line) and confines the remaining probes to it.

use crate::types::PrimaryKey;

pub const BLOCK_BITS: u64 = 512;

const SEED_A: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_B: u64 = 0xC2B2_AE3D_27D4_EB4F;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BloomMode {
    Standard,
    Blocked,
}

impl BloomMode {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            BloomMode::Standard => 1,
            BloomMode::Blocked => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(BloomMode::Standard),
            2 => Some(BloomMode::Blocked),
            _ => None,
        }
    }

    pub fn default_bits_per_key(self) -> f64 {
        match self {
            BloomMode::Standard => 10.0,
            BloomMode::Blocked => 11.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BloomConfig {
    pub mode: BloomMode,
    pub bits_per_key: f64,
}

impl BloomConfig {
    pub fn standard() -> Self {
        BloomConfig {
            mode: BloomMode::Standard,
            bits_per_key: BloomMode::Standard.default_bits_per_key(),
        }
    }

    pub fn blocked() -> Self {
        BloomConfig {
            mode: BloomMode::Blocked,
            bits_per_key: BloomMode::Blocked.default_bits_per_key(),
        }
    }

    /// Number of hash functions. For blocked filters the first one selects
    /// the block, so one extra function is allotted.
    pub fn hash_count(&self) -> u8 {
        let probes = (self.bits_per_key * std::f64::consts::LN_2).round().clamp(1.0, 30.0) as u8;
        match self.mode {
            BloomMode::Standard => probes,
            BloomMode::Blocked => probes + 1,
        }
    }
}

impl Default for BloomConfig {
    fn default() -> Self {
        BloomConfig::standard()
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn hash_pair(key: PrimaryKey) -> (u64, u64) {
    let h1 = mix64(key.0 ^ SEED_A);
    let h2 = mix64(key.0.wrapping_add(SEED_B)) | 1;
    (h1, h2)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    mode: BloomMode,
    hash_count: u8,
    num_bits: u64,
    words: Vec<u64>,
}

impl BloomFilter {
    pub fn build(config: &BloomConfig, keys: &[PrimaryKey]) -> Self {
        let mut filter = BloomFilter::with_capacity(config, keys.len());
        for &k in keys {
            filter.insert(k);
        }
        filter
    }

    pub fn with_capacity(config: &BloomConfig, n: usize) -> Self {
        let hash_count = config.hash_count();
        if n == 0 {
            return BloomFilter {
                mode: config.mode,
                hash_count,
                num_bits: 0,
                words: Vec::new(),
            };
        }
        let raw = (n as f64 * config.bits_per_key).ceil() as u64;
        let num_bits = match config.mode {
            BloomMode::Standard => raw.max(64).div_ceil(64) * 64,
            BloomMode::Blocked => raw.max(BLOCK_BITS).div_ceil(BLOCK_BITS) * BLOCK_BITS,
        };
        BloomFilter {
            mode: config.mode,
            hash_count,
            num_bits,
            words: vec![0; (num_bits / 64) as usize],
        }
    }

    pub(crate) fn from_parts(mode: BloomMode, hash_count: u8, num_bits: u64, words: Vec<u64>) -> Self {
        BloomFilter {
            mode,
            hash_count,
            num_bits,
            words,
        }
    }

    pub fn mode(&self) -> BloomMode {
        self.mode
    }

    pub fn hash_count(&self) -> u8 {
        self.hash_count
    }

    pub fn num_bits(&self) -> u64 {
        self.num_bits
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit positions probed for `key`.
    pub fn probe_positions(&self, key: PrimaryKey) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.hash_count as usize);
        self.for_each_probe(key, |bit| {
            out.push(bit);
            true
        });
        out
    }

    #[inline]
    fn for_each_probe(&self, key: PrimaryKey, mut f: impl FnMut(u64) -> bool) -> bool {
        if self.num_bits == 0 {
            return false;
        }
        let (h1, h2) = hash_pair(key);
        match self.mode {
            BloomMode::Standard => {
                for i in 0..self.hash_count as u64 {
                    let bit = h1.wrapping_add(i.wrapping_mul(h2)) % self.num_bits;
                    if !f(bit) {
                        return false;
                    }
                }
            }
            BloomMode::Blocked => {
                let blocks = self.num_bits / BLOCK_BITS;
                let base = (h1 % blocks) * BLOCK_BITS;
                let g = mix64(h1);
                for i in 1..self.hash_count as u64 {
                    let bit = base + (g.wrapping_add(i.wrapping_mul(h2)) % BLOCK_BITS);
                    if !f(bit) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn insert(&mut self, key: PrimaryKey) {
        let mut bits = [0u64; 32];
        let mut n = 0;
        self.for_each_probe(key, |bit| {
            bits[n] = bit;
            n += 1;
            true
        });
        for &bit in &bits[..n] {
            self.words[(bit / 64) as usize] |= 1 << (bit % 64);
        }
    }

    pub fn may_contain(&self, key: PrimaryKey) -> bool {
        let words = &self.words;
        self.for_each_probe(key, |bit| words[(bit / 64) as usize] & (1 << (bit % 64)) != 0)
    }
}
