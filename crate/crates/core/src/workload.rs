//! Synthetic tweet workloads: deterministic operation streams, a binary
//! dump format for replay, and range query sets over `user_id`.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::record::{DatasetSchema, Record, Value};
use crate::types::PrimaryKey;

/// Largest `user_id`; the domain is `0..=USER_ID_MAX`.
pub const USER_ID_MAX: i64 = 100_000;
pub const USER_ID_DOMAIN: u64 = USER_ID_MAX as u64 + 1;

/// Key and field framing around the message bytes of a serialized tweet.
pub const TWEET_OVERHEAD: usize = 8 + 2 + 9 + 9 + 5;
/// Default shortest message, so whole tweets span 450..=550 bytes.
pub const MESSAGE_MIN: usize = 450 - TWEET_OVERHEAD;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tweet {
    pub id: PrimaryKey,
    pub user_id: i64,
    pub creation_time: i64,
    pub message_text: Vec<u8>,
}

impl Tweet {
    /// Fields in [`DatasetSchema::tweets`] order.
    pub fn to_record(&self) -> Record {
        Record::new(
            self.id,
            vec![
                Value::Int(self.user_id),
                Value::Int(self.creation_time),
                Value::Bytes(self.message_text.clone()),
            ],
        )
    }

    pub fn schema() -> DatasetSchema {
        DatasetSchema::tweets()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Insert,
    Upsert,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KeyDist {
    Uniform,
    /// Past keys ranked by recency, rank 1 the most recent.
    Zipf { theta: f64 },
    /// Fresh keys count up; reused keys cycle oldest first.
    Sequential,
}

impl KeyDist {
    pub fn zipf() -> Self {
        KeyDist::Zipf { theta: 0.99 }
    }
}

impl std::str::FromStr for KeyDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KeyDist::Uniform),
            "zipf" => Ok(KeyDist::zipf()),
            "seq" | "sequential" => Ok(KeyDist::Sequential),
            _ => Err(Error::config("dist", format!("unknown distribution `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub op_kind: OpKind,
    pub total_records: u64,
    /// Fraction of operations that reuse a previously emitted key. For
    /// insert workloads this is the duplicate ratio.
    pub update_ratio: f64,
    /// Fraction of operations that delete a previously emitted key.
    pub delete_ratio: f64,
    pub key_dist: KeyDist,
    pub seed: u64,
    /// Inclusive bounds on the random message length.
    pub message_len: (usize, usize),
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            op_kind: OpKind::Upsert,
            total_records: 200_000,
            update_ratio: 0.0,
            delete_ratio: 0.0,
            key_dist: KeyDist::Uniform,
            seed: 0,
            message_len: (MESSAGE_MIN, MESSAGE_MIN + 100),
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("update_ratio", self.update_ratio), ("delete_ratio", self.delete_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} is outside [0, 1]")));
            }
        }
        if self.update_ratio + self.delete_ratio > 1.0 {
            return Err(Error::config("delete_ratio", "update and delete ratios exceed 1"));
        }
        if self.message_len.0 > self.message_len.1 {
            return Err(Error::config("message_len", "min exceeds max"));
        }
        if let KeyDist::Zipf { theta } = self.key_dist {
            if theta <= 0.0 {
                return Err(Error::config("dist", "zipf theta must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operation {
    Insert(Tweet),
    Upsert(Tweet),
    Delete(PrimaryKey),
}

impl Operation {
    pub fn key(&self) -> PrimaryKey {
        match self {
            Operation::Insert(t) | Operation::Upsert(t) => t.id,
            Operation::Delete(k) => *k,
        }
    }
}

/// splitmix64 finalizer; a bijection, so distinct counters give distinct keys.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic operation stream.
pub struct StreamGen {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    /// Message bytes come from their own stream so that keys and user ids
    /// do not depend on the message length.
    text_rng: ChaCha8Rng,
    emitted: u64,
    fresh: u64,
    key_base: u64,
    past: Vec<PrimaryKey>,
    cycle: usize,
    reused: u64,
}

impl StreamGen {
    pub fn new(spec: WorkloadSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let key_base = rng.random();
        let text_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5bd1_e995_7f4a_7c15);
        Ok(StreamGen {
            spec,
            rng,
            text_rng,
            emitted: 0,
            fresh: 0,
            key_base,
            past: Vec::new(),
            cycle: 0,
            reused: 0,
        })
    }

    /// Operations so far that reused a key.
    pub fn reused(&self) -> u64 {
        self.reused
    }

    fn fresh_key(&mut self) -> PrimaryKey {
        self.fresh += 1;
        let k = match self.spec.key_dist {
            KeyDist::Sequential => self.fresh,
            _ => mix(self.key_base.wrapping_add(self.fresh)),
        };
        PrimaryKey(k)
    }

    fn past_key(&mut self) -> PrimaryKey {
        let n = self.past.len();
        let i = match self.spec.key_dist {
            KeyDist::Uniform => self.rng.random_range(0..n),
            KeyDist::Zipf { theta } => {
                let z = Zipf::new(n as f64, theta).expect("validated zipf parameters");
                let rank = (z.sample(&mut self.rng) as usize).clamp(1, n);
                n - rank
            }
            KeyDist::Sequential => {
                let i = self.cycle % n;
                self.cycle += 1;
                i
            }
        };
        self.past[i]
    }

    fn tweet(&mut self, id: PrimaryKey) -> Tweet {
        let (lo, hi) = self.spec.message_len;
        let len = self.text_rng.random_range(lo..=hi);
        let mut message_text = vec![0u8; len];
        self.text_rng.fill(message_text.as_mut_slice());
        Tweet {
            id,
            user_id: self.rng.random_range(0..=USER_ID_MAX),
            creation_time: self.emitted as i64,
            message_text,
        }
    }
}

impl Iterator for StreamGen {
    type Item = Operation;

    fn next(&mut self) -> Option<Operation> {
        if self.emitted >= self.spec.total_records {
            return None;
        }
        let roll: f64 = self.rng.random();
        let reuse = !self.past.is_empty() && roll < self.spec.update_ratio + self.spec.delete_ratio;
        let op = if reuse {
            self.reused += 1;
            let key = self.past_key();
            if roll < self.spec.delete_ratio {
                Operation::Delete(key)
            } else {
                let t = self.tweet(key);
                match self.spec.op_kind {
                    OpKind::Insert => Operation::Insert(t),
                    OpKind::Upsert => Operation::Upsert(t),
                }
            }
        } else {
            let key = self.fresh_key();
            self.past.push(key);
            let t = self.tweet(key);
            match self.spec.op_kind {
                OpKind::Insert => Operation::Insert(t),
                OpKind::Upsert => Operation::Upsert(t),
            }
        };
        self.emitted += 1;
        Some(op)
    }
}

impl crate::dataset::Dataset {
    /// Applies one generated operation; returns whether it took effect as
    /// far as the strategy reports.
    pub fn apply_operation(&self, op: &Operation) -> Result<bool> {
        match op {
            Operation::Insert(t) => self.insert(t.to_record()),
            Operation::Upsert(t) => self.upsert(t.to_record()).map(|_| true),
            Operation::Delete(k) => self.delete(*k),
        }
    }
}

pub fn gen_stream(spec: &WorkloadSpec) -> Result<StreamGen> {
    StreamGen::new(spec.clone())
}

const TAG_INSERT: u8 = 0;
const TAG_UPSERT: u8 = 1;
const TAG_DELETE: u8 = 2;

fn encode_op(op: &Operation, out: &mut Vec<u8>) {
    match op {
        Operation::Delete(k) => {
            out.push(TAG_DELETE);
            out.extend_from_slice(&k.0.to_le_bytes());
        }
        Operation::Insert(t) | Operation::Upsert(t) => {
            out.push(if matches!(op, Operation::Insert(_)) { TAG_INSERT } else { TAG_UPSERT });
            out.extend_from_slice(&t.id.0.to_le_bytes());
            out.extend_from_slice(&t.user_id.to_le_bytes());
            out.extend_from_slice(&t.creation_time.to_le_bytes());
            out.extend_from_slice(&t.message_text);
        }
    }
}

fn decode_op(buf: &[u8]) -> io::Result<Operation> {
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "malformed operation record");
    let word = |i: usize| -> io::Result<[u8; 8]> {
        buf.get(i..i + 8).and_then(|b| b.try_into().ok()).ok_or_else(bad)
    };
    let tag = *buf.first().ok_or_else(bad)?;
    let id = PrimaryKey(u64::from_le_bytes(word(1)?));
    if tag == TAG_DELETE {
        return Ok(Operation::Delete(id));
    }
    let t = Tweet {
        id,
        user_id: i64::from_le_bytes(word(9)?),
        creation_time: i64::from_le_bytes(word(17)?),
        message_text: buf.get(25..).ok_or_else(bad)?.to_vec(),
    };
    match tag {
        TAG_INSERT => Ok(Operation::Insert(t)),
        TAG_UPSERT => Ok(Operation::Upsert(t)),
        _ => Err(bad()),
    }
}

/// Writes length-prefixed operation records.
pub fn dump(ops: impl IntoIterator<Item = Operation>, mut w: impl Write) -> Result<u64> {
    let mut buf = Vec::new();
    let mut n = 0;
    for op in ops {
        buf.clear();
        encode_op(&op, &mut buf);
        w.write_all(&(buf.len() as u32).to_le_bytes())?;
        w.write_all(&buf)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Reads a stream written by [`dump`].
pub fn load(mut r: impl Read) -> impl Iterator<Item = Result<Operation>> {
    std::iter::from_fn(move || {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return None,
            Err(e) => return Some(Err(e.into())),
        }
        let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
        Some(
            r.read_exact(&mut buf)
                .and_then(|_| decode_op(&buf))
                .map_err(Error::from),
        )
    })
}

/// `count` inclusive `user_id` ranges, each covering `selectivity` of the
/// uniform domain (at least one value).
pub fn gen_query_set(selectivity: f64, count: usize, seed: u64) -> Result<Vec<(i64, i64)>> {
    if !(selectivity > 0.0 && selectivity <= 1.0) {
        return Err(Error::config("selectivity", format!("{selectivity} is outside (0, 1]")));
    }
    let width = ((selectivity * USER_ID_DOMAIN as f64).round() as u64).clamp(1, USER_ID_DOMAIN);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let lo = rng.random_range(0..=USER_ID_DOMAIN - width) as i64;
            (lo, lo + width as i64 - 1)
        })
        .collect())
}
