//! Per-ball trace records with a rolling state hash.
//!
//! `state_hash` chains FNV-1a (64-bit) over the previous hash followed by
//! every bin's `(load, est_avg)` pair in bin order, each value quantized to
//! `round(x * 1e9)` as a little-endian `i64`. Two runs that diverge at any
//! ball differ in every hash from that ball on.

use serde::{Deserialize, Serialize};

use crate::model::{AllocationOutcome, BinState};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ball: u64,
    pub retries: u32,
    pub candidates: Vec<Vec<usize>>,
    pub dest: usize,
    pub found_nonpositive: bool,
    pub state_hash: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
}

impl TraceRecord {
    pub fn new(outcome: AllocationOutcome, state_hash: u64, round: Option<u32>) -> Self {
        Self {
            ball: outcome.ball_index,
            retries: outcome.retries_used,
            candidates: outcome.candidates,
            dest: outcome.destination,
            found_nonpositive: outcome.found_nonpositive,
            state_hash,
            round,
        }
    }
}

#[inline]
fn quantize(x: f64) -> i64 {
    (x * 1e9).round() as i64
}

#[inline]
fn fnv_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hash of the initial, empty chain.
pub const CHAIN_START: u64 = FNV_OFFSET;

/// Advances the hash chain by one snapshot of the bins.
pub fn chain_state_hash(prev: u64, bins: &[BinState]) -> u64 {
    let mut h = fnv_bytes(FNV_OFFSET, &prev.to_le_bytes());
    for b in bins {
        h = fnv_bytes(h, &quantize(b.load).to_le_bytes());
        h = fnv_bytes(h, &quantize(b.est_avg).to_le_bytes());
    }
    h
}

/// Index of the first record where two traces disagree, if any.
pub fn first_divergence(a: &[TraceRecord], b: &[TraceRecord]) -> Option<usize> {
    let common = a.len().min(b.len());
    (0..common)
        .find(|&i| a[i] != b[i])
        .or(if a.len() != b.len() {
            Some(common)
        } else {
            None
        })
}
