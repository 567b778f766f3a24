//! Linear order-preserving encoding and pairwise-mask secure aggregation.
//!
//! All aggregation happens modulo `R = 2^64` with wrapping arithmetic.
//! Parameters are validated so that the true (unmasked) sum of a round never
//! wraps, which makes the modular sum equal to the integer sum.

use std::hash::Hasher;

use rand::Rng;
use serde::{Deserialize, Serialize};
use siphasher::sip::SipHasher24;

use crate::error::{Error, Result};

/// Losses are encoded as `round(x · 2^20)` before encryption.
pub const FIXED_POINT_BITS: u32 = 20;
pub const DEFAULT_MULTIPLIER: u64 = 1 << 24;
pub const MAX_OFFSET: u64 = 1 << 20;

pub fn to_fixed_point(x: f64) -> Result<u64> {
    let scaled = (x * (1u64 << FIXED_POINT_BITS) as f64).round();
    if !(scaled >= 0.0 && scaled < u64::MAX as f64) {
        return Err(Error::Overflow(format!("plaintext {x} has no fixed-point encoding")));
    }
    Ok(scaled as u64)
}

/// Secret key material of the linear scheme `a·x + b + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpeParams {
    pub a: u64,
    pub b: u64,
    /// Inclusive upper bound of the per-encryption noise.
    pub noise_bound: u64,
}

impl OpeParams {
    pub fn new(a: u64, b: u64, noise_bound: u64) -> Result<Self> {
        if a < 2 {
            return Err(Error::invalid("a", "multiplier must be at least 2"));
        }
        if noise_bound > a - 1 {
            return Err(Error::invalid("noise_bound", format!("{noise_bound} exceeds a - 1")));
        }
        Ok(Self { a, b, noise_bound })
    }

    /// Largest single ciphertext for plaintexts up to `max_plaintext`.
    fn max_ciphertext(&self, max_plaintext: u64) -> u128 {
        self.a as u128 * max_plaintext as u128 + self.b as u128 + self.noise_bound as u128
    }

    /// Checks `R > n · (a·max + b + noise_bound)`.
    pub fn check_capacity(&self, users: usize, max_plaintext: u64) -> Result<()> {
        let total = self.max_ciphertext(max_plaintext).checked_mul(users as u128);
        match total {
            Some(t) if t <= u64::MAX as u128 => Ok(()),
            _ => Err(Error::Overflow(format!(
                "{users} users x a={} x max plaintext {max_plaintext} exceeds 2^64",
                self.a
            ))),
        }
    }

    /// Fresh key for `users` users and plaintexts up to `max_plaintext`.
    ///
    /// `a` is the largest power of two not above `DEFAULT_MULTIPLIER` that
    /// fits the modulus, `b` is uniform on `[1, 2^20]` and the noise bound is
    /// `floor((a − 1) / users)` so a round's total noise stays below `a`.
    pub fn generate<R: Rng + ?Sized>(users: usize, max_plaintext: u64, rng: &mut R) -> Result<Self> {
        if users == 0 {
            return Err(Error::invalid("users", "need at least one user"));
        }
        let mut a = DEFAULT_MULTIPLIER;
        loop {
            let candidate = Self { a, b: MAX_OFFSET, noise_bound: (a - 1) / users as u64 };
            if candidate.check_capacity(users, max_plaintext).is_ok() {
                break;
            }
            if a == 2 {
                return Err(Error::Overflow(format!(
                    "no multiplier fits {users} users with plaintexts up to {max_plaintext}"
                )));
            }
            a /= 2;
        }
        let b = rng.gen_range(1..=MAX_OFFSET);
        Self::new(a, b, (a - 1) / users as u64)
    }
}

/// `a·x + b + noise`, noise uniform on `[0, noise_bound]`.
pub fn ope_encrypt<R: Rng + ?Sized>(x: u64, params: &OpeParams, rng: &mut R) -> Result<u64> {
    let noise = rng.gen_range(0..=params.noise_bound);
    params
        .a
        .checked_mul(x)
        .and_then(|v| v.checked_add(params.b))
        .and_then(|v| v.checked_add(noise))
        .ok_or_else(|| Error::Overflow(format!("a·{x} + b + noise exceeds 2^64")))
}

/// Pairwise seeds for every unordered pair `i < j`, stored once per pair.
/// Zero marks a pair that was never established.
#[derive(Clone)]
pub struct PairwiseSeeds {
    users: usize,
    seeds: Vec<u128>,
}

impl std::fmt::Debug for PairwiseSeeds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PairwiseSeeds").field("users", &self.users).finish_non_exhaustive()
    }
}

fn pair_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

impl PairwiseSeeds {
    /// Trusted-dealer setup: one independent non-zero seed per pair.
    pub fn deal<R: Rng + ?Sized>(users: usize, rng: &mut R) -> Self {
        let pairs = users * users.saturating_sub(1) / 2;
        let seeds = (0..pairs)
            .map(|_| loop {
                let s: u128 = rng.gen();
                if s != 0 {
                    break s;
                }
            })
            .collect();
        Self { users, seeds }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn seed(&self, i: usize, j: usize) -> Result<u128> {
        if i == j || i >= self.users || j >= self.users {
            return Err(Error::MissingSeed(i, j));
        }
        match self.seeds[pair_index(i, j)] {
            0 => Err(Error::MissingSeed(i.min(j), i.max(j))),
            s => Ok(s),
        }
    }

    /// Drops the seed of one pair; models an incomplete setup.
    pub fn revoke(&mut self, i: usize, j: usize) {
        if i != j && i < self.users && j < self.users {
            self.seeds[pair_index(i, j)] = 0;
        }
    }
}

/// Keyed PRF: one 64-bit residue per `(pair seed, round)`.
pub fn pair_prf(seed: u128, round: u32) -> u64 {
    let mut h = SipHasher24::new_with_keys(seed as u64, (seed >> 64) as u64);
    h.write_u32(round);
    h.finish()
}

/// `Σ_{j>i} PRF(s_ij) − Σ_{j<i} PRF(s_ij)` mod 2^64.
pub fn derive_mask(user: usize, seeds: &PairwiseSeeds, round: u32) -> Result<u64> {
    let mut mask = 0u64;
    for other in 0..seeds.users() {
        if other == user {
            continue;
        }
        let r = pair_prf(seeds.seed(user, other)?, round);
        mask = if other > user { mask.wrapping_add(r) } else { mask.wrapping_sub(r) };
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedLossCiphertext {
    pub owner: usize,
    pub round: u32,
    pub value: u64,
}

pub fn mask_ciphertext(owner: usize, round: u32, ciphertext: u64, mask: u64) -> MaskedLossCiphertext {
    MaskedLossCiphertext { owner, round, value: ciphertext.wrapping_add(mask) }
}

/// Sum of one complete round modulo 2^64. Every one of the `users` users
/// must contribute exactly once.
pub fn secure_aggregate(cts: &[MaskedLossCiphertext], users: usize, round: u32) -> Result<u64> {
    let mut seen = vec![false; users];
    let mut count = 0;
    let mut sum = 0u64;
    for ct in cts {
        if ct.round != round {
            return Err(Error::invalid("ciphertext", format!("round {} in round {round}", ct.round)));
        }
        match seen.get_mut(ct.owner) {
            Some(slot) if !*slot => *slot = true,
            _ => return Err(Error::invalid("ciphertext", format!("unexpected owner {}", ct.owner))),
        }
        count += 1;
        sum = sum.wrapping_add(ct.value);
    }
    if count != users {
        return Err(Error::IncompleteRound { round, expected: users, got: count });
    }
    Ok(sum)
}
