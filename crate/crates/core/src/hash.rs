//! Incremental modular hash of a scheduler id concatenated with a trace.
//!
//! The hash of `sigma : s_0 : s_1 : ...` (bit concatenation read as one big
//! integer) modulo a prime `m` is computed by Horner's rule, one variable at a
//! time, so only the running residue is ever stored. Multiplication by `2^b`
//! is done by repeated doubling with a conditional subtraction; with
//! `m <= u64::MAX / 2` no intermediate exceeds `2(m - 1)`, so native 64-bit
//! arithmetic suffices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{StateVector, VariableDecl};

/// Largest prime below `3 * 2^59`, i.e. roughly midway between `2^60` and `2^61`.
pub const DEFAULT_MODULUS: u64 = 1_729_382_256_910_270_433;

/// Environment variable overriding [`DEFAULT_MODULUS`] in the CLI.
pub const MODULUS_ENV: &str = "MDPSMC_HASH_MODULUS";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("hash modulus {0} is not prime")]
    NotPrime(u64),
    #[error("hash modulus {0} must be an odd prime")]
    TooSmall(u64),
    #[error("hash modulus {0} exceeds half the 64-bit range")]
    TooLarge(u64),
    #[error("value {value} does not fit in {bits} bits")]
    Width { value: u64, bits: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashConfig {
    modulus: u64,
}

impl HashConfig {
    pub fn new(modulus: u64) -> Result<Self, HashError> {
        if modulus < 3 {
            return Err(HashError::TooSmall(modulus));
        }
        if modulus > u64::MAX / 2 {
            return Err(HashError::TooLarge(modulus));
        }
        if !is_prime(modulus) {
            return Err(HashError::NotPrime(modulus));
        }
        Ok(HashConfig { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Whether the modulus lies in `(2^60, 2^61)` and more than `2^32` away
    /// from any power of two. Small primes are accepted by [`HashConfig::new`]
    /// for experiments but collide far more often.
    pub fn is_recommended(&self) -> bool {
        let m = self.modulus;
        m > 1 << 60 && m < 1 << 61 && distance_to_power_of_two(m) > 1 << 32
    }
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            modulus: DEFAULT_MODULUS,
        }
    }
}

fn distance_to_power_of_two(n: u64) -> u64 {
    let below = 1u64 << (63 - n.leading_zeros());
    let above = below.checked_shl(1).unwrap_or(u64::MAX);
    (n - below).min(above - n)
}

/// Deterministic Miller-Rabin; these twelve bases decide every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((u128::from(a) * u128::from(b)) % u128::from(n)) as u64;
    let pow = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        acc
    };
    'witness: for a in BASES {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// `(h * 2^j) mod m` by `j` doublings, each followed by a conditional subtraction.
pub fn shift_mod(h: u64, j: u32, m: u64) -> u64 {
    shift_mod_observed(h, j, m, &mut |_| {})
}

#[inline]
fn shift_mod_observed(mut h: u64, j: u32, m: u64, observe: &mut impl FnMut(u64)) -> u64 {
    debug_assert!(h < m);
    for _ in 0..j {
        h <<= 1;
        observe(h);
        if h >= m {
            h -= m;
        }
    }
    h
}

/// Scheduler identifier; the scheduler is the map from histories to actions
/// induced by seeding the choice generator with `H(sigma : history)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchedulerId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceHash {
    h: u64,
    modulus: u64,
}

impl TraceHash {
    /// `h_0 = sigma mod m`.
    pub fn init(sigma: SchedulerId, config: &HashConfig) -> Self {
        TraceHash {
            h: sigma.0 % config.modulus,
            modulus: config.modulus,
        }
    }

    pub fn value(&self) -> u64 {
        self.h
    }

    /// Append `bits` bits holding `v`: `h' = ((h * 2^bits) mod m + v mod m) mod m`.
    pub fn absorb_value(self, v: u64, bits: u32) -> Result<Self, HashError> {
        self.absorb_observed(v, bits, &mut |_| {})
    }

    #[inline]
    fn absorb_observed(self, v: u64, bits: u32, observe: &mut impl FnMut(u64)) -> Result<Self, HashError> {
        if bits < u64::BITS && v >> bits != 0 {
            return Err(HashError::Width { value: v, bits });
        }
        let m = self.modulus;
        let shifted = shift_mod_observed(self.h, bits, m, observe);
        let mut h = shifted + v % m;
        observe(h);
        if h >= m {
            h -= m;
        }
        Ok(TraceHash { h, modulus: m })
    }

    /// Append a whole state: each variable contributes `value - lower` in
    /// `width_bits` bits, in declaration order.
    pub fn absorb_state(self, state: &StateVector, decls: &[VariableDecl]) -> Result<Self, HashError> {
        self.absorb_values(state.values(), decls)
    }

    #[inline]
    pub(crate) fn absorb_values(self, values: &[i64], decls: &[VariableDecl]) -> Result<Self, HashError> {
        let mut t = self;
        for (value, decl) in values.iter().zip(decls) {
            t = t.absorb_value(value.wrapping_sub(decl.lower) as u64, decl.width_bits)?;
        }
        Ok(t)
    }
}
