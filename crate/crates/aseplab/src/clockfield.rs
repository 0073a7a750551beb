//! Per-bond Poisson clock processes of the graphical construction.
//!
//! Every bond `(i, i+1)` carries a rate-`p` clock for rightward exchanges and
//! every bond `(i, i-1)` a rate-`q` clock for leftward exchanges. All coupled
//! processes of one ensemble read the *same* realization, so the k-th gap of a
//! stream is a pure function of `(master_seed, bond, direction, k)`. Nothing is
//! stored: a cursor can be rebuilt or fast-forwarded at any time and replays
//! bit-identically.

use serde::{Deserialize, Serialize};

/// Jump direction of a bond clock. `Right` is the rate-`p` family `P^{i,i+1}`,
/// `Left` the rate-`q` family `P^{i,i-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    #[inline]
    pub fn tag(self) -> u64 {
        match self {
            Direction::Right => 0,
            Direction::Left => 1,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClockError {
    #[error("rates must satisfy p in (1/2,1], q = 1-p (got p={p}, q={q})")]
    BadRates { p: f64, q: f64 },
    #[error("horizon must be positive (got {0})")]
    BadHorizon(f64),
    #[error("cursor is forward-only: query at {query} behind cursor time {cursor}")]
    BackwardQuery { query: f64, cursor: f64 },
}

/// Immutable description of one realization of all bond clocks.
///
/// Shared read-only by every member of a coupled ensemble and across threads;
/// per-trial fields derive from `(master_seed, trial)` via [`derive_seed`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockField {
    pub master_seed: u64,
    pub rate_right: f64,
    pub rate_left: f64,
    pub horizon: f64,
}

const SEED_GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SEED_GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless mix of a seed with a stream key; used for trial derivation,
/// sampler seeds and the clock gap generator itself.
#[inline]
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed ^ a.wrapping_mul(0xd6e8_feb8_6659_fd93));
    h ^= b.wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(h)
}

/// Derives an independent sub-seed, e.g. per trial or per named purpose.
#[inline]
pub fn derive_seed(master: u64, purpose: u64, index: u64) -> u64 {
    mix(mix(master, purpose, 0x5eed), index, 0x0a11_0c8d)
}

/// Encode a (possibly negative) site index into a u64 stream key.
#[inline]
fn zigzag(i: i64) -> u64 {
    ((i << 1) ^ (i >> 63)) as u64
}

impl ClockField {
    pub fn new(master_seed: u64, p: f64, horizon: f64) -> Result<Self, ClockError> {
        let q = 1.0 - p;
        if !(p > 0.5 && p <= 1.0) || (p + q - 1.0).abs() > 1e-12 {
            return Err(ClockError::BadRates { p, q });
        }
        if !(horizon > 0.0) {
            return Err(ClockError::BadHorizon(horizon));
        }
        Ok(ClockField {
            master_seed,
            rate_right: p,
            rate_left: q,
            horizon,
        })
    }

    #[inline]
    pub fn rate(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Right => self.rate_right,
            Direction::Left => self.rate_left,
        }
    }

    /// The k-th inter-ring gap (k = 0, 1, ...) of stream `(bond, dir)`.
    ///
    /// Gaps are Exp(rate) variates built from a counter hash, so they are
    /// reproducible at any position without generating predecessors.
    #[inline]
    pub fn gap(&self, bond: i64, dir: Direction, k: u64) -> f64 {
        let rate = self.rate(dir);
        debug_assert!(rate > 0.0);
        let h = mix(self.master_seed, zigzag(bond) << 1 | dir.tag(), k);
        // u in (0,1): (h >> 11) spans [0, 2^53), offset by 1/2 ulp keeps u > 0
        // and < 1 so gaps are strictly positive and finite.
        let u = ((h >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0);
        -u.ln() / rate
    }

    /// Full ring-time sequence of stream `(bond, dir)` inside `[0, horizon]`.
    pub fn ring_stream(&self, bond: i64, dir: Direction) -> Vec<f64> {
        let mut out = Vec::new();
        if self.rate(dir) == 0.0 {
            return out;
        }
        let mut t = 0.0;
        let mut k = 0u64;
        loop {
            t += self.gap(bond, dir, k);
            if t > self.horizon {
                return out;
            }
            out.push(t);
            k += 1;
        }
    }

    /// Fresh cursor positioned before the first ring of `(bond, dir)`.
    pub fn cursor(&self, bond: i64, dir: Direction) -> ClockCursor {
        let next_time = if self.rate(dir) == 0.0 {
            f64::INFINITY
        } else {
            self.gap(bond, dir, 0)
        };
        ClockCursor {
            bond,
            direction: dir,
            next_time,
            stream_position: 0,
            consumed: 0.0,
        }
    }

    /// Smallest ring time strictly greater than `after`, advancing the cursor.
    /// Returns `None` past the horizon. Streams are forward-only.
    pub fn next_ring(
        &self,
        cursor: &mut ClockCursor,
        after: f64,
    ) -> Result<Option<f64>, ClockError> {
        if after < 0.0 {
            return Err(ClockError::BackwardQuery {
                query: after,
                cursor: 0.0,
            });
        }
        // A query strictly before an already-consumed position would have to
        // rewind the stream.
        if after < cursor.consumed {
            return Err(ClockError::BackwardQuery {
                query: after,
                cursor: cursor.consumed,
            });
        }
        while cursor.next_time <= after {
            cursor.advance(self);
        }
        if cursor.next_time > self.horizon {
            Ok(None)
        } else {
            Ok(Some(cursor.next_time))
        }
    }
}

/// Lazy enumeration state of one bond-direction stream.
#[derive(Debug, Clone)]
pub struct ClockCursor {
    pub bond: i64,
    pub direction: Direction,
    /// Next undelivered ring time (`inf` for a rate-0 stream).
    pub next_time: f64,
    /// Number of gaps consumed so far.
    pub stream_position: u64,
    /// Time of the last consumed ring; `next_ring` queries may not go behind it.
    consumed: f64,
}

impl ClockCursor {
    /// Consume the current ring and load the next one.
    #[inline]
    pub fn advance(&mut self, field: &ClockField) {
        let cur = self.next_time;
        self.consumed = cur;
        self.stream_position += 1;
        self.next_time = cur + field.gap(self.bond, self.direction, self.stream_position);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let f = ClockField::new(42, 0.75, 100.0).unwrap();
        let a = f.ring_stream(-3, Direction::Right);
        let b = f.ring_stream(-3, Direction::Right);
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn tasep_left_streams_empty() {
        let f = ClockField::new(7, 1.0, 50.0).unwrap();
        assert!(f.ring_stream(0, Direction::Left).is_empty());
        let mut c = f.cursor(0, Direction::Left);
        assert_eq!(f.next_ring(&mut c, 0.0).unwrap(), None);
    }

    #[test]
    fn rings_strictly_increasing() {
        let f = ClockField::new(1234, 0.6, 500.0).unwrap();
        for bond in [-10i64, 0, 17] {
            for dir in [Direction::Right, Direction::Left] {
                let s = f.ring_stream(bond, dir);
                for w in s.windows(2) {
                    assert!(w[1] > w[0]);
                }
                if let Some(&last) = s.last() {
                    assert!(last <= 500.0);
                }
            }
        }
    }

    #[test]
    fn gap_mean_matches_rate() {
        // law of large numbers for Exp(p) gaps: mean 1/p, sd 1/p per gap
        let p = 0.75;
        let f = ClockField::new(99, p, 1.0e4).unwrap();
        let s = f.ring_stream(5, Direction::Right);
        let n = s.len();
        let mean_gap = s[n - 1] / n as f64;
        let se = (1.0 / p) / (n as f64).sqrt();
        assert!(
            (mean_gap - 1.0 / p).abs() < 3.0 * se,
            "mean gap {mean_gap} vs {} (se {se})",
            1.0 / p
        );
    }

    #[test]
    fn next_ring_scan_reproduces_stream() {
        let f = ClockField::new(2024, 0.8, 200.0).unwrap();
        let full = f.ring_stream(-1, Direction::Left);
        let mut c = f.cursor(-1, Direction::Left);
        let mut scanned = Vec::new();
        let mut t = 0.0;
        while let Some(r) = f.next_ring(&mut c, t).unwrap() {
            scanned.push(r);
            t = r;
        }
        assert_eq!(full, scanned);
    }

    #[test]
    fn next_ring_first_and_backward() {
        let f = ClockField::new(5, 0.75, 100.0).unwrap();
        let full = f.ring_stream(2, Direction::Right);
        let mut c = f.cursor(2, Direction::Right);
        assert_eq!(f.next_ring(&mut c, 0.0).unwrap(), Some(full[0]));
        let r = f.next_ring(&mut c, full[2]).unwrap().unwrap();
        assert_eq!(r, full[3]);
        assert!(f.next_ring(&mut c, full[0]).is_err());
    }

    #[test]
    fn derive_seed_spreads() {
        let a = derive_seed(1, 2, 3);
        let b = derive_seed(1, 2, 4);
        let c = derive_seed(1, 3, 3);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
