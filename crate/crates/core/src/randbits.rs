//! Seeded random-bit source with exact bit accounting.
//!
//! Every sampling primitive pulls its randomness through [`BitSource::take`],
//! which hands out bits from a 64-bit buffer refilled from a ChaCha8 stream
//! keyed by `(seed, stream)`. The counter therefore records the exact number
//! of uniform bits consumed, and each primitive also adds its declared cost
//! to a second tally so the two can be audited against each other.
//!
//! Costs: `draw_bits(k)` = k, `sign` = 1, `uniform_index(n)` = the number of
//! fair flips used by the fast dice roller (exactly log₂ n for powers of
//! two), `bernoulli(p)` = flips until the lazy comparison resolves,
//! `uniform_f64`/`categorical_index` = 64, `gaussian` = 128,
//! `pairwise_signs(m)` = 2·max(1, ⌈log₂ m⌉), `kwise_hash(k, w)` = k·w.

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Finalizer of splitmix64; used only to derive stream identifiers.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn low_mask(k: u32) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

/// ⌈log₂ n⌉, with ⌈log₂ 1⌉ = 0. `n` must be positive.
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n > 0);
    if n == 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// A replayable source of uniform bits.
#[derive(Debug, Clone)]
pub struct BitSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    buffer: u64,
    buffered: u32,
    consumed: u64,
    declared: u64,
    words: u64,
}

impl BitSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            rng,
            buffer: 0,
            buffered: 0,
            consumed: 0,
            declared: 0,
            words: 0,
        }
    }

    /// An independent child source. Children with distinct ids never share
    /// a stream with each other or with the parent.
    pub fn derive(&self, id: u64) -> BitSource {
        let stream = mix64(mix64(self.stream) ^ mix64(id.wrapping_add(0xA076_1D64_78BD_642F)));
        BitSource::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform bits consumed so far.
    pub fn bits_consumed(&self) -> u64 {
        self.consumed
    }

    /// Sum of the costs declared by the sampling operations called so far.
    pub fn bits_declared(&self) -> u64 {
        self.declared
    }

    /// 64-bit words pulled from the generator (the conservative count).
    pub fn words_generated(&self) -> u64 {
        self.words
    }

    /// True when the consumed-bit counter equals the declared costs.
    pub fn audit(&self) -> bool {
        self.consumed == self.declared
    }

    fn declare(&mut self, bits: u64) {
        self.declared += bits;
    }

    /// Takes `k <= 64` bits, least significant first.
    fn take(&mut self, k: u32) -> u64 {
        debug_assert!(k <= 64);
        if k == 0 {
            return 0;
        }
        self.consumed += u64::from(k);
        if k <= self.buffered {
            let out = self.buffer & low_mask(k);
            self.buffer = if k == 64 { 0 } else { self.buffer >> k };
            self.buffered -= k;
            return out;
        }
        let have = self.buffered;
        let low = self.buffer & low_mask(have);
        let word = self.rng.next_u64();
        self.words += 1;
        let need = k - have;
        let high = word & low_mask(need);
        self.buffer = if need == 64 { 0 } else { word >> need };
        self.buffered = 64 - need;
        low | (high << have)
    }

    /// `k` uniform bits.
    pub fn draw_bits(&mut self, k: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(k);
        let mut left = k;
        while left > 0 {
            let chunk = left.min(64) as u32;
            let w = self.take(chunk);
            out.extend((0..chunk).map(|b| (w >> b) & 1 == 1));
            left -= chunk as usize;
        }
        self.declare(k as u64);
        out
    }

    /// Up to 64 uniform bits packed into an integer.
    pub fn bits(&mut self, k: u32) -> u64 {
        assert!(k <= 64);
        self.declare(u64::from(k));
        self.take(k)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.bits(64)
    }

    /// Rademacher sign ±1 from one bit.
    pub fn sign(&mut self) -> f64 {
        if self.bits(1) == 1 {
            -1.0
        } else {
            1.0
        }
    }

    /// Uniform in [0, 1) with 53-bit resolution; costs one 64-bit word.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform index in `0..n` by the fast dice roller: at most
    /// log₂ n + 2 expected flips and exactly log₂ n when n is a power of two.
    pub fn uniform_index(&mut self, n: u64) -> u64 {
        assert!(n >= 1, "uniform_index needs n >= 1");
        if n == 1 {
            return 0;
        }
        let mut v: u64 = 1;
        let mut c: u64 = 0;
        let mut flips = 0u64;
        loop {
            v <<= 1;
            c = (c << 1) | self.take(1);
            flips += 1;
            if v >= n {
                if c < n {
                    self.declare(flips);
                    return c;
                }
                v -= n;
                c -= n;
            }
        }
    }

    /// Bernoulli(p) by lazily comparing a uniform's binary expansion with
    /// that of `p`; exact for every representable `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if !(p > 0.0) {
            return false;
        }
        let mut rest = p;
        let mut flips = 0u64;
        let out = loop {
            rest *= 2.0;
            let pbit = if rest >= 1.0 {
                rest -= 1.0;
                1
            } else {
                0
            };
            let ubit = self.take(1);
            flips += 1;
            if ubit < pbit {
                break true;
            }
            if ubit > pbit {
                break false;
            }
            if rest == 0.0 {
                // Remaining bits of p are zero, so U >= p almost surely.
                break false;
            }
        };
        self.declare(flips);
        out
    }

    /// Index `j` with probability `weights[j] / Σ weights`.
    ///
    /// Inverse CDF over one 64-bit word: `x = u·Z` with `u` the top 53 bits
    /// scaled to [0, 1), and the first `j` whose running sum exceeds `x` is
    /// returned. Zero weights are never selected; if rounding pushes `x` up
    /// to `Z`, the last positive weight is returned.
    pub fn categorical_index(&mut self, weights: &[f64]) -> Result<usize> {
        CategoricalTable::new(weights)?.sample(self).ok_or(Error::AllZeroWeights)
    }

    /// Standard normal by Box–Muller from two 64-bit uniforms.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (self.next_u64() >> 11) as f64 * TWO_POW_M53;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Pairwise-independent ±1 signs of length `m`.
    pub fn pairwise_signs(&mut self, m: usize) -> PairwiseSignVector {
        assert!(m >= 1, "pairwise_signs needs m >= 1");
        let width = ceil_log2(m as u64).max(1);
        let a = self.bits(width);
        let b = self.bits(width);
        PairwiseSignVector {
            len: m,
            field: Gf2Field::new(width),
            a,
            b,
        }
    }

    /// A k-wise independent hash into GF(2^width): a uniformly random
    /// polynomial of degree < k.
    pub fn kwise_hash(&mut self, k: usize, width: u32) -> PolyHash {
        assert!(k >= 1);
        let field = Gf2Field::new(width);
        let coeffs = (0..k).map(|_| self.bits(width)).collect();
        PolyHash { field, coeffs }
    }
}

/// Irreducible polynomials over GF(2) for widths 1..=32, including the
/// leading x^w term.
const IRREDUCIBLE: [u64; 33] = [
    0,
    0b11,          // x + 1
    0b111,         // x^2 + x + 1
    0b1011,        // x^3 + x + 1
    0b1_0011,      // x^4 + x + 1
    0b10_0101,     // x^5 + x^2 + 1
    0b100_0011,    // x^6 + x + 1
    0b1000_0011,   // x^7 + x + 1
    0x11B,         // x^8 + x^4 + x^3 + x + 1
    0x211,         // x^9 + x^4 + 1
    0x409,         // x^10 + x^3 + 1
    0x805,         // x^11 + x^2 + 1
    0x1053,        // x^12 + x^6 + x^4 + x + 1
    0x201B,        // x^13 + x^4 + x^3 + x + 1
    0x4443,        // x^14 + x^10 + x^6 + x + 1
    0x8003,        // x^15 + x + 1
    0x1_100B,      // x^16 + x^12 + x^3 + x + 1
    0x2_0009,      // x^17 + x^3 + 1
    0x4_0081,      // x^18 + x^7 + 1
    0x8_0027,      // x^19 + x^5 + x^2 + x + 1
    0x10_0009,     // x^20 + x^3 + 1
    0x20_0005,     // x^21 + x^2 + 1
    0x40_0003,     // x^22 + x + 1
    0x80_0021,     // x^23 + x^5 + 1
    0x100_0087,    // x^24 + x^7 + x^2 + x + 1
    0x200_0009,    // x^25 + x^3 + 1
    0x400_0047,    // x^26 + x^6 + x^2 + x + 1
    0x800_0027,    // x^27 + x^5 + x^2 + x + 1
    0x1000_0009,   // x^28 + x^3 + 1
    0x2000_0005,   // x^29 + x^2 + 1
    0x4080_0007,   // x^30 + x^23 + x^2 + x + 1
    0x8000_0009,   // x^31 + x^3 + 1
    0x1_0040_0007, // x^32 + x^22 + x^2 + x + 1
];

/// Arithmetic in GF(2^width) modulo a fixed irreducible polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gf2Field {
    width: u32,
    poly: u64,
}

impl Gf2Field {
    pub fn new(width: u32) -> Self {
        assert!((1..=32).contains(&width), "field width {width} unsupported");
        Self {
            width,
            poly: IRREDUCIBLE[width as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn modulus(&self) -> u64 {
        self.poly
    }

    pub fn mul(&self, mut a: u64, mut b: u64) -> u64 {
        let top = 1u64 << self.width;
        let mut r = 0;
        while b != 0 {
            if b & 1 == 1 {
                r ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.poly;
            }
        }
        r
    }
}

/// Signs `w_i = (−1)^{lowbit(a·i + b)}` over GF(2^width).
///
/// For distinct `i, j < 2^width` the pair `(a·i + b, a·j + b)` is uniform
/// on the field squared, so the signs are pairwise independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseSignVector {
    len: usize,
    field: Gf2Field,
    a: u64,
    b: u64,
}

impl PairwiseSignVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> u32 {
        self.field.width()
    }

    /// Bits the generator parameters cost.
    pub fn bit_cost(&self) -> u64 {
        2 * u64::from(self.field.width())
    }

    pub fn sign(&self, i: usize) -> f64 {
        assert!(i < self.len);
        let h = self.field.mul(self.a, i as u64) ^ self.b;
        if h & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.sign(i)).collect()
    }
}

/// Polynomial hash `h(x) = Σ c_k x^k` over GF(2^width).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyHash {
    field: Gf2Field,
    coeffs: Vec<u64>,
}

impl PolyHash {
    pub fn independence(&self) -> usize {
        self.coeffs.len()
    }

    pub fn width(&self) -> u32 {
        self.field.width()
    }

    pub fn eval(&self, x: u64) -> u64 {
        debug_assert!(x < (1u64 << self.field.width()));
        self.coeffs.iter().rev().fold(0, |acc, &c| self.field.mul(acc, x) ^ c)
    }
}

/// Precomputed inverse-CDF table for repeated categorical draws.
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    cumulative: Vec<f64>,
    total: f64,
    last_positive: usize,
}

impl CategoricalTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut total = 0.0;
        let mut last_positive = None;
        for (j, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::BadParams(format!("weight {j} is {w}")));
            }
            if w > 0.0 {
                last_positive = Some(j);
            }
            total += w;
            cumulative.push(total);
        }
        let last_positive = last_positive.ok_or(Error::AllZeroWeights)?;
        Ok(Self {
            cumulative,
            total,
            last_positive,
        })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// One draw; always `Some` for a constructed table.
    pub fn sample(&self, src: &mut BitSource) -> Option<usize> {
        let x = src.uniform_f64() * self.total;
        let j = self.cumulative.partition_point(|&c| c <= x);
        Some(if j < self.cumulative.len() { j } else { self.last_positive })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Polynomial remainder over GF(2), operands as bit masks.
    fn poly_mod(mut a: u128, m: u128) -> u128 {
        let dm = 127 - m.leading_zeros();
        while a != 0 && 127 - a.leading_zeros() >= dm {
            a ^= m << (127 - a.leading_zeros() - dm);
        }
        a
    }

    fn poly_mulmod(a: u128, b: u128, m: u128) -> u128 {
        let mut r = 0u128;
        for i in 0..64 {
            if (b >> i) & 1 == 1 {
                r ^= a << i;
            }
        }
        poly_mod(r, m)
    }

    fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
        while b != 0 {
            let r = poly_mod(a, b);
            a = b;
            b = r;
        }
        a
    }

    /// Rabin's test: f of degree w is irreducible iff x^(2^w) = x mod f and
    /// gcd(x^(2^(w/q)) − x, f) = 1 for each prime q dividing w.
    fn is_irreducible(f: u64, w: u32) -> bool {
        let f = f as u128;
        let x_pow = |k: u32| {
            let mut t = poly_mod(2, f);
            for _ in 0..k {
                t = poly_mulmod(t, t, f);
            }
            t
        };
        if x_pow(w) != poly_mod(2, f) {
            return false;
        }
        let primes = (2..=w).filter(|q| w % q == 0 && (2..*q).all(|r| q % r != 0));
        for q in primes {
            let g = poly_gcd(f, x_pow(w / q) ^ poly_mod(2, f));
            if g != 1 {
                return false;
            }
        }
        true
    }

    #[test]
    fn field_polynomials_are_irreducible() {
        for w in 1..=32u32 {
            let p = IRREDUCIBLE[w as usize];
            assert_eq!(63 - p.leading_zeros(), w, "degree of width {w}");
            assert!(is_irreducible(p, w), "width {w} polynomial {p:#x} is reducible");
        }
    }

    #[test]
    fn field_has_inverses_small_width() {
        let f = Gf2Field::new(5);
        for a in 1..32 {
            assert!((1..32).any(|b| f.mul(a, b) == 1), "no inverse for {a}");
        }
    }

    #[test]
    fn determinism_and_accounting() {
        let mut a = BitSource::new(42);
        let mut b = BitSource::new(42);
        assert_eq!(a.draw_bits(200), b.draw_bits(200));
        let mut c = BitSource::new(1);
        c.draw_bits(64);
        c.draw_bits(8);
        assert_eq!(c.bits_consumed(), 72);
        assert!(c.audit());
    }

    #[test]
    fn uniform_index_power_of_two_costs_exactly_log2() {
        let mut src = BitSource::new(3);
        for _ in 0..100 {
            let before = src.bits_consumed();
            let j = src.uniform_index(64);
            assert!(j < 64);
            assert_eq!(src.bits_consumed() - before, 6);
        }
        let before = src.bits_consumed();
        assert_eq!(src.uniform_index(1), 0);
        assert_eq!(src.bits_consumed(), before);
        assert!(src.audit());
    }

    #[test]
    fn bernoulli_edges() {
        let mut src = BitSource::new(5);
        assert!(src.bernoulli(1.0));
        assert!(!src.bernoulli(0.0));
        assert_eq!(src.bits_consumed(), 0);
        let hits = (0..40_000).filter(|_| src.bernoulli(0.25)).count();
        assert!((hits as f64 / 40_000.0 - 0.25).abs() < 0.01);
        assert!(src.audit());
    }

    #[test]
    fn categorical_point_mass_and_errors() {
        let mut src = BitSource::new(9);
        for _ in 0..50 {
            assert_eq!(src.categorical_index(&[1.0, 0.0, 0.0]).unwrap(), 0);
            assert_eq!(src.categorical_index(&[0.0, 0.0, 2.0]).unwrap(), 2);
        }
        assert!(matches!(src.categorical_index(&[0.0, 0.0]), Err(Error::AllZeroWeights)));
        assert!(src.categorical_index(&[1.0, -1.0]).is_err());
        assert!(src.audit());
    }

    #[test]
    fn pairwise_signs_cost() {
        let mut src = BitSource::new(11);
        let w = src.pairwise_signs(256);
        assert_eq!(src.bits_consumed(), 16);
        assert_eq!(w.bit_cost(), 16);
        assert_eq!(w.signs().len(), 256);
        let one = src.pairwise_signs(1);
        assert_eq!(one.bit_cost(), 2);
    }

    #[test]
    fn derived_streams_differ() {
        let root = BitSource::new(7);
        let mut a = root.derive(0);
        let mut b = root.derive(1);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut a2 = root.derive(0);
        let mut a3 = BitSource::new(7).derive(0);
        assert_eq!(a2.next_u64(), a3.next_u64());
    }

    #[test]
    fn kwise_hash_degree_one_is_affine() {
        let mut src = BitSource::new(2);
        let h = src.kwise_hash(2, 8);
        let f = Gf2Field::new(8);
        // h(x) = c0 + c1 x, so h(x) ^ h(0) = c1 x.
        let c1x = |x| h.eval(x) ^ h.eval(0);
        assert_eq!(f.mul(c1x(1), 3), c1x(3));
        assert_eq!(src.bits_consumed(), 16);
    }
}
