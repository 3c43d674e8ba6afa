//! LFSR-driven self-shrinking keystream generator.
//!
//! The register is a Fibonacci LFSR with stages `1..=k`. Each clock emits the
//! bit held in stage `k`, shifts every stage one place toward stage `k` and
//! loads the XOR of the tapped stages into stage 1. With taps `{3, 2}` and
//! initial state `001` (stage 1 first) the output is `1,0,0,1,0,1,1,...`.
//!
//! The self-shrinking decimator reads raw bits in pairs `(a, b)`: it emits
//! `(-1)^b` when `a = 1` and discards the pair when `a = 0`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Built-in feedback tap sets. Every entry was checked to be primitive, so the
/// register runs through all `2^k - 1` nonzero states.
const PRIMITIVE_TAPS: &[(usize, &[usize])] = &[
    (2, &[2, 1]),
    (3, &[3, 2]),
    (4, &[4, 3]),
    (5, &[5, 3]),
    (6, &[6, 5]),
    (7, &[7, 6]),
    (8, &[8, 6, 5, 4]),
    (9, &[9, 5]),
    (10, &[10, 7]),
    (11, &[11, 9]),
    (12, &[12, 6, 4, 1]),
    (13, &[13, 4, 3, 1]),
    (14, &[14, 5, 3, 1]),
    (15, &[15, 14]),
    (16, &[16, 15, 13, 4]),
    (17, &[17, 14]),
    (18, &[18, 11]),
    (19, &[19, 6, 2, 1]),
    (20, &[20, 17]),
    (21, &[21, 19]),
    (22, &[22, 21]),
    (23, &[23, 18]),
    (24, &[24, 23, 22, 17]),
    (32, &[32, 22, 2, 1]),
    (64, &[64, 63, 61, 60]),
    (128, &[128, 126, 101, 99]),
    (256, &[256, 254, 251, 246]),
];

/// Degrees with a built-in primitive tap set.
pub fn builtin_degrees() -> impl Iterator<Item = usize> {
    PRIMITIVE_TAPS.iter().map(|(d, _)| *d)
}

/// Public structure of the generator: register length and feedback taps.
///
/// The polynomial should be primitive for a maximal period; this is not
/// checked. Stage `k` must be tapped, otherwise the feedback map is not
/// invertible and the register can collapse to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LfsrSpec {
    degree: usize,
    taps: Vec<usize>,
}

impl LfsrSpec {
    pub fn new(degree: usize, taps: &[usize]) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Config(format!("LFSR degree must be >= 2, got {degree}")));
        }
        if taps.is_empty() {
            return Err(Error::Config("tap set must be nonempty".into()));
        }
        if let Some(&bad) = taps.iter().find(|&&t| t == 0 || t > degree) {
            return Err(Error::Config(format!("tap {bad} outside [1, {degree}]")));
        }
        if !taps.contains(&degree) {
            return Err(Error::Config(format!(
                "stage {degree} must be tapped (degenerate feedback polynomial)"
            )));
        }
        let mut taps = taps.to_vec();
        taps.sort_unstable_by(|a, b| b.cmp(a));
        taps.dedup();
        Ok(Self { degree, taps })
    }

    /// Built-in primitive spec for `degree`.
    pub fn builtin(degree: usize) -> Result<Self> {
        PRIMITIVE_TAPS
            .iter()
            .find(|(d, _)| *d == degree)
            .map(|(d, t)| Self::new(*d, t).expect("table entries are valid"))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no built-in primitive polynomial for degree {degree}; supply taps explicitly"
                ))
            })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    fn words(&self) -> usize {
        self.degree.div_ceil(64)
    }

    fn tap_mask(&self) -> Vec<u64> {
        let mut mask = vec![0u64; self.words()];
        for &t in &self.taps {
            mask[(t - 1) / 64] |= 1 << ((t - 1) % 64);
        }
        mask
    }
}

/// Secret initial register state, stage 1 first.
#[derive(Clone, PartialEq, Eq)]
pub struct Key {
    bits: Vec<bool>,
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Key").field("len", &self.bits.len()).finish_non_exhaustive()
    }
}

impl Key {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.len() < 2 {
            return Err(Error::Config("key must have at least 2 bits".into()));
        }
        if !bits.iter().any(|&b| b) {
            return Err(Error::Config("all-zero LFSR state is a fixed point".into()));
        }
        Ok(Self { bits })
    }

    /// Key whose stage-1 bit is the most significant bit of `value`'s low
    /// `degree` bits. Requires `degree <= 64`.
    pub fn from_u64(degree: usize, value: u64) -> Result<Self> {
        if degree == 0 || degree > 64 {
            return Err(Error::Argument(format!("from_u64 needs 1 <= degree <= 64, got {degree}")));
        }
        if degree < 64 && value >> degree != 0 {
            return Err(Error::Argument(format!("value {value:#x} wider than {degree} bits")));
        }
        Self::from_bits((0..degree).map(|s| (value >> (degree - 1 - s)) & 1 == 1).collect())
    }

    /// Uniformly random nonzero key.
    pub fn random<R: Rng + ?Sized>(degree: usize, rng: &mut R) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Config(format!("LFSR degree must be >= 2, got {degree}")));
        }
        loop {
            let bits: Vec<bool> = (0..degree).map(|_| rng.random()).collect();
            if bits.iter().any(|&b| b) {
                return Ok(Self { bits });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Big-endian hex of `ceil(k/8)` bytes; stage 1 is the most significant
    /// of the `k` value bits, padding bits above it are zero.
    pub fn to_hex(&self) -> String {
        let k = self.bits.len();
        let nbytes = k.div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        for (s, &bit) in self.bits.iter().enumerate() {
            if bit {
                let pos = k - 1 - s; // bit position in the integer, 0 = LSB
                bytes[nbytes - 1 - pos / 8] |= 1 << (pos % 8);
            }
        }
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(degree: usize, hex: &str) -> Result<Self> {
        let hex = hex.trim();
        let nbytes = degree.div_ceil(8);
        if hex.len() != 2 * nbytes {
            return Err(Error::Format(format!(
                "state must be {} hex digits for degree {degree}, got {}",
                2 * nbytes,
                hex.len()
            )));
        }
        let bytes: Vec<u8> = (0..nbytes)
            .map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad hex state: {e}")))?;
        let mut bits = vec![false; degree];
        for pos in 0..nbytes * 8 {
            let set = bytes[nbytes - 1 - pos / 8] >> (pos % 8) & 1 == 1;
            if pos >= degree {
                if set {
                    return Err(Error::Format("state has bits set above the register width".into()));
                }
                continue;
            }
            bits[degree - 1 - pos] = set;
        }
        Self::from_bits(bits)
    }
}

/// Stateful keystream generator. Single consumer; clone to fork a stream.
#[derive(Clone)]
pub struct KeystreamSource {
    spec: LfsrSpec,
    mask: Vec<u64>,
    top_mask: u64,
    register: Vec<u64>,
    raw_consumed: u64,
    emitted: u64,
}

impl fmt::Debug for KeystreamSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeystreamSource")
            .field("spec", &self.spec)
            .field("raw_consumed", &self.raw_consumed)
            .field("emitted", &self.emitted)
            .finish_non_exhaustive()
    }
}

impl KeystreamSource {
    pub fn new(spec: LfsrSpec, key: &Key) -> Result<Self> {
        Self::from_state(spec, key.bits())
    }

    /// Like [`KeystreamSource::new`] but takes raw stage bits, so a zero state
    /// is reported here instead of at key construction.
    pub fn from_state(spec: LfsrSpec, state: &[bool]) -> Result<Self> {
        if state.len() != spec.degree {
            return Err(Error::Config(format!(
                "state has {} bits, LFSR degree is {}",
                state.len(),
                spec.degree
            )));
        }
        if !state.iter().any(|&b| b) {
            return Err(Error::Config("all-zero LFSR state is a fixed point".into()));
        }
        let mut register = vec![0u64; spec.words()];
        for (i, &b) in state.iter().enumerate() {
            if b {
                register[i / 64] |= 1 << (i % 64);
            }
        }
        let rem = spec.degree % 64;
        let top_mask = if rem == 0 { u64::MAX } else { (1u64 << rem) - 1 };
        Ok(Self {
            mask: spec.tap_mask(),
            spec,
            top_mask,
            register,
            raw_consumed: 0,
            emitted: 0,
        })
    }

    pub fn spec(&self) -> &LfsrSpec {
        &self.spec
    }

    /// Raw m-sequence bits consumed so far.
    pub fn raw_consumed(&self) -> u64 {
        self.raw_consumed
    }

    /// Self-shrunk symbols emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Current register contents, stage 1 first.
    pub fn state(&self) -> Vec<bool> {
        (0..self.spec.degree)
            .map(|i| self.register[i / 64] >> (i % 64) & 1 == 1)
            .collect()
    }

    /// Next raw m-sequence bit.
    pub fn lfsr_next(&mut self) -> bool {
        let k = self.spec.degree;
        let out = self.register[(k - 1) / 64] >> ((k - 1) % 64) & 1 == 1;
        let parity = self
            .register
            .iter()
            .zip(&self.mask)
            .fold(0u32, |acc, (r, m)| acc ^ (r & m).count_ones())
            & 1;
        let mut carry = parity as u64;
        for w in self.register.iter_mut() {
            let next = *w >> 63;
            *w = (*w << 1) | carry;
            carry = next;
        }
        let last = self.register.len() - 1;
        self.register[last] &= self.top_mask;
        self.raw_consumed += 1;
        out
    }

    /// Next self-shrunk symbol in `{-1, +1}`.
    pub fn ssg_next_bipolar(&mut self) -> i8 {
        loop {
            let select = self.lfsr_next();
            let value = self.lfsr_next();
            if select {
                self.emitted += 1;
                return if value { -1 } else { 1 };
            }
        }
    }

    /// The next `n` bipolar symbols.
    pub fn take_bits(&mut self, n: usize) -> Vec<i8> {
        (0..n).map(|_| self.ssg_next_bipolar()).collect()
    }

    /// Minimal guaranteed keystream period `2^floor(k/2)`, saturating.
    pub fn minimum_period(&self) -> u64 {
        let e = self.spec.degree / 2;
        if e >= 64 {
            u64::MAX
        } else {
            1u64 << e
        }
    }
}

/// Fraction of `+1` symbols.
pub fn balance_statistic(sequence: &[i8]) -> Result<f64> {
    if sequence.is_empty() {
        return Err(Error::Argument("balance of an empty sequence".into()));
    }
    let plus = sequence.iter().filter(|&&b| b > 0).count();
    Ok(plus as f64 / sequence.len() as f64)
}

/// Text key file: `degree=`, `taps=`, `state=` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFile {
    pub spec: LfsrSpec,
    pub key: Key,
}

impl KeyFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut degree = None;
        let mut taps = None;
        let mut state = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected name=value, got {line:?}")))?;
            match name.trim() {
                "degree" => {
                    degree = Some(
                        value
                            .trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Format(format!("bad degree: {e}")))?,
                    )
                }
                "taps" => {
                    taps = Some(
                        value
                            .split(',')
                            .map(|t| t.trim().parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| Error::Format(format!("bad taps: {e}")))?,
                    )
                }
                "state" => state = Some(value.trim().to_string()),
                other => return Err(Error::Format(format!("unknown key file field {other:?}"))),
            }
        }
        let degree = degree.ok_or_else(|| Error::Format("missing degree".into()))?;
        let taps = taps.ok_or_else(|| Error::Format("missing taps".into()))?;
        let state = state.ok_or_else(|| Error::Format("missing state".into()))?;
        let spec = LfsrSpec::new(degree, &taps)?;
        let key = Key::from_hex(degree, &state)?;
        Ok(Self { spec, key })
    }

    pub fn source(&self) -> Result<KeystreamSource> {
        KeystreamSource::new(self.spec.clone(), &self.key)
    }
}

impl fmt::Display for KeyFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let taps: Vec<String> = self.spec.taps().iter().map(|t| t.to_string()).collect();
        writeln!(f, "degree={}", self.spec.degree())?;
        writeln!(f, "taps={}", taps.join(","))?;
        writeln!(f, "state={}", self.key.to_hex())
    }
}
