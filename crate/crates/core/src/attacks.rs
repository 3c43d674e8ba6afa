//! Chosen-plaintext attacks at desk scale.
//!
//! The class-1 probe is the constant plaintext `a = sqrt(M r)`, which makes
//! `y_i` the plain sum of row `i`'s signs. The class-2 probe is `x_j = 3^j`:
//! base 2 cannot separate signed sparse rows (`-2^0 + 2^1 = +2^0`), while the
//! balanced-ternary expansion of `sqrt(M r) y_i` is unique and reveals every
//! signed position.

use std::collections::{BTreeMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binomial, factorial, CandidateCount};
use crate::error::{Error, Result};
use crate::keystream::{Key, KeystreamSource, LfsrSpec};
use crate::sensing::{build_sensing_key, apply_phi, SensingKey, SystemParams};

/// Sign census of one row of `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowCount {
    pub row: usize,
    pub plus: usize,
    pub minus: usize,
}

impl RowCount {
    pub fn from_signs(row: usize, signs: &[i8]) -> Self {
        let plus = signs.iter().filter(|&&s| s > 0).count();
        Self {
            row,
            plus,
            minus: signs.len() - plus,
        }
    }
}

/// Class-1 probe plaintext `(sqrt(M r), ..., sqrt(M r))`.
pub fn class1_probe(params: &SystemParams) -> Vec<f64> {
    vec![(params.mr() as f64).sqrt(); params.n()]
}

/// Absolute slack allowed when reading an integer row sum from a float ciphertext.
const INTEGER_TOL: f64 = 1e-6;

/// Row sign counts for rows `0..tau`, the rows covering the first `k` keystream symbols.
pub fn class1_attack(y: &[f64], params: &SystemParams) -> Result<Vec<RowCount>> {
    class1_rows(y, params, params.tau())
}

/// Row sign counts for the first `rows` rows.
pub fn class1_rows(y: &[f64], params: &SystemParams, rows: usize) -> Result<Vec<RowCount>> {
    if y.len() != params.m() {
        return Err(Error::Argument(format!("ciphertext has {} values, expected M = {}", y.len(), params.m())));
    }
    if rows > params.m() {
        return Err(Error::Argument(format!("{rows} rows requested, M = {}", params.m())));
    }
    let q = params.q() as i64;
    y[..rows]
        .iter()
        .enumerate()
        .map(|(row, &v)| {
            let r = v.round();
            if (v - r).abs() > INTEGER_TOL * (q as f64).max(1.0) {
                return Err(Error::InconsistentCiphertext(format!("y[{row}] = {v} is not an integer")));
            }
            let s = r as i64;
            if s.abs() > q || (q + s) % 2 != 0 {
                return Err(Error::InconsistentCiphertext(format!(
                    "y[{row}] = {s} is not a sum of {q} signs"
                )));
            }
            let plus = ((q + s) / 2) as usize;
            Ok(RowCount {
                row,
                plus,
                minus: q as usize - plus,
            })
        })
        .collect()
}

/// Noiseless ciphertext held exactly as `sqrt(M r) y = S P x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactCiphertext {
    pub unscaled: Vec<BigInt>,
}

/// Class-2 probe plaintext `x_j = 3^j`.
pub fn class2_probe(n: usize) -> Vec<BigInt> {
    let three = BigInt::from(3);
    let mut out = Vec::with_capacity(n);
    let mut v = BigInt::one();
    for _ in 0..n {
        out.push(v.clone());
        v *= &three;
    }
    out
}

/// Exact noiseless encryption of an integer plaintext with a fresh key.
pub fn encrypt_exact(
    source: &mut KeystreamSource,
    params: &SystemParams,
    x: &[BigInt],
) -> Result<(ExactCiphertext, SensingKey)> {
    let (key, _) = build_sensing_key(source, params)?;
    let unscaled = key.apply_unscaled_exact(x)?;
    Ok((ExactCiphertext { unscaled }, key))
}

/// Signed support of every row of `S P`, in plaintext coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedMatrix {
    /// `rows[i]` lists `(position, sign)` sorted by position.
    pub rows: Vec<Vec<(usize, i8)>>,
}

impl ExtractedMatrix {
    /// Ground truth read from a key, for comparison with an extraction.
    pub fn from_key(key: &SensingKey, params: &SystemParams) -> Self {
        let rows = (0..params.m())
            .map(|i| {
                let mut r: Vec<(usize, i8)> = key.permuted_support(i).collect();
                r.sort_unstable();
                r
            })
            .collect();
        Self { rows }
    }
}

/// Balanced-ternary digits of `value`, least significant first.
pub fn balanced_ternary(value: &BigInt) -> Vec<i8> {
    let three = BigInt::from(3);
    let mut v = value.clone();
    let mut digits = Vec::new();
    while !v.is_zero() {
        let r = v.mod_floor(&three).to_u8().expect("residue below 3");
        let d: i8 = if r == 2 { -1 } else { r as i8 };
        v -= BigInt::from(d);
        v /= &three;
        digits.push(d);
    }
    digits
}

/// Decode every row of a class-2 ciphertext.
pub fn class2_attack(y: &ExactCiphertext, params: &SystemParams) -> Result<ExtractedMatrix> {
    if y.unscaled.len() != params.m() {
        return Err(Error::Argument(format!(
            "ciphertext has {} values, expected M = {}",
            y.unscaled.len(),
            params.m()
        )));
    }
    let rows = y
        .unscaled
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let digits = balanced_ternary(v);
            if digits.len() > params.n() {
                return Err(Error::InconsistentCiphertext(format!(
                    "row {i} has a ternary expansion beyond position {}",
                    params.n()
                )));
            }
            let support: Vec<(usize, i8)> = digits
                .iter()
                .enumerate()
                .filter(|(_, &d)| d != 0)
                .map(|(j, &d)| (j, d))
                .collect();
            if support.len() != params.q() {
                return Err(Error::InconsistentCiphertext(format!(
                    "row {i} decodes to {} nonzeros, expected q = {}",
                    support.len(),
                    params.q()
                )));
            }
            Ok(support)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtractedMatrix { rows })
}

/// Number of sign patterns consistent with the counts, `prod_i C(q, q_i^+)`.
pub fn count_candidates(counts: &[RowCount]) -> CandidateCount {
    let exact = counts.iter().fold(BigUint::one(), |acc, c| {
        acc * binomial((c.plus + c.minus) as u64, c.plus as u64)
    });
    CandidateCount::new(exact)
}

/// Result of a Monte-Carlo check of the Hoeffding row-sum bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoeffdingCheck {
    /// Empirical `Pr[|y| < t]` for a sum of `q` fair signs.
    pub empirical: f64,
    /// `1 - 2 exp(-t^2 / (2q))`.
    pub bound: f64,
    /// Binomial standard error of `empirical`.
    pub std_error: f64,
    pub trials: u64,
}

impl HoeffdingCheck {
    /// `empirical >= bound - 3 * std_error`.
    pub fn holds(&self) -> bool {
        self.empirical >= self.bound - 3.0 * self.std_error
    }
}

const HOEFFDING_CHUNK: u64 = 1 << 16;

pub fn hoeffding_validate(q: usize, t: f64, trials: u64, seed: u64) -> Result<HoeffdingCheck> {
    if q == 0 || trials == 0 {
        return Err(Error::Argument("q and trials must be positive".into()));
    }
    if !(t >= 0.0 && t <= q as f64) {
        return Err(Error::Argument(format!("t = {t} must lie in [0, q = {q}]")));
    }
    let words = q.div_ceil(64);
    let tail_bits = q % 64;
    let chunks = trials.div_ceil(HOEFFDING_CHUNK);
    let inside: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, c, 1));
            let n = HOEFFDING_CHUNK.min(trials - c * HOEFFDING_CHUNK);
            let mut hits = 0u64;
            for _ in 0..n {
                let mut plus = 0i64;
                for w in 0..words {
                    let mut v = rng.next_u64();
                    if w == words - 1 && tail_bits != 0 {
                        v &= (1u64 << tail_bits) - 1;
                    }
                    plus += v.count_ones() as i64;
                }
                let y = 2 * plus - q as i64;
                if (y.abs() as f64) < t {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let empirical = inside as f64 / trials as f64;
    let bound = 1.0 - 2.0 * (-t * t / (2.0 * q as f64)).exp();
    let p = bound.clamp(0.0, 1.0);
    Ok(HoeffdingCheck {
        empirical,
        bound,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

/// Per-column composite support values and their census.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeRepresentation {
    /// `values[j] = sum_i c_ij 2^i` over the 0/1 support matrix.
    pub values: Vec<BigUint>,
    /// Distinct value -> number of columns carrying it.
    pub census: BTreeMap<BigUint, usize>,
}

pub fn composite_representation(extracted: &ExtractedMatrix, params: &SystemParams) -> Result<CompositeRepresentation> {
    if extracted.rows.len() != params.m() {
        return Err(Error::Argument(format!(
            "extraction covers {} rows, expected M = {}",
            extracted.rows.len(),
            params.m()
        )));
    }
    let mut values = vec![BigUint::zero(); params.n()];
    for (i, row) in extracted.rows.iter().enumerate() {
        for &(j, _) in row {
            if j >= params.n() {
                return Err(Error::Structural(format!("row {i} references column {j}")));
            }
            values[j].set_bit(i as u64, true);
        }
    }
    let mut census = BTreeMap::new();
    for v in &values {
        *census.entry(v.clone()).or_insert(0usize) += 1;
    }
    let (eta, q) = (params.eta(), params.q());
    if census.len() != eta || census.values().any(|&c| c != q) {
        return Err(Error::Structural(format!(
            "expected {eta} distinct composite values with {q} columns each, found {:?}",
            census.values().collect::<Vec<_>>()
        )));
    }
    Ok(CompositeRepresentation { values, census })
}

/// `(q!)^eta` permutations are indistinguishable from the support pattern alone.
pub fn permutation_candidate_count(params: &SystemParams) -> CandidateCount {
    CandidateCount::new(Pow::pow(factorial(params.q() as u64), params.eta()))
}

/// Largest key length the exhaustive stage-2 search accepts.
pub const MAX_TRIAL_DEGREE: usize = 24;
/// Largest candidate set stage 1 will enumerate.
pub const MAX_CANDIDATES: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WorkCounters {
    /// Candidate keystreams enumerated in stage 1.
    pub candidates: u64,
    /// LFSR states tested in stage 2.
    pub states_tested: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    #[serde(rename = "S_CPA_log2")]
    pub s_cpa_log2: f64,
    /// `S_CPA <= 2^L`.
    pub feasible: bool,
    /// The true keystream prefix is among the enumerated candidates.
    pub stage1_success: bool,
    /// The adversary's key guess equals the secret key.
    pub stage2_success: bool,
    /// Keys consistent with some candidate.
    pub consistent_keys: u64,
    pub work: WorkCounters,
}

/// Register layout of [`KeystreamSource`]: stage `s` at bit `s - 1`.
#[derive(Clone, Copy)]
struct SmallLfsr {
    degree: u32,
    taps: u64,
    state: u64,
}

impl SmallLfsr {
    fn next(&mut self) -> u64 {
        let out = self.state >> (self.degree - 1) & 1;
        let fb = (self.state & self.taps).count_ones() as u64 & 1;
        self.state = ((self.state << 1) | fb) & ((1u64 << self.degree) - 1);
        out
    }

    /// First `len` SSG symbols as bits `d_t` (1 meaning `-1`), bit `t` of the result.
    fn ssg_prefix(mut self, len: usize) -> u64 {
        let mut word = 0u64;
        let mut t = 0;
        while t < len {
            let select = self.next();
            let value = self.next();
            if select == 1 {
                word |= value << t;
                t += 1;
            }
        }
        word
    }
}

fn key_from_state(degree: usize, state: u64) -> Result<Key> {
    Key::from_bits((0..degree).map(|i| state >> i & 1 == 1).collect())
}

fn state_from_key(key: &Key) -> u64 {
    key.bits().iter().enumerate().fold(0u64, |acc, (i, &b)| acc | (b as u64) << i)
}

/// All `q`-bit words with exactly `ones` bits set.
fn fixed_weight_words(q: usize, ones: usize) -> Vec<u64> {
    if ones == 0 {
        return vec![0];
    }
    let limit = if q == 64 { u64::MAX } else { (1u64 << q) - 1 };
    let mut out = Vec::new();
    let mut v = if ones == 64 { u64::MAX } else { (1u64 << ones) - 1 };
    loop {
        out.push(v);
        // Gosper's hack.
        let c = v & v.wrapping_neg();
        let r = v.wrapping_add(c);
        if r == 0 || r > limit {
            break;
        }
        let next = (((r ^ v) >> 2) / c) | r;
        if next > limit || next < v {
            break;
        }
        v = next;
    }
    out
}

/// One run of the two-stage chosen-plaintext attack against a fresh random key.
///
/// Stage 1 sends the class-1 probe and, if `S_CPA <= 2^L`, enumerates all
/// keystream prefixes matching the row counts. Stage 2 tests all `2^k - 1`
/// LFSR states against those prefixes and guesses uniformly among the
/// consistent keys.
pub fn two_stage_cpa_trial<R: Rng + ?Sized>(params: &SystemParams, l: f64, rng: &mut R) -> Result<TrialOutcome> {
    let k = params.k();
    if k > MAX_TRIAL_DEGREE {
        return Err(Error::Scale(format!("k = {k} exceeds the exhaustive search limit {MAX_TRIAL_DEGREE}")));
    }
    let q = params.q();
    let tau = params.tau();
    let prefix_len = tau * q;
    if prefix_len > 64 {
        return Err(Error::Scale(format!("prefix of tau q = {prefix_len} symbols exceeds 64")));
    }
    let spec = LfsrSpec::builtin(k)?;
    let key = Key::random(k, rng)?;
    let mut source = KeystreamSource::new(spec.clone(), &key)?;
    let (sensing, _) = build_sensing_key(&mut source, params)?;
    let y = apply_phi(&sensing, params, &class1_probe(params))?;
    let counts = class1_attack(&y, params)?;
    let s_cpa_log2 = count_candidates(&counts).log2();
    let mut outcome = TrialOutcome {
        s_cpa_log2,
        feasible: s_cpa_log2 <= l,
        stage1_success: false,
        stage2_success: false,
        consistent_keys: 0,
        work: WorkCounters::default(),
    };
    if !outcome.feasible {
        return Ok(outcome);
    }
    if s_cpa_log2 > (MAX_CANDIDATES as f64).log2() {
        return Err(Error::Scale(format!("2^{s_cpa_log2:.1} candidates exceed the enumeration limit")));
    }

    let mut candidates: Vec<u64> = vec![0];
    for c in &counts {
        let words = fixed_weight_words(q, c.minus);
        candidates = candidates
            .iter()
            .flat_map(|&base| words.iter().map(move |&w| base | w << (c.row * q)))
            .collect();
    }
    outcome.work.candidates = candidates.len() as u64;
    let set: HashSet<u64> = candidates.into_iter().collect();

    let taps = spec.taps().iter().fold(0u64, |acc, &t| acc | 1 << (t - 1));
    let true_state = state_from_key(&key);
    let truth = SmallLfsr {
        degree: k as u32,
        taps,
        state: true_state,
    }
    .ssg_prefix(prefix_len);
    outcome.stage1_success = set.contains(&truth);

    let total_states = (1u64 << k) - 1;
    let consistent: Vec<u64> = (1..=total_states)
        .into_par_iter()
        .filter(|&state| {
            let lfsr = SmallLfsr {
                degree: k as u32,
                taps,
                state,
            };
            set.contains(&lfsr.ssg_prefix(prefix_len))
        })
        .collect();
    outcome.work.states_tested = total_states;
    outcome.consistent_keys = consistent.len() as u64;
    if !consistent.is_empty() {
        let guess = consistent[rng.random_range(0..consistent.len())];
        outcome.stage2_success = key_from_state(k, guess)? == key;
    }
    Ok(outcome)
}

/// Value of a class-2 ciphertext recomputed from an extraction, for cross-checks.
pub fn resynthesize_class2(extracted: &ExtractedMatrix) -> ExactCiphertext {
    let three = BigInt::from(3);
    let unscaled = extracted
        .rows
        .iter()
        .map(|row| {
            row.iter().fold(BigInt::zero(), |acc, &(j, s)| {
                let p: BigInt = Pow::pow(&three, j);
                if s > 0 {
                    acc + p
                } else {
                    acc - p
                }
            })
        })
        .collect();
    ExactCiphertext { unscaled }
}

/// Whether every row value is small enough for the ternary decoder, a cheap pre-check.
pub fn class2_in_range(y: &ExactCiphertext, params: &SystemParams) -> bool {
    let limit: BigInt = Pow::pow(BigInt::from(3), params.n());
    y.unscaled.iter().all(|v| v.abs() < limit)
}
