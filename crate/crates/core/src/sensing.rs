//! Sparse secret measurement operator `Phi = S P / sqrt(M r)`.
//!
//! Indices are zero-based throughout the API: rows `0..M`, positions `0..N`.
//! Row `i` of `S` is supported on the `q` consecutive positions
//! `(i mod eta) * q .. (i mod eta + 1) * q`, and `P` reorders the plaintext so
//! that `(P x)_j = x[perm[j]]`.

use std::fmt::Write as _;
use std::ops::Range;

use num_bigint::BigInt;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keystream::KeystreamSource;

/// Row-parallel evaluation kicks in above this many nonzeros.
const PARALLEL_NNZ: usize = 1 << 16;

/// Public dimensions of one cryptosystem instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    n: usize,
    m: usize,
    q: usize,
    k: usize,
    sigma: f64,
}

impl SystemParams {
    /// Sparse parameters: `N/M <= q <= N/2`, `N/q` and `M q / N` integral,
    /// `N >= k`.
    pub fn new(n: usize, m: usize, q: usize, k: usize, sigma: f64) -> Result<Self> {
        if 2 * q > n {
            return Err(Error::Config(format!("q = {q} exceeds N/2 = {}", n / 2)));
        }
        Self::validated(n, m, q, k, sigma)
    }

    /// Dense baseline with every row fully populated (`q = N`).
    pub fn dense(n: usize, m: usize, k: usize, sigma: f64) -> Result<Self> {
        Self::validated(n, m, n, k, sigma)
    }

    fn validated(n: usize, m: usize, q: usize, k: usize, sigma: f64) -> Result<Self> {
        if n == 0 || m == 0 || q == 0 {
            return Err(Error::Config(format!("dimensions must be positive (N={n}, M={m}, q={q})")));
        }
        if m > n {
            return Err(Error::Config(format!("M = {m} exceeds N = {n}")));
        }
        if n > q * m {
            return Err(Error::Config(format!("N/M = {} exceeds q = {q}", n as f64 / m as f64)));
        }
        if !n.is_multiple_of(q) {
            return Err(Error::Config(format!("eta = N/q = {n}/{q} is not an integer")));
        }
        if !(m * q).is_multiple_of(n) {
            return Err(Error::Config(format!("M r = M q / N = {m}*{q}/{n} is not an integer")));
        }
        if n < k {
            return Err(Error::Config(format!("N = {n} is smaller than the key length k = {k}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { n, m, q, k, sigma })
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::validated(self.n, self.m, self.q, self.k, sigma)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    /// Row-wise sparsity `q/N`.
    pub fn r(&self) -> f64 {
        self.q as f64 / self.n as f64
    }
    /// `N/q`.
    pub fn eta(&self) -> usize {
        self.n / self.q
    }
    /// `M/N`.
    pub fn rho(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
    /// `ceil(k/q)`.
    pub fn tau(&self) -> usize {
        self.k.div_ceil(self.q)
    }
    /// The integer `M q / N`.
    pub fn mr(&self) -> usize {
        self.m * self.q / self.n
    }
    /// Magnitude of every nonzero entry of `Phi`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.mr() as f64).sqrt()
    }
    /// Sign symbols consumed per key, `q M`.
    pub fn sign_cost(&self) -> u64 {
        (self.q * self.m) as u64
    }
}

/// Row support of `S` before permutation.
pub fn index_set(row: usize, params: &SystemParams) -> Result<Range<usize>> {
    if row >= params.m {
        return Err(Error::Argument(format!("row {row} out of range 0..{}", params.m)));
    }
    let start = (row % params.eta()) * params.q;
    Ok(start..start + params.q)
}

/// Keystream offset (within one key's sign block) of `S[row][col]`.
fn keystream_index(row: usize, col: usize, params: &SystemParams) -> usize {
    (row / params.eta()) * params.n + col
}

/// Keystream symbols consumed by one key construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyCost {
    /// Symbols placed in `S`.
    pub c_s: u64,
    /// Symbols spent generating `P`.
    pub c_p: u64,
}

impl KeyCost {
    pub fn total(&self) -> u64 {
        self.c_s + self.c_p
    }
}

/// One encryption's secret: the signs of `S` and the permutation `P`.
#[derive(Clone, PartialEq, Eq)]
pub struct SensingKey {
    n: usize,
    m: usize,
    q: usize,
    eta: usize,
    /// Row-major `M x q`; entry `l` of row `i` sits at column `(i mod eta) q + l`.
    signs: Vec<i8>,
    perm: Vec<usize>,
}

impl std::fmt::Debug for SensingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SensingKey")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.q)
            .finish_non_exhaustive()
    }
}

impl SensingKey {
    /// Assemble a key from explicit parts; used by tests and attack oracles.
    pub fn from_parts(params: &SystemParams, signs: Vec<i8>, perm: Vec<usize>) -> Result<Self> {
        if signs.len() != params.m * params.q {
            return Err(Error::Argument(format!(
                "sign table has {} entries, expected {}",
                signs.len(),
                params.m * params.q
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Argument("sign entries must be +1 or -1".into()));
        }
        if !is_permutation(&perm, params.n) {
            return Err(Error::Argument(format!("perm is not a bijection on 0..{}", params.n)));
        }
        Ok(Self {
            n: params.n,
            m: params.m,
            q: params.q,
            eta: params.eta(),
            signs,
            perm,
        })
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn row_signs(&self, row: usize) -> &[i8] {
        &self.signs[row * self.q..(row + 1) * self.q]
    }

    /// `perm[j]` is the plaintext index feeding column `j` of `S`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Inverse permutation: `inverse[perm[j]] = j`.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0; self.n];
        for (j, &p) in self.perm.iter().enumerate() {
            inv[p] = j;
        }
        inv
    }

    fn row_start(&self, row: usize) -> usize {
        (row % self.eta) * self.q
    }

    /// Nonzeros of row `row` of `S P`: (plaintext index, sign), in column order of `S`.
    pub fn permuted_support(&self, row: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        let start = self.row_start(row);
        self.row_signs(row)
            .iter()
            .enumerate()
            .map(move |(l, &s)| (self.perm[start + l], s))
    }

    fn check_params(&self, params: &SystemParams) -> Result<()> {
        if (params.n, params.m, params.q) != (self.n, self.m, self.q) {
            return Err(Error::Argument(format!(
                "key built for (N, M, q) = ({}, {}, {}), params say ({}, {}, {})",
                self.n, self.m, self.q, params.n, params.m, params.q
            )));
        }
        Ok(())
    }

    fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let start = self.row_start(row);
        self.row_signs(row)
            .iter()
            .zip(&self.perm[start..start + self.q])
            .map(|(&s, &p)| if s > 0 { x[p] } else { -x[p] })
            .sum()
    }

    /// Exact `S P x` for integer plaintexts, i.e. `sqrt(M r)` times the noiseless ciphertext.
    pub fn apply_unscaled_exact(&self, x: &[BigInt]) -> Result<Vec<BigInt>> {
        if x.len() != self.n {
            return Err(Error::Argument(format!("plaintext has length {}, expected {}", x.len(), self.n)));
        }
        Ok((0..self.m)
            .map(|row| {
                self.permuted_support(row).fold(BigInt::from(0), |acc, (p, s)| {
                    if s > 0 {
                        acc + &x[p]
                    } else {
                        acc - &x[p]
                    }
                })
            })
            .collect())
    }

    /// Text dump, one row per line `i: j:+1 j:-1 ...` (unpermuted columns,
    /// 1-based), then `perm: pi(1),...,pi(N)` (1-based). Contains the secret.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for row in 0..self.m {
            let start = self.row_start(row);
            write!(out, "{}:", row + 1).unwrap();
            for (l, &s) in self.row_signs(row).iter().enumerate() {
                write!(out, " {}:{}", start + l + 1, if s > 0 { "+1" } else { "-1" }).unwrap();
            }
            out.push('\n');
        }
        let perm: Vec<String> = self.perm.iter().map(|p| (p + 1).to_string()).collect();
        writeln!(out, "perm: {}", perm.join(",")).unwrap();
        out
    }
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Uniform random permutation of `0..n` from a stream of fair bits.
///
/// Fisher-Yates from the top: step `i` draws an integer in `0..=i` by reading
/// `ceil(log2(i+1))` bits (most significant first) and rejecting values above
/// `i`. Returns the permutation and the number of bits read.
pub fn generate_permutation<F: FnMut() -> bool>(mut next_bit: F, n: usize) -> (Vec<usize>, u64) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut consumed = 0u64;
    for i in (1..n).rev() {
        let range = i as u64 + 1;
        let width = 64 - (range - 1).leading_zeros();
        let j = loop {
            let mut v = 0u64;
            for _ in 0..width {
                v = (v << 1) | next_bit() as u64;
            }
            consumed += width as u64;
            if v < range {
                break v as usize;
            }
        };
        perm.swap(i, j);
    }
    (perm, consumed)
}

/// Draw a fresh key from `source`: `q M` sign symbols followed by the
/// permutation bits (`-1 -> 0`, `+1 -> 1`).
pub fn build_sensing_key(source: &mut KeystreamSource, params: &SystemParams) -> Result<(SensingKey, KeyCost)> {
    let c_s = params.sign_cost();
    let block = source.take_bits(c_s as usize);
    let mut signs = Vec::with_capacity(block.len());
    for row in 0..params.m {
        for col in index_set(row, params)? {
            signs.push(block[keystream_index(row, col, params)]);
        }
    }
    let (perm, c_p) = generate_permutation(|| source.ssg_next_bipolar() > 0, params.n);
    let key = SensingKey::from_parts(params, signs, perm)?;
    Ok((key, KeyCost { c_s, c_p }))
}

/// Noiseless measurement `Phi x`.
pub fn apply_phi(key: &SensingKey, params: &SystemParams, x: &[f64]) -> Result<Vec<f64>> {
    key.check_params(params)?;
    if x.len() != params.n {
        return Err(Error::Argument(format!("plaintext has length {}, expected {}", x.len(), params.n)));
    }
    let scale = params.scale();
    let row = |i: usize| scale * key.row_dot(i, x);
    Ok(if params.m * params.q >= PARALLEL_NNZ {
        (0..params.m).into_par_iter().map(row).collect()
    } else {
        (0..params.m).map(row).collect()
    })
}

/// Adjoint `Phi^T y`.
pub fn apply_phi_adjoint(key: &SensingKey, params: &SystemParams, y: &[f64]) -> Result<Vec<f64>> {
    key.check_params(params)?;
    if y.len() != params.m {
        return Err(Error::Argument(format!("measurement has length {}, expected {}", y.len(), params.m)));
    }
    let scale = params.scale();
    let mut out = vec![0.0; params.n];
    for (row, &yi) in y.iter().enumerate() {
        if yi == 0.0 {
            continue;
        }
        let v = scale * yi;
        for (p, s) in key.permuted_support(row) {
            out[p] += if s > 0 { v } else { -v };
        }
    }
    Ok(out)
}
