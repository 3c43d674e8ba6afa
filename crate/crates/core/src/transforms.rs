//! Orthonormal sparsifying bases and plaintext energy statistics.
//!
//! `analyze` computes `alpha = Psi x` and `synthesize` computes
//! `x = Psi^T alpha`. Two-dimensional bases act on column-stacked `n x n`
//! images as `Psi_n (x) Psi_n`: columns first, then rows.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};

/// Family of the 1D transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Identity,
    /// Orthonormal DCT-II.
    Dct,
    /// Walsh-Hadamard in natural (Sylvester) order.
    Wht,
    /// Full-depth periodic Haar wavelet.
    Haar,
    /// Daubechies-4 wavelet, periodic, decomposed down to 4 samples.
    D4,
}

impl BasisKind {
    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Identity => "identity",
            BasisKind::Dct => "dct",
            BasisKind::Wht => "wht",
            BasisKind::Haar => "haar",
            BasisKind::D4 => "d4",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(BasisKind::Identity),
            "dct" => Ok(BasisKind::Dct),
            "wht" => Ok(BasisKind::Wht),
            "haar" => Ok(BasisKind::Haar),
            "d4" => Ok(BasisKind::D4),
            other => Err(Error::Argument(format!("unknown basis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrangement {
    OneD,
    /// Kronecker square `Psi_n (x) Psi_n` acting on `side x side` images.
    TwoD { side: usize },
}

/// An orthonormal basis of dimension `N`.
#[derive(Clone)]
pub struct Basis {
    kind: BasisKind,
    n: usize,
    arrangement: Arrangement,
    /// Length of the underlying 1D transform.
    len: usize,
    dct: Option<Arc<dyn TransformType2And3<f64>>>,
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("arrangement", &self.arrangement)
            .finish()
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.n == other.n && self.arrangement == other.arrangement
    }
}

const D4_LOW: [f64; 4] = {
    const S3: f64 = 1.732_050_807_568_877_2;
    const D: f64 = 4.0 * SQRT_2;
    [(1.0 + S3) / D, (3.0 + S3) / D, (3.0 - S3) / D, (1.0 - S3) / D]
};
const D4_HIGH: [f64; 4] = [D4_LOW[3], -D4_LOW[2], D4_LOW[1], -D4_LOW[0]];

impl Basis {
    pub fn new_1d(kind: BasisKind, n: usize) -> Result<Self> {
        Self::build(kind, n, n, Arrangement::OneD)
    }

    pub fn new_2d(kind: BasisKind, side: usize) -> Result<Self> {
        let n = side
            .checked_mul(side)
            .ok_or_else(|| Error::Argument(format!("side {side} too large")))?;
        Self::build(kind, n, side, Arrangement::TwoD { side })
    }

    fn build(kind: BasisKind, n: usize, len: usize, arrangement: Arrangement) -> Result<Self> {
        if len == 0 {
            return Err(Error::Argument("basis dimension must be positive".into()));
        }
        let pow2 = len.is_power_of_two();
        match kind {
            BasisKind::Wht | BasisKind::Haar if !pow2 => {
                return Err(Error::Argument(format!("{kind} needs a power-of-two length, got {len}")));
            }
            BasisKind::D4 if !pow2 || len < 4 => {
                return Err(Error::Argument(format!("d4 needs a power-of-two length >= 4, got {len}")));
            }
            _ => {}
        }
        let dct = (kind == BasisKind::Dct).then(|| DctPlanner::new().plan_dct2(len));
        Ok(Self {
            kind,
            n,
            arrangement,
            len,
            dct,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn arrangement(&self) -> Arrangement {
        self.arrangement
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Argument(format!(
                "vector has length {len}, basis dimension is {}",
                self.n
            )));
        }
        Ok(())
    }

    /// `alpha = Psi x`.
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut buf = x.to_vec();
        self.analyze_in_place(&mut buf);
        Ok(buf)
    }

    /// `x = Psi^T alpha`.
    pub fn synthesize(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        self.check_len(alpha.len())?;
        let mut buf = alpha.to_vec();
        self.synthesize_in_place(&mut buf);
        Ok(buf)
    }

    /// In-place analysis; `buf.len()` must equal the dimension.
    pub fn analyze_in_place(&self, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.separable(buf, true);
    }

    /// In-place synthesis; `buf.len()` must equal the dimension.
    pub fn synthesize_in_place(&self, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.separable(buf, false);
    }

    fn separable(&self, buf: &mut [f64], forward: bool) {
        if self.kind == BasisKind::Identity {
            return;
        }
        let mut work = Workspace::new(self);
        match self.arrangement {
            Arrangement::OneD => self.transform_1d(buf, forward, &mut work),
            Arrangement::TwoD { side } => {
                for col in buf.chunks_exact_mut(side) {
                    self.transform_1d(col, forward, &mut work);
                }
                let mut line = vec![0.0; side];
                for row in 0..side {
                    for (c, v) in line.iter_mut().enumerate() {
                        *v = buf[c * side + row];
                    }
                    self.transform_1d(&mut line, forward, &mut work);
                    for (c, v) in line.iter().enumerate() {
                        buf[c * side + row] = *v;
                    }
                }
            }
        }
    }

    fn transform_1d(&self, x: &mut [f64], forward: bool, work: &mut Workspace) {
        match (self.kind, forward) {
            (BasisKind::Identity, _) => {}
            (BasisKind::Dct, true) => self.dct_forward(x, work),
            (BasisKind::Dct, false) => self.dct_inverse(x, work),
            (BasisKind::Wht, _) => wht(x),
            (BasisKind::Haar, true) => haar_forward(x, &mut work.tmp),
            (BasisKind::Haar, false) => haar_inverse(x, &mut work.tmp),
            (BasisKind::D4, true) => d4_forward(x, &mut work.tmp),
            (BasisKind::D4, false) => d4_inverse(x, &mut work.tmp),
        }
    }

    fn dct_forward(&self, x: &mut [f64], work: &mut Workspace) {
        let plan = self.dct.as_ref().expect("dct plan");
        plan.process_dct2_with_scratch(x, &mut work.scratch);
        let n = self.len as f64;
        x[0] *= (1.0 / n).sqrt();
        let s = (2.0 / n).sqrt();
        x[1..].iter_mut().for_each(|v| *v *= s);
    }

    fn dct_inverse(&self, x: &mut [f64], work: &mut Workspace) {
        let plan = self.dct.as_ref().expect("dct plan");
        let n = self.len as f64;
        // Unnormalized DCT-III computes X_0 / 2 + sum_k X_k cos(...).
        x[0] *= 2.0 / n.sqrt();
        let s = (2.0 / n).sqrt();
        x[1..].iter_mut().for_each(|v| *v *= s);
        plan.process_dct3_with_scratch(x, &mut work.scratch);
    }
}

struct Workspace {
    scratch: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(basis: &Basis) -> Self {
        let scratch_len = basis.dct.as_ref().map_or(0, |d| d.get_scratch_len());
        Self {
            scratch: vec![0.0; scratch_len],
            tmp: vec![0.0; basis.len],
        }
    }
}

fn wht(x: &mut [f64]) {
    let n = x.len();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (x[i], x[i + h]);
                x[i] = a + b;
                x[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let s = 1.0 / (n as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= s);
}

fn haar_forward(x: &mut [f64], tmp: &mut [f64]) {
    let mut n = x.len();
    while n >= 2 {
        let half = n / 2;
        for i in 0..half {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            tmp[i] = (a + b) / SQRT_2;
            tmp[half + i] = (a - b) / SQRT_2;
        }
        x[..n].copy_from_slice(&tmp[..n]);
        n = half;
    }
}

fn haar_inverse(x: &mut [f64], tmp: &mut [f64]) {
    let mut n = 2;
    while n <= x.len() {
        let half = n / 2;
        for i in 0..half {
            let (a, d) = (x[i], x[half + i]);
            tmp[2 * i] = (a + d) / SQRT_2;
            tmp[2 * i + 1] = (a - d) / SQRT_2;
        }
        x[..n].copy_from_slice(&tmp[..n]);
        n *= 2;
    }
}

fn d4_forward(x: &mut [f64], tmp: &mut [f64]) {
    let mut n = x.len();
    while n >= 4 {
        let half = n / 2;
        for i in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for m in 0..4 {
                let v = x[(2 * i + m) % n];
                a += D4_LOW[m] * v;
                d += D4_HIGH[m] * v;
            }
            tmp[i] = a;
            tmp[half + i] = d;
        }
        x[..n].copy_from_slice(&tmp[..n]);
        n = half;
    }
}

fn d4_inverse(x: &mut [f64], tmp: &mut [f64]) {
    let mut n = 4;
    while n <= x.len() {
        let half = n / 2;
        tmp[..n].iter_mut().for_each(|v| *v = 0.0);
        for i in 0..half {
            let (a, d) = (x[i], x[half + i]);
            for m in 0..4 {
                tmp[(2 * i + m) % n] += D4_LOW[m] * a + D4_HIGH[m] * d;
            }
        }
        x[..n].copy_from_slice(&tmp[..n]);
        n *= 2;
    }
}

/// Coherence `sqrt(N) * max |psi_ij|`, scanning one basis vector at a time.
pub fn coherence(basis: &Basis) -> f64 {
    let n = basis.dimension();
    let max = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            basis.synthesize_in_place(&mut e);
            e.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .reduce(|| 0.0, f64::max);
    (n as f64).sqrt() * max
}

/// Energy concentration `N * sum (x_j / ||x||)^4`, in `[1, N]`.
pub fn c_statistic(x: &[f64]) -> Result<f64> {
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 || x.is_empty() {
        return Err(Error::Argument("c statistic of a zero vector".into()));
    }
    let fourth: f64 = x.iter().map(|v| (v * v / energy).powi(2)).sum();
    Ok(x.len() as f64 * fourth)
}

/// Largest dimension for which basis vectors are cached during `c_max` runs.
const MATERIALIZE_LIMIT: usize = 4096;
const TRIALS_PER_CHUNK: usize = 4096;

/// Maximum `c_statistic` over `trials` random plaintexts `Psi^T alpha`, where
/// `alpha` has `sparsity` standard Gaussian entries at uniform positions.
///
/// Trials are split into fixed chunks, each with its own PRNG seeded from
/// `(seed, chunk)`, so the result does not depend on the thread count.
pub fn estimate_c_max(basis: &Basis, sparsity: usize, trials: usize, seed: u64) -> Result<f64> {
    let n = basis.dimension();
    if trials == 0 {
        return Err(Error::Argument("need at least one trial".into()));
    }
    if sparsity == 0 || sparsity > n {
        return Err(Error::Argument(format!("sparsity must be in 1..={n}, got {sparsity}")));
    }
    let columns: Option<Vec<f64>> = (n <= MATERIALIZE_LIMIT).then(|| {
        let mut cols = vec![0.0; n * n];
        cols.par_chunks_exact_mut(n).enumerate().for_each(|(j, col)| {
            col[j] = 1.0;
            basis.synthesize_in_place(col);
        });
        cols
    });
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, chunk as u64, 0));
            let count = TRIALS_PER_CHUNK.min(trials - chunk * TRIALS_PER_CHUNK);
            let mut x = vec![0.0; n];
            let mut best = 0.0f64;
            for _ in 0..count {
                x.iter_mut().for_each(|v| *v = 0.0);
                let support = sample(&mut rng, n, sparsity);
                match &columns {
                    Some(cols) => {
                        for j in support.iter() {
                            let a: f64 = StandardNormal.sample(&mut rng);
                            let col = &cols[j * n..(j + 1) * n];
                            x.iter_mut().zip(col).for_each(|(xv, c)| *xv += a * c);
                        }
                    }
                    None => {
                        for j in support.iter() {
                            x[j] = StandardNormal.sample(&mut rng);
                        }
                        basis.synthesize_in_place(&mut x);
                    }
                }
                if let Ok(c) = c_statistic(&x) {
                    best = best.max(c);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}
