//! Encryption `y = Phi x + n` and decryption by orthogonal matching pursuit
//! over `A = Phi Psi^T`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::keystream::KeystreamSource;
use crate::sensing::{apply_phi, apply_phi_adjoint, build_sensing_key, KeyCost, SensingKey, SystemParams};
use crate::transforms::Basis;

const MAGIC: &[u8; 4] = b"SOTS";

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub values: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub sigma: f64,
}

impl Ciphertext {
    pub fn new(values: Vec<f64>, params: &SystemParams) -> Result<Self> {
        let c = Self {
            values,
            n: params.n(),
            m: params.m(),
            q: params.q(),
            sigma: params.sigma(),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.m {
            return Err(Error::Format(format!(
                "ciphertext holds {} values, header says M = {}",
                self.values.len(),
                self.m
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) || !self.sigma.is_finite() {
            return Err(Error::Format("ciphertext contains non-finite values".into()));
        }
        Ok(())
    }

    /// Check that the header matches `params`.
    pub fn check_params(&self, params: &SystemParams) -> Result<()> {
        if (self.n, self.m, self.q) != (params.n(), params.m(), params.q()) {
            return Err(Error::Argument(format!(
                "ciphertext is for (N, M, q) = ({}, {}, {}), params say ({}, {}, {})",
                self.n,
                self.m,
                self.q,
                params.n(),
                params.m(),
                params.q()
            )));
        }
        Ok(())
    }

    /// `SOTS`, u32 N, M, q, M little-endian f64 values, f64 sigma.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.m + 1));
        out.extend_from_slice(MAGIC);
        for v in [self.n, self.m, self.q] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.sigma.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing SOTS header".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (n, m, q) = (u32_at(4), u32_at(8), u32_at(12));
        let expected = 16 + 8 * (m + 1);
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "ciphertext file has {} bytes, expected {expected} for M = {m}",
                bytes.len()
            )));
        }
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let values = (0..m).map(|i| f64_at(16 + 8 * i)).collect();
        let c = Self {
            values,
            n,
            m,
            q,
            sigma: f64_at(16 + 8 * m),
        };
        c.validate()?;
        Ok(c)
    }
}

/// Output of one encryption.
#[derive(Debug, Clone)]
pub struct Encryption {
    pub ciphertext: Ciphertext,
    /// The secret used; handed back for the legitimate recipient and tests.
    pub key: SensingKey,
    pub cost: KeyCost,
    /// Set once the source has emitted at least `2^floor(k/2)` symbols.
    pub period_warning: bool,
}

/// Encrypt `x` with a fresh sensing key drawn from `source`.
///
/// Noise `N(0, sigma^2)` comes from a ChaCha stream seeded by `noise_seed`,
/// or from the thread RNG when no seed is given.
pub fn encrypt(
    source: &mut KeystreamSource,
    params: &SystemParams,
    x: &[f64],
    noise_seed: Option<u64>,
) -> Result<Encryption> {
    if x.len() != params.n() {
        return Err(Error::Argument(format!("plaintext has length {}, expected {}", x.len(), params.n())));
    }
    let (key, cost) = build_sensing_key(source, params)?;
    let mut values = apply_phi(&key, params, x)?;
    if params.sigma() > 0.0 {
        let normal = Normal::new(0.0, params.sigma()).map_err(|e| Error::Config(e.to_string()))?;
        match noise_seed {
            Some(seed) => add_noise(&mut values, &normal, &mut ChaCha8Rng::seed_from_u64(seed)),
            None => add_noise(&mut values, &normal, &mut rand::rng()),
        }
    }
    let period_warning = source.emitted() >= source.minimum_period();
    Ok(Encryption {
        ciphertext: Ciphertext::new(values, params)?,
        key,
        cost,
        period_warning,
    })
}

fn add_noise<R: Rng + ?Sized>(values: &mut [f64], normal: &Normal<f64>, rng: &mut R) {
    for v in values {
        *v += normal.sample(rng);
    }
}

#[derive(Debug, Clone)]
pub struct RecoverySettings {
    /// Maximum support size.
    pub sparsity: usize,
    /// Stop once `||r|| <= tolerance * ||y||`.
    pub tolerance: f64,
    pub basis: Basis,
}

impl RecoverySettings {
    pub fn new(sparsity: usize, tolerance: f64, basis: Basis) -> Self {
        Self {
            sparsity,
            tolerance,
            basis,
        }
    }

    /// `K = M/4`, tolerance `1e-6`.
    pub fn with_defaults(params: &SystemParams, basis: Basis) -> Self {
        Self::new((params.m() / 4).max(1), 1e-6, basis)
    }

    fn validate(&self, params: &SystemParams) -> Result<()> {
        if self.sparsity == 0 || self.sparsity > params.m() {
            return Err(Error::Argument(format!(
                "sparsity K = {} must lie in 1..={}",
                self.sparsity,
                params.m()
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Argument(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        if self.basis.dimension() != params.n() {
            return Err(Error::Argument(format!(
                "basis dimension {} differs from N = {}",
                self.basis.dimension(),
                params.n()
            )));
        }
        Ok(())
    }
}

/// Full output of a pursuit run.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Selected coefficient indices in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first and after every accepted selection.
    pub residual_history: Vec<f64>,
    /// Indices rejected because their column was numerically dependent.
    pub skipped: Vec<usize>,
}

/// Decrypt and return only the plaintext estimate.
pub fn decrypt(key: &SensingKey, params: &SystemParams, y: &Ciphertext, settings: &RecoverySettings) -> Result<Vec<f64>> {
    Ok(decrypt_detailed(key, params, y, settings)?.x)
}

pub fn decrypt_detailed(
    key: &SensingKey,
    params: &SystemParams,
    y: &Ciphertext,
    settings: &RecoverySettings,
) -> Result<Recovery> {
    y.check_params(params)?;
    settings.validate(params)?;
    let basis = &settings.basis;
    let n = params.n();
    let column = |j: usize| -> Result<Vec<f64>> {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        basis.synthesize_in_place(&mut e);
        apply_phi(key, params, &e)
    };
    let correlate = |r: &[f64]| -> Result<Vec<f64>> {
        let mut c = apply_phi_adjoint(key, params, r)?;
        basis.analyze_in_place(&mut c);
        Ok(c)
    };
    let rec = omp(&y.values, n, settings.sparsity, settings.tolerance, column, correlate)?;
    let x = basis.synthesize(&rec.alpha)?;
    Ok(Recovery { x, ..rec })
}

/// Relative norm below which a new column counts as dependent on the selected ones.
const DEPENDENCE_TOL: f64 = 1e-10;

/// Orthogonal matching pursuit on an implicit `M x N` operator.
///
/// `column(j)` returns `A e_j` and `correlate(r)` returns `A^T r`.
pub fn omp(
    y: &[f64],
    n: usize,
    sparsity: usize,
    tolerance: f64,
    mut column: impl FnMut(usize) -> Result<Vec<f64>>,
    mut correlate: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Recovery> {
    let m = y.len();
    let y_norm = norm(y);
    let mut r = y.to_vec();
    let mut history = vec![y_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut skipped: Vec<usize> = Vec::new();
    let mut blocked = vec![false; n];
    // Orthonormal basis of the selected columns and the upper-triangular factor.
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut qty: Vec<f64> = Vec::new();

    while support.len() < sparsity.min(m) && norm(&r) > tolerance * y_norm && y_norm > 0.0 {
        let c = correlate(&r)?;
        // Ties go to the lowest index.
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in c.iter().enumerate() {
            if !blocked[j] && best.is_none_or(|(_, b)| v.abs() > b) {
                best = Some((j, v.abs()));
            }
        }
        let Some((j, _)) = best else { break };
        blocked[j] = true;
        let a = column(j)?;
        let a_norm = norm(&a);
        let mut v = a.clone();
        let mut coeffs = vec![0.0; q_cols.len()];
        for _ in 0..2 {
            for (qc, coeff) in q_cols.iter().zip(coeffs.iter_mut()) {
                let d = dot(qc, &v);
                *coeff += d;
                axpy(-d, qc, &mut v);
            }
        }
        let nu = norm(&v);
        if a_norm == 0.0 || nu <= DEPENDENCE_TOL * a_norm {
            skipped.push(j);
            if skipped.len() > m {
                break;
            }
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nu);
        coeffs.push(nu);
        let proj = dot(&v, &r);
        axpy(-proj, &v, &mut r);
        qty.push(dot(&v, y));
        q_cols.push(v);
        r_cols.push(coeffs);
        support.push(j);
        history.push(norm(&r));
    }

    // Back-substitution R z = Q^T y.
    let s = support.len();
    let mut z = vec![0.0; s];
    for i in (0..s).rev() {
        let mut acc = qty[i];
        for (l, zl) in z.iter().enumerate().skip(i + 1) {
            acc -= r_cols[l][i] * zl;
        }
        z[i] = acc / r_cols[i][i];
    }
    let mut alpha = vec![0.0; n];
    for (&j, &v) in support.iter().zip(&z) {
        alpha[j] = v;
    }
    Ok(Recovery {
        x: Vec::new(),
        alpha,
        support,
        residual_history: history,
        skipped,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `||x - x_hat||^2 / ||x||^2`; zero-energy originals compare absolutely.
pub fn relative_error(x: &[f64], x_hat: &[f64]) -> f64 {
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        err
    } else {
        err / energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    /// The reconstruction equals the original.
    Exact,
    Db(f64),
}

impl Psnr {
    /// Decibel value, `+inf` for an exact match.
    pub fn db(&self) -> f64 {
        match self {
            Psnr::Exact => f64::INFINITY,
            Psnr::Db(v) => *v,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Exact => f.write_str("exact"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

/// `10 log10(N peak^2 / ||x - x_hat||^2)`.
pub fn psnr(original: &[f64], decrypted: &[f64], peak: f64) -> Result<Psnr> {
    if original.len() != decrypted.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} vs {}",
            original.len(),
            decrypted.len()
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::Argument(format!("peak must be positive, got {peak}")));
    }
    let err: f64 = original.iter().zip(decrypted).map(|(a, b)| (a - b).powi(2)).sum();
    if err == 0.0 {
        return Ok(Psnr::Exact);
    }
    Ok(Psnr::Db(10.0 * (original.len() as f64 * peak * peak / err).log10()))
}

/// Plaintext-to-noise power ratio `||x||^2 / (M sigma^2)`.
pub fn pnr(x: &[f64], m: usize, sigma: f64) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / (m as f64 * sigma * sigma)
}

/// Noise level giving the target PNR for plaintext `x`.
pub fn sigma_for_pnr(x: &[f64], m: usize, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::Argument(format!("target PNR must be positive, got {target}")));
    }
    Ok((x.iter().map(|v| v * v).sum::<f64>() / (m as f64 * target)).sqrt())
}
