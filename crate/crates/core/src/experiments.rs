//! Reproduction harnesses: phase transition, image pipeline,
//! indistinguishability game and bound tables.
//!
//! Every trial draws its key and plaintext from seeds derived from
//! `(base seed, grid index, trial index)`, so results do not depend on
//! scheduling, and the sparse and dense systems see the same plaintexts.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bounds::{
    p_d_bound, p_d_limit, p_key_up, p_suc_up, q_cpa, q_cpa_up, s_cpa_low, t_ref_up, CpaParams, IndistParams,
    SecurityReport,
};
use crate::codec::{decrypt_detailed, encrypt, psnr, relative_error, Ciphertext, Psnr, RecoverySettings};
use crate::error::{Error, Result};
use crate::keystream::{Key, KeystreamSource, LfsrSpec};
use crate::pgm::{visualize, GrayImage};
use crate::seed::derive_seed;
use crate::sensing::{apply_phi, build_sensing_key, SystemParams};
use crate::transforms::{c_statistic, Basis, BasisKind};

const KEY_SALT: u64 = 0x6b65_7973;
const PLAIN_SALT: u64 = 0x706c_6169;

/// Key length used by the harnesses.
pub const HARNESS_KEY_DEGREE: usize = 64;

/// Fresh keystream source for work item `(a, b)`.
pub fn harness_source(seed: u64, a: u64, b: u64, degree: usize) -> Result<KeystreamSource> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ KEY_SALT, a, b));
    KeystreamSource::new(LfsrSpec::builtin(degree)?, &Key::random(degree, &mut rng)?)
}

/// Coefficient vector with `k` standard Gaussian entries at uniform positions.
pub fn sparse_coefficients<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let mut alpha = vec![0.0; n];
    for j in sample(rng, n, k.min(n)).iter() {
        alpha[j] = StandardNormal.sample(rng);
    }
    alpha
}

#[derive(Debug, Clone)]
pub struct PhaseConfig {
    pub n: usize,
    /// Row weight; `None` selects the dense `q = N` baseline.
    pub q: Option<usize>,
    pub basis: BasisKind,
    /// Measurement counts are `M = step * N / rho_denominator`.
    pub rho_steps: Vec<usize>,
    pub rho_denominator: usize,
    pub kappa_step: f64,
    /// Grid `kappa = i * kappa_step` for `i = 0..=kappa_points`.
    pub kappa_points: usize,
    pub trials: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl PhaseConfig {
    /// `N = 256`, DCT, steps `2^-5` in `M/N` and `0.01` in `K/M`.
    pub fn desk(q: Option<usize>, trials: usize, seed: u64) -> Self {
        Self {
            n: 256,
            q,
            basis: BasisKind::Dct,
            rho_steps: (1..=32).collect(),
            rho_denominator: 32,
            kappa_step: 0.01,
            kappa_points: 100,
            trials,
            threshold: 0.99,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa_step > 0.0) || self.rho_denominator == 0 || self.trials == 0 {
            return Err(Error::Config("grid steps and trial count must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }

    fn m_for(&self, step: usize) -> usize {
        step * self.n / self.rho_denominator
    }

    fn params(&self, m: usize) -> Result<SystemParams> {
        match self.q {
            Some(q) => SystemParams::new(self.n, m, q, HARNESS_KEY_DEGREE.min(self.n), 0.0),
            None => SystemParams::dense(self.n, m, HARNESS_KEY_DEGREE.min(self.n), 0.0),
        }
    }
}

/// One grid point of the phase diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub rho: f64,
    pub kappa: f64,
    /// `None` marks a skipped point (`K < 1` for nonzero `kappa`, or invalid `M`).
    pub success_rate: Option<f64>,
}

impl PhaseRow {
    pub const CSV_HEADER: &'static str = "rho,kappa,success_rate";

    pub fn csv(&self) -> String {
        match self.success_rate {
            Some(r) => format!("{},{:.2},{r}", self.rho, self.kappa),
            None => format!("{},{:.2},skipped", self.rho, self.kappa),
        }
    }
}

/// Recovery counts for a grid point; stops early once `max_failures` is exceeded.
pub fn phase_point(cfg: &PhaseConfig, step: usize, ki: usize, max_failures: Option<usize>) -> Result<Option<(usize, usize)>> {
    let m = cfg.m_for(step);
    let Ok(params) = cfg.params(m) else { return Ok(None) };
    let kappa = ki as f64 * cfg.kappa_step;
    let k = (kappa * m as f64).round() as usize;
    if ki > 0 && (k < 1 || k > m) {
        return Ok(None);
    }
    let basis = Basis::new_1d(cfg.basis, cfg.n)?;
    let settings = RecoverySettings::new(k.max(1), 1e-9, basis.clone());
    // Seeds follow (M, K), so kappa values rounding to the same K agree.
    let point = (step * (cfg.n + 1) + k) as u64;
    let (mut ok, mut run) = (0, 0);
    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ PLAIN_SALT, point, trial as u64));
        let x = basis.synthesize(&sparse_coefficients(cfg.n, k, &mut rng))?;
        let mut source = harness_source(cfg.seed, point, trial as u64, HARNESS_KEY_DEGREE.min(cfg.n))?;
        let enc = encrypt(&mut source, &params, &x, None)?;
        let rec = decrypt_detailed(&enc.key, &params, &enc.ciphertext, &settings)?;
        run += 1;
        if relative_error(&x, &rec.x) < 1e-2 {
            ok += 1;
        }
        if max_failures.is_some_and(|f| run - ok > f) {
            break;
        }
    }
    Ok(Some((ok, run)))
}

/// Success rate at every `(rho, kappa)` grid point.
pub fn run_phase_transition(cfg: &PhaseConfig) -> Result<Vec<PhaseRow>> {
    cfg.validate()?;
    let points: Vec<(usize, usize)> = cfg
        .rho_steps
        .iter()
        .flat_map(|&s| (0..=cfg.kappa_points).map(move |ki| (s, ki)))
        .collect();
    points
        .par_iter()
        .map(|&(step, ki)| {
            let rate = phase_point(cfg, step, ki, None)?.map(|(ok, run)| ok as f64 / run as f64);
            Ok(PhaseRow {
                rho: step as f64 / cfg.rho_denominator as f64,
                kappa: ki as f64 * cfg.kappa_step,
                success_rate: rate,
            })
        })
        .collect()
}

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut out = String::from(PhaseRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

fn point_passes(cfg: &PhaseConfig, step: usize, ki: usize) -> Result<bool> {
    let allowed = ((1.0 - cfg.threshold) * cfg.trials as f64).floor() as usize;
    Ok(match phase_point(cfg, step, ki, Some(allowed))? {
        Some((ok, run)) => run == cfg.trials && ok as f64 >= cfg.threshold * cfg.trials as f64,
        None => ki > 0 && ((ki as f64 * cfg.kappa_step) * cfg.m_for(step) as f64) < 1.0,
    })
}

/// Highest `kappa` index reaching the success threshold at one `rho` step,
/// found by bisection under the assumption that success decays in `kappa`.
pub fn phase_frontier_index(cfg: &PhaseConfig, step: usize) -> Result<usize> {
    cfg.validate()?;
    let passes = |ki: usize| point_passes(cfg, step, ki);
    let (mut lo, mut hi) = (0usize, cfg.kappa_points + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Frontier index for each configured `rho` step.
pub fn phase_frontier(cfg: &PhaseConfig) -> Result<Vec<(usize, usize)>> {
    cfg.rho_steps
        .par_iter()
        .map(|&s| Ok((s, phase_frontier_index(cfg, s)?)))
        .collect()
}

/// Reference pass/fail cells around a frontier point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrontierCheck {
    pub step: usize,
    pub frontier: usize,
    pub reference_passes: usize,
    pub reference_fails: usize,
}

impl FrontierCheck {
    /// The reference boundary crosses the 3x3 block, so the two frontiers are
    /// at most one grid step apart.
    pub fn within_one_step(&self) -> bool {
        self.reference_passes > 0 && self.reference_fails > 0
    }
}

/// Locate the frontier of `cfg` at `step`, then classify the reference
/// system on the surrounding 3x3 block of grid cells.
pub fn frontier_agreement(cfg: &PhaseConfig, reference: &PhaseConfig, step: usize) -> Result<FrontierCheck> {
    let frontier = phase_frontier_index(cfg, step)?;
    let mut cells = vec![];
    for s in step.saturating_sub(1)..=step + 1 {
        if s == 0 || s > reference.rho_denominator {
            continue;
        }
        for ki in frontier.saturating_sub(1)..=(frontier + 1).min(reference.kappa_points) {
            cells.push((s, ki));
        }
    }
    let results: Vec<bool> = cells
        .par_iter()
        .map(|&(s, ki)| point_passes(reference, s, ki))
        .collect::<Result<_>>()?;
    let reference_passes = results.iter().filter(|&&p| p).count();
    Ok(FrontierCheck {
        step,
        frontier,
        reference_passes,
        reference_fails: results.len() - reference_passes,
    })
}

/// Deterministic piecewise-smooth test image: shaded background plus a few
/// smoothly lit shapes with sharp edges.
pub fn synthetic_image(side: usize) -> GrayImage {
    let mut pixels = Vec::with_capacity(side * side);
    let s = side as f64;
    for r in 0..side {
        for c in 0..side {
            let (y, x) = (r as f64 / s, c as f64 / s);
            let mut v = 60.0 + 90.0 * x + 30.0 * (3.0 * y).sin();
            let (dx, dy) = (x - 0.35, y - 0.4);
            if dx * dx + dy * dy < 0.04 {
                v = 200.0 - 150.0 * (dx * dx + dy * dy);
            }
            if (0.55..0.85).contains(&x) && (0.6..0.9).contains(&y) {
                v = 40.0 + 60.0 * (y - 0.6);
            }
            if (x - 0.7).abs() + (y - 0.25).abs() < 0.12 {
                v = 235.0 - 100.0 * (x - 0.7).abs();
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(side, side, 255, pixels).expect("valid synthetic image")
}

#[derive(Debug, Clone)]
pub struct ImageConfig {
    /// Measurement numerator: `M = rho_num * N / rho_den`.
    pub rho_num: usize,
    pub rho_den: usize,
    /// `None` selects the dense `q = N` baseline.
    pub q: Option<usize>,
    pub basis: BasisKind,
    /// Pursuit budget; defaults to `M/4`.
    pub sparsity: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ImageResult {
    pub params: SystemParams,
    pub ciphertext: Ciphertext,
    pub decrypted: GrayImage,
    /// Measurements rescaled to 8 bits, for display only.
    pub visualization: GrayImage,
    pub psnr: Psnr,
    pub relative_error: f64,
}

impl ImageResult {
    pub const CSV_HEADER: &'static str = "image,N,q,rho,basis,psnr_db";

    pub fn csv(&self, name: &str, basis: BasisKind) -> String {
        format!(
            "{name},{},{},{},{basis},{}",
            self.params.n(),
            self.params.q(),
            self.params.rho(),
            self.psnr
        )
    }
}

/// Encrypt and decrypt a square power-of-two image under a 2D basis.
pub fn run_image_pipeline(cfg: &ImageConfig, image: &GrayImage) -> Result<ImageResult> {
    let side = image.width;
    if image.height != side || !side.is_power_of_two() {
        return Err(Error::Argument(format!(
            "image must be square with power-of-two side, got {}x{}",
            image.width, image.height
        )));
    }
    let n = side * side;
    if cfg.rho_den == 0 || !(cfg.rho_num * n).is_multiple_of(cfg.rho_den) {
        return Err(Error::Config("M = rho N must be an integer".into()));
    }
    let m = cfg.rho_num * n / cfg.rho_den;
    let params = match cfg.q {
        Some(q) => SystemParams::new(n, m, q, HARNESS_KEY_DEGREE, 0.0)?,
        None => SystemParams::dense(n, m, HARNESS_KEY_DEGREE, 0.0)?,
    };
    let basis = Basis::new_2d(cfg.basis, side)?;
    let x = image.to_column_stacked();
    let mut source = harness_source(cfg.seed, 0, 0, HARNESS_KEY_DEGREE)?;
    let enc = encrypt(&mut source, &params, &x, None)?;
    let settings = RecoverySettings::new(cfg.sparsity.unwrap_or(m / 4).max(1), 1e-9, basis);
    let rec = decrypt_detailed(&enc.key, &params, &enc.ciphertext, &settings)?;
    let decrypted = GrayImage::from_column_stacked(&rec.x, side, side, image.maxval)?;
    let quantized = decrypted.to_column_stacked();
    let rows = m.div_ceil(side);
    let mut shown = enc.ciphertext.values.clone();
    shown.resize(rows * side, 0.0);
    Ok(ImageResult {
        psnr: psnr(&x, &quantized, image.maxval as f64)?,
        relative_error: relative_error(&x, &quantized),
        visualization: visualize(&shown, side, rows)?,
        decrypted,
        ciphertext: enc.ciphertext,
        params,
    })
}

#[derive(Debug, Clone)]
pub struct IndistConfig {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub basis: BasisKind,
    /// Nonzero coefficients of each chosen plaintext.
    pub sparsity: usize,
    pub gammas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Exchange the roles of the two plaintexts.
    pub swap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndistRow {
    pub gamma: f64,
    pub q: usize,
    pub empirical_pd: f64,
    pub bound_pd: f64,
    pub std_error: f64,
}

impl IndistRow {
    pub const CSV_HEADER: &'static str = "gamma,q,empirical_pd,bound_pd";

    pub fn csv(&self) -> String {
        format!("{},{},{:.6},{:.6}", self.gamma, self.q, self.empirical_pd, self.bound_pd)
    }

    /// `empirical <= bound + 3 sigma`.
    pub fn dominated(&self) -> bool {
        self.empirical_pd <= self.bound_pd + 3.0 * self.std_error
    }
}

/// Chosen plaintext pair: `x1` of unit energy, `x2` of energy `gamma`.
pub fn indist_plaintexts(cfg: &IndistConfig, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let basis = Basis::new_1d(cfg.basis, cfg.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ PLAIN_SALT, 0, 0));
    let mut draw = |energy: f64| -> Result<Vec<f64>> {
        let x = basis.synthesize(&sparse_coefficients(cfg.n, cfg.sparsity, &mut rng))?;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(x.iter().map(|v| v / norm * energy.sqrt()).collect())
    };
    let x1 = draw(1.0)?;
    let x2 = draw(gamma)?;
    Ok(if cfg.swap { (x2, x1) } else { (x1, x2) })
}

/// Indistinguishability game with the nearest-log-energy detector: guess the
/// plaintext whose energy is closest to `||y||^2` on a log scale, ties broken
/// by a fair coin.
pub fn run_indistinguishability(cfg: &IndistConfig) -> Result<Vec<IndistRow>> {
    if cfg.trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let params = SystemParams::new(cfg.n, cfg.m, cfg.q, HARNESS_KEY_DEGREE.min(cfg.n), 0.0)?;
    cfg.gammas
        .iter()
        .enumerate()
        .map(|(gi, &gamma)| {
            let (x1, x2) = indist_plaintexts(cfg, gamma)?;
            let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
            let targets = [energy(&x1).ln(), energy(&x2).ln()];
            let c_max = c_statistic(&x1)?.max(c_statistic(&x2)?);
            let bound = p_d_bound(&IndistParams::new(cfg.m, cfg.q, gamma, f64::INFINITY, c_max)?)?;
            let wins: usize = (0..cfg.trials)
                .into_par_iter()
                .map(|t| -> Result<usize> {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, gi as u64, t as u64));
                    let h = rng.random_range(0..2usize);
                    let x = if h == 0 { &x1 } else { &x2 };
                    let mut source = harness_source(cfg.seed, gi as u64, t as u64, HARNESS_KEY_DEGREE.min(cfg.n))?;
                    let (key, _) = build_sensing_key(&mut source, &params)?;
                    let y = apply_phi(&key, &params, x)?;
                    let e = energy(&y).ln();
                    let d = [(e - targets[0]).abs(), (e - targets[1]).abs()];
                    let guess = if d[0] < d[1] {
                        0
                    } else if d[1] < d[0] {
                        1
                    } else {
                        rng.random_range(0..2usize)
                    };
                    Ok((guess == h) as usize)
                })
                .sum::<Result<usize>>()?;
            let p = wins as f64 / cfg.trials as f64;
            Ok(IndistRow {
                gamma,
                q: cfg.q,
                empirical_pd: p,
                bound_pd: bound,
                std_error: (p * (1.0 - p) / cfg.trials as f64).sqrt().max(0.5 / cfg.trials as f64),
            })
        })
        .collect()
}

/// Inclusive arithmetic range; empty when `from > to`.
pub fn float_range(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Argument(format!("step must be positive, got {step}")));
    }
    let count = if from > to { 0 } else { ((to - from) / step + 1e-9).floor() as usize + 1 };
    Ok((0..count).map(|i| from + i as f64 * step).collect())
}

/// Swept variable of a bounds sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Q,
    K,
    L,
    Rho,
    Eps2,
    Eps3,
    Delta,
    Gamma,
    M,
    CMax,
    Pnr,
}

impl std::str::FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "q" => SweepVar::Q,
            "k" => SweepVar::K,
            "L" | "l" => SweepVar::L,
            "rho" => SweepVar::Rho,
            "eps2" => SweepVar::Eps2,
            "eps3" => SweepVar::Eps3,
            "delta" => SweepVar::Delta,
            "gamma" => SweepVar::Gamma,
            "M" | "m" => SweepVar::M,
            "cmax" => SweepVar::CMax,
            "pnr" => SweepVar::Pnr,
            other => return Err(Error::Argument(format!("unknown sweep variable {other:?}"))),
        })
    }
}

/// One `SecurityReport` CSV row per point of the swept variable.
pub fn bound_sweep(indist: IndistParams, cpa: CpaParams, var: SweepVar, from: f64, to: f64, step: f64) -> Result<String> {
    let mut out = String::from(SecurityReport::CSV_HEADER);
    out.push('\n');
    for v in float_range(from, to, step)? {
        let (mut i, mut c) = (indist, cpa);
        match var {
            SweepVar::Q => {
                c.q = v as usize;
                i.q = v as usize;
            }
            SweepVar::K => c.k = v as u32,
            SweepVar::L => c.l = v,
            SweepVar::Rho => c.rho = v,
            SweepVar::Eps2 => c.eps2 = v,
            SweepVar::Eps3 => c.eps3 = v,
            SweepVar::Delta => c.delta = v,
            SweepVar::Gamma => i.gamma = v,
            SweepVar::M => i.m = v as usize,
            SweepVar::CMax => i.c_max = v,
            SweepVar::Pnr => i.pnr_max = v,
        }
        out.push_str(&SecurityReport::evaluate(i, c).csv_row());
        out.push('\n');
    }
    Ok(out)
}

/// Sweep grids of the bound tables.
#[derive(Debug, Clone)]
pub struct BoundTables {
    pub indist_gammas: Vec<f64>,
    /// `(c_max, q)` curves of the indistinguishability table.
    pub indist_curves: Vec<(f64, usize)>,
    pub indist_m: usize,
    pub s_cpa_keys: Vec<u32>,
    pub s_cpa_q: Vec<usize>,
    pub q_cpa_eps2: Vec<f64>,
    pub q_cpa_l: Vec<f64>,
    pub success_q: Vec<usize>,
    pub success_l: Vec<f64>,
    pub refresh_q: Vec<usize>,
    pub refresh_eps3: Vec<f64>,
    pub k: u32,
    pub rho: f64,
    pub delta: f64,
}

impl Default for BoundTables {
    fn default() -> Self {
        Self {
            indist_gammas: (1..=100).map(|i| i as f64 / 100.0).collect(),
            indist_curves: vec![(4.0, 16), (4.0, 48), (4.0, 128), (4.0, 512), (684.4, 172), (684.4, 512)],
            indist_m: 256,
            s_cpa_keys: vec![128, 256],
            s_cpa_q: (1..=512).collect(),
            q_cpa_eps2: (1..=20).map(|i| 10f64.powf(-(i as f64) / 2.0)).collect(),
            q_cpa_l: vec![32.0, 64.0, 96.0, 128.0],
            success_q: (1..=9).map(|e| 1usize << e).collect(),
            success_l: vec![32.0, 64.0, 128.0],
            refresh_q: (1..=9).map(|e| 1usize << e).collect(),
            refresh_eps3: vec![1e-3, 1e-5, 1e-7],
            k: 256,
            rho: 0.5,
            delta: 0.5,
        }
    }
}

fn cell<T: std::fmt::Display>(r: Result<T>) -> String {
    r.map(|v| v.to_string()).unwrap_or_else(|_| "invalid".into())
}

impl BoundTables {
    fn cpa(&self, q: usize, l: f64, eps2: f64, eps3: f64) -> CpaParams {
        CpaParams {
            k: self.k,
            q,
            rho: self.rho,
            l,
            eps2,
            delta: self.delta,
            eps3,
        }
    }

    /// `(file name, CSV contents)` for each table.
    pub fn render(&self) -> Vec<(String, String)> {
        let mut indist_csv = String::from("gamma,c_max,q,bound_pd,limit_pd\n");
        for &(c_max, q) in &self.indist_curves {
            for &g in &self.indist_gammas {
                let p = IndistParams {
                    m: self.indist_m,
                    q,
                    gamma: g,
                    pnr_max: f64::INFINITY,
                    c_max,
                };
                writeln!(indist_csv, "{g},{c_max},{q},{},{}", cell(p_d_bound(&p)), cell(p_d_limit(&p))).unwrap();
            }
        }
        let mut s_cpa_csv = String::from("k,q,log2_s_cpa_low\n");
        for &k in &self.s_cpa_keys {
            for &q in &self.s_cpa_q {
                let p = CpaParams { k, ..self.cpa(q, 1.0, 1e-5, 1e-5) };
                writeln!(s_cpa_csv, "{k},{q},{}", cell(s_cpa_low(&p))).unwrap();
            }
        }
        let mut q_cpa_csv = String::from("L,eps2,q_cpa,log2_q_cpa,q_cpa_up,log2_q_cpa_up\n");
        for &l in &self.q_cpa_l {
            for &e in &self.q_cpa_eps2 {
                let p = self.cpa(1, l, e, 1e-5);
                let qc = q_cpa(&p);
                let up = q_cpa_up(&p);
                writeln!(
                    q_cpa_csv,
                    "{l},{e:e},{},{},{},{}",
                    cell(qc.clone()),
                    cell(qc.map(|v| (v as f64).log2())),
                    cell(up.clone()),
                    cell(up.map(f64::log2))
                )
                .unwrap();
            }
        }
        let mut success_csv = String::from("L,q,log2_q,p_suc_up,p_key_up\n");
        for &l in &self.success_l {
            for &q in &self.success_q {
                let p = self.cpa(q, l, 1e-5, 1e-5);
                writeln!(
                    success_csv,
                    "{l},{q},{},{},{}",
                    (q as f64).log2(),
                    cell(p_suc_up(&p).map(|v| format!("{v:e}"))),
                    cell(p_key_up(&p).map(|v| format!("{v:e}")))
                )
                .unwrap();
            }
        }
        let mut refresh_csv = String::from("eps3,q,log2_q,t_ref_up\n");
        for &e in &self.refresh_eps3 {
            for &q in &self.refresh_q {
                let p = self.cpa(q, 128.0, 1e-5, e);
                writeln!(refresh_csv, "{e:e},{q},{},{}", (q as f64).log2(), cell(t_ref_up(&p).map(|t| t.encryptions))).unwrap();
            }
        }
        vec![
            ("indist_bound.csv".into(), indist_csv),
            ("s_cpa_low.csv".into(), s_cpa_csv),
            ("q_cpa.csv".into(), q_cpa_csv),
            ("p_suc_key.csv".into(), success_csv),
            ("t_ref.csv".into(), refresh_csv),
        ]
    }
}

/// Write every bound table under `dir`.
pub fn emit_bound_tables(tables: &BoundTables, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    tables
        .render()
        .into_iter()
        .map(|(name, csv)| {
            let path = dir.join(name);
            std::fs::write(&path, csv)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_range_edges() {
        assert!(float_range(2.0, 1.0, 1.0).unwrap().is_empty());
        assert_eq!(float_range(1.0, 3.0, 1.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(float_range(0.1, 0.3, 0.1).unwrap().len(), 3);
        assert!(float_range(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn empty_sweep_has_header_only() {
        let i = IndistParams::new(256, 64, 0.5, f64::INFINITY, 4.0).unwrap();
        let c = CpaParams {
            k: 256,
            q: 64,
            rho: 0.5,
            l: 128.0,
            eps2: 1e-5,
            delta: 0.5,
            eps3: 1e-5,
        };
        let csv = bound_sweep(i, c, SweepVar::Q, 10.0, 5.0, 1.0).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let csv = bound_sweep(i, c, SweepVar::Q, 135.0, 138.0, 1.0).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!("zeta".parse::<SweepVar>().is_err());
    }

    #[test]
    fn bound_tables_hit_anchors() {
        let tables = BoundTables {
            q_cpa_eps2: vec![1e-5],
            q_cpa_l: vec![128.0],
            refresh_q: vec![256],
            refresh_eps3: vec![1e-5],
            s_cpa_q: vec![],
            ..BoundTables::default()
        };
        let out = tables.render();
        assert!(out[2].1.lines().nth(1).unwrap().starts_with("128,1e-5,137,"));
        let t_ref: f64 = out[4].1.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
        assert!(t_ref > 1e8);
        assert_eq!(out[1].1.lines().count(), 1);
    }

    #[test]
    fn phase_zero_kappa_and_markers() {
        let cfg = PhaseConfig {
            rho_steps: vec![16],
            kappa_points: 2,
            ..PhaseConfig::desk(Some(32), 5, 1)
        };
        assert_eq!(phase_point(&cfg, 16, 0, None).unwrap(), Some((5, 5)));
        let tiny = PhaseConfig { rho_steps: vec![1], ..cfg.clone() };
        let rows = run_phase_transition(&tiny).unwrap();
        assert_eq!(rows[0].success_rate, Some(1.0));
        assert_eq!(rows[1].success_rate, None);
        assert!(rows[1].csv().ends_with("skipped"));
    }

    #[test]
    fn synthetic_image_is_deterministic() {
        let a = synthetic_image(32);
        assert_eq!(a, synthetic_image(32));
        let distinct: std::collections::HashSet<u8> = a.pixels.iter().copied().collect();
        assert!(distinct.len() > 20);
    }

    #[test]
    fn image_pipeline_rejects_bad_shapes() {
        let img = GrayImage::new(6, 6, 255, vec![0; 36]).unwrap();
        let cfg = ImageConfig {
            rho_num: 1,
            rho_den: 2,
            q: Some(2),
            basis: BasisKind::Dct,
            sparsity: None,
            seed: 0,
        };
        assert!(run_image_pipeline(&cfg, &img).is_err());
        let img = GrayImage::new(8, 4, 255, vec![0; 32]).unwrap();
        assert!(run_image_pipeline(&cfg, &img).is_err());
    }
}
