//! Closed-form security bounds: indistinguishability under ciphertext-only
//! attack, keystream and key recovery under chosen-plaintext attack, and the
//! key refresh time.
//!
//! Logarithms inside `t`, `q_CPA` and `beta` are natural. Probabilities of
//! the form `(1 - x)^n` are evaluated as `exp(n * ln_1p(-x))`.

use std::f64::consts::{E, LN_2};

use crate::combinatorics::{binomial, log2_biguint};
use crate::error::{Error, Result};

/// Lower branch `W_{-1}(x)` of the Lambert W function on `[-1/e, 0)`.
pub fn lambert_w_neg1(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if !x.is_finite() || x >= 0.0 || x < branch * (1.0 + 1e-15) {
        return Err(Error::Argument(format!("W_-1 is defined on [-1/e, 0), got {x}")));
    }
    let gap = (1.0 + E * x).max(0.0);
    if gap < 1e-14 {
        // w = -1 - p + ... with p = sqrt(2 (1 + e x)); the linear term already
        // meets double precision this close to the branch point.
        return Ok(-1.0 - (2.0 * gap).sqrt());
    }
    let mut w = if x < -0.25 {
        let p = -(2.0 * gap).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w.min(-1.0))
}

/// Parameters of the indistinguishability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndistParams {
    pub m: usize,
    pub q: usize,
    /// Minimum plaintext energy ratio, in `(0, 1]`.
    pub gamma: f64,
    /// Maximum plaintext-to-noise power ratio; `f64::INFINITY` for noiseless.
    pub pnr_max: f64,
    pub c_max: f64,
}

impl IndistParams {
    pub fn new(m: usize, q: usize, gamma: f64, pnr_max: f64, c_max: f64) -> Result<Self> {
        let p = Self {
            m,
            q,
            gamma,
            pnr_max,
            c_max,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.q == 0 {
            return Err(Error::Argument("M and q must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Argument(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.pnr_max > 0.0) {
            return Err(Error::Argument(format!("PNR_max must be positive, got {}", self.pnr_max)));
        }
        if !(self.c_max >= 1.0 && self.c_max.is_finite()) {
            return Err(Error::Argument(format!("c_max must be >= 1, got {}", self.c_max)));
        }
        Ok(())
    }

    /// `(1 + gamma * PNR) / (1 + PNR)`, equal to `gamma` when noiseless.
    pub fn gamma_e(&self) -> f64 {
        if self.pnr_max.is_infinite() {
            self.gamma
        } else {
            (1.0 + self.gamma * self.pnr_max) / (1.0 + self.pnr_max)
        }
    }

    /// Worst-case concentration constant `c`.
    pub fn c(&self) -> f64 {
        let inv = if self.pnr_max.is_infinite() { 0.0 } else { 1.0 / self.pnr_max };
        let ratio = self.gamma / self.gamma_e();
        self.c_max / (1.0 + inv).powi(2) * (ratio * ratio + 1.0)
    }

    /// Smallest `q` for which `c / (8q) <= 1` at this `gamma` and `PNR_max`.
    pub fn required_q(&self) -> usize {
        (self.c() / 8.0).ceil().max(1.0) as usize
    }
}

/// `ln` of the product appearing in `1 - d_H^2`. `q = None` is the `q -> inf` limit.
fn ln_affinity(p: &IndistParams, q: Option<usize>) -> Result<f64> {
    p.validate()?;
    let ge = p.gamma_e();
    let u = ((ge - 1.0) / (ge + 1.0)).powi(2);
    let m = p.m as f64;
    let mut ln = m / 4.0 * (-u).ln_1p();
    if let Some(q) = q {
        let ratio = p.c() / (8.0 * q as f64);
        if ratio > 1.0 {
            return Err(Error::BoundInvalid {
                reason: format!(
                    "c/(8q) = {ratio:.4} > 1 at q = {q}; need q >= {} (q >= c_max/4 = {:.2} suffices for every gamma and PNR)",
                    p.required_q(),
                    p.c_max / 4.0
                ),
            });
        }
        ln += m * (-ratio * u).ln_1p();
    }
    Ok(ln)
}

/// Squared Hellinger distance between the ciphertext laws of two plaintexts.
pub fn hellinger_sq(p: &IndistParams) -> Result<f64> {
    Ok(-ln_affinity(p, Some(p.q))?.exp_m1())
}

/// `(d_TV,low, d_TV,up) = (d_H^2, d_H sqrt(2 - d_H^2))`.
pub fn tv_bounds(p: &IndistParams) -> Result<(f64, f64)> {
    let ln = ln_affinity(p, Some(p.q))?;
    Ok(tv_from_ln(ln))
}

fn tv_from_ln(ln: f64) -> (f64, f64) {
    let low = (-ln.exp_m1()).clamp(0.0, 1.0);
    // d_H^2 (2 - d_H^2) = 1 - (1 - d_H^2)^2.
    let up = (-(2.0 * ln).exp_m1()).clamp(0.0, 1.0).sqrt();
    (low, up.max(low))
}

/// Upper bound on the distinguisher's success probability.
pub fn p_d_bound(p: &IndistParams) -> Result<f64> {
    let (_, up) = tv_bounds(p)?;
    Ok(0.5 + 0.5 * up)
}

/// The same bound with the sparsity penalty removed (`q -> inf`).
pub fn p_d_limit(p: &IndistParams) -> Result<f64> {
    let (_, up) = tv_from_ln(ln_affinity(p, None)?);
    Ok(0.5 + 0.5 * up)
}

/// Parameters of the chosen-plaintext bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpaParams {
    pub k: u32,
    pub q: usize,
    /// Measurement rate `M / N`.
    pub rho: f64,
    /// Adversary computing power, log2 operations.
    pub l: f64,
    pub eps2: f64,
    pub delta: f64,
    pub eps3: f64,
}

impl CpaParams {
    pub fn tau(&self) -> u64 {
        (self.k as u64).div_ceil(self.q.max(1) as u64)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.q == 0 {
            return Err(Error::Argument("k and q must be positive".into()));
        }
        if !(self.eps2 > 0.0 && self.eps2 < 1.0) {
            return Err(Error::Argument(format!("eps2 must lie in (0, 1), got {}", self.eps2)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Argument(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::Argument(format!("L must be positive, got {}", self.l)));
        }
        Ok(())
    }

    /// `k >= L e ln 2`.
    pub fn check_condition(&self) -> Result<()> {
        let required = self.l * E * LN_2;
        if (self.k as f64) < required {
            return Err(Error::ConditionViolated { k: self.k, required });
        }
        Ok(())
    }

    /// `beta = -(k / (L ln 2)) W_{-1}(-L ln 2 / k)`, at least `e` under the condition.
    pub fn beta(&self) -> Result<f64> {
        self.validate()?;
        self.check_condition()?;
        let a = self.l * LN_2 / self.k as f64;
        Ok(-lambert_w_neg1(-a)? / a)
    }
}

/// `1 - (1 - eps)^(1/n)`, accurate for tiny `eps`.
fn per_item_failure(eps: f64, n: f64) -> f64 {
    -((-eps).ln_1p() / n).exp_m1()
}

/// Hoeffding radius `t` of the keystream-candidate bound.
pub fn hoeffding_radius(p: &CpaParams) -> Result<f64> {
    p.validate()?;
    let tail = per_item_failure(p.eps2, p.tau() as f64);
    Ok((2.0 * p.q as f64 * (2.0 / tail).ln()).sqrt())
}

/// `log2 S_CPA,low` for an explicit radius `t`.
pub fn s_cpa_low_at(k: u32, q: usize, t: f64) -> Result<f64> {
    if q == 0 || k == 0 {
        return Err(Error::Argument("k and q must be positive".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Argument(format!("t must be nonnegative, got {t}")));
    }
    if t > q as f64 {
        return Err(Error::BoundVacuous { t, q });
    }
    let tau = (k as u64).div_ceil(q as u64);
    let j = ((q as f64 - t) / 2.0).ceil() as u64;
    Ok(tau as f64 * log2_biguint(&binomial(q as u64, j)))
}

/// `log2 S_CPA,low`, the keystream-candidate lower bound holding w.p. `1 - eps2`.
pub fn s_cpa_low(p: &CpaParams) -> Result<f64> {
    let t = hoeffding_radius(p)?;
    s_cpa_low_at(p.k, p.q, t)
}

fn q_threshold_with(p: &CpaParams, beta: f64) -> f64 {
    let tail = per_item_failure(p.eps2, p.k as f64 * p.rho + 1.0);
    0.5 * (2.0 + 4.0 / (beta - 2.0)).powi(2) * (2.0 / tail).ln()
}

/// Real-valued right-hand side of the `q_CPA` condition.
pub fn q_cpa_threshold(p: &CpaParams) -> Result<f64> {
    let beta = p.beta()?;
    Ok(q_threshold_with(p, beta))
}

/// Smallest integer `q` meeting the `q_CPA` condition.
pub fn q_cpa(p: &CpaParams) -> Result<u64> {
    Ok(q_cpa_threshold(p)?.ceil() as u64)
}

/// `q_CPA` with `beta` replaced by its floor `e`.
pub fn q_cpa_up(p: &CpaParams) -> Result<f64> {
    p.validate()?;
    p.check_condition()?;
    Ok(q_threshold_with(p, E))
}

/// Upper bound on the keystream-recovery probability `Pr[S_CPA <= 2^L]`.
pub fn p_suc_up(p: &CpaParams) -> Result<f64> {
    let beta = p.beta()?;
    let per_row = 2.0 * (-(p.q as f64) / 2.0 * (1.0 - 2.0 / beta).powi(2)).exp();
    if per_row >= 1.0 {
        return Ok(1.0);
    }
    let v = -(p.tau() as f64 * (-per_row).ln_1p()).exp_m1();
    Ok(v.clamp(0.0, 1.0))
}

/// Upper bound on the key-recovery probability.
pub fn p_key_up(p: &CpaParams) -> Result<f64> {
    let k = p.k as f64;
    if !(p.delta >= 1.0 / k && p.delta <= 1.0) {
        return Err(Error::Argument(format!("delta must lie in [1/k, 1], got {}", p.delta)));
    }
    Ok(p_key_from(p.k, p.delta, p_suc_up(p)?))
}

/// `2^-k + (1 - 2^-k - delta + 1/k) * p_suc`.
pub fn p_key_from(k: u32, delta: f64, p_suc: f64) -> f64 {
    let floor = (-(k as f64)).exp2();
    let coeff = 1.0 - floor - delta + 1.0 / k as f64;
    (floor + coeff * p_suc).clamp(0.0, 1.0)
}

/// Key refresh time bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshTime {
    /// `ln(1 - eps3) / ln(1 - P_key,up)`.
    pub bound: f64,
    /// Largest admissible integer encryption count.
    pub encryptions: f64,
}

impl RefreshTime {
    /// Whether `bits_per_encryption * T_ref` stays below the `2^floor(k/2)` period floor.
    pub fn within_period(&self, bits_per_encryption: f64, k: u32) -> bool {
        bits_per_encryption * self.encryptions < ((k / 2) as f64).exp2()
    }
}

pub fn t_ref_from(eps3: f64, p_key: f64) -> Result<RefreshTime> {
    if !(eps3 > 0.0 && eps3 < 1.0) {
        return Err(Error::Argument(format!("eps3 must lie in (0, 1), got {eps3}")));
    }
    if !(p_key > 0.0 && p_key < 1.0) {
        return Err(Error::Argument(format!("P_key,up must lie in (0, 1), got {p_key}")));
    }
    let bound = (-eps3).ln_1p() / (-p_key).ln_1p();
    // Absorb rounding so that equal probabilities give exactly one encryption.
    let encryptions = (bound * (1.0 + 1e-12)).floor();
    Ok(RefreshTime { bound, encryptions })
}

pub fn t_ref_up(p: &CpaParams) -> Result<RefreshTime> {
    t_ref_from(p.eps3, p_key_up(p)?)
}

/// Every quantity evaluated at one parameter point; failures carry their reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub indist: IndistParams,
    pub cpa: CpaParams,
    pub d_h2: Result<f64>,
    pub tv: Result<(f64, f64)>,
    pub p_d: Result<f64>,
    pub log2_s_cpa_low: Result<f64>,
    pub q_cpa: Result<u64>,
    pub q_cpa_up: Result<f64>,
    pub p_suc_up: Result<f64>,
    pub p_key_up: Result<f64>,
    pub t_ref_up: Result<RefreshTime>,
}

impl SecurityReport {
    pub fn evaluate(indist: IndistParams, cpa: CpaParams) -> Self {
        Self {
            d_h2: hellinger_sq(&indist),
            tv: tv_bounds(&indist),
            p_d: p_d_bound(&indist),
            log2_s_cpa_low: s_cpa_low(&cpa),
            q_cpa: q_cpa(&cpa),
            q_cpa_up: q_cpa_up(&cpa),
            p_suc_up: p_suc_up(&cpa),
            p_key_up: p_key_up(&cpa),
            t_ref_up: t_ref_up(&cpa),
            indist,
            cpa,
        }
    }

    pub const CSV_HEADER: &'static str = "k,L,rho,eps2,eps3,delta,q,M,gamma,pnr_max,c_max,\
d_tv_low,d_tv_up,p_d_bound,d_h2,log2_s_cpa_low,q_cpa,q_cpa_up,p_suc_up,p_key_up,t_ref_up";

    pub fn csv_row(&self) -> String {
        fn cell<T>(r: &Result<T>, f: impl Fn(&T) -> String) -> String {
            r.as_ref().map(f).unwrap_or_else(|_| "invalid".to_string())
        }
        let g = |v: &f64| format!("{v:e}");
        let c = &self.cpa;
        let i = &self.indist;
        [
            c.k.to_string(),
            c.l.to_string(),
            c.rho.to_string(),
            c.eps2.to_string(),
            c.eps3.to_string(),
            c.delta.to_string(),
            c.q.to_string(),
            i.m.to_string(),
            i.gamma.to_string(),
            if i.pnr_max.is_infinite() { "inf".into() } else { i.pnr_max.to_string() },
            i.c_max.to_string(),
            cell(&self.tv, |t| g(&t.0)),
            cell(&self.tv, |t| g(&t.1)),
            cell(&self.p_d, g),
            cell(&self.d_h2, g),
            cell(&self.log2_s_cpa_low, |v| format!("{v:.6}")),
            cell(&self.q_cpa, |v| v.to_string()),
            cell(&self.q_cpa_up, |v| format!("{v:.6}")),
            cell(&self.p_suc_up, g),
            cell(&self.p_key_up, g),
            cell(&self.t_ref_up, |t| format!("{}", t.encryptions)),
        ]
        .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor_point(q: usize) -> CpaParams {
        CpaParams {
            k: 256,
            q,
            rho: 0.5,
            l: 128.0,
            eps2: 1e-5,
            delta: 0.5,
            eps3: 1e-5,
        }
    }

    /// Bisection on `w e^w = x` over `w < -1`, where `w e^w` is decreasing.
    fn bisect_w(x: f64) -> f64 {
        let (mut lo, mut hi) = (-1000.0f64, -1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_against_bisection() {
        assert!((lambert_w_neg1(-0.2).unwrap() - (-2.542_641_357_773_5)).abs() < 1e-10);
        for x in [-0.36787, -0.3466, -0.2, -0.1, -1e-3, -1e-8, -1e-100] {
            let w = lambert_w_neg1(x).unwrap();
            assert!((w - bisect_w(x)).abs() < 1e-9 * w.abs(), "{x}");
        }
        assert!((lambert_w_neg1(-0.3466).unwrap() - (-1.386_021)).abs() < 1e-5);
    }

    #[test]
    fn lambert_branch_and_domain() {
        assert!((lambert_w_neg1(-1.0 / E).unwrap() + 1.0).abs() < 1e-6);
        assert!(lambert_w_neg1(0.0).is_err());
        assert!(lambert_w_neg1(0.5).is_err());
        assert!(lambert_w_neg1(-0.4).is_err());
        assert!(lambert_w_neg1(f64::NAN).is_err());
    }

    #[test]
    fn anchors_at_k256() {
        let p = anchor_point(256);
        assert!((p.beta().unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(q_cpa(&p).unwrap(), 137);
        let up = q_cpa_up(&p).unwrap();
        assert!(up > 488.0 && up < 512.0);
        assert!(p_suc_up(&anchor_point(128)).unwrap() < 1e-6);
        let suc = p_suc_up(&p).unwrap();
        assert!((suc / 2.533e-14 - 1.0).abs() < 1e-3, "{suc}");
        let key = p_key_up(&p).unwrap();
        assert!((key / 1.276e-14 - 1.0).abs() < 1e-3, "{key}");
        assert!(t_ref_up(&p).unwrap().encryptions > 1e8);
    }

    #[test]
    fn condition_gate() {
        let mut p = anchor_point(128);
        p.l = 140.0;
        assert!(matches!(q_cpa(&p), Err(Error::ConditionViolated { k: 256, .. })));
        assert!(matches!(p_suc_up(&p), Err(Error::ConditionViolated { .. })));
        assert_eq!(Error::ConditionViolated { k: 1, required: 2.0 }.exit_code(), 3);
    }

    #[test]
    fn threshold_decreases_toward_eps2_limit() {
        let limit = 0.5 * (2.0 + 4.0 / (E - 2.0)).powi(2) * LN_2;
        let mut prev = f64::INFINITY;
        for eps2 in [1e-5, 0.1, 0.5, 0.9, 1.0 - 1e-6, 1.0 - 1e-15] {
            let v = q_cpa_up(&CpaParams { eps2, ..anchor_point(128) }).unwrap();
            assert!(v < prev && v > limit);
            prev = v;
        }
        // With kρ + 1 = 2 the tail can be driven close to one inside double range.
        let p = CpaParams { k: 2, rho: 0.5, l: 1.0, eps2: 1.0 - f64::EPSILON, ..anchor_point(1) };
        assert!((q_cpa_up(&p).unwrap() - limit) / limit < 1e-7);
    }

    #[test]
    fn s_cpa_sawtooth() {
        let v = |q| s_cpa_low(&anchor_point(q)).unwrap();
        assert!(v(200) > 256.0);
        assert!(v(255) > 256.0);
        assert!(v(256) < 256.0);
        assert!(v(256) < v(255));
        assert!(v(107) < 256.0 && v(108) > 256.0);
        assert!(v(128) < v(127));
    }

    #[test]
    fn s_cpa_explicit_radius() {
        assert!((s_cpa_low_at(4, 2, 0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(s_cpa_low_at(4, 2, 3.0), Err(Error::BoundVacuous { .. })));
    }

    #[test]
    fn t_ref_expansion() {
        let t = t_ref_from(1e-3, 1e-3).unwrap();
        assert_eq!(t.encryptions, 1.0);
        let t = t_ref_from(1e-6, 1e-9).unwrap();
        assert!((t.bound / 1e3 - 1.0).abs() < 1e-2);
        assert!(t_ref_from(0.0, 0.5).is_err());
        assert!(t_ref_from(0.5, 1.0).is_err());
        assert!(!t.within_period(1e6, 16));
    }

    #[test]
    fn p_key_floor_and_delta() {
        assert_eq!(p_key_from(10, 0.5, 0.0), (-10.0f64).exp2());
        let mut p = anchor_point(256);
        p.delta = 0.001;
        assert!(p_key_up(&p).is_err());
    }

    #[test]
    fn indistinguishability_basics() {
        let p = IndistParams::new(256, 48, 1.0, f64::INFINITY, 4.0).unwrap();
        assert_eq!(hellinger_sq(&p).unwrap(), 0.0);
        assert_eq!(tv_bounds(&p).unwrap(), (0.0, 0.0));
        assert_eq!(p_d_bound(&p).unwrap(), 0.5);
        let tiny = IndistParams::new(8, 1000, 1e-12, f64::INFINITY, 1.0).unwrap();
        assert!(hellinger_sq(&tiny).unwrap() > 0.999);
    }

    #[test]
    fn validity_gate() {
        let p = IndistParams::new(256, 1, 0.5, f64::INFINITY, 5.0).unwrap();
        assert!(matches!(hellinger_sq(&p), Err(Error::BoundInvalid { .. })));
        assert!(hellinger_sq(&IndistParams { q: 2, ..p }).is_ok());
        let d4 = IndistParams::new(256, 171, 0.5, f64::INFINITY, 684.4).unwrap();
        assert!(p_d_bound(&d4).is_err());
        assert!(p_d_bound(&IndistParams { q: 172, ..d4 }).is_ok());
        assert!(IndistParams::new(256, 1, 0.0, 1.0, 4.0).is_err());
    }

    #[test]
    fn hellinger_against_direct_formula() {
        let p = IndistParams::new(64, 48, 0.7, 10.0, 4.0).unwrap();
        let ge = (1.0 + 0.7 * 10.0) / 11.0;
        let c = 4.0 / (1.0f64 + 0.1).powi(2) * ((0.7 / ge) * (0.7 / ge) + 1.0);
        let a = (4.0 * ge / (ge + 1.0).powi(2)).powf(16.0);
        let b = (1.0 - c / (8.0 * 48.0) * ((ge - 1.0) / (ge + 1.0)).powi(2)).powi(64);
        assert!((hellinger_sq(&p).unwrap() - (1.0 - a * b)).abs() < 1e-13);
    }

    #[test]
    fn report_marks_failures() {
        let indist = IndistParams::new(256, 1, 0.5, f64::INFINITY, 4.0).unwrap();
        let report = SecurityReport::evaluate(indist, anchor_point(1));
        let row = report.csv_row();
        assert!(row.contains("invalid"));
        assert_eq!(
            row.split(',').count(),
            SecurityReport::CSV_HEADER.split(',').count()
        );
    }
}
