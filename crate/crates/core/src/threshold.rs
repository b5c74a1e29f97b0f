//! Closed-form critical values and P-values.
//!
//! Each test is centered at some `v > 0` and thresholds at
//!
//! ```text
//! u(τ) = v + (e·ln v + κ + τ) / v
//! ```
//!
//! with `(e, κ) = (2d − 1, −ln √(2π))` for the oracle scan and
//! `(4d − 1, −ln(4^d √(2π)))` for the multiscale and adaptive scans. The level
//! is tied to `τ` through the Gumbel link `α = 1 − exp(−e^{−τ})`. Since `u` is
//! affine and increasing in `τ`, an observed score `z` has the exact
//! equivalent offset `τ̂ = v(z − v) − e·ln v − κ` and P-value `α̂ = α(τ̂)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};

/// `τ = −ln(−ln(1 − α))`.
pub fn tau_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScanError::InvalidAlpha(alpha));
    }
    Ok(-(-(-alpha).ln_1p()).ln())
}

/// `α = 1 − exp(−e^{−τ})`, via `expm1` so small levels keep full precision.
pub fn alpha_from_tau(tau: f64) -> f64 {
    -(-(-tau).exp()).exp_m1()
}

/// Largest admissible `h̄` for side `n`: `⌊n / e⌋`.
pub fn max_upper_shape(n: usize) -> usize {
    (n as f64 / std::f64::consts::E).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Oracle,
    Multiscale,
    Adaptive,
}

/// Inclusive per-axis range `[h_lo, h_hi]` of rectangle side lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeRange {
    pub h_lo: usize,
    pub h_hi: usize,
}

impl ShapeRange {
    pub fn new(h_lo: usize, h_hi: usize) -> Result<Self> {
        if h_lo == 0 || h_lo > h_hi {
            return Err(ScanError::InvalidRange(format!(
                "need 1 <= h_lo <= h_hi, got [{h_lo}, {h_hi}]"
            )));
        }
        Ok(Self { h_lo, h_hi })
    }

    /// Checks `h_hi <= ⌊n/e⌋`.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        let cap = max_upper_shape(n);
        if self.h_hi > cap {
            return Err(ScanError::InvalidRange(format!(
                "h_hi = {} exceeds floor(n/e) = {cap} for n = {n}",
                self.h_hi
            )));
        }
        Ok(())
    }

    /// Only that the largest side fits the grid; covering geometry needs no more.
    pub fn check_fits(&self, n: usize) -> Result<()> {
        if self.h_hi > n {
            return Err(ScanError::InvalidRange(format!(
                "h_hi = {} exceeds the grid side n = {n}",
                self.h_hi
            )));
        }
        Ok(())
    }

    pub fn contains(&self, shape: &[usize]) -> bool {
        shape.iter().all(|&h| h >= self.h_lo && h <= self.h_hi)
    }

    pub fn count(&self) -> usize {
        self.h_hi - self.h_lo + 1
    }

    pub fn axis_ranges(&self, d: usize) -> Vec<(usize, usize)> {
        vec![(self.h_lo, self.h_hi); d]
    }
}

/// Centering `v`, log multiplier `e` and constant `κ` of one critical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalParams {
    pub v: f64,
    pub log_exponent: f64,
    pub kappa: f64,
}

pub fn oracle_kappa() -> f64 {
    -(2.0 * std::f64::consts::PI).sqrt().ln()
}

pub fn multiscale_kappa(d: usize) -> f64 {
    -(d as f64 * 4f64.ln() + (2.0 * std::f64::consts::PI).sqrt().ln())
}

impl CriticalParams {
    pub fn new(v: f64, log_exponent: f64, kappa: f64) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(ScanError::InvalidConfig(format!(
                "centering must be positive and finite, got {v}"
            )));
        }
        Ok(Self {
            v,
            log_exponent,
            kappa,
        })
    }

    /// `u(τ)`.
    pub fn critical_value(&self, tau: f64) -> f64 {
        self.v + (self.log_exponent * self.v.ln() + self.kappa + tau) / self.v
    }

    /// The `τ` at which `u(τ) = z`.
    pub fn tau_hat(&self, z: f64) -> f64 {
        self.v * (z - self.v) - self.log_exponent * self.v.ln() - self.kappa
    }

    pub fn pvalue(&self, z: f64) -> f64 {
        alpha_from_tau(self.tau_hat(z))
    }
}

pub fn critical_value(params: &CriticalParams, tau: f64) -> f64 {
    params.critical_value(tau)
}

pub fn tau_hat(params: &CriticalParams, z: f64) -> f64 {
    params.tau_hat(z)
}

pub fn pvalue(params: &CriticalParams, z: f64) -> f64 {
    params.pvalue(z)
}

/// `√(2 Σ_j ln(n / h_j))`, the oracle centering (also the modified adaptive one).
pub fn log_ratio_centering(n: usize, shape: &[usize]) -> f64 {
    let nf = n as f64;
    (2.0 * shape.iter().map(|&h| (nf / h as f64).ln()).sum::<f64>()).sqrt()
}

/// `√(2 Σ_j ln[(n/h_j)(1 + ln(h_j/h_lo))²])`, with `ln(h_j/h_lo)` floored at zero.
pub fn adaptive_centering(n: usize, h_lo: usize, shape: &[usize]) -> f64 {
    let nf = n as f64;
    let lo = h_lo as f64;
    let total: f64 = shape
        .iter()
        .map(|&h| {
            let h = h as f64;
            let growth = 1.0 + (h / lo).ln().max(0.0);
            (nf / h).ln() + 2.0 * growth.ln()
        })
        .sum();
    (2.0 * total).sqrt()
}

/// A test family: which scan, on which grid, over which shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFamily {
    pub kind: FamilyKind,
    pub n: usize,
    pub d: usize,
    pub range: Option<ShapeRange>,
    pub oracle_shape: Option<Vec<usize>>,
}

impl ScanFamily {
    pub fn oracle(n: usize, h_star: &[usize]) -> Result<Self> {
        if h_star.is_empty() {
            return Err(ScanError::InvalidConfig("oracle shape is empty".into()));
        }
        if h_star.iter().any(|&h| h == 0 || h > n) {
            return Err(ScanError::InvalidConfig(format!(
                "oracle shape {h_star:?} must lie in [1, {n}] per axis"
            )));
        }
        if h_star.iter().all(|&h| h == n) {
            return Err(ScanError::InvalidConfig(
                "oracle shape equal to the whole grid has zero centering".into(),
            ));
        }
        Ok(Self {
            kind: FamilyKind::Oracle,
            n,
            d: h_star.len(),
            range: None,
            oracle_shape: Some(h_star.to_vec()),
        })
    }

    pub fn multiscale(n: usize, d: usize, range: ShapeRange) -> Result<Self> {
        Self::ranged(FamilyKind::Multiscale, n, d, range)
    }

    pub fn adaptive(n: usize, d: usize, range: ShapeRange) -> Result<Self> {
        Self::ranged(FamilyKind::Adaptive, n, d, range)
    }

    fn ranged(kind: FamilyKind, n: usize, d: usize, range: ShapeRange) -> Result<Self> {
        if d == 0 {
            return Err(ScanError::InvalidConfig("dimension must be >= 1".into()));
        }
        range.validate_for(n)?;
        Ok(Self {
            kind,
            n,
            d,
            range: Some(range),
            oracle_shape: None,
        })
    }

    fn ranged_params(&self) -> ShapeRange {
        self.range.expect("ranged family carries a shape range")
    }

    /// Critical parameters for `shape`. The oracle uses `h*` and the multiscale
    /// test uses `h_lo`, whatever `shape` is; the adaptive test requires
    /// `shape ∈ [h_lo, h_hi]^d`.
    pub fn centering(&self, shape: &[usize]) -> Result<CriticalParams> {
        match self.kind {
            FamilyKind::Adaptive => {
                self.check_shape_dim(shape)?;
                let r = self.ranged_params();
                if !r.contains(shape) {
                    return Err(ScanError::ShapeOutOfRange {
                        shape: shape.to_vec(),
                        h_lo: r.h_lo,
                        h_hi: r.h_hi,
                    });
                }
                Ok(self.centering_clamped(shape)?.0)
            }
            _ => self.fixed_centering(),
        }
    }

    /// Adaptive critical parameters for any shape with sides in `[1, n]`,
    /// flooring `ln(h_j/h_lo)` at zero. Returns whether the shape was in range.
    pub fn centering_clamped(&self, shape: &[usize]) -> Result<(CriticalParams, bool)> {
        if self.kind != FamilyKind::Adaptive {
            return Ok((self.fixed_centering()?, true));
        }
        self.check_shape_dim(shape)?;
        if shape.iter().any(|&h| h == 0 || h > self.n) {
            return Err(ScanError::InvalidConfig(format!(
                "shape {shape:?} has a side outside [1, {}]",
                self.n
            )));
        }
        let r = self.ranged_params();
        let v = adaptive_centering(self.n, r.h_lo, shape);
        let params = CriticalParams::new(
            v,
            (4 * self.d - 1) as f64,
            multiscale_kappa(self.d),
        )?;
        Ok((params, r.contains(shape)))
    }

    fn fixed_centering(&self) -> Result<CriticalParams> {
        match self.kind {
            FamilyKind::Oracle => {
                let h = self.oracle_shape.as_ref().expect("oracle family carries h*");
                CriticalParams::new(
                    log_ratio_centering(self.n, h),
                    (2 * self.d - 1) as f64,
                    oracle_kappa(),
                )
            }
            FamilyKind::Multiscale => {
                let r = self.ranged_params();
                let v = (2.0 * self.d as f64 * (self.n as f64 / r.h_lo as f64).ln()).sqrt();
                CriticalParams::new(v, (4 * self.d - 1) as f64, multiscale_kappa(self.d))
            }
            FamilyKind::Adaptive => unreachable!("adaptive centering depends on shape"),
        }
    }

    fn check_shape_dim(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != self.d {
            return Err(ScanError::DimMismatch {
                expected: self.d,
                got: shape.len(),
            });
        }
        Ok(())
    }
}

pub fn centering(family: &ScanFamily, shape: &[usize]) -> Result<CriticalParams> {
    family.centering(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference values below were evaluated at 40 significant digits with mpmath.

    #[test]
    fn tau_reference_values() {
        let fixed = -(-1f64).exp_m1();
        assert!(tau_from_alpha(fixed).unwrap().abs() < 1e-15);
        assert!((tau_from_alpha(0.5).unwrap() - 0.366_512_920_581_664_3).abs() < 1e-14);
        assert!((tau_from_alpha(0.05).unwrap() - 2.970_195_249_042_164_5).abs() < 1e-13);
        assert!((tau_from_alpha(0.01).unwrap() - 4.600_149_226_776_58).abs() < 1e-12);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(tau_from_alpha(bad).is_err());
        }
    }

    #[test]
    fn tau_decreasing_in_alpha() {
        let taus: Vec<f64> = [0.001, 0.01, 0.05, 0.2, 0.5, 0.9, 0.999]
            .iter()
            .map(|&a| tau_from_alpha(a).unwrap())
            .collect();
        assert!(taus.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn alpha_at_large_tau_does_not_underflow() {
        let a = alpha_from_tau(30.0);
        let expect = 9.357_622_968_839_737e-14;
        assert!((a - expect).abs() / expect < 1e-12, "{a}");
        assert!(alpha_from_tau(40.0) > 0.0);
        assert_eq!(alpha_from_tau(0.0), -(-1f64).exp_m1());
    }

    #[test]
    fn alpha_saturates_for_very_negative_tau() {
        // 1 − exp(−e^{3.7}) is within half an ulp of 1
        assert_eq!(alpha_from_tau(-3.7), 1.0);
        assert!(alpha_from_tau(-2.5) < 1.0);
    }

    #[test]
    fn oracle_reference() {
        let fam = ScanFamily::oracle(256, &[32, 64]).unwrap();
        let p = fam.centering(&[1, 1]).unwrap();
        assert!((p.v - 2.632_768_847_734_159_3).abs() < 1e-13);
        assert_eq!(p.log_exponent, 3.0);
        assert!((p.kappa + 0.918_938_533_204_672_7).abs() < 1e-15);
        assert!((p.critical_value(0.0) - 3.386_792_402_488_082).abs() < 1e-12);
        assert!((p.tau_hat(4.0) - 1.614_433_859_923_285).abs() < 1e-12);
    }

    #[test]
    fn multiscale_reference() {
        let fam = ScanFamily::multiscale(256, 2, ShapeRange::new(6, 94).unwrap()).unwrap();
        let p = fam.centering(&[50, 50]).unwrap();
        assert!((p.v - 3.874_747_979_031_156).abs() < 1e-13);
        assert!((p.kappa + 3.691_527_255_444_454).abs() < 1e-14);
        assert!((p.critical_value(0.0) - 5.368_996_672_632_507).abs() < 1e-12);
    }

    #[test]
    fn adaptive_reference() {
        let fam = ScanFamily::adaptive(256, 2, ShapeRange::new(6, 94).unwrap()).unwrap();
        let p = fam.centering(&[24, 6]).unwrap();
        assert!((p.v - 3.964_851_816_087_711_5).abs() < 1e-13);
        assert_eq!(p.log_exponent, 7.0);
        assert!((p.critical_value(0.0) - 5.465_728_113_705_342).abs() < 1e-12);
    }

    #[test]
    fn adaptive_collapses_to_multiscale_at_lower_corner() {
        let r = ShapeRange::new(6, 94).unwrap();
        let a = ScanFamily::adaptive(256, 2, r).unwrap();
        let m = ScanFamily::multiscale(256, 2, r).unwrap();
        let pa = a.centering(&[6, 6]).unwrap();
        let pm = m.centering(&[6, 6]).unwrap();
        assert!((pa.v - pm.v).abs() < 1e-12);
        for z in [2.0, 4.5, 7.0] {
            assert!((pa.pvalue(z) - pm.pvalue(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_out_of_range_is_error_but_clamps_on_request() {
        let fam = ScanFamily::adaptive(256, 2, ShapeRange::new(6, 40).unwrap()).unwrap();
        assert!(matches!(
            fam.centering(&[4, 10]),
            Err(ScanError::ShapeOutOfRange { .. })
        ));
        let (p, in_range) = fam.centering_clamped(&[4, 10]).unwrap();
        assert!(!in_range);
        let expect = adaptive_centering(256, 6, &[4, 10]);
        assert_eq!(p.v, expect);
        // clamped axis contributes ln(n/h) only
        let manual = (2.0 * ((256f64 / 4.0).ln()
            + (256f64 / 10.0).ln()
            + 2.0 * (1.0 + (10f64 / 6.0).ln()).ln()))
        .sqrt();
        assert!((p.v - manual).abs() < 1e-14);
        let (_, ok) = fam.centering_clamped(&[6, 40]).unwrap();
        assert!(ok);
        assert!(fam.centering_clamped(&[6, 257]).is_err());
        assert!(fam.centering(&[6]).is_err());
    }

    #[test]
    fn range_validation() {
        assert!(ShapeRange::new(0, 3).is_err());
        assert!(ShapeRange::new(5, 4).is_err());
        assert_eq!(max_upper_shape(256), 94);
        assert_eq!(max_upper_shape(16), 5);
        assert!(ShapeRange::new(6, 94).unwrap().validate_for(256).is_ok());
        assert!(ShapeRange::new(6, 95).unwrap().validate_for(256).is_err());
        assert!(ScanFamily::multiscale(256, 2, ShapeRange::new(6, 95).unwrap()).is_err());
    }

    #[test]
    fn oracle_validation() {
        assert!(ScanFamily::oracle(16, &[0, 3]).is_err());
        assert!(ScanFamily::oracle(16, &[17, 3]).is_err());
        assert!(ScanFamily::oracle(16, &[16, 16]).is_err());
        assert!(ScanFamily::oracle(16, &[16, 15]).is_ok());
    }

    #[test]
    fn tau_hat_at_centering() {
        let p = ScanFamily::oracle(256, &[32, 64]).unwrap().centering(&[]).unwrap();
        assert!((p.tau_hat(p.v) - (-3.0 * p.v.ln() - p.kappa)).abs() < 1e-14);
    }

    #[test]
    fn pvalue_limits() {
        let p = ScanFamily::multiscale(128, 2, ShapeRange::new(4, 47).unwrap())
            .unwrap()
            .centering(&[])
            .unwrap();
        assert_eq!(p.pvalue(-50.0), 1.0);
        assert!(p.pvalue(50.0) < 1e-60);
        assert_eq!(p.pvalue(400.0), 0.0);
        let zs: Vec<f64> = (0..60).map(|i| i as f64 * 0.25).collect();
        let ps: Vec<f64> = zs.iter().map(|&z| p.pvalue(z)).collect();
        assert!(ps.windows(2).all(|w| w[1] <= w[0]));
        let z = p.critical_value(tau_from_alpha(0.05).unwrap());
        assert!((p.pvalue(z) - 0.05).abs() < 1e-10);
    }

    #[test]
    fn adaptive_centering_peaks_near_e_times_h_lo() {
        // one-axis derivative of ln[(n/h)(1 + ln(h/h_lo))²] changes sign at h = e·h_lo
        let (n, lo) = (4096usize, 20usize);
        let v1 = |h: usize| adaptive_centering(n, lo, &[h]);
        let peak = (std::f64::consts::E * lo as f64).round() as usize;
        assert!(v1(peak - 6) < v1(peak - 3));
        assert!(v1(peak - 3) < v1(peak));
        assert!(v1(peak + 6) < v1(peak + 3));
        assert!(v1(peak + 3) < v1(peak));
    }

    proptest! {
        #[test]
        fn alpha_tau_round_trip(tau in -2.5f64..30.0) {
            let a = alpha_from_tau(tau);
            prop_assert!(a > 0.0 && a < 1.0);
            prop_assert!((tau_from_alpha(a).unwrap() - tau).abs() <= 1e-10);
        }

        #[test]
        fn tau_alpha_round_trip(alpha in 1e-12f64..0.999) {
            let t = tau_from_alpha(alpha).unwrap();
            prop_assert!((alpha_from_tau(t) - alpha).abs() <= 1e-12);
        }

        #[test]
        fn critical_value_inverts(v in 1.5f64..10.0, e in 1.0f64..15.0, kappa in -6.0f64..0.0, tau in -10.0f64..30.0) {
            let p = CriticalParams::new(v, e, kappa).unwrap();
            let z = p.critical_value(tau);
            prop_assert!((p.tau_hat(z) - tau).abs() <= 1e-12);
            prop_assert!((p.critical_value(tau + 1.0) - z - 1.0 / v).abs() <= 1e-12 * (1.0 + z.abs()));
        }

        #[test]
        fn adaptive_dominates_log_ratio(h0 in 6usize..94, h1 in 6usize..94) {
            let a = adaptive_centering(256, 6, &[h0, h1]);
            prop_assert!(a >= log_ratio_centering(256, &[h0, h1]));
        }
    }
}
