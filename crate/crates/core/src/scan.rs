//! Oracle, multiscale, adaptive and modified adaptive scans.
//!
//! Full scans enumerate every shape in `[h_lo, h_hi]^d` and, per shape, every
//! anchor, at a cost of `O((h_hi − h_lo + 1)^d n^d)` box sums. Per-shape
//! maxima are computed once ([`ShapeScan`]) and shared by all derived
//! statistics. Ties resolve to the lexicographically smallest `(shape, anchor)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::field::{GridField, Rect};
use crate::prefix::{PrefixSumTable, ShapeMax};
use crate::threshold::{alpha_from_tau, log_ratio_centering, ScanFamily, ShapeRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    Oracle,
    Multiscale,
    Adaptive,
    Modified,
    Epsilon,
}

impl ScanKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScanKind::Oracle => "oracle",
            ScanKind::Multiscale => "multiscale",
            ScanKind::Adaptive => "adaptive",
            ScanKind::Modified => "modified",
            ScanKind::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub shape: Vec<usize>,
    pub max_zscore: f64,
    pub v: f64,
    pub tau_hat: f64,
}

/// Extra bookkeeping reported by the ε-adaptive scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsDetails {
    pub eps: f64,
    pub a_lo: usize,
    pub a_hi: usize,
    pub f_max: usize,
    /// P-value restricted to covering rectangles whose shape lies in `[h_lo, h_hi]^d`.
    pub pvalue_in_range: f64,
    pub tau_hat_in_range: Option<f64>,
    pub best_in_range: bool,
    pub shapes_scanned: u64,
    pub shapes_out_of_range: u64,
    /// Pyramid additions, prefix-table cells and anchors visited.
    pub op_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub kind: ScanKind,
    pub stat: f64,
    pub tau_hat: f64,
    pub pvalue: f64,
    pub best_rect: Rect,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_shape: Option<Vec<ShapeRecord>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<EpsDetails>,
}

impl ScanOutcome {
    /// Rejection at level `alpha`: `pvalue <= alpha`.
    pub fn reject(&self, alpha: f64) -> bool {
        self.pvalue <= alpha
    }
}

/// The modified adaptive statistic has no closed-form P-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedOutcome {
    pub stat: f64,
    pub best_rect: Rect,
}

fn warn_outside_regime(range: &ShapeRange, n: usize) {
    if (range.h_lo as f64) <= (n as f64).ln() {
        log::warn!(
            "h_lo = {} <= ln(n) = {:.3}: outside the asymptotic regime of the critical values",
            range.h_lo,
            (n as f64).ln()
        );
    }
}

/// Per-shape maxima over `[h_lo, h_hi]^d` on a cubic grid.
#[derive(Debug, Clone)]
pub struct ShapeScan {
    n: usize,
    d: usize,
    range: ShapeRange,
    maxima: Vec<ShapeMax>,
}

impl ShapeScan {
    pub fn new(table: &PrefixSumTable, range: ShapeRange) -> Result<Self> {
        let n = cubic_side(table.dims())?;
        let d = table.ndim();
        range.validate_for(n)?;
        let maxima = table.shape_maxima(&range.axis_ranges(d))?;
        Ok(Self {
            n,
            d,
            range,
            maxima,
        })
    }

    pub fn maxima(&self) -> &[ShapeMax] {
        &self.maxima
    }

    pub fn range(&self) -> ShapeRange {
        self.range
    }

    pub fn multiscale(&self) -> Result<ScanOutcome> {
        let family = ScanFamily::multiscale(self.n, self.d, self.range)?;
        let params = family.centering(&[])?;
        let mut best: Option<(&ShapeMax, f64)> = None;
        for m in &self.maxima {
            let z = m.max_zscore();
            if best.is_none_or(|(_, bz)| z > bz) {
                best = Some((m, z));
            }
        }
        let (m, z) = best.ok_or(ScanError::EmptyInput("no shapes to scan"))?;
        let tau = params.tau_hat(z);
        Ok(ScanOutcome {
            kind: ScanKind::Multiscale,
            stat: z,
            tau_hat: tau,
            pvalue: alpha_from_tau(tau),
            best_rect: m.rect(),
            per_shape: None,
            epsilon: None,
        })
    }

    pub fn adaptive(&self) -> Result<ScanOutcome> {
        let family = ScanFamily::adaptive(self.n, self.d, self.range)?;
        let mut records = Vec::with_capacity(self.maxima.len());
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in self.maxima.iter().enumerate() {
            let params = family.centering(&m.shape)?;
            let z = m.max_zscore();
            let tau = params.tau_hat(z);
            records.push(ShapeRecord {
                shape: m.shape.clone(),
                max_zscore: z,
                v: params.v,
                tau_hat: tau,
            });
            if best.is_none_or(|(_, bt)| tau > bt) {
                best = Some((i, tau));
            }
        }
        let (i, tau) = best.ok_or(ScanError::EmptyInput("no shapes to scan"))?;
        Ok(ScanOutcome {
            kind: ScanKind::Adaptive,
            stat: records[i].max_zscore,
            tau_hat: tau,
            pvalue: alpha_from_tau(tau),
            best_rect: self.maxima[i].rect(),
            per_shape: Some(records),
            epsilon: None,
        })
    }

    /// `max_h (m_h − v_h) v_h` with `v_h = √(2 Σ_j ln(n/h_j))`.
    pub fn modified(&self) -> Result<ModifiedOutcome> {
        let mut best: Option<(&ShapeMax, f64)> = None;
        for m in &self.maxima {
            let v = log_ratio_centering(self.n, &m.shape);
            let s = (m.max_zscore() - v) * v;
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((m, s));
            }
        }
        let (m, s) = best.ok_or(ScanError::EmptyInput("no shapes to scan"))?;
        Ok(ModifiedOutcome {
            stat: s,
            best_rect: m.rect(),
        })
    }
}

pub(crate) fn cubic_side(dims: &[usize]) -> Result<usize> {
    let n = dims[0];
    if dims.iter().all(|&m| m == n) {
        Ok(n)
    } else {
        Err(ScanError::NotCubic(dims.to_vec()))
    }
}

/// Oracle scan at the known shape `h_star`.
pub fn oracle_scan(field: &GridField, h_star: &[usize]) -> Result<ScanOutcome> {
    oracle_scan_table(&PrefixSumTable::new(field), h_star)
}

pub fn oracle_scan_table(table: &PrefixSumTable, h_star: &[usize]) -> Result<ScanOutcome> {
    let n = cubic_side(table.dims())?;
    if h_star.len() != table.ndim() {
        return Err(ScanError::DimMismatch {
            expected: table.ndim(),
            got: h_star.len(),
        });
    }
    let family = ScanFamily::oracle(n, h_star)?;
    let params = family.centering(h_star)?;
    let m = table.shape_max(h_star)?;
    let z = m.max_zscore();
    let tau = params.tau_hat(z);
    Ok(ScanOutcome {
        kind: ScanKind::Oracle,
        stat: z,
        tau_hat: tau,
        pvalue: alpha_from_tau(tau),
        best_rect: m.rect(),
        per_shape: None,
        epsilon: None,
    })
}

pub fn multiscale_scan(field: &GridField, range: ShapeRange) -> Result<ScanOutcome> {
    let scan = ShapeScan::new(&PrefixSumTable::new(field), range)?;
    warn_outside_regime(&range, scan.n);
    scan.multiscale()
}

pub fn adaptive_scan(field: &GridField, range: ShapeRange) -> Result<ScanOutcome> {
    let scan = ShapeScan::new(&PrefixSumTable::new(field), range)?;
    warn_outside_regime(&range, scan.n);
    scan.adaptive()
}

pub fn modified_adaptive_stat(field: &GridField, range: ShapeRange) -> Result<ModifiedOutcome> {
    ShapeScan::new(&PrefixSumTable::new(field), range)?.modified()
}
