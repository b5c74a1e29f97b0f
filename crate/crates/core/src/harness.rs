//! Monte Carlo experiments: empirical size and power, ROC and QQ data,
//! simulation and permutation calibration, and ε-scan timing.
//!
//! Replicate `i` draws its null field from `derive_seed(seed, i, NULL_FIELD)`,
//! its alternative noise from `derive_seed(seed, i, ALT_FIELD)` and its signal
//! anchor from `derive_seed(seed, i, ANCHOR)`. Every scanner in a replicate sees
//! the same field, and results land in slots indexed by replicate, so runs are
//! reproducible regardless of thread count or scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eps::{epsilon_adaptive_scan, CoveringParams};
use crate::error::{Result, ScanError};
use crate::field::{inject_signal, white_noise, GridField, Rect, SignalSpec};
use crate::prefix::PrefixSumTable;
use crate::rng::{derive_seed, seeded, stream};
use crate::scan::{oracle_scan_table, ShapeScan};
use crate::threshold::{ScanFamily, ShapeRange};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScannerSpec {
    Oracle,
    Multiscale,
    Adaptive,
    Modified,
    Epsilon { eps: f64 },
}

impl ScannerSpec {
    pub fn has_pvalue(&self) -> bool {
        !matches!(self, ScannerSpec::Modified)
    }

    fn needs_shape_scan(&self) -> bool {
        matches!(
            self,
            ScannerSpec::Multiscale | ScannerSpec::Adaptive | ScannerSpec::Modified
        )
    }
}

impl fmt::Display for ScannerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScannerSpec::Oracle => write!(f, "oracle"),
            ScannerSpec::Multiscale => write!(f, "multiscale"),
            ScannerSpec::Adaptive => write!(f, "adaptive"),
            ScannerSpec::Modified => write!(f, "modified"),
            ScannerSpec::Epsilon { eps } => write!(f, "eps:{eps}"),
        }
    }
}

impl FromStr for ScannerSpec {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "oracle" => Ok(ScannerSpec::Oracle),
            "multi" | "multiscale" => Ok(ScannerSpec::Multiscale),
            "adaptive" => Ok(ScannerSpec::Adaptive),
            "modified" => Ok(ScannerSpec::Modified),
            _ => {
                let rest = s
                    .strip_prefix("eps:")
                    .or_else(|| s.strip_prefix("epsilon:"))
                    .ok_or_else(|| ScanError::InvalidConfig(format!("unknown scanner '{s}'")))?;
                let eps: f64 = rest
                    .parse()
                    .map_err(|_| ScanError::InvalidConfig(format!("bad epsilon in '{s}'")))?;
                Ok(ScannerSpec::Epsilon { eps })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub h_lo: usize,
    pub h_hi: usize,
    pub mu: f64,
    /// Shape of the planted rectangle; also the oracle's `h*`.
    pub signal_shape: Option<Vec<usize>>,
    pub reps: usize,
    pub seed: u64,
    pub scanners: Vec<ScannerSpec>,
    pub alpha_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn range(&self) -> Result<ShapeRange> {
        ShapeRange::new(self.h_lo, self.h_hi)
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.n; self.d]
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(ScanError::InvalidConfig("reps must be >= 1".into()));
        }
        if self.n == 0 || self.d == 0 {
            return Err(ScanError::InvalidConfig("n and d must be >= 1".into()));
        }
        if self.scanners.is_empty() {
            return Err(ScanError::InvalidConfig("no scanners selected".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(ScanError::InvalidConfig(format!("level {a} outside (0, 1]")));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(ScanError::InvalidConfig(format!("mu must be >= 0, got {}", self.mu)));
        }
        let range = self.range()?;
        if self.scanners.iter().any(|s| s.needs_shape_scan() || matches!(s, ScannerSpec::Epsilon { .. })) {
            range.validate_for(self.n)?;
        }
        if let Some(shape) = &self.signal_shape {
            if shape.len() != self.d {
                return Err(ScanError::DimMismatch {
                    expected: self.d,
                    got: shape.len(),
                });
            }
            if shape.iter().any(|&h| h == 0 || h > self.n) {
                return Err(ScanError::InvalidConfig(format!(
                    "signal shape {shape:?} does not fit an n = {} grid",
                    self.n
                )));
            }
        }
        for s in &self.scanners {
            match s {
                ScannerSpec::Oracle => {
                    let shape = self.signal_shape.as_ref().ok_or_else(|| {
                        ScanError::InvalidConfig("the oracle scanner needs signal_shape".into())
                    })?;
                    ScanFamily::oracle(self.n, shape)?;
                }
                ScannerSpec::Epsilon { eps } => {
                    if !self.n.is_power_of_two() {
                        return Err(ScanError::NotPowerOfTwo(self.n));
                    }
                    CoveringParams::new(*eps, self.d, range)?.a_top(self.n)?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One scanner's result on one field. `stat` orders fields by evidence
/// (`τ̂` for scanners with P-values, the raw statistic for the modified scan).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateScore {
    pub stat: f64,
    pub pvalue: Option<f64>,
}

/// Scores `field` with every scanner in `cfg`.
pub fn score_field(field: &GridField, cfg: &ExperimentConfig) -> Result<Vec<ReplicateScore>> {
    let table = PrefixSumTable::new(field);
    let range = cfg.range()?;
    let shape_scan = if cfg.scanners.iter().any(|s| s.needs_shape_scan()) {
        Some(ShapeScan::new(&table, range)?)
    } else {
        None
    };
    cfg.scanners
        .iter()
        .map(|s| {
            let from = |o: crate::scan::ScanOutcome| ReplicateScore {
                stat: o.tau_hat,
                pvalue: Some(o.pvalue),
            };
            Ok(match s {
                ScannerSpec::Oracle => {
                    let h = cfg.signal_shape.as_ref().expect("validated");
                    from(oracle_scan_table(&table, h)?)
                }
                ScannerSpec::Multiscale => from(shape_scan.as_ref().expect("built").multiscale()?),
                ScannerSpec::Adaptive => from(shape_scan.as_ref().expect("built").adaptive()?),
                ScannerSpec::Modified => ReplicateScore {
                    stat: shape_scan.as_ref().expect("built").modified()?.stat,
                    pvalue: None,
                },
                ScannerSpec::Epsilon { eps } => {
                    let o = epsilon_adaptive_scan(field, range, *eps)?;
                    ReplicateScore {
                        stat: o.tau_hat,
                        pvalue: Some(o.pvalue),
                    }
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub stats: Vec<f64>,
    pub pvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRate {
    pub alpha: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Reject when the statistic is `>= threshold`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerResult {
    pub scanner: ScannerSpec,
    pub null: Option<Samples>,
    pub alt: Option<Samples>,
    pub size: Vec<LevelRate>,
    pub power: Vec<LevelRate>,
    pub roc: Vec<RocPoint>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub config: ExperimentConfig,
    pub scanners: Vec<ScannerResult>,
}

impl MCResult {
    pub fn scanner(&self, spec: &ScannerSpec) -> Option<&ScannerResult> {
        self.scanners.iter().find(|s| &s.scanner == spec)
    }

    /// Joins a null run and an alternative run of the same scanners and
    /// fills in the ROC curves.
    pub fn combine(null: MCResult, alt: MCResult) -> Result<MCResult> {
        if null.config.scanners != alt.config.scanners {
            return Err(ScanError::InvalidConfig(
                "null and alternative runs use different scanners".into(),
            ));
        }
        let scanners = null
            .scanners
            .into_iter()
            .zip(alt.scanners)
            .map(|(n, a)| {
                let mut out = ScannerResult {
                    scanner: n.scanner,
                    null: n.null,
                    alt: a.alt,
                    size: n.size,
                    power: a.power,
                    roc: Vec::new(),
                    auc: None,
                };
                if let (Some(ns), Some(as_)) = (&out.null, &out.alt) {
                    out.roc = roc_curve(&ns.stats, &as_.stats)?;
                    out.auc = Some(auc(&ns.stats, &as_.stats)?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(MCResult {
            config: alt.config,
            scanners,
        })
    }
}

fn rejection_rates(pvalues: &[f64], alphas: &[f64]) -> Vec<LevelRate> {
    alphas
        .iter()
        .map(|&alpha| LevelRate {
            alpha,
            rate: empirical_rate(pvalues, alpha),
        })
        .collect()
}

/// Fraction of P-values `<= alpha`.
pub fn empirical_rate(pvalues: &[f64], alpha: f64) -> f64 {
    pvalues.iter().filter(|&&p| p <= alpha).count() as f64 / pvalues.len() as f64
}

fn collect_samples(per_rep: &[Vec<ReplicateScore>], k: usize) -> Samples {
    let stats = per_rep.iter().map(|r| r[k].stat).collect();
    let pvalues = per_rep
        .iter()
        .map(|r| r[k].pvalue)
        .collect::<Option<Vec<f64>>>();
    Samples { stats, pvalues }
}

fn run_fields(
    cfg: &ExperimentConfig,
    make: impl Fn(usize) -> Result<GridField> + Sync,
) -> Result<Vec<Vec<ReplicateScore>>> {
    (0..cfg.reps)
        .into_par_iter()
        .map(|i| score_field(&make(i)?, cfg))
        .collect()
}

pub fn null_field(cfg: &ExperimentConfig, rep: usize) -> Result<GridField> {
    white_noise(&cfg.dims(), derive_seed(cfg.seed, rep as u64, stream::NULL_FIELD))
}

/// Alternative field for replicate `rep` and the planted rectangle.
pub fn alt_field(cfg: &ExperimentConfig, rep: usize) -> Result<(GridField, Rect)> {
    let shape = cfg
        .signal_shape
        .as_ref()
        .ok_or_else(|| ScanError::InvalidConfig("signal_shape required under H1".into()))?;
    let noise = white_noise(&cfg.dims(), derive_seed(cfg.seed, rep as u64, stream::ALT_FIELD))?;
    let mut rng = seeded(derive_seed(cfg.seed, rep as u64, stream::ANCHOR));
    let rect = Rect::random_anchor(&mut rng, &cfg.dims(), shape)?;
    let f = inject_signal(&noise, &SignalSpec::new(rect.clone(), cfg.mu)?)?;
    Ok((f, rect))
}

fn warn_regime(cfg: &ExperimentConfig) {
    if cfg.scanners.iter().any(|s| s.has_pvalue() && !matches!(s, ScannerSpec::Oracle))
        && (cfg.h_lo as f64) <= (cfg.n as f64).ln()
    {
        log::warn!(
            "h_lo = {} <= ln(n) = {:.3}: outside the asymptotic regime of the critical values",
            cfg.h_lo,
            (cfg.n as f64).ln()
        );
    }
}

/// `reps` null fields; empirical size at each level in `alpha_grid`.
pub fn run_null(cfg: &ExperimentConfig) -> Result<MCResult> {
    cfg.validate()?;
    warn_regime(cfg);
    let per_rep = run_fields(cfg, |i| null_field(cfg, i))?;
    let scanners = cfg
        .scanners
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let samples = collect_samples(&per_rep, k);
            let size = samples
                .pvalues
                .as_deref()
                .map(|p| rejection_rates(p, &cfg.alpha_grid))
                .unwrap_or_default();
            ScannerResult {
                scanner: s,
                null: Some(samples),
                alt: None,
                size,
                power: Vec::new(),
                roc: Vec::new(),
                auc: None,
            }
        })
        .collect();
    Ok(MCResult {
        config: cfg.clone(),
        scanners,
    })
}

/// `reps` alternative fields with a uniformly placed rectangle of
/// `signal_shape` and signal size `mu`; empirical power at each level.
pub fn run_power(cfg: &ExperimentConfig) -> Result<MCResult> {
    cfg.validate()?;
    if cfg.signal_shape.is_none() {
        return Err(ScanError::InvalidConfig("signal_shape required under H1".into()));
    }
    warn_regime(cfg);
    let per_rep = run_fields(cfg, |i| alt_field(cfg, i).map(|(f, _)| f))?;
    let scanners = cfg
        .scanners
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let samples = collect_samples(&per_rep, k);
            let power = samples
                .pvalues
                .as_deref()
                .map(|p| rejection_rates(p, &cfg.alpha_grid))
                .unwrap_or_default();
            ScannerResult {
                scanner: s,
                null: None,
                alt: Some(samples),
                size: Vec::new(),
                power,
                roc: Vec::new(),
                auc: None,
            }
        })
        .collect();
    Ok(MCResult {
        config: cfg.clone(),
        scanners,
    })
}

/// Null and alternative runs on the same config, with ROC curves.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MCResult> {
    MCResult::combine(run_null(cfg)?, run_power(cfg)?)
}

/// ROC curve from sweeping the rejection threshold over all pooled values,
/// from `(0, 0)` (threshold `+∞`) to `(1, 1)`.
pub fn roc_curve(null_stats: &[f64], alt_stats: &[f64]) -> Result<Vec<RocPoint>> {
    if null_stats.is_empty() {
        return Err(ScanError::EmptyInput("null statistics"));
    }
    if alt_stats.is_empty() {
        return Err(ScanError::EmptyInput("alternative statistics"));
    }
    let mut null = null_stats.to_vec();
    let mut alt = alt_stats.to_vec();
    null.sort_by(f64::total_cmp);
    alt.sort_by(f64::total_cmp);
    let mut pooled: Vec<f64> = null.iter().chain(&alt).copied().collect();
    pooled.sort_by(|a, b| b.total_cmp(a));
    pooled.dedup();

    let (m, k) = (null.len() as f64, alt.len() as f64);
    let at_least = |sorted: &[f64], c: f64| sorted.len() - sorted.partition_point(|&x| x < c);
    let mut curve = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    for c in pooled {
        curve.push(RocPoint {
            threshold: c,
            fpr: at_least(&null, c) as f64 / m,
            tpr: at_least(&alt, c) as f64 / k,
        });
    }
    Ok(curve)
}

/// Area under the ROC curve as the Mann–Whitney probability
/// `P(alt > null) + ½ P(alt = null)`, computed from exact counts.
pub fn auc(null_stats: &[f64], alt_stats: &[f64]) -> Result<f64> {
    if null_stats.is_empty() || alt_stats.is_empty() {
        return Err(ScanError::EmptyInput("statistics"));
    }
    let mut null = null_stats.to_vec();
    null.sort_by(f64::total_cmp);
    let mut twice_wins: u128 = 0;
    for &a in alt_stats {
        let less = null.partition_point(|&x| x < a);
        let le = null.partition_point(|&x| x <= a);
        twice_wins += (2 * less + (le - less)) as u128;
    }
    Ok(twice_wins as f64 / (2 * null.len() * alt_stats.len()) as f64)
}

/// Trapezoidal area under a ROC point list.
pub fn auc_from_curve(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub u_quantile: f64,
    pub p_quantile: f64,
}

/// Sorted P-values against the uniform plotting positions `(i − ½)/m`.
pub fn qq_pvalues(pvalues: &[f64]) -> Result<Vec<QqPoint>> {
    if pvalues.is_empty() {
        return Err(ScanError::EmptyInput("P-values"));
    }
    let mut p = pvalues.to_vec();
    p.sort_by(f64::total_cmp);
    let m = p.len() as f64;
    Ok(p.into_iter()
        .enumerate()
        .map(|(i, q)| QqPoint {
            u_quantile: (i as f64 + 0.5) / m,
            p_quantile: q,
        })
        .collect())
}

/// Pointwise 3σ binomial band half-width at uniform quantile `u` for `m` draws.
pub fn qq_band(u: f64, m: usize) -> f64 {
    3.0 * (u * (1.0 - u) / m as f64).sqrt()
}

/// Fraction of QQ points lying on or above `u − qq_band(u, m)`.
pub fn qq_conservative_fraction(points: &[QqPoint]) -> f64 {
    let m = points.len();
    points
        .iter()
        .filter(|q| q.p_quantile >= q.u_quantile - qq_band(q.u_quantile, m))
        .count() as f64
        / m as f64
}

/// Empirical `(1 − α)` quantile: the order statistic `s_(⌈(1−α)m⌉)`.
/// Rejecting when the statistic is strictly above it rejects at most `⌊αm⌋`
/// of the calibration sample.
pub fn empirical_threshold(stats: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScanError::InvalidAlpha(alpha));
    }
    if stats.is_empty() {
        return Err(ScanError::EmptyInput("calibration statistics"));
    }
    let m = stats.len();
    if (m as f64) * alpha < 1.0 - 1e-12 {
        return Err(ScanError::InsufficientReps(format!(
            "{m} replicates cannot resolve level {alpha}; need at least {}",
            (1.0 / alpha).ceil()
        )));
    }
    let mut s = stats.to_vec();
    s.sort_by(f64::total_cmp);
    let k = (((1.0 - alpha) * m as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(s[k - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scanner: ScannerSpec,
    pub alpha: f64,
    pub reps: usize,
    /// Reject when the scanner's statistic is strictly above this.
    pub threshold: f64,
}

impl Calibration {
    pub fn rejection_rate(&self, stats: &[f64]) -> f64 {
        stats.iter().filter(|&&s| s > self.threshold).count() as f64 / stats.len() as f64
    }
}

/// Simulates `cfg.reps` null fields (on a seed stream separate from
/// [`run_null`]'s) and returns the empirical `(1 − α)` quantile of the
/// scanner's statistic.
pub fn calibrate_mc(scanner: ScannerSpec, cfg: &ExperimentConfig, target_alpha: f64) -> Result<Calibration> {
    if !(target_alpha > 0.0 && target_alpha < 1.0) {
        return Err(ScanError::InvalidAlpha(target_alpha));
    }
    if (cfg.reps as f64) * target_alpha < 1.0 - 1e-12 {
        return Err(ScanError::InsufficientReps(format!(
            "reps = {} < 1/alpha = {}",
            cfg.reps,
            1.0 / target_alpha
        )));
    }
    let calib = ExperimentConfig {
        scanners: vec![scanner],
        seed: derive_seed(cfg.seed, 0, stream::CALIBRATION),
        ..cfg.clone()
    };
    let res = run_null(&calib)?;
    let stats = &res.scanners[0].null.as_ref().expect("null run").stats;
    Ok(Calibration {
        scanner,
        alpha: target_alpha,
        reps: cfg.reps,
        threshold: empirical_threshold(stats, target_alpha)?,
    })
}

/// Permutation P-value `(1 + #{perm >= observed}) / (1 + n_perm)`, where each
/// permutation shuffles the cells of `field` uniformly.
pub fn permutation_pvalue(
    field: &GridField,
    n_perm: usize,
    seed: u64,
    statistic: impl Fn(&GridField) -> Result<f64> + Sync,
) -> Result<f64> {
    if n_perm == 0 {
        return Err(ScanError::InsufficientReps("need at least one permutation".into()));
    }
    let observed = statistic(field)?;
    let exceed = (0..n_perm)
        .into_par_iter()
        .map(|k| -> Result<bool> {
            let mut data = field.data().to_vec();
            data.shuffle(&mut seeded(derive_seed(seed, k as u64, stream::PERMUTATION)));
            let permuted = GridField::new(field.dims().to_vec(), data)?;
            Ok(statistic(&permuted)? >= observed)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok((1 + exceed) as f64 / (1 + n_perm) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub eps: f64,
    pub median_s: f64,
    pub p5_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub op_count: u64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Wall time and operation count of the ε-adaptive scan for each ε, over
/// `cfg.reps` null fields. Runs sequentially so timings are not contended.
pub fn bench_epsilon(cfg: &ExperimentConfig, eps_list: &[f64]) -> Result<Vec<TimingRecord>> {
    if cfg.reps == 0 {
        return Err(ScanError::InvalidConfig("reps must be >= 1".into()));
    }
    if !cfg.n.is_power_of_two() {
        return Err(ScanError::NotPowerOfTwo(cfg.n));
    }
    let range = cfg.range()?;
    range.validate_for(cfg.n)?;
    for &eps in eps_list {
        CoveringParams::new(eps, cfg.d, range)?.a_top(cfg.n)?;
    }
    let fields: Vec<GridField> = (0..cfg.reps)
        .map(|r| white_noise(&cfg.dims(), derive_seed(cfg.seed, r as u64, stream::BENCH)))
        .collect::<Result<_>>()?;
    eps_list
        .iter()
        .map(|&eps| {
            let mut times = Vec::with_capacity(fields.len());
            let mut ops = 0;
            for f in &fields {
                let start = Instant::now();
                let out = epsilon_adaptive_scan(f, range, eps)?;
                times.push(start.elapsed().as_secs_f64());
                ops = out.epsilon.expect("epsilon details").op_count;
            }
            times.sort_by(f64::total_cmp);
            Ok(TimingRecord {
                eps,
                median_s: quantile_sorted(&times, 0.5),
                p5_s: quantile_sorted(&times, 0.05),
                p95_s: quantile_sorted(&times, 0.95),
                min_s: times[0],
                max_s: *times.last().expect("non-empty"),
                op_count: ops,
            })
        })
        .collect()
}

/// Paired comparison of the ε-scan against the full adaptive scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsDiscrepancy {
    pub eps: f64,
    /// Median over replicates of `|α̂_ε − α̂_full|`, with `α̂_ε` restricted to
    /// in-range covering shapes.
    pub median_abs_diff: f64,
    /// Replicates where the in-range `α̂_ε` fell below `α̂_full − 1e-12`.
    pub subset_violations: usize,
    /// Replicates where the covering had no out-of-range shape.
    pub fully_in_range: usize,
    /// Violations among those, using the unrestricted `α̂_ε`.
    pub full_subset_violations: usize,
}

pub fn eps_discrepancy(cfg: &ExperimentConfig, eps_list: &[f64]) -> Result<Vec<EpsDiscrepancy>> {
    let range = cfg.range()?;
    range.validate_for(cfg.n)?;
    let per_rep: Vec<(f64, Vec<(f64, f64, bool)>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|i| {
            let f = null_field(cfg, i)?;
            let full = ShapeScan::new(&PrefixSumTable::new(&f), range)?.adaptive()?.pvalue;
            let eps_res = eps_list
                .iter()
                .map(|&eps| {
                    let o = epsilon_adaptive_scan(&f, range, eps)?;
                    let det = o.epsilon.expect("epsilon details");
                    Ok((det.pvalue_in_range, o.pvalue, det.shapes_out_of_range == 0))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((full, eps_res))
        })
        .collect::<Result<_>>()?;
    Ok(eps_list
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let mut diffs: Vec<f64> = per_rep.iter().map(|(full, e)| (e[k].0 - full).abs()).collect();
            diffs.sort_by(f64::total_cmp);
            let subset_violations = per_rep.iter().filter(|(full, e)| e[k].0 < full - 1e-12).count();
            let fully: Vec<_> = per_rep.iter().filter(|(_, e)| e[k].2).collect();
            EpsDiscrepancy {
                eps,
                median_abs_diff: quantile_sorted(&diffs, 0.5),
                subset_violations,
                fully_in_range: fully.len(),
                full_subset_violations: fully.iter().filter(|(full, e)| e[k].1 < full - 1e-12).count(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: 32,
            d: 2,
            h_lo: 4,
            h_hi: 8,
            mu: 5.0,
            signal_shape: Some(vec![6, 5]),
            reps: 24,
            seed: 99,
            scanners: vec![
                ScannerSpec::Oracle,
                ScannerSpec::Multiscale,
                ScannerSpec::Adaptive,
                ScannerSpec::Modified,
            ],
            alpha_grid: vec![0.05, 0.5, 1.0],
        }
    }

    #[test]
    fn scanner_spec_parsing() {
        assert_eq!("multi".parse::<ScannerSpec>().unwrap(), ScannerSpec::Multiscale);
        assert_eq!(
            "eps:1.5".parse::<ScannerSpec>().unwrap(),
            ScannerSpec::Epsilon { eps: 1.5 }
        );
        assert!("bogus".parse::<ScannerSpec>().is_err());
        assert!("eps:x".parse::<ScannerSpec>().is_err());
        assert_eq!(ScannerSpec::Epsilon { eps: 1.5 }.to_string(), "eps:1.5");
    }

    #[test]
    fn size_at_level_one_is_one() {
        let r = run_null(&small_cfg()).unwrap();
        for s in &r.scanners {
            if s.scanner.has_pvalue() {
                let last = s.size.last().unwrap();
                assert_eq!((last.alpha, last.rate), (1.0, 1.0));
            } else {
                assert!(s.size.is_empty());
                assert!(s.null.as_ref().unwrap().pvalues.is_none());
            }
        }
    }

    #[test]
    fn doubling_reps_keeps_prefix() {
        let cfg = small_cfg();
        let a = run_null(&cfg).unwrap();
        let b = run_null(&ExperimentConfig { reps: 48, ..cfg }).unwrap();
        for (x, y) in a.scanners.iter().zip(&b.scanners) {
            let (xs, ys) = (&x.null.as_ref().unwrap().stats, &y.null.as_ref().unwrap().stats);
            assert_eq!(xs[..], ys[..24]);
        }
    }

    #[test]
    fn reproducible_results() {
        let cfg = small_cfg();
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    }

    #[test]
    fn roc_identical_and_separated() {
        let null: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(auc(&null, &null).unwrap(), 0.5);
        let curve = roc_curve(&null, &null).unwrap();
        assert!((auc_from_curve(&curve) - 0.5).abs() < 1e-12);
        let alt: Vec<f64> = null.iter().map(|x| x + 10.0).collect();
        assert_eq!(auc(&null, &alt).unwrap(), 1.0);
        let curve = roc_curve(&null, &alt).unwrap();
        assert!((auc_from_curve(&curve) - 1.0).abs() < 1e-12);
        assert!(curve.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        let last = curve.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(roc_curve(&[], &alt).is_err());
    }

    #[test]
    fn auc_matches_trapezoid_with_ties() {
        let null = [1.0, 2.0, 2.0, 3.0, 5.0];
        let alt = [2.0, 3.0, 3.0, 4.0];
        let a = auc(&null, &alt).unwrap();
        // brute-force Mann–Whitney
        let mut w = 0.0;
        for &y in &alt {
            for &x in &null {
                w += if y > x { 1.0 } else if y == x { 0.5 } else { 0.0 };
            }
        }
        assert!((a - w / 20.0).abs() < 1e-15);
        assert!((auc_from_curve(&roc_curve(&null, &alt).unwrap()) - a).abs() < 1e-12);
    }

    #[test]
    fn qq_examples() {
        let m = 100;
        let grid: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let qq = qq_pvalues(&grid).unwrap();
        assert!(qq.iter().all(|q| (q.u_quantile - q.p_quantile).abs() < 1e-15));
        assert_eq!(qq_conservative_fraction(&qq), 1.0);
        let ones = qq_pvalues(&vec![1.0; m]).unwrap();
        assert!(ones.iter().all(|q| q.p_quantile == 1.0));
        assert!(qq_pvalues(&[]).is_err());
    }

    #[test]
    fn threshold_at_half_is_median() {
        let xs: Vec<f64> = (-50..=50).map(|i| i as f64 / 7.0).collect();
        assert_eq!(empirical_threshold(&xs, 0.5).unwrap(), 0.0);
        let t = empirical_threshold(&xs, 0.1).unwrap();
        let above = xs.iter().filter(|&&x| x > t).count();
        assert!(above <= 10 && above >= 9);
        assert!(matches!(
            empirical_threshold(&xs[..5], 0.05),
            Err(ScanError::InsufficientReps(_))
        ));
    }

    #[test]
    fn permutation_pvalue_range() {
        let f = white_noise(&[8, 8], 1).unwrap();
        let stat = |g: &GridField| -> Result<f64> {
            Ok(PrefixSumTable::new(g).shape_max(&[2, 2])?.max_zscore())
        };
        let p = permutation_pvalue(&f, 19, 5, stat).unwrap();
        assert!(p > 0.0 && p <= 1.0);
        assert_eq!((p * 20.0).round() / 20.0, p);
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        c.reps = 0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.signal_shape = None;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.alpha_grid = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.scanners = vec![ScannerSpec::Epsilon { eps: 1.0 }];
        c.h_lo = 8;
        assert!(c.validate().is_err(), "8·1 < 16");
        c.h_lo = 4;
        c.n = 30;
        assert!(c.validate().is_err());
    }
}
