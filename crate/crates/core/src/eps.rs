//! ε-coverings of the rectangle class and the near-linear ε-adaptive scan.
//!
//! The covering is built on dyadic scales: for a scale vector `a`, multiplier
//! `f ∈ [1, f_max]^d` and position `t`, the element is the rectangle with
//! anchor `2^a ∘ t` and shape `2^a ∘ f`. Block sums of the field over aligned
//! `2^a` blocks (the pyramid level `a`) turn each such rectangle into an
//! `f`-shaped box on a coarse grid:
//!
//! ```text
//! (dyad_a * b_f)(t) = (y * b_{2^a ∘ f})(2^a ∘ t)
//! ```
//!
//! Scales are 0-based: level `0` is the field itself.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::field::{increment, GridField, Rect};
use crate::prefix::PrefixSumTable;
use crate::rng::{derive_seed, seeded, stream};
use crate::scan::{cubic_side, EpsDetails, ScanKind, ScanOutcome};
use crate::threshold::{alpha_from_tau, ScanFamily, ShapeRange};

/// `δ(R0, R1) = √(2(1 − |R0 ∩ R1| / √(|R0||R1|)))`.
pub fn delta_metric(r0: &Rect, r1: &Rect) -> f64 {
    let overlap = r0.intersection_size(r1) / (r0.size() * r1.size()).sqrt();
    (2.0 * (1.0 - overlap)).max(0.0).sqrt()
}

fn log2_exact(n: usize) -> Option<usize> {
    n.is_power_of_two().then(|| n.trailing_zeros() as usize)
}

/// Block-summed coarsenings of a field over aligned dyadic blocks.
#[derive(Debug, Clone)]
pub struct DyadPyramid {
    dims: Vec<usize>,
    max_scale: Vec<usize>,
    levels: Vec<GridField>,
    additions: u64,
}

impl DyadPyramid {
    fn slot(&self, a: &[usize]) -> Option<usize> {
        if a.len() != self.max_scale.len() {
            return None;
        }
        let mut k = 0;
        for (j, &aj) in a.iter().enumerate() {
            if aj > self.max_scale[j] {
                return None;
            }
            k = k * (self.max_scale[j] + 1) + aj;
        }
        Some(k)
    }

    pub fn level(&self, a: &[usize]) -> Option<&GridField> {
        self.slot(a).map(|k| &self.levels[k])
    }

    pub fn max_scale(&self) -> &[usize] {
        &self.max_scale
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Additions spent building all levels.
    pub fn additions(&self) -> u64 {
        self.additions
    }

    /// Number of materialized levels.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Every level `a ∈ {0..log2 n_1} x ... x {0..log2 n_d}`.
pub fn build_pyramid(field: &GridField) -> Result<DyadPyramid> {
    let max: Vec<usize> = field
        .dims()
        .iter()
        .map(|&n| log2_exact(n).ok_or(ScanError::NotPowerOfTwo(n)))
        .collect::<Result<_>>()?;
    build_pyramid_to(field, &max)
}

/// Levels up to `max_scale` per axis (clipped to `log2 n_j`).
pub fn build_pyramid_to(field: &GridField, max_scale: &[usize]) -> Result<DyadPyramid> {
    let dims = field.dims().to_vec();
    let d = dims.len();
    if max_scale.len() != d {
        return Err(ScanError::DimMismatch {
            expected: d,
            got: max_scale.len(),
        });
    }
    let mut top = Vec::with_capacity(d);
    for (&n, &m) in dims.iter().zip(max_scale) {
        let l = log2_exact(n).ok_or(ScanError::NotPowerOfTwo(n))?;
        top.push(m.min(l));
    }
    let count: usize = top.iter().map(|&m| m + 1).product();
    let bounds: Vec<usize> = top.iter().map(|&m| m + 1).collect();
    let mut pyr = DyadPyramid {
        dims,
        max_scale: top,
        levels: Vec::with_capacity(count),
        additions: 0,
    };
    // lexicographic order visits a − e_j before a
    let mut a = vec![0usize; d];
    loop {
        if a.iter().all(|&x| x == 0) {
            pyr.levels.push(field.clone());
        } else {
            let j = a.iter().position(|&x| x > 0).expect("nonzero scale");
            let mut prev_a = a.clone();
            prev_a[j] -= 1;
            let prev = pyr.level(&prev_a).expect("predecessor built");
            let next = halve_axis(prev, j);
            pyr.additions += next.len() as u64;
            pyr.levels.push(next);
        }
        if !increment(&mut a, &bounds) {
            break;
        }
    }
    Ok(pyr)
}

/// Pairwise sums of adjacent cells along `axis`.
fn halve_axis(prev: &GridField, axis: usize) -> GridField {
    let pd = prev.dims();
    let outer: usize = pd[..axis].iter().product();
    let inner: usize = pd[axis + 1..].iter().product();
    let half = pd[axis] / 2;
    let src = prev.data();
    let mut out = Vec::with_capacity(outer * half * inner);
    for o in 0..outer {
        for t in 0..half {
            let lo = (o * pd[axis] + 2 * t) * inner;
            let hi = lo + inner;
            out.extend(src[lo..hi].iter().zip(&src[hi..hi + inner]).map(|(x, y)| x + y));
        }
    }
    let mut dims = pd.to_vec();
    dims[axis] = half;
    GridField::new(dims, out).expect("halved level is valid")
}

/// Loop bounds of the dyadic covering for a given ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringParams {
    pub eps: f64,
    pub d: usize,
    pub a_lo: usize,
    pub a_hi: usize,
    pub f_max: usize,
}

const LOG_SLACK: f64 = 1e-12;

fn floor_log2(x: f64) -> i64 {
    let mut a = x.log2().floor() as i64;
    while 2f64.powi(a as i32 + 1) <= x * (1.0 + LOG_SLACK) {
        a += 1;
    }
    while 2f64.powi(a as i32) > x * (1.0 + LOG_SLACK) {
        a -= 1;
    }
    a
}

fn ceil_log2(x: f64) -> i64 {
    let mut a = x.log2().ceil() as i64;
    while 2f64.powi(a as i32 - 1) >= x * (1.0 - LOG_SLACK) {
        a -= 1;
    }
    while 2f64.powi(a as i32) < x * (1.0 - LOG_SLACK) {
        a += 1;
    }
    a
}

impl CoveringParams {
    /// Requires `ε² h_lo >= 8d`. Then `a_lo = ⌊log2(ε² h_lo / 4d)⌋`,
    /// `a_hi = ⌈log2(ε² h_hi / 4d)⌉` and `f_max = ⌈8d / ε²⌉`.
    pub fn new(eps: f64, d: usize, range: ShapeRange) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(ScanError::InvalidEpsilon(format!("ε must be positive, got {eps}")));
        }
        if d == 0 {
            return Err(ScanError::InvalidConfig("dimension must be >= 1".into()));
        }
        let e2 = eps * eps;
        let df = d as f64;
        if e2 * (range.h_lo as f64) < 8.0 * df * (1.0 - LOG_SLACK) {
            return Err(ScanError::InvalidEpsilon(format!(
                "need ε² h_lo >= 8d, got ε = {eps}, h_lo = {}, d = {d} (smallest legal ε is {:.6})",
                range.h_lo,
                (8.0 * df / range.h_lo as f64).sqrt()
            )));
        }
        let a_lo = floor_log2(e2 * range.h_lo as f64 / (4.0 * df));
        let a_hi = ceil_log2(e2 * range.h_hi as f64 / (4.0 * df));
        let f_max = (8.0 * df / e2 * (1.0 - LOG_SLACK)).ceil() as usize;
        Ok(Self {
            eps,
            d,
            a_lo: a_lo.max(1) as usize,
            a_hi: a_hi.max(a_lo).max(1) as usize,
            f_max: f_max.max(1),
        })
    }

    /// Highest scale that exists on an `n`-grid.
    pub fn a_top(&self, n: usize) -> Result<usize> {
        let l = log2_exact(n).ok_or(ScanError::NotPowerOfTwo(n))?;
        if self.a_lo > l {
            return Err(ScanError::InvalidEpsilon(format!(
                "coarsest covering scale {} exceeds log2 n = {l}",
                self.a_lo
            )));
        }
        Ok(self.a_hi.min(l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoveringElement {
    pub a: Vec<usize>,
    pub f: Vec<usize>,
    pub t: Vec<usize>,
}

impl CoveringElement {
    pub fn rect(&self) -> Rect {
        Rect {
            anchor: self.a.iter().zip(&self.t).map(|(&a, &t)| t << a).collect(),
            shape: self.a.iter().zip(&self.f).map(|(&a, &f)| f << a).collect(),
        }
    }
}

/// Iterator over the covering, ordered by `(a, f, t)` lexicographically.
#[derive(Debug, Clone)]
pub struct CoveringIter {
    n: usize,
    a_lo: usize,
    a_bounds: Vec<usize>,
    f_bounds: Vec<usize>,
    a_off: Vec<usize>,
    f_off: Vec<usize>,
    t: Vec<usize>,
    t_bounds: Vec<usize>,
    done: bool,
}

impl CoveringIter {
    fn feasible(&self) -> bool {
        (0..self.a_off.len()).all(|j| self.f_off[j] < self.n >> (self.a_lo + self.a_off[j]))
    }

    /// Moves to the next `(a, f)` with a non-empty anchor set, starting at the current one.
    fn settle(&mut self) {
        while !self.feasible() {
            if !increment(&mut self.f_off, &self.f_bounds)
                && !increment(&mut self.a_off, &self.a_bounds)
            {
                self.done = true;
                return;
            }
        }
        self.t.iter_mut().for_each(|x| *x = 0);
        for j in 0..self.t.len() {
            let level = self.n >> (self.a_lo + self.a_off[j]);
            self.t_bounds[j] = level - (self.f_off[j] + 1) + 1;
        }
    }
}

impl Iterator for CoveringIter {
    type Item = CoveringElement;

    fn next(&mut self) -> Option<CoveringElement> {
        if self.done {
            return None;
        }
        let item = CoveringElement {
            a: self.a_off.iter().map(|&x| x + self.a_lo).collect(),
            f: self.f_off.iter().map(|&x| x + 1).collect(),
            t: self.t.clone(),
        };
        if !increment(&mut self.t, &self.t_bounds) {
            if !increment(&mut self.f_off, &self.f_bounds)
                && !increment(&mut self.a_off, &self.a_bounds)
            {
                self.done = true;
            } else {
                self.settle();
            }
        }
        Some(item)
    }
}

/// Covering elements for an `[n]^d` grid: `a ∈ [a_lo, a_hi]^d` (capped at
/// `log2 n`), `f ∈ [1, f_max]^d`, and every anchor with `t_j + f_j <= n / 2^{a_j}`.
pub fn enumerate_covering(n: usize, range: ShapeRange, params: &CoveringParams) -> Result<CoveringIter> {
    let a_top = params.a_top(n)?;
    range.check_fits(n)?;
    let d = params.d;
    let mut it = CoveringIter {
        n,
        a_lo: params.a_lo,
        a_bounds: vec![a_top - params.a_lo + 1; d],
        f_bounds: vec![params.f_max; d],
        a_off: vec![0; d],
        f_off: vec![0; d],
        t: vec![0; d],
        t_bounds: vec![1; d],
        done: false,
    };
    it.settle();
    Ok(it)
}

/// Number of covering elements, without enumerating them.
pub fn covering_len(n: usize, params: &CoveringParams) -> Result<u128> {
    let a_top = params.a_top(n)?;
    let per_axis: u128 = (params.a_lo..=a_top)
        .map(|a| {
            let level = n >> a;
            (1..=params.f_max.min(level))
                .map(|f| (level - f + 1) as u128)
                .sum::<u128>()
        })
        .sum();
    Ok(per_axis.pow(params.d as u32))
}

/// Smallest `δ` from `rect` to any covering element, with that element.
///
/// `|R ∩ R'| / √(|R||R'|)` factors over axes and the covering is a product set
/// over axes, so the maximum overlap ratio is the product of per-axis maxima.
/// Each per-axis maximum is found by exhaustive search over `(a_j, f_j, t_j)`.
pub fn nearest_covering_element(
    rect: &Rect,
    n: usize,
    params: &CoveringParams,
) -> Result<(f64, CoveringElement)> {
    let a_top = params.a_top(n)?;
    if rect.ndim() != params.d {
        return Err(ScanError::DimMismatch {
            expected: params.d,
            got: rect.ndim(),
        });
    }
    rect.check_fits(&vec![n; params.d])?;
    let mut ratio = 1.0;
    let mut elem = CoveringElement {
        a: Vec::new(),
        f: Vec::new(),
        t: Vec::new(),
    };
    for j in 0..params.d {
        let (x0, h) = (rect.anchor[j], rect.shape[j]);
        let mut best = (-1.0, 0, 0, 0);
        for a in params.a_lo..=a_top {
            let s = 1usize << a;
            let level = n >> a;
            for f in 1..=params.f_max.min(level) {
                let denom = ((h * s * f) as f64).sqrt();
                for t in 0..=level - f {
                    let lo = x0.max(s * t);
                    let hi = (x0 + h).min(s * (t + f));
                    if hi > lo {
                        let r = (hi - lo) as f64 / denom;
                        if r > best.0 {
                            best = (r, a, f, t);
                        }
                    }
                }
            }
        }
        if best.0 <= 0.0 {
            return Ok((
                std::f64::consts::SQRT_2,
                CoveringElement {
                    a: vec![params.a_lo; params.d],
                    f: vec![1; params.d],
                    t: vec![0; params.d],
                },
            ));
        }
        ratio *= best.0;
        elem.a.push(best.1);
        elem.f.push(best.2);
        elem.t.push(best.3);
    }
    Ok(((2.0 * (1.0 - ratio)).max(0.0).sqrt(), elem))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_min_delta: f64,
    pub worst_rect: Option<Rect>,
    pub worst_nearest: Option<CoveringElement>,
    pub pass: bool,
}

/// Samples rectangles with sides in `[h_lo, h_hi]` (uniform shape, then
/// uniform anchor) and reports the largest distance to the covering.
pub fn covering_verify(
    n: usize,
    range: ShapeRange,
    params: &CoveringParams,
    trials: usize,
    seed: u64,
) -> Result<CoverReport> {
    range.check_fits(n)?;
    params.a_top(n)?;
    let mut rng = seeded(derive_seed(seed, 0, stream::COVER_TRIALS));
    let d = params.d;
    let mut worst = (0.0f64, None, None);
    for _ in 0..trials {
        let shape: Vec<usize> = (0..d)
            .map(|_| rng.random_range(range.h_lo..=range.h_hi.min(n)))
            .collect();
        let rect = Rect::random_anchor(&mut rng, &vec![n; d], &shape)?;
        let (delta, elem) = nearest_covering_element(&rect, n, params)?;
        if worst.1.is_none() || delta > worst.0 {
            worst = (delta, Some(rect), Some(elem));
        }
    }
    Ok(CoverReport {
        n,
        d,
        eps: params.eps,
        trials,
        seed,
        max_min_delta: worst.0,
        worst_rect: worst.1,
        worst_nearest: worst.2,
        pass: worst.0 <= params.eps,
    })
}

/// ε-adaptive multiscale scan over the dyadic covering.
///
/// Every covering shape `f ∘ 2^a` is scored with the adaptive critical value,
/// including shapes that fall outside `[h_lo, h_hi]^d` near the loop
/// boundaries (their `ln(h_j/h_lo)` term is floored at zero). Those are
/// counted in [`EpsDetails::shapes_out_of_range`], and
/// [`EpsDetails::pvalue_in_range`] gives the P-value restricted to in-range
/// shapes.
pub fn epsilon_adaptive_scan(field: &GridField, range: ShapeRange, eps: f64) -> Result<ScanOutcome> {
    let n = cubic_side(field.dims())?;
    if !n.is_power_of_two() {
        return Err(ScanError::NotPowerOfTwo(n));
    }
    let d = field.ndim();
    let family = ScanFamily::adaptive(n, d, range)?;
    let params = CoveringParams::new(eps, d, range)?;
    let a_top = params.a_top(n)?;

    let pyramid = build_pyramid_to(field, &vec![a_top; d])?;
    let mut ops = pyramid.additions();

    struct Best {
        tau: f64,
        stat: f64,
        rect: Rect,
        in_range: bool,
    }
    let mut best: Option<Best> = None;
    let mut best_in: Option<f64> = None;
    let mut shapes_scanned = 0u64;
    let mut shapes_out = 0u64;

    let a_bounds = vec![a_top - params.a_lo + 1; d];
    let mut a_off = vec![0usize; d];
    loop {
        let a: Vec<usize> = a_off.iter().map(|&x| x + params.a_lo).collect();
        let level = pyramid.level(&a).expect("level within pyramid");
        let table = PrefixSumTable::new(level);
        ops += table.cum().len() as u64;
        let maxima = table.shape_maxima(&vec![(1, params.f_max); d])?;
        let last_shapes = params.f_max.min(level.dims()[d - 1]) as u64;
        ops += last_shapes * table.cum().len() as u64;
        for m in maxima {
            ops += m.anchors;
            shapes_scanned += 1;
            let shape: Vec<usize> = m.shape.iter().zip(&a).map(|(&f, &aj)| f << aj).collect();
            let scale: f64 = shape.iter().map(|&h| h as f64).product();
            let s_hat = m.max_sum / scale.sqrt();
            let (cp, in_range) = family.centering_clamped(&shape)?;
            if !in_range {
                shapes_out += 1;
            }
            let tau = cp.tau_hat(s_hat);
            if in_range && best_in.is_none_or(|b| tau > b) {
                best_in = Some(tau);
            }
            if best.as_ref().is_none_or(|b| tau > b.tau) {
                best = Some(Best {
                    tau,
                    stat: s_hat,
                    rect: Rect {
                        anchor: m.anchor.iter().zip(&a).map(|(&t, &aj)| t << aj).collect(),
                        shape,
                    },
                    in_range,
                });
            }
        }
        if !increment(&mut a_off, &a_bounds) {
            break;
        }
    }

    let best = best.ok_or(ScanError::EmptyInput("covering has no elements on this grid"))?;
    Ok(ScanOutcome {
        kind: ScanKind::Epsilon,
        stat: best.stat,
        tau_hat: best.tau,
        pvalue: alpha_from_tau(best.tau),
        best_rect: best.rect,
        per_shape: None,
        epsilon: Some(EpsDetails {
            eps,
            a_lo: params.a_lo,
            a_hi: a_top,
            f_max: params.f_max,
            pvalue_in_range: best_in.map_or(1.0, alpha_from_tau),
            tau_hat_in_range: best_in,
            best_in_range: best.in_range,
            shapes_scanned,
            shapes_out_of_range: shapes_out,
            op_count: ops,
        }),
    })
}
