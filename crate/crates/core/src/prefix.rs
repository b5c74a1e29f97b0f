//! Exact boxcar sums through d-dimensional prefix sums.
//!
//! `cum` has one extra zero row on the low side of every axis, so the sum over
//! `anchor + [0, shape)` is the signed sum of `2^d` corners of `cum`. The
//! corners are always combined in the same order: difference along the last
//! axis first, then along the preceding axes. [`PrefixSumTable::rect_sum`] and
//! the whole-grid routines ([`PrefixSumTable::box_sums`],
//! [`PrefixSumTable::shape_maxima`]) share that grouping, so a box sum comes out
//! bit-identical no matter which routine produced it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::field::{increment, strides_of, GridField, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSumTable {
    dims: Vec<usize>,
    cum_dims: Vec<usize>,
    cum_strides: Vec<usize>,
    cum: Vec<f64>,
}

/// Largest box sum for one shape, with its lexicographically first anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMax {
    pub shape: Vec<usize>,
    pub max_sum: f64,
    pub anchor: Vec<usize>,
    /// Number of anchors scanned.
    pub anchors: u64,
}

impl ShapeMax {
    pub fn size(&self) -> f64 {
        self.shape.iter().map(|&h| h as f64).product()
    }

    pub fn max_zscore(&self) -> f64 {
        self.max_sum / self.size().sqrt()
    }

    pub fn rect(&self) -> Rect {
        Rect {
            anchor: self.anchor.clone(),
            shape: self.shape.clone(),
        }
    }
}

pub fn prefix_sums(field: &GridField) -> PrefixSumTable {
    PrefixSumTable::new(field)
}

impl PrefixSumTable {
    pub fn new(field: &GridField) -> Self {
        let dims = field.dims().to_vec();
        let d = dims.len();
        let cum_dims: Vec<usize> = dims.iter().map(|&n| n + 1).collect();
        let cum_strides = strides_of(&cum_dims);
        let total: usize = cum_dims.iter().product();
        let mut cum = vec![0.0; total];

        let data = field.data();
        let mut idx = vec![0usize; d];
        for &v in data {
            let lin: usize = (0..d).map(|j| (idx[j] + 1) * cum_strides[j]).sum();
            cum[lin] = v;
            increment(&mut idx, &dims);
        }

        for j in 0..d {
            let s = cum_strides[j];
            let c = cum_dims[j];
            for p in 0..total {
                if (p / s) % c != 0 {
                    cum[p] += cum[p - s];
                }
            }
        }

        Self {
            dims,
            cum_dims,
            cum_strides,
            cum,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Raw table, row-major over `dims_j + 1` per axis.
    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().expect("non-empty table")
    }

    pub fn rect_sum(&self, rect: &Rect) -> Result<f64> {
        rect.check_fits(&self.dims)?;
        let d = self.ndim();
        let base: usize = (0..d).map(|j| rect.anchor[j] * self.cum_strides[j]).sum();
        let corners = 1usize << d;
        let mut vals = Vec::with_capacity(corners);
        for k in 0..corners {
            // bit for axis j sits at position d-1-j; a zero bit selects the upper corner
            let mut p = base;
            for j in 0..d {
                if (k >> (d - 1 - j)) & 1 == 0 {
                    p += rect.shape[j] * self.cum_strides[j];
                }
            }
            vals.push(self.cum[p]);
        }
        Ok(reduce_corners(&mut vals))
    }

    pub fn zscore(&self, rect: &Rect) -> Result<f64> {
        Ok(self.rect_sum(rect)? / rect.size().sqrt())
    }

    fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != self.ndim() {
            return Err(ScanError::DimMismatch {
                expected: self.ndim(),
                got: shape.len(),
            });
        }
        if shape.contains(&0) {
            return Err(ScanError::InvalidRect(format!(
                "shape {shape:?} has an empty side"
            )));
        }
        if shape.iter().zip(&self.dims).any(|(&h, &n)| h > n) {
            return Err(ScanError::OutOfBounds {
                anchor: vec![0; shape.len()],
                shape: shape.to_vec(),
                dims: self.dims.clone(),
            });
        }
        Ok(())
    }

    /// Differences of `cum` along the last axis at offset `h`.
    fn last_axis_diff(&self, h: usize) -> Vec<f64> {
        let len = self.cum.len();
        let mut e = vec![0.0; len];
        for p in 0..len - h {
            e[p] = self.cum[p + h] - self.cum[p];
        }
        e
    }

    /// Visits every anchor row for `shape`: `visit(head_anchor, row)` receives
    /// the box sums for all last-axis anchors `0..=n_last - h_last`.
    fn for_each_row(
        &self,
        e: &[f64],
        shape: &[usize],
        row: &mut Vec<f64>,
        mut visit: impl FnMut(&[usize], &[f64]),
    ) {
        let d = self.ndim();
        let head = d - 1;
        let row_len = self.dims[head] - shape[head] + 1;
        row.resize(row_len, 0.0);

        let n_corner = 1usize << head;
        let mut offs = Vec::with_capacity(n_corner);
        for k in 0..n_corner {
            let mut o = 0;
            for j in 0..head {
                if (k >> (head - 1 - j)) & 1 == 0 {
                    o += shape[j] * self.cum_strides[j];
                }
            }
            offs.push(o);
        }
        let bounds: Vec<usize> = (0..head).map(|j| self.dims[j] - shape[j] + 1).collect();
        let mut t = vec![0usize; head];
        let mut scratch = vec![0.0; n_corner];
        loop {
            let base: usize = (0..head).map(|j| t[j] * self.cum_strides[j]).sum();
            match head {
                0 => row.copy_from_slice(&e[base..base + row_len]),
                1 => {
                    let (hi, lo) = (&e[base + offs[0]..], &e[base..]);
                    for (r, (a, b)) in row.iter_mut().zip(hi.iter().zip(lo)) {
                        *r = a - b;
                    }
                }
                2 => {
                    let (o0, o1, o2) = (offs[0], offs[1], offs[2]);
                    for (i, r) in row.iter_mut().enumerate() {
                        let p = base + i;
                        *r = (e[p + o0] - e[p + o1]) - (e[p + o2] - e[p]);
                    }
                }
                _ => {
                    for (i, r) in row.iter_mut().enumerate() {
                        let p = base + i;
                        for (s, &o) in scratch.iter_mut().zip(&offs) {
                            *s = e[p + o];
                        }
                        *r = reduce_corners(&mut scratch);
                    }
                }
            }
            visit(&t, row);
            if head == 0 || !increment(&mut t, &bounds) {
                break;
            }
        }
    }

    /// Box sums `(y * b_shape)(t)` for every anchor `t`; output dims `n_j - h_j + 1`.
    pub fn box_sums(&self, shape: &[usize]) -> Result<GridField> {
        self.check_shape(shape)?;
        let d = self.ndim();
        let out_dims: Vec<usize> = (0..d).map(|j| self.dims[j] - shape[j] + 1).collect();
        let mut data = Vec::with_capacity(out_dims.iter().product());
        let e = self.last_axis_diff(shape[d - 1]);
        let mut row = Vec::new();
        self.for_each_row(&e, shape, &mut row, |_, r| data.extend_from_slice(r));
        GridField::new(out_dims, data)
    }

    /// Z-scores of every rectangle of the given shape, indexed by anchor.
    pub fn zscore_field(&self, shape: &[usize]) -> Result<GridField> {
        let sums = self.box_sums(shape)?;
        let root = shape.iter().map(|&h| h as f64).product::<f64>().sqrt();
        let dims = sums.dims().to_vec();
        let data = sums.into_data().into_iter().map(|s| s / root).collect();
        GridField::new(dims, data)
    }

    /// Max box sum for a single shape.
    pub fn shape_max(&self, shape: &[usize]) -> Result<ShapeMax> {
        self.check_shape(shape)?;
        let e = self.last_axis_diff(shape[self.ndim() - 1]);
        Ok(self.max_for_shape(&e, shape, &mut Vec::new()))
    }

    fn max_for_shape(&self, e: &[f64], shape: &[usize], row: &mut Vec<f64>) -> ShapeMax {
        let d = self.ndim();
        let mut best = f64::NEG_INFINITY;
        let mut best_anchor = vec![0usize; d];
        let mut anchors = 0u64;
        self.for_each_row(e, shape, row, |head, r| {
            anchors += r.len() as u64;
            for (i, &s) in r.iter().enumerate() {
                if s > best {
                    best = s;
                    best_anchor[..d - 1].copy_from_slice(head);
                    best_anchor[d - 1] = i;
                }
            }
        });
        ShapeMax {
            shape: shape.to_vec(),
            max_sum: best,
            anchor: best_anchor,
            anchors,
        }
    }

    /// Per-shape maxima over the product of per-axis inclusive ranges, in
    /// lexicographic shape order. Shapes that do not fit the grid are skipped.
    pub fn shape_maxima(&self, axis_ranges: &[(usize, usize)]) -> Result<Vec<ShapeMax>> {
        let d = self.ndim();
        if axis_ranges.len() != d {
            return Err(ScanError::DimMismatch {
                expected: d,
                got: axis_ranges.len(),
            });
        }
        let mut clipped = Vec::with_capacity(d);
        for (j, &(lo, hi)) in axis_ranges.iter().enumerate() {
            if lo == 0 || lo > hi {
                return Err(ScanError::InvalidRange(format!(
                    "axis {j}: [{lo}, {hi}]"
                )));
            }
            let hi = hi.min(self.dims[j]);
            if lo > hi {
                return Ok(Vec::new());
            }
            clipped.push((lo, hi));
        }
        let (last_lo, last_hi) = clipped[d - 1];
        let head_bounds: Vec<usize> = clipped[..d - 1].iter().map(|&(lo, hi)| hi - lo + 1).collect();

        let mut results: Vec<ShapeMax> = (last_lo..=last_hi)
            .into_par_iter()
            .flat_map_iter(|h_last| {
                let e = self.last_axis_diff(h_last);
                let mut row = Vec::new();
                let mut out = Vec::new();
                let mut k = vec![0usize; d - 1];
                loop {
                    let mut shape: Vec<usize> =
                        (0..d - 1).map(|j| clipped[j].0 + k[j]).collect();
                    shape.push(h_last);
                    out.push(self.max_for_shape(&e, &shape, &mut row));
                    if d == 1 || !increment(&mut k, &head_bounds) {
                        break;
                    }
                }
                out
            })
            .collect();
        results.sort_by(|a, b| a.shape.cmp(&b.shape));
        Ok(results)
    }
}

/// Pairwise reduction of `2^k` corner values, last axis innermost.
fn reduce_corners(vals: &mut [f64]) -> f64 {
    let mut len = vals.len();
    while len > 1 {
        len /= 2;
        for i in 0..len {
            vals[i] = vals[2 * i] - vals[2 * i + 1];
        }
    }
    vals[0]
}

pub fn rect_sum(table: &PrefixSumTable, rect: &Rect) -> Result<f64> {
    table.rect_sum(rect)
}

pub fn zscore(table: &PrefixSumTable, rect: &Rect) -> Result<f64> {
    table.zscore(rect)
}

pub fn zscore_field(table: &PrefixSumTable, shape: &[usize]) -> Result<GridField> {
    table.zscore_field(shape)
}
