//! Grid fields, rectangles and signal injection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::rng::NormalStream;

pub(crate) fn validate_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(ScanError::InvalidDims {
            dims: dims.to_vec(),
            reason: "need at least one axis".into(),
        });
    }
    if dims.contains(&0) {
        return Err(ScanError::InvalidDims {
            dims: dims.to_vec(),
            reason: "every side must be at least 1".into(),
        });
    }
    let mut len: usize = 1;
    for &n in dims {
        len = len
            .checked_mul(n)
            .filter(|&l| l <= isize::MAX as usize / 8)
            .ok_or_else(|| ScanError::InvalidDims {
                dims: dims.to_vec(),
                reason: "cell count overflows".into(),
            })?;
    }
    Ok(len)
}

/// Row-major strides (last axis contiguous).
pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

/// A real-valued field on the grid `[dims_0] x ... x [dims_{d-1}]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl GridField {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = validate_dims(&dims)?;
        if data.len() != len {
            return Err(ScanError::DataLength {
                expected: len,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(ScanError::NonFinite { index });
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Result<Self> {
        let len = validate_dims(&dims)?;
        Self::new(dims, vec![value; len])
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    /// Common side length when the grid is `[n]^d`.
    pub fn side(&self) -> Option<usize> {
        let n = self.dims[0];
        self.dims.iter().all(|&m| m == n).then_some(n)
    }

    pub fn cubic_side(&self) -> Result<usize> {
        self.side()
            .ok_or_else(|| ScanError::NotCubic(self.dims.clone()))
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        for (i, (&k, &n)) in idx.iter().zip(&self.dims).enumerate() {
            debug_assert!(k < n, "index {k} out of range on axis {i}");
            lin = lin * n + k;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Adds `c` to every cell.
    pub fn shifted(&self, c: f64) -> GridField {
        GridField {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| x + c).collect(),
        }
    }

    /// Reverses the axis order (the transpose for `d = 2`).
    pub fn reversed_axes(&self) -> GridField {
        let d = self.ndim();
        let rdims: Vec<usize> = self.dims.iter().rev().copied().collect();
        let rstrides = strides_of(&rdims);
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; d];
        for &v in &self.data {
            let lin: usize = (0..d).map(|j| idx[d - 1 - j] * rstrides[j]).sum();
            out[lin] = v;
            increment(&mut idx, &self.dims);
        }
        GridField {
            dims: rdims,
            data: out,
        }
    }

    /// Sum of the field over `rect` by direct iteration.
    pub fn direct_sum(&self, rect: &Rect) -> Result<f64> {
        rect.check_fits(&self.dims)?;
        let strides = self.strides();
        let mut offset = vec![0usize; rect.ndim()];
        let mut total = 0.0;
        loop {
            let lin: usize = (0..rect.ndim())
                .map(|j| (rect.anchor[j] + offset[j]) * strides[j])
                .sum();
            total += self.data[lin];
            if !increment(&mut offset, &rect.shape) {
                break;
            }
        }
        Ok(total)
    }
}

/// Odometer step in row-major order; returns `false` after wrapping to zero.
pub(crate) fn increment(idx: &mut [usize], bounds: &[usize]) -> bool {
    for j in (0..idx.len()).rev() {
        idx[j] += 1;
        if idx[j] < bounds[j] {
            return true;
        }
        idx[j] = 0;
    }
    false
}

/// Axis-aligned rectangle of cells `anchor_j <= i_j < anchor_j + shape_j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub anchor: Vec<usize>,
    pub shape: Vec<usize>,
}

impl Rect {
    pub fn new(anchor: Vec<usize>, shape: Vec<usize>) -> Result<Self> {
        if anchor.len() != shape.len() {
            return Err(ScanError::DimMismatch {
                expected: anchor.len(),
                got: shape.len(),
            });
        }
        if anchor.is_empty() {
            return Err(ScanError::InvalidRect("zero-dimensional rectangle".into()));
        }
        if shape.contains(&0) {
            return Err(ScanError::InvalidRect(format!(
                "shape {shape:?} has an empty side"
            )));
        }
        Ok(Self { anchor, shape })
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of cells, as `f64` to avoid overflow in products.
    pub fn size(&self) -> f64 {
        self.shape.iter().map(|&h| h as f64).product()
    }

    pub fn fits(&self, dims: &[usize]) -> bool {
        self.anchor.len() == dims.len()
            && self
                .anchor
                .iter()
                .zip(&self.shape)
                .zip(dims)
                .all(|((&t, &h), &n)| h >= 1 && t.checked_add(h).is_some_and(|e| e <= n))
    }

    pub fn check_fits(&self, dims: &[usize]) -> Result<()> {
        if self.anchor.len() != dims.len() || self.shape.len() != dims.len() {
            return Err(ScanError::DimMismatch {
                expected: dims.len(),
                got: self.anchor.len(),
            });
        }
        if self.shape.contains(&0) {
            return Err(ScanError::InvalidRect(format!(
                "shape {:?} has an empty side",
                self.shape
            )));
        }
        if !self.fits(dims) {
            return Err(ScanError::OutOfBounds {
                anchor: self.anchor.clone(),
                shape: self.shape.clone(),
                dims: dims.to_vec(),
            });
        }
        Ok(())
    }

    /// Cell count of the intersection with `other`.
    pub fn intersection_size(&self, other: &Rect) -> f64 {
        assert_eq!(self.ndim(), other.ndim(), "rectangles of different dimension");
        let mut size = 1.0;
        for j in 0..self.ndim() {
            let lo = self.anchor[j].max(other.anchor[j]);
            let hi = (self.anchor[j] + self.shape[j]).min(other.anchor[j] + other.shape[j]);
            if hi <= lo {
                return 0.0;
            }
            size *= (hi - lo) as f64;
        }
        size
    }

    pub fn reversed_axes(&self) -> Rect {
        Rect {
            anchor: self.anchor.iter().rev().copied().collect(),
            shape: self.shape.iter().rev().copied().collect(),
        }
    }

    /// Draws an anchor uniformly over all positions where `shape` fits.
    pub fn random_anchor<R: Rng>(rng: &mut R, dims: &[usize], shape: &[usize]) -> Result<Rect> {
        if shape.len() != dims.len() {
            return Err(ScanError::DimMismatch {
                expected: dims.len(),
                got: shape.len(),
            });
        }
        let mut anchor = Vec::with_capacity(dims.len());
        for (&n, &h) in dims.iter().zip(shape) {
            if h == 0 || h > n {
                return Err(ScanError::OutOfBounds {
                    anchor: vec![0; dims.len()],
                    shape: shape.to_vec(),
                    dims: dims.to_vec(),
                });
            }
            anchor.push(rng.random_range(0..=n - h));
        }
        Rect::new(anchor, shape.to_vec())
    }
}

/// Signal `mu / sqrt(|R*|)` on every cell of `rect`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub rect: Rect,
    pub mu: f64,
}

impl SignalSpec {
    pub fn new(rect: Rect, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(ScanError::InvalidConfig(format!(
                "signal size must be finite and nonnegative, got {mu}"
            )));
        }
        Ok(Self { rect, mu })
    }

    pub fn amplitude(&self) -> f64 {
        self.mu / self.rect.size().sqrt()
    }
}

/// Field of iid standard normals from `seed` (see [`crate::rng`] for the generator).
pub fn white_noise(dims: &[usize], seed: u64) -> Result<GridField> {
    let len = validate_dims(dims)?;
    let mut data = vec![0.0; len];
    NormalStream::from_seed(seed).fill(&mut data);
    GridField::new(dims.to_vec(), data)
}

pub fn inject_signal(field: &GridField, spec: &SignalSpec) -> Result<GridField> {
    spec.rect.check_fits(field.dims())?;
    let mut out = field.clone();
    if spec.mu == 0.0 {
        return Ok(out);
    }
    let amp = spec.amplitude();
    let strides = field.strides();
    let rect = &spec.rect;
    let mut offset = vec![0usize; rect.ndim()];
    loop {
        let lin: usize = (0..rect.ndim())
            .map(|j| (rect.anchor[j] + offset[j]) * strides[j])
            .sum();
        out.data[lin] += amp;
        if !increment(&mut offset, &rect.shape) {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_is_deterministic() {
        let a = white_noise(&[4, 4], 7).unwrap();
        let b = white_noise(&[4, 4], 7).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a, b);
        assert_ne!(a, white_noise(&[4, 4], 8).unwrap());
    }

    #[test]
    fn white_noise_moments() {
        let f = white_noise(&[256, 256], 2024).unwrap();
        let m = f.len() as f64;
        let mean = f.sum() / m;
        let var = f.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!(mean.abs() <= 4.0 / 256.0, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.05, "variance {var}");
    }

    #[test]
    fn invalid_dims_rejected() {
        assert!(white_noise(&[0], 1).is_err());
        assert!(white_noise(&[], 1).is_err());
        assert!(white_noise(&[usize::MAX, 2], 1).is_err());
        assert!(GridField::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(GridField::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn inject_on_zero_field() {
        let z = GridField::zeros(vec![4, 4]).unwrap();
        let spec = SignalSpec::new(Rect::new(vec![0, 0], vec![2, 2]).unwrap(), 6.0).unwrap();
        let out = inject_signal(&z, &spec).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i < 2 && j < 2 { 3.0 } else { 0.0 };
                assert_eq!(out.get(&[i, j]), expect);
            }
        }
    }

    #[test]
    fn inject_zero_mu_is_identity() {
        let f = white_noise(&[8, 8], 1).unwrap();
        let spec = SignalSpec::new(Rect::new(vec![1, 2], vec![3, 3]).unwrap(), 0.0).unwrap();
        assert_eq!(inject_signal(&f, &spec).unwrap(), f);
    }

    #[test]
    fn inject_out_of_bounds() {
        let f = GridField::zeros(vec![4, 4]).unwrap();
        let spec = SignalSpec::new(Rect::new(vec![3, 0], vec![2, 2]).unwrap(), 1.0).unwrap();
        assert!(matches!(
            inject_signal(&f, &spec),
            Err(ScanError::OutOfBounds { .. })
        ));
        assert!(SignalSpec::new(spec.rect.clone(), -1.0).is_err());
    }

    #[test]
    fn rect_validation() {
        assert!(Rect::new(vec![0, 0], vec![1, 0]).is_err());
        assert!(Rect::new(vec![0], vec![1, 1]).is_err());
        let r = Rect::new(vec![2, 1], vec![2, 3]).unwrap();
        assert!(r.fits(&[4, 4]));
        assert!(!r.fits(&[3, 4]));
        assert_eq!(r.size(), 6.0);
    }

    #[test]
    fn reversed_axes_transposes() {
        let f = GridField::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let t = f.reversed_axes();
        assert_eq!(t.dims(), &[3, 2]);
        assert_eq!(t.data(), &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(t.reversed_axes(), f);
    }

    #[test]
    fn random_anchor_fits() {
        let mut rng = crate::rng::seeded(5);
        for _ in 0..200 {
            let r = Rect::random_anchor(&mut rng, &[10, 7], &[4, 7]).unwrap();
            assert!(r.fits(&[10, 7]));
            assert_eq!(r.anchor[1], 0);
        }
        assert!(Rect::random_anchor(&mut rng, &[10, 7], &[4, 8]).is_err());
    }
}
