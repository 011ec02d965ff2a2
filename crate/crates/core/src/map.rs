//! Score grids and binary masks, plus resampling onto a reference frame.

use crate::error::{Error, Result};
use crate::scalar::Score;

/// Row-major grid of unit-interval scores.
///
/// Carries machine saliency maps, detector heatmaps and human confidence
/// maps alike. Every value is in `[0, 1]`; constructors reject anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap<S> {
    width: u32,
    height: u32,
    values: Vec<S>,
}

impl<S: Score> PixelMap<S> {
    pub fn new(width: u32, height: u32, values: Vec<S>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap(format!("empty map {width}x{height}")));
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::InvalidMap(format!(
                "{width}x{height} map needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.in_unit_interval()) {
            return Err(Error::InvalidMap(format!("value {v} at index {i} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    /// Map with every pixel set to `value`.
    pub fn filled(width: u32, height: u32, value: S) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    /// Builds a map from a per-pixel function `f(x, y)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> S) -> Result<Self> {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Crate-internal constructor for values already known to be valid.
    pub(crate) fn from_parts_unchecked(width: u32, height: u32, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), width as usize * height as usize);
        debug_assert!(values.iter().all(|v| v.in_unit_interval()));
        Self { width, height, values }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn get(&self, x: u32, y: u32) -> S {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Pointwise `1 - v`.
    pub fn inverted(&self) -> Self {
        Self::from_parts_unchecked(
            self.width,
            self.height,
            self.values.iter().map(|&v| S::one() - v).collect(),
        )
    }

    /// Applies `f` pointwise, clamping the result into `[0, 1]`.
    pub fn map_values(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_parts_unchecked(
            self.width,
            self.height,
            self.values.iter().map(|&v| clamp_unit(f(v))).collect(),
        )
    }

    pub(crate) fn check_same_dims(&self, width: u32, height: u32) -> Result<()> {
        if self.dims() != (width, height) {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: width,
                right_h: height,
            });
        }
        Ok(())
    }
}

/// Binary ground-truth manipulation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl TamperMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap(format!("empty mask {width}x{height}")));
        }
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(Error::InvalidMap(format!(
                "{width}x{height} mask needs {expected} bits, got {}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn set(&mut self, x: u32, y: u32) {
        self.bits[y as usize * self.width as usize + x as usize] = true;
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn negative_count(&self) -> usize {
        self.len() - self.positive_count()
    }

    /// All-zero or all-one masks, for which ROC is undefined.
    pub fn is_degenerate(&self) -> bool {
        let positives = self.positive_count();
        positives == 0 || positives == self.len()
    }

    /// Pixelwise OR. Used to merge per-manipulation masks of one image.
    pub fn union(&self, other: &TamperMask) -> Result<TamperMask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Ok(TamperMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    /// The mask as a 0/1 score map.
    pub fn to_map<S: Score>(&self) -> PixelMap<S> {
        PixelMap::from_parts_unchecked(
            self.width,
            self.height,
            self.bits
                .iter()
                .map(|&b| if b { S::one() } else { S::zero() })
                .collect(),
        )
    }
}

/// Bit is set iff `score > threshold`. Masks conventionally use 0.5.
pub fn binarize_mask<S: Score>(map: &PixelMap<S>, threshold: S) -> TamperMask {
    TamperMask {
        width: map.width,
        height: map.height,
        bits: map.values.iter().map(|&v| v > threshold).collect(),
    }
}

/// Default binarization threshold for grayscale ground-truth masks.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Resampling mode for [`align`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    /// Bilinear interpolation with clamping to `[0, 1]`.
    Soft,
    /// Nearest neighbour, so 0/1 maps stay 0/1.
    Binary,
}

/// Resamples `map` to exactly `target_w` x `target_h`.
///
/// Pixel centres are matched (`src = (dst + 0.5) * scale - 0.5`) and
/// coordinates are clamped at the borders. When dimensions already match the
/// map is returned unchanged.
pub fn align<S: Score>(map: &PixelMap<S>, target_w: u32, target_h: u32, kind: Resample) -> Result<PixelMap<S>> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::ZeroTargetDimension {
            width: target_w,
            height: target_h,
        });
    }
    if map.dims() == (target_w, target_h) {
        return Ok(map.clone());
    }
    let values = match kind {
        Resample::Soft => bilinear(map, target_w, target_h),
        Resample::Binary => nearest(map, target_w, target_h),
    };
    Ok(PixelMap::from_parts_unchecked(target_w, target_h, values))
}

/// Nearest-neighbour resampling of a binary mask.
pub fn align_mask(mask: &TamperMask, target_w: u32, target_h: u32) -> Result<TamperMask> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::ZeroTargetDimension {
            width: target_w,
            height: target_h,
        });
    }
    if mask.dims() == (target_w, target_h) {
        return Ok(mask.clone());
    }
    let xs = nearest_indices(mask.width, target_w);
    let ys = nearest_indices(mask.height, target_h);
    let mut bits = Vec::with_capacity(target_w as usize * target_h as usize);
    for &sy in &ys {
        for &sx in &xs {
            bits.push(mask.get(sx, sy));
        }
    }
    TamperMask::new(target_w, target_h, bits)
}

fn nearest_indices(src: u32, dst: u32) -> Vec<u32> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale).floor() as i64;
            s.clamp(0, src as i64 - 1) as u32
        })
        .collect()
}

fn nearest<S: Score>(map: &PixelMap<S>, tw: u32, th: u32) -> Vec<S> {
    let xs = nearest_indices(map.width, tw);
    let ys = nearest_indices(map.height, th);
    let mut out = Vec::with_capacity(tw as usize * th as usize);
    for &sy in &ys {
        for &sx in &xs {
            out.push(map.get(sx, sy));
        }
    }
    out
}

/// Source sample positions: (lower index, upper index, weight of upper).
fn bilinear_taps<S: Score>(src: u32, dst: u32) -> Vec<(u32, u32, S)> {
    let scale = S::count(src as usize) / S::count(dst as usize);
    let half = S::lit(0.5);
    let max = S::count(src as usize - 1);
    (0..dst)
        .map(|d| {
            let pos = ((S::count(d as usize) + half) * scale - half).max(S::zero()).min(max);
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo.to_u32().expect("tap index in range");
            let hi = (lo + 1).min(src - 1);
            (lo, hi, frac)
        })
        .collect()
}

fn bilinear<S: Score>(map: &PixelMap<S>, tw: u32, th: u32) -> Vec<S> {
    let xs = bilinear_taps::<S>(map.width, tw);
    let ys = bilinear_taps::<S>(map.height, th);
    let mut out = Vec::with_capacity(tw as usize * th as usize);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = map.get(x0, y0) * (S::one() - fx) + map.get(x1, y0) * fx;
            let bottom = map.get(x0, y1) * (S::one() - fx) + map.get(x1, y1) * fx;
            out.push(clamp_unit(top * (S::one() - fy) + bottom * fy));
        }
    }
    out
}

pub(crate) fn clamp_unit<S: Score>(v: S) -> S {
    if v.is_nan() {
        S::zero()
    } else {
        v.max(S::zero()).min(S::one())
    }
}
