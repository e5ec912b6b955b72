//! Raster primitives: the scalar image grid, uniform image sets, integer
//! pixel shifts, the Euclidean inter-image distance and integral images.

use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SetRegError};

/// An integer 2D pixel displacement. Serialized as `[dx, dy]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Shift {
    pub dx: i32,
    pub dy: i32,
}

pub const ZERO_SHIFT: Shift = Shift { dx: 0, dy: 0 };

impl Shift {
    pub fn new(dx: i32, dy: i32) -> Self {
        Shift { dx, dy }
    }

    /// Euclidean length in pixels.
    pub fn norm(self) -> f64 {
        ((self.dx as f64).powi(2) + (self.dy as f64).powi(2)).sqrt()
    }

    /// Largest component magnitude.
    pub fn chebyshev(self) -> i32 {
        self.dx.abs().max(self.dy.abs())
    }
}

impl From<(i32, i32)> for Shift {
    fn from((dx, dy): (i32, i32)) -> Self {
        Shift { dx, dy }
    }
}

impl From<Shift> for (i32, i32) {
    fn from(s: Shift) -> Self {
        (s.dx, s.dy)
    }
}

impl Add for Shift {
    type Output = Shift;
    fn add(self, rhs: Shift) -> Shift {
        Shift::new(self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

impl Sub for Shift {
    type Output = Shift;
    fn sub(self, rhs: Shift) -> Shift {
        Shift::new(self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

impl Neg for Shift {
    type Output = Shift;
    fn neg(self) -> Shift {
        Shift::new(-self.dx, -self.dy)
    }
}

impl std::fmt::Display for Shift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.dx, self.dy)
    }
}

/// A 2D grid of scalar intensities, row-major. The universal raster type for
/// raw images, filtered representations and integral images.
///
/// Immutable after construction; all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Builds a grid from row-major data, validating the invariants.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SetRegError::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(SetRegError::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(SetRegError::InvalidImage(format!(
                "non-finite intensity {v}"
            )));
        }
        Ok(ImageGrid {
            width,
            height,
            data,
        })
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ImageGrid::new(width, height, data)
    }

    /// Constant-valued grid.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        ImageGrid::new(width, height, vec![value; width * height])
    }

    // Internal constructor for values already known to be finite.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        ImageGrid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn same_size(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copies the `width x height` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImageGrid> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(SetRegError::InvalidInput(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Ok(ImageGrid::from_raw(width, height, data))
    }
}

/// An ordered set of same-size grids with per-image string ids.
#[derive(Debug, Clone)]
pub struct ImageSet {
    images: Vec<ImageGrid>,
    ids: Vec<String>,
}

impl ImageSet {
    pub fn new(images: Vec<ImageGrid>, ids: Vec<String>) -> Result<Self> {
        if images.len() < 2 {
            return Err(SetRegError::InvalidInput(format!(
                "an image set needs at least 2 images, got {}",
                images.len()
            )));
        }
        if ids.len() != images.len() {
            return Err(SetRegError::InvalidInput(format!(
                "{} ids for {} images",
                ids.len(),
                images.len()
            )));
        }
        let (w, h) = (images[0].width(), images[0].height());
        for (img, id) in images.iter().zip(&ids) {
            if img.width() != w || img.height() != h {
                return Err(SetRegError::DimensionMismatch(format!(
                    "image '{id}' is {}x{}, expected {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(ImageSet { images, ids })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[ImageGrid] {
        &self.images
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    /// The sub-set holding the first `k` images.
    pub fn head(&self, k: usize) -> Result<ImageSet> {
        if k > self.len() {
            return Err(SetRegError::InvalidInput(format!(
                "subset of {k} from a set of {}",
                self.len()
            )));
        }
        ImageSet::new(self.images[..k].to_vec(), self.ids[..k].to_vec())
    }

    /// The 2-image sub-set {first, index}.
    pub fn pair(&self, index: usize) -> Result<ImageSet> {
        if index == 0 || index >= self.len() {
            return Err(SetRegError::InvalidInput(format!(
                "pair index {index} out of range 1..{}",
                self.len()
            )));
        }
        ImageSet::new(
            vec![self.images[0].clone(), self.images[index].clone()],
            vec![self.ids[0].clone(), self.ids[index].clone()],
        )
    }
}

/// Euclidean distance between two same-size grids:
/// `sqrt(sum_r (a(r) - b(r))^2)` over all pixels.
pub fn euclidean_distance(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    if !a.same_size(b) {
        return Err(SetRegError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum();
    Ok(sum.sqrt())
}

/// Cumulative sum table: `S(x, y) = sum of g(u, v) for u <= x, v <= y`.
pub fn integral_image(g: &ImageGrid) -> ImageGrid {
    let (w, h) = (g.width(), g.height());
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        let mut row_sum = 0.0;
        for x in 0..w {
            row_sum += g.at(x, y);
            data[y * w + x] = row_sum + if y > 0 { data[(y - 1) * w + x] } else { 0.0 };
        }
    }
    ImageGrid::from_raw(w, h, data)
}

/// Sum of the source grid over the inclusive rectangle
/// `[x0, x1] x [y0, y1]`, answered from its integral image in at most three
/// additions/subtractions.
#[inline]
pub fn rect_sum(integral: &ImageGrid, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    debug_assert!(x0 <= x1 && x1 < integral.width());
    debug_assert!(y0 <= y1 && y1 < integral.height());
    let d = integral.at(x1, y1);
    let b = if y0 > 0 { integral.at(x1, y0 - 1) } else { 0.0 };
    let c = if x0 > 0 { integral.at(x0 - 1, y1) } else { 0.0 };
    let a = if x0 > 0 && y0 > 0 {
        integral.at(x0 - 1, y0 - 1)
    } else {
        0.0
    };
    d - b - c + a
}
