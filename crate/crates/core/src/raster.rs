//! Grid types shared by every other module: numeric rasters, binary masks,
//! tri-class shadow masks, per-pixel logits, surface normals, and the unit
//! light-direction vector.
//!
//! Conventions used throughout the crate:
//!
//! - Pixel `(x, y)` addresses column `x`, row `y`; data is row-major with
//!   interleaved channels.
//! - Numeric grids hold `f64`, label grids hold `u8`.
//! - The camera-centric frame is `+x` right, `+y` down, `+z` into the scene.
//!   A surface facing the camera has normal `(0, 0, -1)`; the light direction
//!   points from the light source toward the scene.

use crate::error::{Error, Result};

/// Row-major H×W grid with a fixed channel count per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T> RasterGrid<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y * self.width + x) * self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_dimensions<U>(&self, other: &RasterGrid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Iterates `(x, y)` over every pixel in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> {
        let (w, h) = (self.width, self.height);
        (0..h).flat_map(move |y| (0..w).map(move |x| (x, y)))
    }
}

impl<T: Copy> RasterGrid<T> {
    /// Grid filled with a constant value.
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        assert!(width >= 1 && height >= 1 && channels >= 1, "empty grid");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Grid built from a per-pixel closure returning all channels.
    pub fn from_fn<const C: usize>(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [T; C],
    ) -> Self {
        assert!(width >= 1 && height >= 1 && C >= 1, "empty grid");
        let mut data = Vec::with_capacity(width * height * C);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: C,
            data,
        }
    }

    /// Wraps an existing row-major buffer.
    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width < 1 || height < 1 || channels < 1 {
            return Err(Error::InvalidParameter("grid dimensions must be >= 1".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidParameter(format!(
                "buffer of {} values cannot back a {}x{}x{} grid",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        debug_assert!(c < self.channels);
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: T) {
        debug_assert!(c < self.channels);
        let i = self.offset(x, y) + c;
        self.data[i] = value;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = self.offset(x, y);
        &self.data[i..i + self.channels]
    }
}

pub(crate) fn ensure_same_dims<A, B>(
    context: &'static str,
    a: &RasterGrid<A>,
    b: &RasterGrid<B>,
) -> Result<()> {
    if a.same_dimensions(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected_w: a.width(),
            expected_h: a.height(),
            actual_w: b.width(),
            actual_h: b.height(),
        })
    }
}

/// Single-channel {0,1} mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: RasterGrid<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            grid: RasterGrid::filled(width, height, 1, 0),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self {
            grid: RasterGrid::from_fn(width, height, |x, y| [u8::from(f(x, y))]),
        }
    }

    /// Wraps a grid, requiring one channel and values in {0,1}.
    pub fn from_grid(grid: RasterGrid<u8>) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: grid.channels(),
            });
        }
        if grid.data().iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter(
                "binary mask values must be 0 or 1".into(),
            ));
        }
        Ok(Self { grid })
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn grid(&self) -> &RasterGrid<u8> {
        &self.grid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.grid.get(x, y, 0) != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.grid.set(x, y, 0, u8::from(value));
    }

    pub fn count_ones(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.data().iter().all(|&v| v == 0)
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> {
        self.grid.coords()
    }

    pub fn same_dimensions(&self, other: &BinaryMask) -> bool {
        self.grid.same_dimensions(&other.grid)
    }

    pub fn complement(&self) -> BinaryMask {
        Self::from_fn(self.width(), self.height(), |x, y| !self.get(x, y))
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        debug_assert!(self.same_dimensions(other));
        Self::from_fn(self.width(), self.height(), |x, y| {
            self.get(x, y) && other.get(x, y)
        })
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        debug_assert!(self.same_dimensions(other));
        Self::from_fn(self.width(), self.height(), |x, y| {
            self.get(x, y) || other.get(x, y)
        })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_dimensions(other)
            && self.coords().all(|(x, y)| !self.get(x, y) || other.get(x, y))
    }

    /// Pixels where the two masks disagree.
    pub fn difference_count(&self, other: &BinaryMask) -> usize {
        debug_assert!(self.same_dimensions(other));
        self.coords()
            .filter(|&(x, y)| self.get(x, y) != other.get(x, y))
            .count()
    }

    /// Chebyshev dilation by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width(), self.height());
        let r = radius as isize;
        Self::from_fn(w, h, |x, y| {
            let (x, y) = (x as isize, y as isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0
                        && ny >= 0
                        && (nx as usize) < w
                        && (ny as usize) < h
                        && self.get(nx as usize, ny as usize)
                    {
                        return true;
                    }
                }
            }
            false
        })
    }

    /// Chebyshev erosion by `radius` pixels; image borders erode.
    pub fn erode(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width(), self.height());
        let r = radius as isize;
        Self::from_fn(w, h, |x, y| {
            let (x, y) = (x as isize, y as isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0
                        || ny < 0
                        || nx as usize >= w
                        || ny as usize >= h
                        || !self.get(nx as usize, ny as usize)
                    {
                        return false;
                    }
                }
            }
            true
        })
    }

    /// Unweighted centroid of the set pixels, in pixel coordinates.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for (x, y) in self.coords() {
            if self.get(x, y) {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }
}

/// Tri-class per-pixel label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ShadowClass {
    Background = 0,
    Cast = 1,
    Attached = 2,
}

impl ShadowClass {
    pub fn from_label(label: u8) -> Option<ShadowClass> {
        match label {
            0 => Some(ShadowClass::Background),
            1 => Some(ShadowClass::Cast),
            2 => Some(ShadowClass::Attached),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }
}

/// Per-pixel {background, cast, attached} labels plus a separate
/// undefined-shadow mask. Undefined pixels always carry label 0; "undefined"
/// is never a fourth label.
#[derive(Debug, Clone, PartialEq)]
pub struct TriClassMask {
    labels: RasterGrid<u8>,
    undefined: BinaryMask,
}

impl TriClassMask {
    pub fn new(labels: RasterGrid<u8>, undefined: BinaryMask) -> Result<Self> {
        if labels.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: labels.channels(),
            });
        }
        ensure_same_dims("tri-class labels vs undefined mask", &labels, undefined.grid())?;
        if labels.data().iter().any(|&v| v > 2) {
            return Err(Error::InvalidParameter(
                "tri-class labels must be 0, 1, or 2".into(),
            ));
        }
        for (x, y) in labels.coords() {
            if undefined.get(x, y) && labels.get(x, y, 0) != 0 {
                return Err(Error::InvalidParameter(format!(
                    "pixel ({x}, {y}) is undefined but labeled {}",
                    labels.get(x, y, 0)
                )));
            }
        }
        Ok(Self { labels, undefined })
    }

    /// Builds from separate cast/attached/undefined masks. Attached wins over
    /// cast on overlap; undefined forces label 0.
    pub fn from_masks(
        cast: &BinaryMask,
        attached: &BinaryMask,
        undefined: &BinaryMask,
    ) -> Result<Self> {
        ensure_same_dims("cast vs attached mask", cast.grid(), attached.grid())?;
        ensure_same_dims("cast vs undefined mask", cast.grid(), undefined.grid())?;
        let labels = RasterGrid::from_fn(cast.width(), cast.height(), |x, y| {
            if undefined.get(x, y) {
                [0u8]
            } else if attached.get(x, y) {
                [ShadowClass::Attached.label()]
            } else if cast.get(x, y) {
                [ShadowClass::Cast.label()]
            } else {
                [0u8]
            }
        });
        Ok(Self {
            labels,
            undefined: undefined.clone(),
        })
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn labels(&self) -> &RasterGrid<u8> {
        &self.labels
    }

    pub fn undefined(&self) -> &BinaryMask {
        &self.undefined
    }

    #[inline]
    pub fn class(&self, x: usize, y: usize) -> ShadowClass {
        ShadowClass::from_label(self.labels.get(x, y, 0)).expect("labels validated at construction")
    }

    /// Mask of pixels carrying one specific class label.
    pub fn class_mask(&self, class: ShadowClass) -> BinaryMask {
        BinaryMask::from_fn(self.width(), self.height(), |x, y| self.class(x, y) == class)
    }

    /// Union shadow extent: cast OR attached OR undefined.
    pub fn union_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width(), self.height(), |x, y| {
            self.class(x, y) != ShadowClass::Background || self.undefined.get(x, y)
        })
    }
}

/// Per-pixel detector logits, channel order (background, cast, attached).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitField {
    grid: RasterGrid<f64>,
}

impl LogitField {
    pub fn new(grid: RasterGrid<f64>) -> Result<Self> {
        if grid.channels() != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                actual: grid.channels(),
            });
        }
        if grid.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("logits must be finite".into()));
        }
        Ok(Self { grid })
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        Self {
            grid: RasterGrid::from_fn(width, height, f),
        }
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn grid(&self) -> &RasterGrid<f64> {
        &self.grid
    }

    /// (z_bg, z_cast, z_att) at one pixel.
    #[inline]
    pub fn logits(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.grid.pixel(x, y);
        [p[0], p[1], p[2]]
    }
}

/// Unit surface normals in the camera-centric frame. A camera-facing plane
/// has normal `(0, 0, -1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    grid: RasterGrid<f64>,
}

/// Tolerance on the per-pixel unit-norm invariant.
pub const NORMAL_NORM_TOLERANCE: f64 = 1e-3;

impl NormalMap {
    pub fn new(grid: RasterGrid<f64>) -> Result<Self> {
        if grid.channels() != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                actual: grid.channels(),
            });
        }
        for (x, y) in grid.coords() {
            let p = grid.pixel(x, y);
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if (norm - 1.0).abs() > NORMAL_NORM_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "normal at ({x}, {y}) has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { grid })
    }

    /// Builds from a closure returning unnormalized vectors; each is scaled to
    /// unit length. Errors on a near-zero vector.
    pub fn from_fn_normalized(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut zero_at = None;
        let grid = RasterGrid::from_fn(width, height, |x, y| {
            let [a, b, c] = f(x, y);
            let norm = (a * a + b * b + c * c).sqrt();
            if norm < 1e-12 {
                zero_at = Some((x, y));
                [0.0, 0.0, -1.0]
            } else {
                [a / norm, b / norm, c / norm]
            }
        });
        if let Some((x, y)) = zero_at {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize zero normal at ({x}, {y})"
            )));
        }
        Ok(Self { grid })
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn grid(&self) -> &RasterGrid<f64> {
        &self.grid
    }

    #[inline]
    pub fn normal(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.grid.pixel(x, y);
        [p[0], p[1], p[2]]
    }
}

/// Unit 3-vector pointing from the light source toward the scene,
/// in the camera-centric frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightDirection {
    x: f64,
    y: f64,
    z: f64,
}

impl LightDirection {
    /// Normalizes the given components; errors on a near-zero vector.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::ZeroVector { norm });
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, v: [f64; 3]) -> f64 {
        self.x * v[0] + self.y * v[1] + self.z * v[2]
    }

    pub fn negated(&self) -> LightDirection {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// WSRD-style full-shadow mask from a shadow / shadow-free image pair:
/// a pixel is shadow when the mean channel difference (shadow-free minus
/// shadow) exceeds `threshold`. Inputs are RGB grids in [0,1].
pub fn derive_full_mask(
    shadow_img: &RasterGrid<f64>,
    shadow_free_img: &RasterGrid<f64>,
    threshold: f64,
) -> Result<BinaryMask> {
    ensure_same_dims("shadow vs shadow-free image", shadow_img, shadow_free_img)?;
    if shadow_img.channels() != shadow_free_img.channels() {
        return Err(Error::ChannelMismatch {
            expected: shadow_img.channels(),
            actual: shadow_free_img.channels(),
        });
    }
    let channels = shadow_img.channels() as f64;
    Ok(BinaryMask::from_fn(
        shadow_img.width(),
        shadow_img.height(),
        |x, y| {
            let diff: f64 = shadow_free_img
                .pixel(x, y)
                .iter()
                .zip(shadow_img.pixel(x, y))
                .map(|(f, s)| f - s)
                .sum();
            diff / channels > threshold
        },
    ))
}
