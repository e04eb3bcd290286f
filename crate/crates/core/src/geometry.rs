//! Depth-to-normal conversion and the geometry-derived partial attached
//! shadow map.
//!
//! The partial map marks surface points whose orientation faces away from the
//! light (`n . l > 0`). It is "partial" because orientation alone cannot see
//! geometric blocking: a surface facing the light but occluded by another
//! body is still in shadow, and only the ray-casting oracle captures that.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LightDirection, NormalMap, RasterGrid};

/// Relative depth along `+z`; larger values are deeper into the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: RasterGrid<f64>,
}

impl DepthMap {
    pub fn new(grid: RasterGrid<f64>) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: grid.channels(),
            });
        }
        if grid.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "depth values must be finite and non-negative".into(),
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

    pub fn grid(&self) -> &RasterGrid<f64> {
        &self.grid
    }

    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y, 0)
    }

    /// Median depth over the set pixels of a mask.
    pub fn median_over(&self, mask: &BinaryMask) -> Option<f64> {
        let mut values: Vec<f64> = mask
            .coords()
            .filter(|&(x, y)| mask.get(x, y))
            .map(|(x, y)| self.depth(x, y))
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite depths"));
        let n = values.len();
        Some(if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        })
    }

    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.grid.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Hard and soft forms of the orientation-only attached-shadow map, produced
/// from the same normals, light, and steepness.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAttachedMap {
    pub hard: BinaryMask,
    pub soft: RasterGrid<f64>,
}

impl PartialAttachedMap {
    pub fn compute(normals: &NormalMap, light: &LightDirection, steepness: f64) -> Result<Self> {
        Ok(Self {
            hard: partial_attached_map(normals, light),
            soft: soft_partial_attached_map(normals, light, steepness)?,
        })
    }
}

/// Default sigmoid steepness for the soft partial map; transitions within
/// roughly +-0.1 of the terminator in dot space.
pub const DEFAULT_STEEPNESS: f64 = 25.0;

/// Converts relative depth to unit surface normals using central differences
/// with the given pixel step. Border pixels replicate the nearest pixel with
/// a full stencil. A fronto-parallel plane yields `(0, 0, -1)`.
pub fn normals_from_depth(depth: &DepthMap, step: usize) -> Result<NormalMap> {
    if step == 0 {
        return Err(Error::InvalidParameter("step must be >= 1".into()));
    }
    let (w, h) = (depth.width(), depth.height());
    let needed = 2 * step + 1;
    if w < needed || h < needed {
        return Err(Error::GridTooSmall {
            needed,
            actual_w: w,
            actual_h: h,
        });
    }

    NormalMap::from_fn_normalized(w, h, |x, y| {
        // Clamp into the interior so every stencil is a true central difference.
        let cx = x.clamp(step, w - 1 - step);
        let cy = y.clamp(step, h - 1 - step);
        let dz_dx = (depth.depth(cx + step, cy) - depth.depth(cx - step, cy)) / (2.0 * step as f64);
        let dz_dy = (depth.depth(cx, cy + step) - depth.depth(cx, cy - step)) / (2.0 * step as f64);
        // Camera-facing orientation of the tangent-plane normal (z < 0).
        [dz_dx, dz_dy, -1.0]
    })
}

/// Eq-style hard partial map: 1 where `n . l > 0` (facing away from the
/// light), 0 where `n . l <= 0`. Ties map to 0.
pub fn partial_attached_map(normals: &NormalMap, light: &LightDirection) -> BinaryMask {
    BinaryMask::from_fn(normals.width(), normals.height(), |x, y| {
        light.dot(normals.normal(x, y)) > 0.0
    })
}

/// Differentiable relaxation: `sigmoid(k * n . l)` per pixel. Exactly 0.5 on
/// the terminator.
pub fn soft_partial_attached_map(
    normals: &NormalMap,
    light: &LightDirection,
    steepness: f64,
) -> Result<RasterGrid<f64>> {
    if !(steepness > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "steepness must be positive, got {steepness}"
        )));
    }
    Ok(RasterGrid::from_fn(normals.width(), normals.height(), |x, y| {
        [sigmoid(steepness * light.dot(normals.normal(x, y)))]
    }))
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
