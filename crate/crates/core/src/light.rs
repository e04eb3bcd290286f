//! Directional light recovery from shadow evidence.
//!
//! Two routes are provided:
//!
//! - The centroid heuristic: the in-plane light direction is the displacement
//!   from an object's centroid to its cast shadow's centroid, and the depth
//!   component's sign follows whether the shadow surface lies deeper or
//!   shallower than the object.
//! - A numerical fit: the light direction minimizing the weighted BCE between
//!   the soft orientation-only attached map and an observed attached mask,
//!   found by a deterministic Fibonacci-lattice sweep plus golden-section
//!   refinement in spherical coordinates.

use crate::error::{Error, Result};
use crate::geometry::{sigmoid, DepthMap, DEFAULT_STEEPNESS};
use crate::raster::{ensure_same_dims, BinaryMask, LightDirection, NormalMap};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before logarithms.
const PROB_CLAMP: f64 = 1e-7;

/// Search settings for [`fit_light_from_attached`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightFitConfig {
    /// Unit-sphere candidate directions in the coarse sweep.
    pub coarse_samples: usize,
    /// Golden-section refinement steps around the best coarse candidate.
    pub refine_steps: usize,
    /// Sigmoid steepness of the soft attached map.
    pub steepness: f64,
    /// Upper bound on the positive-class BCE weight (#neg / #pos).
    pub positive_weight_cap: f64,
}

impl Default for LightFitConfig {
    fn default() -> Self {
        Self {
            coarse_samples: 1000,
            refine_steps: 20,
            steepness: DEFAULT_STEEPNESS,
            positive_weight_cap: 20.0,
        }
    }
}

/// Outcome of a light fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightFitResult {
    pub direction: LightDirection,
    /// Mean weighted BCE at the returned direction.
    pub residual: f64,
    /// Total objective evaluations (coarse sweep plus refinement).
    pub candidates_evaluated: usize,
}

/// Unit in-plane direction (image frame, +x right +y down) from the object
/// centroid toward the cast-shadow centroid.
pub fn centroid_direction_2d(object_mask: &BinaryMask, cast_mask: &BinaryMask) -> Result<[f64; 2]> {
    ensure_same_dims("object vs cast mask", object_mask.grid(), cast_mask.grid())?;
    let (ox, oy) = object_mask
        .centroid()
        .ok_or(Error::EmptyMask { which: "object" })?;
    let (sx, sy) = cast_mask
        .centroid()
        .ok_or(Error::EmptyMask { which: "cast" })?;
    let (dx, dy) = (sx - ox, sy - oy);
    let distance = (dx * dx + dy * dy).sqrt();
    if distance < 0.5 {
        return Err(Error::CoincidentCentroids { distance });
    }
    Ok([dx / distance, dy / distance])
}

/// Depth differences within this fraction of the depth range count as equal,
/// collapsing the heuristic to a pure in-plane direction.
pub const DEPTH_EQUALITY_BAND: f64 = 1e-3;

/// Full 3D heuristic: in-plane centroid direction plus a depth component
/// whose sign says whether the shadow lies deeper (into the scene, z > 0) or
/// shallower (toward the camera, z < 0) than the object. The magnitude is the
/// median depth difference over the centroid displacement, with `depth_scale`
/// converting depth units to pixels (1.0 when depth is already in pixels).
pub fn heuristic_light_3d(
    object_mask: &BinaryMask,
    cast_mask: &BinaryMask,
    depth: &DepthMap,
    depth_scale: f64,
) -> Result<LightDirection> {
    if !(depth_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "depth_scale must be positive, got {depth_scale}"
        )));
    }
    ensure_same_dims("object mask vs depth", object_mask.grid(), depth.grid())?;
    let [dx, dy] = centroid_direction_2d(object_mask, cast_mask)?;

    let (ox, oy) = object_mask.centroid().expect("checked non-empty");
    let (sx, sy) = cast_mask.centroid().expect("checked non-empty");
    let displacement = ((sx - ox).powi(2) + (sy - oy).powi(2)).sqrt();

    let object_depth = depth.median_over(object_mask).expect("checked non-empty");
    let cast_depth = depth.median_over(cast_mask).expect("checked non-empty");
    let delta = cast_depth - object_depth;

    let (lo, hi) = depth.value_range();
    if delta.abs() <= DEPTH_EQUALITY_BAND * (hi - lo) {
        return LightDirection::new(dx, dy, 0.0);
    }
    let z = delta.signum() * delta.abs() / (displacement * depth_scale);
    LightDirection::new(dx, dy, z)
}

/// Angle between two unit directions, in degrees.
pub fn angular_error(a: &LightDirection, b: &LightDirection) -> f64 {
    a.dot(b.components()).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Deterministic Fibonacci lattice of `n` unit directions covering the whole
/// sphere.
pub fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

struct FitObjective {
    /// (normal, is_attached) per region pixel.
    samples: Vec<([f64; 3], bool)>,
    positive_weight: f64,
    steepness: f64,
}

impl FitObjective {
    fn eval(&self, dir: [f64; 3]) -> f64 {
        let mut total = 0.0;
        for &(n, attached) in &self.samples {
            let dot = n[0] * dir[0] + n[1] * dir[1] + n[2] * dir[2];
            let p = sigmoid(self.steepness * dot).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total += if attached {
                -self.positive_weight * p.ln()
            } else {
                -(1.0 - p).ln()
            };
        }
        total / self.samples.len() as f64
    }
}

fn spherical_to_cartesian(theta: f64, phi: f64) -> [f64; 3] {
    let st = theta.sin();
    [st * phi.cos(), st * phi.sin(), theta.cos()]
}

/// Fits a light direction to an observed attached-shadow mask by minimizing
/// the mean weighted BCE of the soft orientation map over the region pixels.
///
/// The search is a coarse sweep over a Fibonacci lattice of
/// `config.coarse_samples` directions (ties broken by lowest lattice index)
/// followed by `config.refine_steps` golden-section steps on the spherical
/// coordinates around the best candidate. The whole procedure is
/// deterministic for a fixed config.
pub fn fit_light_from_attached(
    normals: &NormalMap,
    attached_mask: &BinaryMask,
    region: &BinaryMask,
    config: &LightFitConfig,
) -> Result<LightFitResult> {
    ensure_same_dims("normals vs attached mask", normals.grid(), attached_mask.grid())?;
    ensure_same_dims("normals vs region mask", normals.grid(), region.grid())?;
    if config.coarse_samples < 16 {
        return Err(Error::InvalidParameter(format!(
            "coarse_samples must be >= 16, got {}",
            config.coarse_samples
        )));
    }
    if !(config.steepness > 0.0) {
        return Err(Error::InvalidParameter("steepness must be positive".into()));
    }
    if region.is_empty() {
        return Err(Error::EmptyMask { which: "region" });
    }
    if !attached_mask.is_subset_of(region) {
        return Err(Error::AttachedOutsideRegion);
    }

    let mut samples = Vec::with_capacity(region.count_ones());
    let (mut positives, mut negatives) = (0usize, 0usize);
    for (x, y) in region.coords() {
        if region.get(x, y) {
            let attached = attached_mask.get(x, y);
            if attached {
                positives += 1;
            } else {
                negatives += 1;
            }
            samples.push((normals.normal(x, y), attached));
        }
    }
    if positives == 0 {
        return Err(Error::EmptyAttachedEvidence);
    }
    if negatives == 0 {
        return Err(Error::AttachedCoversRegion);
    }

    let objective = FitObjective {
        samples,
        positive_weight: (negatives as f64 / positives as f64).min(config.positive_weight_cap),
        steepness: config.steepness,
    };

    // Coarse sweep; strict comparison keeps the lowest lattice index on ties.
    let lattice = fibonacci_directions(config.coarse_samples);
    let mut evaluations = 0usize;
    let mut best_dir = lattice[0];
    let mut best_value = f64::INFINITY;
    for dir in &lattice {
        let value = objective.eval(*dir);
        evaluations += 1;
        if value < best_value {
            best_value = value;
            best_dir = *dir;
        }
    }

    // Local refinement in (theta, phi) around the coarse winner. The bracket
    // spans twice the lattice spacing on each side, which safely contains the
    // cell of the true minimum.
    let spacing = (4.0 * std::f64::consts::PI / config.coarse_samples as f64).sqrt();
    let mut theta = best_dir[2].clamp(-1.0, 1.0).acos();
    let mut phi = best_dir[1].atan2(best_dir[0]);
    let (mut t_lo, mut t_hi) = (theta - 2.0 * spacing, theta + 2.0 * spacing);
    let (mut p_lo, mut p_hi) = (phi - 2.0 * spacing, phi + 2.0 * spacing);
    const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

    for _ in 0..config.refine_steps {
        // One golden-section contraction on theta at the current phi.
        let t1 = t_hi - INV_GOLDEN * (t_hi - t_lo);
        let t2 = t_lo + INV_GOLDEN * (t_hi - t_lo);
        let f1 = objective.eval(spherical_to_cartesian(t1, phi));
        let f2 = objective.eval(spherical_to_cartesian(t2, phi));
        evaluations += 2;
        if f1 < f2 {
            t_hi = t2;
        } else {
            t_lo = t1;
        }
        let (tc, fc) = if f1 < f2 { (t1, f1) } else { (t2, f2) };
        if fc < best_value {
            best_value = fc;
            best_dir = spherical_to_cartesian(tc, phi);
            theta = tc;
        }

        // And one on phi at the current theta.
        let p1 = p_hi - INV_GOLDEN * (p_hi - p_lo);
        let p2 = p_lo + INV_GOLDEN * (p_hi - p_lo);
        let g1 = objective.eval(spherical_to_cartesian(theta, p1));
        let g2 = objective.eval(spherical_to_cartesian(theta, p2));
        evaluations += 2;
        if g1 < g2 {
            p_hi = p2;
        } else {
            p_lo = p1;
        }
        let (pc, gc) = if g1 < g2 { (p1, g1) } else { (p2, g2) };
        if gc < best_value {
            best_value = gc;
            best_dir = spherical_to_cartesian(theta, pc);
            phi = pc;
        }
    }

    Ok(LightFitResult {
        direction: LightDirection::new(best_dir[0], best_dir[1], best_dir[2])?,
        residual: best_value,
        candidates_evaluated: evaluations,
    })
}
