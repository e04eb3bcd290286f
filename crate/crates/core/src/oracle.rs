//! Analytic synthetic scenes: spheres over a ground plane under a single
//! directional light, rendered orthographically along `+z`.
//!
//! Every label is computed in closed form (sphere normals, plane normal) or
//! by exact ray casting (shadow visibility), so these bundles serve as ground
//! truth for the geometry, light-estimation, and pipeline modules. Attached
//! ground truth includes light blocked by *other* spheres, which is exactly
//! what the orientation-only partial map cannot see.
//!
//! Units are pixels in all three axes; depth stores the ray-hit `z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{
    BinaryMask, LightDirection, NormalMap, RasterGrid, TriClassMask,
};

/// Sphere with center and radius in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: [f64; 3], radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub spheres: Vec<Sphere>,
    /// z of the ground plane; spheres satisfy `center.z + radius <= plane_depth`.
    pub plane_depth: f64,
    pub light: LightDirection,
    pub width: usize,
    pub height: usize,
    pub ambient: f64,
    pub albedo: f64,
    pub seed: u64,
}

pub const DEFAULT_AMBIENT: f64 = 0.15;
pub const DEFAULT_ALBEDO: f64 = 0.8;

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateScene("zero-area image".into()));
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::DegenerateScene(format!("sphere {i} has radius {}", s.radius)));
            }
            if s.center[2] + s.radius > self.plane_depth + 1e-9 {
                return Err(Error::DegenerateScene(format!(
                    "sphere {i} pokes through the ground plane"
                )));
            }
            if s.center[2] - s.radius < 0.0 {
                return Err(Error::DegenerateScene(format!(
                    "sphere {i} extends behind the camera plane"
                )));
            }
        }
        Ok(())
    }
}

/// Rendered ground truth for one scene.
#[derive(Debug, Clone)]
pub struct LabelBundle {
    /// Grayscale-as-RGB shaded image in [0,1].
    pub image: RasterGrid<f64>,
    pub normals: NormalMap,
    pub depth: crate::geometry::DepthMap,
    /// Tri-class ground truth; the undefined mask is empty for oracle scenes.
    pub gt: TriClassMask,
    pub object_mask: BinaryMask,
    pub light: LightDirection,
}

/// True iff the ray `point + t * (-light)`, `t > 1e-6`, intersects any of the
/// spheres. Grazing (tangent) rays count as blocked.
pub fn raycast_blocked(point: [f64; 3], light: &LightDirection, spheres: &[Sphere]) -> bool {
    let d = [-light.x(), -light.y(), -light.z()];
    for s in spheres {
        let oc = [
            point[0] - s.center[0],
            point[1] - s.center[1],
            point[2] - s.center[2],
        ];
        // |oc + t d|^2 = r^2 with |d| = 1.
        let b = oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2];
        let c = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - s.radius * s.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            continue;
        }
        let t_far = -b + disc.sqrt();
        if t_far > 1e-6 {
            return true;
        }
    }
    false
}

/// Renders the scene and all ground-truth labels.
pub fn render_scene(spec: &SceneSpec) -> Result<LabelBundle> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let light = spec.light;

    let mut image = RasterGrid::filled(w, h, 3, 0.0f64);
    let mut depth = RasterGrid::filled(w, h, 1, 0.0f64);
    let mut normal_grid = RasterGrid::filled(w, h, 3, 0.0f64);
    let mut labels = RasterGrid::filled(w, h, 1, 0u8);
    let mut object = BinaryMask::new(w, h);

    for y in 0..h {
        for x in 0..w {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;

            // Front-most sphere hit along +z, if any.
            let mut hit: Option<(usize, f64)> = None;
            for (i, s) in spec.spheres.iter().enumerate() {
                let dx = px - s.center[0];
                let dy = py - s.center[1];
                let q = s.radius * s.radius - dx * dx - dy * dy;
                if q >= 0.0 {
                    let z = s.center[2] - q.sqrt();
                    if hit.is_none_or(|(_, best)| z < best) {
                        hit = Some((i, z));
                    }
                }
            }

            let (point, normal, is_object, sphere_idx) = match hit {
                Some((i, z)) => {
                    let s = &spec.spheres[i];
                    let p = [px, py, z];
                    let n = [
                        (p[0] - s.center[0]) / s.radius,
                        (p[1] - s.center[1]) / s.radius,
                        (p[2] - s.center[2]) / s.radius,
                    ];
                    (p, n, true, Some(i))
                }
                None => ([px, py, spec.plane_depth], [0.0, 0.0, -1.0], false, None),
            };

            let dot = light.dot(normal);
            let blocked = match sphere_idx {
                // Self-shadowing of a convex sphere is exactly the dot > 0
                // case, so only other spheres can add blocking.
                Some(i) => {
                    let others: Vec<Sphere> = spec
                        .spheres
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, s)| *s)
                        .collect();
                    raycast_blocked(point, &light, &others)
                }
                None => raycast_blocked(point, &light, &spec.spheres),
            };

            let label = if is_object {
                object.set(x, y, true);
                u8::from(dot > 0.0 || blocked) * 2
            } else {
                u8::from(blocked)
            };
            labels.set(x, y, 0, label);

            let lit = if blocked { 0.0 } else { (-dot).max(0.0) };
            let intensity = (spec.ambient + spec.albedo * lit).clamp(0.0, 1.0);
            for c in 0..3 {
                image.set(x, y, c, intensity);
                normal_grid.set(x, y, c, normal[c]);
            }
            depth.set(x, y, 0, point[2]);
        }
    }

    Ok(LabelBundle {
        image,
        normals: NormalMap::new(normal_grid)?,
        depth: crate::geometry::DepthMap::new(depth)?,
        gt: TriClassMask::new(labels, BinaryMask::new(w, h))?,
        object_mask: object,
        light,
    })
}

/// Renders the shadow-free counterpart: occlusion disabled and two-sided
/// shading (`|n . l|`), approximating a fill-lit capture of the same scene.
/// Pixels that are lit in [`render_scene`] are bit-identical here.
pub fn render_shadow_free(spec: &SceneSpec) -> Result<RasterGrid<f64>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut image = RasterGrid::filled(w, h, 3, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let mut normal = [0.0, 0.0, -1.0];
            let mut best = f64::INFINITY;
            for s in &spec.spheres {
                let dx = px - s.center[0];
                let dy = py - s.center[1];
                let q = s.radius * s.radius - dx * dx - dy * dy;
                if q >= 0.0 {
                    let z = s.center[2] - q.sqrt();
                    if z < best {
                        best = z;
                        normal = [dx / s.radius, dy / s.radius, -q.sqrt() / s.radius];
                    }
                }
            }
            let lit = spec.light.dot(normal).abs();
            let intensity = (spec.ambient + spec.albedo * lit).clamp(0.0, 1.0);
            for c in 0..3 {
                image.set(x, y, c, intensity);
            }
        }
    }
    Ok(image)
}

fn light_from_cap(rng: &mut ChaCha8Rng, z_lo: f64, z_hi: f64) -> LightDirection {
    let z: f64 = rng.random_range(z_lo..z_hi);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    LightDirection::new(r * phi.cos(), r * phi.sin(), z).expect("non-zero by construction")
}

/// Deterministic pseudo-random scene suite: 1-3 non-overlapping spheres with
/// radii 10-25% of the image width; 80% of lights drawn on the upper
/// hemisphere (z > 0.1), the rest with z < 0. Same seed, same suite.
pub fn scene_suite(count: usize, seed: u64, width: usize, height: usize) -> Vec<SceneSpec> {
    assert!(count >= 1, "suite needs at least one scene");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane_depth = width.max(height) as f64;
    (0..count)
        .map(|_| {
            let n_spheres = rng.random_range(1..=3usize);
            let mut spheres: Vec<Sphere> = Vec::with_capacity(n_spheres);
            while spheres.len() < n_spheres {
                let radius = rng.random_range(0.10..0.25) * width as f64;
                let cx = rng.random_range(radius + 2.0..width as f64 - radius - 2.0);
                let cy = rng.random_range(radius + 2.0..height as f64 - radius - 2.0);
                let cz = rng.random_range(radius + 1.0..=plane_depth - radius);
                let candidate = Sphere::new([cx, cy, cz], radius);
                let overlaps = spheres.iter().any(|s| {
                    let d = [
                        s.center[0] - candidate.center[0],
                        s.center[1] - candidate.center[1],
                        s.center[2] - candidate.center[2],
                    ];
                    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    dist < s.radius + candidate.radius + 1.0
                });
                if !overlaps {
                    spheres.push(candidate);
                }
            }
            let light = if rng.random_bool(0.2) {
                light_from_cap(&mut rng, -0.95, -0.05)
            } else {
                light_from_cap(&mut rng, 0.1, 0.95)
            };
            SceneSpec {
                spheres,
                plane_depth,
                light,
                width,
                height,
                ambient: DEFAULT_AMBIENT,
                albedo: DEFAULT_ALBEDO,
                seed: rng.random(),
            }
        })
        .collect()
}

/// Suite of single floating spheres under upper-hemisphere lights, used to
/// exercise the orientation-only map where it is exact.
pub fn single_sphere_suite(count: usize, seed: u64, width: usize, height: usize) -> Vec<SceneSpec> {
    assert!(count >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane_depth = width.max(height) as f64;
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.12..0.22) * width as f64;
            let cx = rng.random_range(radius + 2.0..width as f64 - radius - 2.0);
            let cy = rng.random_range(radius + 2.0..height as f64 - radius - 2.0);
            let cz = rng.random_range(radius + 1.0..=plane_depth - radius);
            SceneSpec {
                spheres: vec![Sphere::new([cx, cy, cz], radius)],
                plane_depth,
                light: light_from_cap(&mut rng, 0.15, 0.85),
                width,
                height,
                ambient: DEFAULT_AMBIENT,
                albedo: DEFAULT_ALBEDO,
                seed: rng.random(),
            }
        })
        .collect()
}

/// Suite of spheres resting on the ground plane with lights that keep the
/// cast shadow inside the frame; the setting for the centroid heuristic.
pub fn sphere_on_plane_suite(count: usize, seed: u64, width: usize, height: usize) -> Vec<SceneSpec> {
    assert!(count >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane_depth = width.max(height) as f64;
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.08..0.12) * width as f64;
            let cx = rng.random_range(0.42..0.58) * width as f64;
            let cy = rng.random_range(0.42..0.58) * height as f64;
            SceneSpec {
                spheres: vec![Sphere::new([cx, cy, plane_depth - radius], radius)],
                plane_depth,
                light: light_from_cap(&mut rng, 0.5, 0.85),
                width,
                height,
                ambient: DEFAULT_AMBIENT,
                albedo: DEFAULT_ALBEDO,
                seed: rng.random(),
            }
        })
        .collect()
}

/// Suite of two-sphere scenes where the nearer sphere blocks light from part
/// of the farther one, creating attached shadow beyond the orientation-only
/// map.
pub fn two_sphere_occlusion_suite(
    count: usize,
    seed: u64,
    width: usize,
    height: usize,
) -> Vec<SceneSpec> {
    assert!(count >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane_depth = width.max(height) as f64;
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.12..0.16) * width as f64;
            let light = light_from_cap(&mut rng, 0.3, 0.5);
            let lxy = (light.x() * light.x() + light.y() * light.y()).sqrt();
            // Bias the far sphere down-light so the near sphere stays in frame.
            let offset = 0.17 * width as f64;
            let bx = width as f64 / 2.0 + offset * light.x() / lxy;
            let by = height as f64 / 2.0 + offset * light.y() / lxy;
            let bz = rng.random_range(0.62..0.78) * plane_depth;
            let far = Sphere::new([bx, by, bz], radius);
            // Near sphere sits up-light from the far one, close enough for its
            // shadow cone to cover a solid cap.
            let gap = 2.4 * radius;
            let near = Sphere::new(
                [
                    bx - gap * light.x(),
                    by - gap * light.y(),
                    bz - gap * light.z(),
                ],
                radius,
            );
            SceneSpec {
                spheres: vec![far, near],
                plane_depth,
                light,
                width,
                height,
                ambient: DEFAULT_AMBIENT,
                albedo: DEFAULT_ALBEDO,
                seed: rng.random(),
            }
        })
        .collect()
}
