//! Detector abstraction, a deterministic non-neural baseline detector, and
//! the closed-loop refinement that alternates detection with light fitting.
//!
//! Baseline scoring, per pixel (all constants in [`DetectorConfig`]):
//!
//! ```text
//! lum    = mean(r, g, b)
//! margin = evidence_gain * (intensity_threshold - lum)   // >0 in the dark
//! curv   = min(1, max-4-neighbor-normal-angle / curvature_ref)
//! z_bg   = -margin
//! z_cast = margin + split_gain * (1 - 2 curv)
//! z_att  = margin + split_gain * (2 curv - 1)
//!        + prior_gain * logit(clamp(prior, 1e-3, 1 - 1e-3))
//! ```
//!
//! Dark pixels are shadow; flat neighborhoods lean cast, curved ones lean
//! attached; the geometric prior shifts the attached logit. Connected
//! non-background components smaller than `min_region` are suppressed to
//! background. An all-ones prior is neutral-positive, which is exactly the
//! first-iteration state of the refinement loop; later iterations feed back
//! the soft orientation map of the fitted light, which can only lower
//! attached scores where geometry says "lit".

use crate::error::{Error, Result};
use crate::geometry::soft_partial_attached_map;
use crate::light::{fit_light_from_attached, LightFitConfig, LightFitResult};
use crate::raster::{
    ensure_same_dims, BinaryMask, LogitField, NormalMap, RasterGrid, ShadowClass, TriClassMask,
};

/// Scoring constants of the baseline detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Luminance below this reads as shadow evidence. Must lie in (0, 1).
    pub intensity_threshold: f64,
    /// Weight of the prior's log-odds on the attached logit.
    pub prior_gain: f64,
    /// Non-background components smaller than this are suppressed.
    pub min_region: usize,
    /// Logit scale of the luminance margin.
    pub evidence_gain: f64,
    /// Magnitude of the flat-vs-curved cast/attached split.
    pub split_gain: f64,
    /// Neighbor-normal angle (radians) treated as fully curved.
    pub curvature_ref: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            intensity_threshold: 0.2,
            prior_gain: 1.0,
            min_region: 8,
            evidence_gain: 12.0,
            split_gain: 0.5,
            curvature_ref: 0.01,
        }
    }
}

/// A shadow detector: maps image + normals + prior to per-pixel logits.
pub trait Detector {
    fn detect(
        &self,
        image: &RasterGrid<f64>,
        normals: &NormalMap,
        prior: &RasterGrid<f64>,
    ) -> Result<LogitField>;
}

/// The deterministic intensity/curvature/prior detector described in the
/// module docs.
#[derive(Debug, Clone, Default)]
pub struct BaselineDetector {
    pub config: DetectorConfig,
}

impl BaselineDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self { config }
    }
}

/// Largest per-pixel angle (radians) between a normal and its 4-neighbors.
/// Exactly zero on constant-normal regions.
pub fn normal_variation(normals: &NormalMap) -> RasterGrid<f64> {
    let (w, h) = (normals.width(), normals.height());
    RasterGrid::from_fn(w, h, |x, y| {
        let n = normals.normal(x, y);
        let mut worst: f64 = 0.0;
        let neighbors = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in neighbors {
            if nx < w && ny < h {
                let m = normals.normal(nx, ny);
                let dot = (n[0] * m[0] + n[1] * m[1] + n[2] * m[2]).clamp(-1.0, 1.0);
                worst = worst.max(dot.acos());
            }
        }
        [worst]
    })
}

impl Detector for BaselineDetector {
    fn detect(
        &self,
        image: &RasterGrid<f64>,
        normals: &NormalMap,
        prior: &RasterGrid<f64>,
    ) -> Result<LogitField> {
        let cfg = &self.config;
        if !(cfg.intensity_threshold > 0.0 && cfg.intensity_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "intensity_threshold must lie in (0, 1), got {}",
                cfg.intensity_threshold
            )));
        }
        ensure_same_dims("image vs normals", image, normals.grid())?;
        ensure_same_dims("image vs prior", image, prior)?;
        if prior.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: prior.channels(),
            });
        }
        if prior.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("prior must lie in [0, 1]".into()));
        }

        let variation = normal_variation(normals);
        let mut logits = LogitField::from_fn(image.width(), image.height(), |x, y| {
            let p = image.pixel(x, y);
            let lum = p.iter().sum::<f64>() / p.len() as f64;
            let margin = cfg.evidence_gain * (cfg.intensity_threshold - lum);
            let curv = (variation.get(x, y, 0) / cfg.curvature_ref).min(1.0);
            let prior_odds = {
                let q = prior.get(x, y, 0).clamp(1e-3, 1.0 - 1e-3);
                (q / (1.0 - q)).ln()
            };
            [
                -margin,
                margin + cfg.split_gain * (1.0 - 2.0 * curv),
                margin + cfg.split_gain * (2.0 * curv - 1.0) + cfg.prior_gain * prior_odds,
            ]
        });

        if cfg.min_region > 1 {
            suppress_small_components(&mut logits, cfg.min_region);
        }
        Ok(logits)
    }
}

/// Per-pixel argmax; ties resolve in class order bg < cast < attached.
pub fn logits_to_mask(logits: &LogitField) -> TriClassMask {
    let labels = RasterGrid::from_fn(logits.width(), logits.height(), |x, y| {
        let z = logits.logits(x, y);
        let mut best = 0usize;
        for c in 1..3 {
            if z[c] > z[best] {
                best = c;
            }
        }
        [best as u8]
    });
    TriClassMask::new(labels, BinaryMask::new(logits.width(), logits.height()))
        .expect("argmax labels are valid")
}

/// Pushes pixels of small non-background components back to background by
/// raising their background logit above the shadow logits.
fn suppress_small_components(logits: &mut LogitField, min_region: usize) {
    let mask = logits_to_mask(logits);
    let (w, h) = (mask.width(), mask.height());
    let mut visited = vec![false; w * h];
    let non_bg = |x: usize, y: usize| mask.class(x, y) != ShadowClass::Background;

    let mut component = Vec::new();
    let mut stack = Vec::new();
    let mut to_suppress = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if visited[y * w + x] || !non_bg(x, y) {
                continue;
            }
            component.clear();
            stack.push((x, y));
            visited[y * w + x] = true;
            while let Some((cx, cy)) = stack.pop() {
                component.push((cx, cy));
                let neighbors = [
                    (cx.wrapping_sub(1), cy),
                    (cx + 1, cy),
                    (cx, cy.wrapping_sub(1)),
                    (cx, cy + 1),
                ];
                for (nx, ny) in neighbors {
                    if nx < w && ny < h && !visited[ny * w + nx] && non_bg(nx, ny) {
                        visited[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            if component.len() < min_region {
                to_suppress.extend_from_slice(&component);
            }
        }
    }

    if to_suppress.is_empty() {
        return;
    }
    let mut grid = logits.grid().clone();
    for (x, y) in to_suppress {
        let z = logits.logits(x, y);
        grid.set(x, y, 0, z[1].max(z[2]) + 1.0);
    }
    *logits = LogitField::new(grid).expect("finite by construction");
}

/// One pass of the refinement loop.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Prior probability map fed to the detector this pass (all-ones on the
    /// first pass).
    pub prior: RasterGrid<f64>,
    pub logits: LogitField,
    pub mask: TriClassMask,
    /// Fit outcome; `None` when the pass had no usable attached evidence.
    pub light: Option<LightFitResult>,
    /// Soft orientation map handed to the next pass. When the fit failed this
    /// carries the incoming prior forward unchanged.
    pub partial_map: RasterGrid<f64>,
    /// Set when the fit failed and the prior was carried.
    pub fit_carried: bool,
}

/// Records of every pass, in order.
#[derive(Debug, Clone)]
pub struct RefinementTrace {
    pub records: Vec<IterationRecord>,
}

impl RefinementTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_mask(&self) -> &TriClassMask {
        &self.records.last().expect("at least one iteration").mask
    }

    /// Most recent successful light fit, if any pass produced one.
    pub fn final_light(&self) -> Option<&LightFitResult> {
        self.records.iter().rev().find_map(|r| r.light.as_ref())
    }
}

/// Pixels the light fit trusts: non-background detections dilated by two
/// pixels, restricted to where the normals actually bend.
fn light_fit_region(mask: &TriClassMask, variation: &RasterGrid<f64>) -> BinaryMask {
    let non_bg = BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        mask.class(x, y) != ShadowClass::Background
    });
    let curved = BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        variation.get(x, y, 0) > 1e-4
    });
    non_bg.dilate(2).and(&curved)
}

/// Runs the closed loop: detect, read off the attached prediction, fit the
/// light, and feed the soft orientation map of the fitted light back as the
/// next pass's prior. The first pass always uses an all-ones prior. A failed
/// fit (for example, no attached evidence) carries the previous prior forward
/// and is recorded, never aborting the loop.
pub fn refine_loop(
    image: &RasterGrid<f64>,
    normals: &NormalMap,
    detector: &dyn Detector,
    iterations: usize,
    light_cfg: &LightFitConfig,
) -> Result<RefinementTrace> {
    if iterations < 1 {
        return Err(Error::InvalidParameter("iterations must be >= 1".into()));
    }
    let variation = normal_variation(normals);
    let mut prior = RasterGrid::filled(image.width(), image.height(), 1, 1.0f64);
    let mut records = Vec::with_capacity(iterations);

    for _ in 0..iterations {
        let logits = detector.detect(image, normals, &prior)?;
        let mask = logits_to_mask(&logits);
        let region = light_fit_region(&mask, &variation);
        let evidence = mask.class_mask(ShadowClass::Attached).and(&region);

        let fit = fit_light_from_attached(normals, &evidence, &region, light_cfg);
        let (light, partial_map, fit_carried) = match fit {
            Ok(result) => {
                let soft =
                    soft_partial_attached_map(normals, &result.direction, light_cfg.steepness)?;
                (Some(result), soft, false)
            }
            Err(_) => (None, prior.clone(), true),
        };

        records.push(IterationRecord {
            prior: prior.clone(),
            logits,
            mask,
            light,
            partial_map: partial_map.clone(),
            fit_carried,
        });
        prior = partial_map;
    }

    Ok(RefinementTrace { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_bundle;
    use crate::oracle::{render_scene, single_sphere_suite};

    fn all_ones(w: usize, h: usize) -> RasterGrid<f64> {
        RasterGrid::filled(w, h, 1, 1.0f64)
    }

    #[test]
    fn logits_to_mask_examples() {
        let field = LogitField::from_fn(3, 1, |x, _| match x {
            0 => [1.0, 0.0, 0.0],
            1 => [0.0, 2.0, 1.0],
            _ => [0.0, 1.0, 1.0],
        });
        let mask = logits_to_mask(&field);
        assert_eq!(mask.class(0, 0), ShadowClass::Background);
        assert_eq!(mask.class(1, 0), ShadowClass::Cast);
        // Tie between cast and attached resolves to cast.
        assert_eq!(mask.class(2, 0), ShadowClass::Cast);
    }

    #[test]
    fn bright_image_is_all_background() {
        let image = RasterGrid::filled(8, 8, 3, 1.0f64);
        let normals =
            NormalMap::from_fn_normalized(8, 8, |_, _| [0.0, 0.0, -1.0]).unwrap();
        let detector = BaselineDetector::default();
        let logits = detector.detect(&image, &normals, &all_ones(8, 8)).unwrap();
        let mask = logits_to_mask(&logits);
        for (x, y) in mask.labels().coords() {
            assert_eq!(mask.class(x, y), ShadowClass::Background);
        }
    }

    #[test]
    fn dark_curved_prior_pixels_go_attached() {
        let image = RasterGrid::filled(9, 9, 3, 0.05f64);
        // A bumpy surface so every neighborhood is curved.
        let normals = NormalMap::from_fn_normalized(9, 9, |x, y| {
            [((x * 37 + y * 11) % 7) as f64 * 0.1 - 0.3, 0.2, -1.0]
        })
        .unwrap();
        let detector = BaselineDetector::new(DetectorConfig {
            min_region: 1,
            ..DetectorConfig::default()
        });
        let logits = detector.detect(&image, &normals, &all_ones(9, 9)).unwrap();
        let mask = logits_to_mask(&logits);
        let interior_attached = (1..8)
            .flat_map(|y| (1..8).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.class(x, y) == ShadowClass::Attached)
            .count();
        assert!(interior_attached > 40, "got {interior_attached}");
    }

    #[test]
    fn small_components_are_suppressed() {
        // One dark pixel in a bright field.
        let mut image = RasterGrid::filled(9, 9, 3, 1.0f64);
        for c in 0..3 {
            image.set(4, 4, c, 0.0);
        }
        let normals =
            NormalMap::from_fn_normalized(9, 9, |_, _| [0.0, 0.0, -1.0]).unwrap();
        let detector = BaselineDetector::default();
        let logits = detector.detect(&image, &normals, &all_ones(9, 9)).unwrap();
        let mask = logits_to_mask(&logits);
        assert_eq!(mask.class(4, 4), ShadowClass::Background);

        // With suppression off it stays shadow.
        let detector = BaselineDetector::new(DetectorConfig {
            min_region: 1,
            ..DetectorConfig::default()
        });
        let logits = detector.detect(&image, &normals, &all_ones(9, 9)).unwrap();
        assert_ne!(
            logits_to_mask(&logits).class(4, 4),
            ShadowClass::Background
        );
    }

    #[test]
    fn single_iteration_equals_plain_detect() {
        let spec = &single_sphere_suite(1, 50, 96, 96)[0];
        let bundle = render_scene(spec).unwrap();
        let detector = BaselineDetector::default();
        let trace = refine_loop(
            &bundle.image,
            &bundle.normals,
            &detector,
            1,
            &LightFitConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.iterations(), 1);

        let direct = detector
            .detect(&bundle.image, &bundle.normals, &all_ones(96, 96))
            .unwrap();
        assert_eq!(trace.records[0].logits, direct);
        // The first-pass prior is exactly all-ones.
        assert!(trace.records[0].prior.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn refine_loop_is_deterministic() {
        let spec = &single_sphere_suite(1, 51, 96, 96)[0];
        let bundle = render_scene(spec).unwrap();
        let detector = BaselineDetector::default();
        let cfg = LightFitConfig::default();
        let a = refine_loop(&bundle.image, &bundle.normals, &detector, 3, &cfg).unwrap();
        let b = refine_loop(&bundle.image, &bundle.normals, &detector, 3, &cfg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.logits, rb.logits);
            assert_eq!(ra.light, rb.light);
            assert_eq!(ra.partial_map, rb.partial_map);
        }
    }

    #[test]
    fn failed_fit_carries_prior_without_aborting() {
        let image = RasterGrid::filled(16, 16, 3, 1.0f64);
        let normals =
            NormalMap::from_fn_normalized(16, 16, |_, _| [0.0, 0.0, -1.0]).unwrap();
        let trace = refine_loop(
            &image,
            &normals,
            &BaselineDetector::default(),
            3,
            &LightFitConfig::default(),
        )
        .unwrap();
        assert_eq!(trace.iterations(), 3);
        for record in &trace.records {
            assert!(record.fit_carried);
            assert!(record.light.is_none());
            assert!(record.partial_map.data().iter().all(|&v| v == 1.0));
        }
        assert!(trace.final_light().is_none());
    }

    #[test]
    fn true_light_prior_never_hurts_attached_ber() {
        let detector = BaselineDetector::default();
        for spec in single_sphere_suite(6, 60, 96, 96) {
            let bundle = render_scene(&spec).unwrap();
            let ones = all_ones(96, 96);
            let informed = soft_partial_attached_map(&bundle.normals, &bundle.light, 25.0).unwrap();

            let ber_of = |prior: &RasterGrid<f64>| {
                let logits = detector.detect(&bundle.image, &bundle.normals, prior).unwrap();
                let report =
                    evaluate_bundle(&logits_to_mask(&logits), &bundle.gt, &bundle.object_mask)
                        .unwrap();
                report.attached.expect("object present").ber
            };
            let baseline = ber_of(&ones);
            let guided = ber_of(&informed);
            assert!(
                guided <= baseline + 1e-9,
                "true-light prior worsened BER: {guided:.2} vs {baseline:.2}"
            );
        }
    }

    #[test]
    fn one_pass_full_shadow_ber_bound() {
        // Regression bound on the baseline detector over a small suite.
        let detector = BaselineDetector::default();
        let mut total = 0.0;
        let suite = single_sphere_suite(8, 61, 96, 96);
        for spec in &suite {
            let bundle = render_scene(spec).unwrap();
            let logits = detector
                .detect(&bundle.image, &bundle.normals, &all_ones(96, 96))
                .unwrap();
            let report =
                evaluate_bundle(&logits_to_mask(&logits), &bundle.gt, &bundle.object_mask).unwrap();
            total += report.full.ber;
        }
        let mean = total / suite.len() as f64;
        assert!(mean <= 15.0, "one-pass full-shadow BER {mean:.2} above bound");
    }
}
