//! Gradient-verification harness: random objective instances whose analytic
//! gradients are compared against central finite differences.
//!
//! Instances are drawn away from the non-differentiable sets (hinge corners,
//! L1 kinks, probability clamps, zero-norm predictions) so the comparison is
//! meaningful. Used by the test suite and the `loss-check` CLI command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    attached_alignment_with_grad, direction_l1_with_grad, numeric_gradient, seg_loss,
    seg_loss_with_grad, type_loss_with_grad, unit_norm_with_grad, LossWeights,
};
use crate::raster::{BinaryMask, LogitField, RasterGrid, TriClassMask};

/// Finite-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Maximum allowed relative error between analytic and numeric gradients.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckSummary {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub instances: usize,
    pub tolerance: f64,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub summaries: Vec<GradCheckSummary>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.summaries.iter().all(|s| s.passed())
    }
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

struct Instance {
    logits: LogitField,
    gt: TriClassMask,
    y_union: BinaryMask,
    soft_map: RasterGrid<f64>,
    y_att: BinaryMask,
    l_hat: [f64; 3],
    l_star: [f64; 3],
}

const W: usize = 6;
const H: usize = 5;

fn draw_instance(rng: &mut ChaCha8Rng, weights: &LossWeights) -> Instance {
    let undefined = BinaryMask::from_fn(W, H, |_, _| rng.random_bool(0.1));
    let labels = RasterGrid::from_fn(W, H, |x, y| {
        [if undefined.get(x, y) {
            0
        } else {
            rng.random_range(0..3u8)
        }]
    });
    let gt = TriClassMask::new(labels, undefined).expect("labels consistent by construction");

    let m = weights.margin;
    let logits = LogitField::from_fn(W, H, |_, _| loop {
        let z = [
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ];
        // Keep the cast-attached difference away from both hinge corners.
        let d = z[1] - z[2];
        if (d - m).abs() > 1e-3 && (d + m).abs() > 1e-3 {
            return z;
        }
    });

    let soft_map = RasterGrid::from_fn(W, H, |_, _| [rng.random_range(0.05..0.95)]);
    let mut y_att = BinaryMask::from_fn(W, H, |_, _| rng.random_bool(0.3));
    // Keep the class-weight path off its degenerate branches.
    if y_att.is_empty() {
        y_att.set(0, 0, true);
    }
    if y_att.count_ones() == W * H {
        y_att.set(W - 1, H - 1, false);
    }

    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    let l_star = [r * phi.cos(), r * phi.sin(), z];
    let l_hat = loop {
        let candidate = [
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
        ];
        let norm: f64 = candidate.iter().map(|v| v * v).sum::<f64>().sqrt();
        let near_kink = candidate
            .iter()
            .zip(&l_star)
            .any(|(a, b)| (a - b).abs() < 1e-2);
        // Away from the L1 kinks, the zero-norm singularity, and the flat
        // spot of the norm penalty at exactly 1.
        if norm > 0.1 && (norm - 1.0).abs() > 1e-2 && !near_kink {
            break candidate;
        }
    };

    let y_union = gt.union_mask();
    Instance {
        logits,
        gt,
        y_union,
        soft_map,
        y_att,
        l_hat,
        l_star,
    }
}

fn logits_from_flat(flat: &[f64]) -> LogitField {
    LogitField::new(RasterGrid::from_raw(W, H, 3, flat.to_vec()).expect("length fixed"))
        .expect("finite perturbations")
}

/// Runs `instances` random gradient checks per loss and reports the worst
/// relative error for each.
pub fn run_gradient_checks(seed: u64, instances: usize) -> GradCheckReport {
    let weights = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 5];

    for _ in 0..instances {
        let inst = draw_instance(&mut rng, &weights);
        let flat_logits = inst.logits.grid().data().to_vec();

        // L_seg w.r.t. logits.
        let (_, grad) = seg_loss_with_grad(&inst.logits, &inst.y_union, &weights).unwrap();
        let numeric = numeric_gradient(
            |flat| seg_loss(&logits_from_flat(flat), &inst.y_union, &weights).unwrap(),
            &flat_logits,
            GRAD_CHECK_STEP,
        );
        worst[0] = worst[0].max(rel_error(grad.data(), &numeric));

        // L_type (ce + lambda_dist * hinge) w.r.t. logits.
        let (_, grad) = type_loss_with_grad(&inst.logits, &inst.gt, &weights).unwrap();
        let numeric = numeric_gradient(
            |flat| {
                let ((ce, dist), _) =
                    type_loss_with_grad(&logits_from_flat(flat), &inst.gt, &weights).unwrap();
                ce + weights.lambda_dist * dist
            },
            &flat_logits,
            GRAD_CHECK_STEP,
        );
        worst[1] = worst[1].max(rel_error(grad.data(), &numeric));

        // L_att w.r.t. the soft map.
        let (_, _, grad) =
            attached_alignment_with_grad(&inst.soft_map, &inst.y_att, &weights).unwrap();
        let flat_soft = inst.soft_map.data().to_vec();
        let numeric = numeric_gradient(
            |flat| {
                let soft = RasterGrid::from_raw(W, H, 1, flat.to_vec()).unwrap();
                attached_alignment_with_grad(&soft, &inst.y_att, &weights)
                    .unwrap()
                    .0
            },
            &flat_soft,
            GRAD_CHECK_STEP,
        );
        worst[2] = worst[2].max(rel_error(grad.data(), &numeric));

        // L_dir and L_unit w.r.t. the predicted light vector.
        let (_, grad) = direction_l1_with_grad(inst.l_hat, inst.l_star);
        let numeric = numeric_gradient(
            |v| direction_l1_with_grad([v[0], v[1], v[2]], inst.l_star).0,
            &inst.l_hat,
            GRAD_CHECK_STEP,
        );
        worst[3] = worst[3].max(rel_error(&grad, &numeric));

        let (_, grad) = unit_norm_with_grad(inst.l_hat);
        let numeric = numeric_gradient(
            |v| unit_norm_with_grad([v[0], v[1], v[2]]).0,
            &inst.l_hat,
            GRAD_CHECK_STEP,
        );
        worst[4] = worst[4].max(rel_error(&grad, &numeric));
    }

    let names = ["seg", "type", "att", "dir", "unit"];
    GradCheckReport {
        summaries: names
            .iter()
            .zip(worst)
            .map(|(name, max_rel_error)| GradCheckSummary {
                name,
                max_rel_error,
                instances,
                tolerance: GRAD_CHECK_TOLERANCE,
            })
            .collect(),
    }
}
