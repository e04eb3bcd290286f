//! Reference implementations of the training objectives, with analytic
//! gradients that are verified against central finite differences.
//!
//! The objective splits into a shadow part and a light part:
//!
//! - `seg`: BCE-with-logits plus a Dice regularizer on the union shadow
//!   logit `s = LSE(z_cast, z_att) - z_bg` against the union mask (cast,
//!   attached, and undefined pixels all count as shadow).
//! - `type`: multi-class cross-entropy over non-undefined pixels plus a
//!   class-conditional hinge with margin `m` on `d = z_cast - z_att`,
//!   averaged separately over cast-labeled and attached-labeled pixels.
//! - `att` / `dir` / `unit`: weighted BCE aligning the soft orientation map
//!   to the attached ground truth, an L1 pull of the predicted light toward
//!   the heuristic target, and a squared unit-norm penalty.
//!
//! Undefined pixels supervise only the union term; they are excluded from
//! the cross-entropy and from both hinge sets.

use crate::error::{Error, Result};
use crate::geometry::sigmoid;
use crate::raster::{ensure_same_dims, BinaryMask, LogitField, RasterGrid, ShadowClass, TriClassMask};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before logarithms when
/// they arrive as values rather than logits.
const PROB_CLAMP: f64 = 1e-7;

/// Dice smoothing constant.
const DICE_SMOOTHING: f64 = 1.0;

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_dice: f64,
    pub lambda_dist: f64,
    pub lambda_att: f64,
    pub lambda_dir: f64,
    pub lambda_unit: f64,
    /// Hinge margin on the cast-minus-attached logit difference.
    pub margin: f64,
    /// Cap on the positive-class weight of the attached-alignment BCE.
    pub positive_weight_cap: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dice: 0.1,
            lambda_dist: 0.2,
            lambda_att: 0.4,
            lambda_dir: 0.5,
            lambda_unit: 0.1,
            margin: 0.2,
            positive_weight_cap: 20.0,
        }
    }
}

/// All scalar terms of one objective evaluation.
///
/// Invariants (up to 1e-12): `shadow = seg + type_term`,
/// `light = lambda_att * att + lambda_dir * dir + lambda_unit * unit`,
/// `total = shadow + light`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub seg: f64,
    /// Combined classification term: cross-entropy plus weighted hinge.
    pub type_term: f64,
    /// Raw hinge value before weighting.
    pub dist: f64,
    pub att: f64,
    pub dir: f64,
    pub unit: f64,
    pub shadow: f64,
    pub light: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Assembles the breakdown from raw component values.
    pub fn from_components(
        seg: f64,
        ce: f64,
        dist: f64,
        att: f64,
        dir: f64,
        unit: f64,
        weights: &LossWeights,
    ) -> Self {
        let type_term = ce + weights.lambda_dist * dist;
        let shadow = seg + type_term;
        let light =
            weights.lambda_att * att + weights.lambda_dir * dir + weights.lambda_unit * unit;
        Self {
            seg,
            type_term,
            dist,
            att,
            dir,
            unit,
            shadow,
            light,
            total: shadow + light,
        }
    }
}

/// Attached-alignment BCE plus the two light-direction regularizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightLossTerms {
    pub att: f64,
    pub dir: f64,
    pub unit: f64,
    /// Set when the attached ground truth was empty and the positive weight
    /// fell back to the cap.
    pub degenerate_attached: bool,
}

#[inline]
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn lse3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Union shadow logit per pixel: `LSE(z_cast, z_att) - z_bg`, computed with
/// the max-shift so large logits cannot overflow.
pub fn union_logit(logits: &LogitField) -> RasterGrid<f64> {
    RasterGrid::from_fn(logits.width(), logits.height(), |x, y| {
        let [bg, cast, att] = logits.logits(x, y);
        [lse2(cast, att) - bg]
    })
}

/// BCE-with-logits and Dice terms of the union segmentation loss.
pub fn seg_loss_parts(logits: &LogitField, y_union: &BinaryMask) -> Result<(f64, f64)> {
    ensure_same_dims("logits vs union mask", logits.grid(), y_union.grid())?;
    let s = union_logit(logits);
    let n = s.pixel_count() as f64;

    let mut bce = 0.0;
    let (mut intersection, mut p_sum, mut y_sum) = (0.0, 0.0, 0.0);
    for (x, y) in s.coords() {
        let si = s.get(x, y, 0);
        let yi = f64::from(u8::from(y_union.get(x, y)));
        bce += softplus(si) - yi * si;
        let p = sigmoid(si);
        intersection += p * yi;
        p_sum += p;
        y_sum += yi;
    }
    bce /= n;
    let dice = 1.0
        - (2.0 * intersection + DICE_SMOOTHING) / (p_sum + y_sum + DICE_SMOOTHING);
    Ok((bce, dice))
}

/// Union segmentation loss: `BCE + lambda_dice * Dice`.
pub fn seg_loss(logits: &LogitField, y_union: &BinaryMask, weights: &LossWeights) -> Result<f64> {
    let (bce, dice) = seg_loss_parts(logits, y_union)?;
    Ok(bce + weights.lambda_dice * dice)
}

/// [`seg_loss`] together with its gradient w.r.t. the logits
/// (3-channel grid in the (bg, cast, att) order).
pub fn seg_loss_with_grad(
    logits: &LogitField,
    y_union: &BinaryMask,
    weights: &LossWeights,
) -> Result<(f64, RasterGrid<f64>)> {
    ensure_same_dims("logits vs union mask", logits.grid(), y_union.grid())?;
    let s = union_logit(logits);
    let n = s.pixel_count() as f64;

    let mut bce = 0.0;
    let (mut intersection, mut p_sum, mut y_sum) = (0.0, 0.0, 0.0);
    for (x, y) in s.coords() {
        let si = s.get(x, y, 0);
        let yi = f64::from(u8::from(y_union.get(x, y)));
        bce += softplus(si) - yi * si;
        let p = sigmoid(si);
        intersection += p * yi;
        p_sum += p;
        y_sum += yi;
    }
    bce /= n;
    let a = 2.0 * intersection + DICE_SMOOTHING;
    let b = p_sum + y_sum + DICE_SMOOTHING;
    let dice = 1.0 - a / b;
    let value = bce + weights.lambda_dice * dice;

    let grad = RasterGrid::from_fn(logits.width(), logits.height(), |x, y| {
        let [_, cast, att] = logits.logits(x, y);
        let si = s.get(x, y, 0);
        let yi = f64::from(u8::from(y_union.get(x, y)));
        let p = sigmoid(si);
        // dL/ds: BCE part plus Dice part chained through p = sigmoid(s).
        let d_bce = (p - yi) / n;
        let d_dice_dp = -(2.0 * yi * b - a) / (b * b);
        let dl_ds = d_bce + weights.lambda_dice * d_dice_dp * p * (1.0 - p);
        // ds/dz: softmax weights over the two shadow logits, -1 for bg.
        let w_cast = sigmoid(cast - att);
        [-dl_ds, dl_ds * w_cast, dl_ds * (1.0 - w_cast)]
    });
    Ok((value, grad))
}

/// Cross-entropy and hinge terms of the classification loss; see the module
/// docs for the masking rules. Returns `(ce, dist)`.
pub fn type_loss(
    logits: &LogitField,
    y_type: &TriClassMask,
    weights: &LossWeights,
) -> Result<(f64, f64)> {
    type_loss_with_grad(logits, y_type, weights).map(|(v, _)| v)
}

/// [`type_loss`] plus the gradient of the combined `ce + lambda_dist * dist`
/// w.r.t. the logits.
pub fn type_loss_with_grad(
    logits: &LogitField,
    y_type: &TriClassMask,
    weights: &LossWeights,
) -> Result<((f64, f64), RasterGrid<f64>)> {
    ensure_same_dims("logits vs type labels", logits.grid(), y_type.labels())?;
    let m = weights.margin;
    let undefined = y_type.undefined();

    let mut valid = 0usize;
    let (mut cast_count, mut att_count) = (0usize, 0usize);
    for (x, y) in logits.grid().coords() {
        if undefined.get(x, y) {
            continue;
        }
        valid += 1;
        match y_type.class(x, y) {
            ShadowClass::Cast => cast_count += 1,
            ShadowClass::Attached => att_count += 1,
            ShadowClass::Background => {}
        }
    }

    let mut ce = 0.0;
    let mut dist = 0.0;
    let mut grad = RasterGrid::filled(logits.width(), logits.height(), 3, 0.0f64);
    for (x, y) in logits.grid().coords() {
        if undefined.get(x, y) {
            continue;
        }
        let z = logits.logits(x, y);
        let lse = lse3(z[0], z[1], z[2]);
        let label = y_type.class(x, y).label() as usize;
        ce += lse - z[label];
        for c in 0..3 {
            let softmax = (z[c] - lse).exp();
            let indicator = f64::from(c == label);
            grad.set(x, y, c, (softmax - indicator) / valid as f64);
        }

        let d = z[1] - z[2];
        match y_type.class(x, y) {
            ShadowClass::Cast if m - d > 0.0 => {
                dist += (m - d) / cast_count as f64;
                let scale = weights.lambda_dist / cast_count as f64;
                grad.set(x, y, 1, grad.get(x, y, 1) - scale);
                grad.set(x, y, 2, grad.get(x, y, 2) + scale);
            }
            ShadowClass::Attached if m + d > 0.0 => {
                dist += (m + d) / att_count as f64;
                let scale = weights.lambda_dist / att_count as f64;
                grad.set(x, y, 1, grad.get(x, y, 1) + scale);
                grad.set(x, y, 2, grad.get(x, y, 2) - scale);
            }
            _ => {}
        }
    }
    if valid > 0 {
        ce /= valid as f64;
    }
    Ok(((ce, dist), grad))
}

/// Weighted BCE aligning a soft attached map in [0,1] to the attached ground
/// truth, with its gradient w.r.t. the soft map. The positive-class weight is
/// `#neg / #pos` capped by the config; an empty ground truth falls back to
/// the cap and is flagged.
pub fn attached_alignment_with_grad(
    soft_map: &RasterGrid<f64>,
    y_att: &BinaryMask,
    weights: &LossWeights,
) -> Result<(f64, bool, RasterGrid<f64>)> {
    ensure_same_dims("soft map vs attached mask", soft_map, y_att.grid())?;
    if soft_map.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: soft_map.channels(),
        });
    }
    if soft_map.data().iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParameter(
            "soft map values must lie in [0, 1]".into(),
        ));
    }

    let n = soft_map.pixel_count() as f64;
    let positives = y_att.count_ones();
    let negatives = soft_map.pixel_count() - positives;
    let degenerate = positives == 0;
    let w_pos = if degenerate {
        weights.positive_weight_cap
    } else {
        (negatives as f64 / positives as f64).min(weights.positive_weight_cap)
    };

    let mut value = 0.0;
    let grad = RasterGrid::from_fn(soft_map.width(), soft_map.height(), |x, y| {
        let p = soft_map.get(x, y, 0).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let interior = soft_map.get(x, y, 0) > PROB_CLAMP && soft_map.get(x, y, 0) < 1.0 - PROB_CLAMP;
        if y_att.get(x, y) {
            value += -w_pos * p.ln();
            [if interior { -w_pos / p / n } else { 0.0 }]
        } else {
            value += -(1.0 - p).ln();
            [if interior { 1.0 / (1.0 - p) / n } else { 0.0 }]
        }
    });
    Ok((value / n, degenerate, grad))
}

/// L1 distance between the predicted light vector and the heuristic target,
/// with its gradient w.r.t. the prediction.
pub fn direction_l1_with_grad(l_hat: [f64; 3], l_star: [f64; 3]) -> (f64, [f64; 3]) {
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for c in 0..3 {
        let diff = l_hat[c] - l_star[c];
        value += diff.abs();
        grad[c] = diff.signum();
    }
    (value, grad)
}

/// Squared deviation of the Euclidean norm from 1, with gradient.
pub fn unit_norm_with_grad(l_hat: [f64; 3]) -> (f64, [f64; 3]) {
    let norm = (l_hat[0] * l_hat[0] + l_hat[1] * l_hat[1] + l_hat[2] * l_hat[2]).sqrt();
    let value = (norm - 1.0) * (norm - 1.0);
    if norm < 1e-12 {
        return (value, [0.0; 3]);
    }
    let scale = 2.0 * (norm - 1.0) / norm;
    (value, [scale * l_hat[0], scale * l_hat[1], scale * l_hat[2]])
}

/// The three light-estimation terms.
pub fn light_loss(
    soft_map: &RasterGrid<f64>,
    y_att: &BinaryMask,
    l_hat: [f64; 3],
    l_star: &crate::raster::LightDirection,
    weights: &LossWeights,
) -> Result<LightLossTerms> {
    let (att, degenerate, _) = attached_alignment_with_grad(soft_map, y_att, weights)?;
    let (dir, _) = direction_l1_with_grad(l_hat, l_star.components());
    let (unit, _) = unit_norm_with_grad(l_hat);
    Ok(LightLossTerms {
        att,
        dir,
        unit,
        degenerate_attached: degenerate,
    })
}

/// Evaluates the full objective and assembles the breakdown.
pub fn total_loss(
    logits: &LogitField,
    gt: &TriClassMask,
    soft_map: &RasterGrid<f64>,
    l_hat: [f64; 3],
    l_star: &crate::raster::LightDirection,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let y_union = gt.union_mask();
    let y_att = gt.class_mask(ShadowClass::Attached);
    let seg = seg_loss(logits, &y_union, weights)?;
    let (ce, dist) = type_loss(logits, gt, weights)?;
    let terms = light_loss(soft_map, &y_att, l_hat, l_star, weights)?;
    Ok(LossBreakdown::from_components(
        seg, ce, dist, terms.att, terms.dir, terms.unit, weights,
    ))
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let mut perturbed = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        perturbed[i] = point[i] + step;
        let plus = f(&perturbed);
        perturbed[i] = point[i] - step;
        let minus = f(&perturbed);
        perturbed[i] = point[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

pub mod gradcheck;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::LightDirection;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn uniform_logits(w: usize, h: usize, z: [f64; 3]) -> LogitField {
        LogitField::from_fn(w, h, |_, _| z)
    }

    #[test]
    fn union_logit_closed_forms() {
        let s = union_logit(&uniform_logits(1, 1, [0.0, 0.0, 0.0]));
        assert!((s.get(0, 0, 0) - LN_2).abs() < 1e-12);

        let s = union_logit(&uniform_logits(1, 1, [5.0, 0.0, 0.0]));
        assert!((s.get(0, 0, 0) - (LN_2 - 5.0)).abs() < 1e-12);

        let s = union_logit(&uniform_logits(1, 1, [0.0, 1000.0, 0.0]));
        assert_eq!(s.get(0, 0, 0), 1000.0);

        let s = union_logit(&uniform_logits(1, 1, [0.0, 1e6, -1e6]));
        assert!(s.get(0, 0, 0).is_finite());
    }

    #[test]
    fn seg_loss_saturated_correct() {
        let y = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let logits = LogitField::from_fn(4, 4, |x, _| {
            if x < 2 {
                [-30.0, 0.0, 0.0] // s = ln2 + 30
            } else {
                [30.0, 0.0, 0.0] // s = ln2 - 30
            }
        });
        let (bce, dice) = seg_loss_parts(&logits, &y).unwrap();
        assert!(bce <= 1e-9, "bce = {bce:e}");
        assert!(dice <= 1e-6, "dice = {dice:e}");
    }

    #[test]
    fn seg_loss_all_ones_closed_form() {
        // s = 0 everywhere needs LSE(z_cast, z_att) = z_bg; use (ln2, 0, 0).
        let n = 64.0;
        let y = BinaryMask::from_fn(8, 8, |_, _| true);
        let logits = uniform_logits(8, 8, [LN_2, 0.0, 0.0]);
        let (bce, dice) = seg_loss_parts(&logits, &y).unwrap();
        assert!((bce - LN_2).abs() < 1e-12);
        let expected_dice = 1.0 - (2.0 * 0.5 * n + 1.0) / (0.5 * n + n + 1.0);
        assert!((dice - expected_dice).abs() < 1e-12);
        assert!((expected_dice - 1.0 / 3.0).abs() < 0.01);
    }

    // Independent scalar re-implementation, summing pixel by pixel straight
    // from the definitions.
    fn seg_loss_reference(logits: &LogitField, y: &BinaryMask, weights: &LossWeights) -> f64 {
        let n = (logits.width() * logits.height()) as f64;
        let mut bce = 0.0;
        let (mut inter, mut psum, mut ysum) = (0.0, 0.0, 0.0);
        for (x, yy) in logits.grid().coords() {
            let [bg, cast, att] = logits.logits(x, yy);
            let s = (cast.exp() + att.exp()).ln() - bg;
            let p = 1.0 / (1.0 + (-s).exp());
            let label = f64::from(u8::from(y.get(x, yy)));
            bce += -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
            inter += p * label;
            psum += p;
            ysum += label;
        }
        bce / n + weights.lambda_dice * (1.0 - (2.0 * inter + 1.0) / (psum + ysum + 1.0))
    }

    #[test]
    fn seg_loss_matches_reference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let logits = LogitField::from_fn(8, 8, |_, _| {
                [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ]
            });
            let y = BinaryMask::from_fn(8, 8, |_, _| rng.random_bool(0.5));
            let weights = LossWeights::default();
            let ours = seg_loss(&logits, &y, &weights).unwrap();
            let reference = seg_loss_reference(&logits, &y, &weights);
            assert!((ours - reference).abs() < 1e-12);
        }
    }

    fn labels_from_fn(
        w: usize,
        h: usize,
        f: impl Fn(usize, usize) -> u8,
        undefined: BinaryMask,
    ) -> TriClassMask {
        let labels = RasterGrid::from_fn(w, h, |x, y| {
            [if undefined.get(x, y) { 0 } else { f(x, y) }]
        });
        TriClassMask::new(labels, undefined).unwrap()
    }

    #[test]
    fn hinge_hand_values() {
        let m = LossWeights::default().margin;
        // One cast pixel with d = 0.5: hinge contributes 0.
        let gt = labels_from_fn(1, 1, |_, _| 1, BinaryMask::new(1, 1));
        let logits = uniform_logits(1, 1, [0.0, 0.5, 0.0]);
        let (_, dist) = type_loss(&logits, &gt, &LossWeights::default()).unwrap();
        assert_eq!(dist, 0.0);

        // Cast pixel at the tie d = 0: contributes exactly m.
        let logits = uniform_logits(1, 1, [0.0, 0.0, 0.0]);
        let (_, dist) = type_loss(&logits, &gt, &LossWeights::default()).unwrap();
        assert!((dist - m).abs() < 1e-15);

        // Attached pixel at d = 0: also m.
        let gt = labels_from_fn(1, 1, |_, _| 2, BinaryMask::new(1, 1));
        let (_, dist) = type_loss(&logits, &gt, &LossWeights::default()).unwrap();
        assert!((dist - m).abs() < 1e-15);

        // Hinge boundaries: cast with d = m and attached with d = -m both 0.
        let gt_cast = labels_from_fn(1, 1, |_, _| 1, BinaryMask::new(1, 1));
        let logits_at_m = uniform_logits(1, 1, [0.0, m, 0.0]);
        let (_, dist) = type_loss(&logits_at_m, &gt_cast, &LossWeights::default()).unwrap();
        assert_eq!(dist, 0.0);
        let gt_att = labels_from_fn(1, 1, |_, _| 2, BinaryMask::new(1, 1));
        let logits_at_neg_m = uniform_logits(1, 1, [0.0, 0.0, m]);
        let (_, dist) = type_loss(&logits_at_neg_m, &gt_att, &LossWeights::default()).unwrap();
        assert_eq!(dist, 0.0);
    }

    #[test]
    fn empty_hinge_sets_contribute_zero() {
        let gt = labels_from_fn(2, 2, |_, _| 0, BinaryMask::new(2, 2));
        let logits = uniform_logits(2, 2, [0.0, 5.0, -5.0]);
        let (ce, dist) = type_loss(&logits, &gt, &LossWeights::default()).unwrap();
        assert_eq!(dist, 0.0);
        assert!(ce > 0.0);
    }

    // Brute-force per-pixel oracle for the classification loss.
    fn type_loss_reference(
        logits: &LogitField,
        gt: &TriClassMask,
        weights: &LossWeights,
    ) -> (f64, f64) {
        let mut valid = Vec::new();
        for (x, y) in logits.grid().coords() {
            if !gt.undefined().get(x, y) {
                valid.push((x, y));
            }
        }
        let mut ce = 0.0;
        for &(x, y) in &valid {
            let z = logits.logits(x, y);
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            ce += -(z[gt.class(x, y).label() as usize].exp() / denom).ln();
        }
        ce /= valid.len() as f64;

        let m = weights.margin;
        let cast: Vec<_> = valid
            .iter()
            .filter(|&&(x, y)| gt.class(x, y) == ShadowClass::Cast)
            .collect();
        let att: Vec<_> = valid
            .iter()
            .filter(|&&(x, y)| gt.class(x, y) == ShadowClass::Attached)
            .collect();
        let mut dist = 0.0;
        if !cast.is_empty() {
            dist += cast
                .iter()
                .map(|&&(x, y)| {
                    let z = logits.logits(x, y);
                    (m - (z[1] - z[2])).max(0.0)
                })
                .sum::<f64>()
                / cast.len() as f64;
        }
        if !att.is_empty() {
            dist += att
                .iter()
                .map(|&&(x, y)| {
                    let z = logits.logits(x, y);
                    (m + (z[1] - z[2])).max(0.0)
                })
                .sum::<f64>()
                / att.len() as f64;
        }
        (ce, dist)
    }

    #[test]
    fn type_loss_matches_reference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let logits = LogitField::from_fn(8, 8, |_, _| {
                [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ]
            });
            let undefined = BinaryMask::from_fn(8, 8, |_, _| rng.random_bool(0.1));
            let labels: Vec<u8> = (0..64).map(|_| rng.random_range(0..3u8)).collect();
            let gt = labels_from_fn(8, 8, |x, y| labels[y * 8 + x], undefined);
            let weights = LossWeights::default();
            let (ce, dist) = type_loss(&logits, &gt, &weights).unwrap();
            let (ce_ref, dist_ref) = type_loss_reference(&logits, &gt, &weights);
            assert!((ce - ce_ref).abs() < 1e-12);
            assert!((dist - dist_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn light_loss_closed_forms() {
        let soft = RasterGrid::filled(2, 2, 1, 0.5f64);
        let y = BinaryMask::from_fn(2, 2, |x, _| x == 0);
        let l_star = LightDirection::new(0.0, 0.0, 1.0).unwrap();
        let weights = LossWeights::default();

        let terms = light_loss(&soft, &y, [0.0, 0.0, 1.0], &l_star, &weights).unwrap();
        assert_eq!(terms.dir, 0.0);
        assert_eq!(terms.unit, 0.0);
        assert!(!terms.degenerate_attached);

        let terms = light_loss(&soft, &y, [0.0, 0.0, 2.0], &l_star, &weights).unwrap();
        assert_eq!(terms.dir, 1.0);
        assert_eq!(terms.unit, 1.0);
    }

    #[test]
    fn attached_alignment_saturated_correct() {
        let y = BinaryMask::from_fn(4, 4, |x, _| x < 1);
        let soft = RasterGrid::from_fn(4, 4, |x, _| [if x < 1 { 1.0 } else { 0.0 }]);
        let (att, degenerate, _) =
            attached_alignment_with_grad(&soft, &y, &LossWeights::default()).unwrap();
        assert!(att <= 1e-6, "att = {att:e}");
        assert!(!degenerate);
    }

    #[test]
    fn attached_alignment_empty_gt_flags_degenerate() {
        let y = BinaryMask::new(4, 4);
        let soft = RasterGrid::filled(4, 4, 1, 0.3f64);
        let (att, degenerate, _) =
            attached_alignment_with_grad(&soft, &y, &LossWeights::default()).unwrap();
        assert!(degenerate);
        assert!(att > 0.0);
    }

    #[test]
    fn total_loss_zero_components() {
        let weights = LossWeights::default();
        let b = LossBreakdown::from_components(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, &weights);
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn total_loss_unit_components_arithmetic() {
        let weights = LossWeights::default();
        let b = LossBreakdown::from_components(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, &weights);
        assert!((b.type_term - 1.2).abs() < 1e-15);
        assert!((b.shadow - 2.2).abs() < 1e-15);
        assert!((b.light - 1.0).abs() < 1e-15);
        assert!((b.total - 3.2).abs() < 1e-15);
    }

    #[test]
    fn total_loss_breakdown_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let weights = LossWeights::default();
        for _ in 0..50 {
            let logits = LogitField::from_fn(6, 6, |_, _| {
                [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ]
            });
            let undefined = BinaryMask::from_fn(6, 6, |_, _| rng.random_bool(0.1));
            let labels: Vec<u8> = (0..36).map(|_| rng.random_range(0..3u8)).collect();
            let gt = labels_from_fn(6, 6, |x, y| labels[y * 6 + x], undefined);
            let soft = RasterGrid::from_fn(6, 6, |_, _| [rng.random_range(0.05..0.95)]);
            let l_hat = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let l_star = LightDirection::new(0.3, -0.5, 0.81).unwrap();
            let b = total_loss(&logits, &gt, &soft, l_hat, &l_star, &weights).unwrap();

            assert!((b.shadow - (b.seg + b.type_term)).abs() < 1e-12);
            let light = weights.lambda_att * b.att
                + weights.lambda_dir * b.dir
                + weights.lambda_unit * b.unit;
            assert!((b.light - light).abs() < 1e-12);
            assert!((b.total - (b.shadow + b.light)).abs() < 1e-12);
            for v in [b.seg, b.type_term, b.dist, b.att, b.dir, b.unit] {
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn numeric_gradient_examples() {
        let grad = numeric_gradient(|v| v[0] * v[0], &[3.0], 1e-5);
        assert!((grad[0] - 6.0).abs() < 1e-8);

        let grad = numeric_gradient(|_| 4.2, &[1.0, 2.0, 3.0], 1e-5);
        assert!(grad.iter().all(|g| g.abs() < 1e-10));

        let grad = numeric_gradient(|v| v.iter().map(|x| x.abs()).sum(), &[2.0, -3.0], 1e-5);
        assert!((grad[0] - 1.0).abs() < 1e-10);
        assert!((grad[1] + 1.0).abs() < 1e-10);
    }

    proptest! {
        // Losses are per-pixel means/sums, so permuting pixel order leaves
        // them unchanged up to float reassociation.
        #[test]
        fn prop_losses_permutation_invariant(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 24usize;
            let z: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                    ]
                })
                .collect();
            let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();

            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }

            let weights = LossWeights::default();
            let logits = LogitField::from_fn(n, 1, |x, _| z[x]);
            let mask = BinaryMask::from_fn(n, 1, |x, _| y[x]);
            let logits_p = LogitField::from_fn(n, 1, |x, _| z[perm[x]]);
            let mask_p = BinaryMask::from_fn(n, 1, |x, _| y[perm[x]]);

            let a = seg_loss(&logits, &mask, &weights).unwrap();
            let b = seg_loss(&logits_p, &mask_p, &weights).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
