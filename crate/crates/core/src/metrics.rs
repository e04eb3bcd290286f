//! Confusion-matrix metrics and the full/cast/attached evaluation protocol.
//!
//! Protocol, per image:
//!
//! - full: predicted union vs ground-truth union (undefined pixels count as
//!   shadow in the target), evaluated over every pixel;
//! - cast: predicted cast vs ground-truth cast, with undefined pixels
//!   excluded from evaluation;
//! - attached: predicted attached vs ground-truth attached, evaluated inside
//!   the object region only.
//!
//! Degenerate-denominator conventions (also emitted in report output):
//! no positives makes the recall term 1, no negatives makes the
//! true-negative term 1, an empty positive prediction makes precision and
//! F1 zero.

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, BinaryMask, ShadowClass, TriClassMask};

/// Pixel counts over the evaluated region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub true_negatives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl ConfusionCounts {
    pub fn evaluated_pixels(&self) -> u64 {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }

    /// True-positive rate; 1 when there are no positives to miss.
    pub fn true_positive_rate(&self) -> f64 {
        let denom = self.true_positives + self.false_negatives;
        if denom == 0 {
            1.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }

    /// True-negative rate; 1 when there are no negatives to protect.
    pub fn true_negative_rate(&self) -> f64 {
        let denom = self.true_negatives + self.false_positives;
        if denom == 0 {
            1.0
        } else {
            self.true_negatives as f64 / denom as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let denom = self.true_positives + self.false_positives;
        if denom == 0 {
            0.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }

    pub fn recall(&self) -> f64 {
        self.true_positive_rate()
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Balanced error rate in percent: `100 * (1 - (TPR + TNR) / 2)`.
    pub fn ber(&self) -> f64 {
        100.0 * (1.0 - 0.5 * (self.true_positive_rate() + self.true_negative_rate()))
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.true_positives += other.true_positives;
        self.true_negatives += other.true_negatives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

/// Counts restricted to pixels where `eval_mask` is set.
pub fn confusion(
    pred: &BinaryMask,
    gt: &BinaryMask,
    eval_mask: &BinaryMask,
) -> Result<ConfusionCounts> {
    ensure_same_dims("prediction vs ground truth", pred.grid(), gt.grid())?;
    ensure_same_dims("prediction vs eval mask", pred.grid(), eval_mask.grid())?;
    if eval_mask.is_empty() {
        return Err(Error::EmptyEvalMask);
    }
    let mut counts = ConfusionCounts::default();
    for (x, y) in eval_mask.coords() {
        if !eval_mask.get(x, y) {
            continue;
        }
        match (pred.get(x, y), gt.get(x, y)) {
            (true, true) => counts.true_positives += 1,
            (false, false) => counts.true_negatives += 1,
            (true, false) => counts.false_positives += 1,
            (false, true) => counts.false_negatives += 1,
        }
    }
    Ok(counts)
}

/// Rates for one shadow category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ber: f64,
    pub counts: ConfusionCounts,
}

impl CategoryMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        Self {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            ber: counts.ber(),
            counts,
        }
    }
}

/// Per-category metrics for one image (or an aggregated suite).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub full: CategoryMetrics,
    pub cast: CategoryMetrics,
    /// Absent when the object region is empty.
    pub attached: Option<CategoryMetrics>,
}

/// Runs the evaluation protocol on one prediction/ground-truth pair.
pub fn evaluate_bundle(
    pred: &TriClassMask,
    gt: &TriClassMask,
    object_mask: &BinaryMask,
) -> Result<MetricsReport> {
    ensure_same_dims("prediction vs ground truth", pred.labels(), gt.labels())?;
    ensure_same_dims("prediction vs object mask", pred.labels(), object_mask.grid())?;

    let everywhere = BinaryMask::from_fn(gt.width(), gt.height(), |_, _| true);
    let full = confusion(&pred.union_mask(), &gt.union_mask(), &everywhere)?;

    let cast_eval = gt.undefined().complement();
    let cast = confusion(
        &pred.class_mask(ShadowClass::Cast),
        &gt.class_mask(ShadowClass::Cast),
        &cast_eval,
    )?;

    let attached = if object_mask.is_empty() {
        None
    } else {
        Some(CategoryMetrics::from_counts(confusion(
            &pred.class_mask(ShadowClass::Attached),
            &gt.class_mask(ShadowClass::Attached),
            object_mask,
        )?))
    };

    Ok(MetricsReport {
        full: CategoryMetrics::from_counts(full),
        cast: CategoryMetrics::from_counts(cast),
        attached,
    })
}

/// How a suite of per-image reports is reduced to one report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// Mean of per-image metric values, each image weighted equally.
    Image,
    /// Metrics of the pooled pixel counts.
    Pixel,
}

impl std::str::FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(AggregateMode::Image),
            "pixel" => Ok(AggregateMode::Pixel),
            other => Err(Error::InvalidParameter(format!(
                "aggregate mode must be 'image' or 'pixel', got '{other}'"
            ))),
        }
    }
}

fn aggregate_category(
    items: &[&CategoryMetrics],
    mode: AggregateMode,
) -> Option<CategoryMetrics> {
    if items.is_empty() {
        return None;
    }
    let mut pooled = ConfusionCounts::default();
    for item in items {
        pooled.add(&item.counts);
    }
    Some(match mode {
        AggregateMode::Pixel => CategoryMetrics::from_counts(pooled),
        AggregateMode::Image => {
            let n = items.len() as f64;
            CategoryMetrics {
                precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
                recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
                f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
                ber: items.iter().map(|m| m.ber).sum::<f64>() / n,
                counts: pooled,
            }
        }
    })
}

/// Reduces per-image reports to a suite report. In image mode rates are
/// averaged with equal image weight (images lacking a category are skipped
/// for that category); counts always hold the pooled sums.
pub fn aggregate_reports(reports: &[MetricsReport], mode: AggregateMode) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("no reports to aggregate".into()));
    }
    let full: Vec<&CategoryMetrics> = reports.iter().map(|r| &r.full).collect();
    let cast: Vec<&CategoryMetrics> = reports.iter().map(|r| &r.cast).collect();
    let attached: Vec<&CategoryMetrics> =
        reports.iter().filter_map(|r| r.attached.as_ref()).collect();
    Ok(MetricsReport {
        full: aggregate_category(&full, mode).expect("non-empty"),
        cast: aggregate_category(&cast, mode).expect("non-empty"),
        attached: aggregate_category(&attached, mode),
    })
}

/// Aligned plain-text table: BER (lower is better) and F1 (higher is better)
/// per category.
pub fn format_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<10} {:>8} {:>8}\n", "", "BER\u{2193}", "F1\u{2191}"));
    let mut row = |name: &str, m: &CategoryMetrics| {
        out.push_str(&format!("{:<10} {:>8.2} {:>8.2}\n", name, m.ber, m.f1 * 100.0));
    };
    row("Full", &report.full);
    row("Cast", &report.cast);
    match &report.attached {
        Some(m) => row("Attached", m),
        None => out.push_str(&format!("{:<10} {:>8} {:>8}\n", "Attached", "-", "-")),
    }
    out
}

/// Key-value document with every rate and count.
pub fn format_key_values(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str("# conventions: no positives -> recall 1; no negatives -> tnr 1; ");
    out.push_str("empty positive prediction -> precision 0, f1 0\n");
    let mut section = |name: &str, m: &CategoryMetrics| {
        out.push_str(&format!("{name}.precision = {}\n", m.precision));
        out.push_str(&format!("{name}.recall = {}\n", m.recall));
        out.push_str(&format!("{name}.f1 = {}\n", m.f1));
        out.push_str(&format!("{name}.ber = {}\n", m.ber));
        out.push_str(&format!(
            "{name}.counts = tp {} tn {} fp {} fn {}\n",
            m.counts.true_positives,
            m.counts.true_negatives,
            m.counts.false_positives,
            m.counts.false_negatives
        ));
    };
    section("full", &report.full);
    section("cast", &report.cast);
    match &report.attached {
        Some(m) => section("attached", m),
        None => out.push_str("attached.absent = true\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_mask(w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, _| true)
    }

    #[test]
    fn perfect_prediction_counts() {
        let gt = BinaryMask::from_fn(8, 8, |x, _| x < 3);
        let counts = confusion(&gt, &gt, &full_mask(8, 8)).unwrap();
        assert_eq!(counts.false_positives, 0);
        assert_eq!(counts.false_negatives, 0);
        assert_eq!(counts.ber(), 0.0);
        assert_eq!(counts.f1(), 1.0);
    }

    #[test]
    fn complement_prediction_counts() {
        let gt = BinaryMask::from_fn(8, 8, |x, _| x < 3);
        let counts = confusion(&gt.complement(), &gt, &full_mask(8, 8)).unwrap();
        assert_eq!(counts.true_positives, 0);
        assert_eq!(counts.true_negatives, 0);
    }

    #[test]
    fn confusion_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..1000 {
            let pred = BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(0.5));
            let gt = BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(0.5));
            let eval = BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(0.8));
            if eval.is_empty() {
                continue;
            }
            let counts = confusion(&pred, &gt, &eval).unwrap();

            let (mut tp, mut tn, mut fp, mut fneg) = (0u64, 0u64, 0u64, 0u64);
            for y in 0..16 {
                for x in 0..16 {
                    if !eval.get(x, y) {
                        continue;
                    }
                    match (pred.get(x, y), gt.get(x, y)) {
                        (true, true) => tp += 1,
                        (false, false) => tn += 1,
                        (true, false) => fp += 1,
                        (false, true) => fneg += 1,
                    }
                }
            }
            assert_eq!(
                (tp, tn, fp, fneg),
                (
                    counts.true_positives,
                    counts.true_negatives,
                    counts.false_positives,
                    counts.false_negatives
                )
            );
            assert_eq!(counts.evaluated_pixels(), eval.count_ones() as u64);
        }
    }

    #[test]
    fn all_shadow_predictor_ber_is_50() {
        let gt = BinaryMask::from_fn(10, 10, |x, _| x < 4);
        let counts = confusion(&full_mask(10, 10), &gt, &full_mask(10, 10)).unwrap();
        assert_eq!(counts.ber(), 50.0);
    }

    #[test]
    fn hand_computed_rates() {
        let counts = ConfusionCounts {
            true_positives: 3,
            false_positives: 1,
            false_negatives: 1,
            true_negatives: 5,
        };
        assert_eq!(counts.precision(), 0.75);
        assert_eq!(counts.recall(), 0.75);
        assert_eq!(counts.f1(), 0.75);
        let expected_ber = 100.0 * (1.0 - 0.5 * (0.75 + 5.0 / 6.0));
        assert!((counts.ber() - expected_ber).abs() < 1e-12);
        assert!((counts.ber() - 20.8333).abs() < 1e-3);
    }

    #[test]
    fn degenerate_denominator_conventions() {
        // No positives in GT or prediction.
        let counts = ConfusionCounts {
            true_negatives: 10,
            ..Default::default()
        };
        assert_eq!(counts.recall(), 1.0);
        assert_eq!(counts.precision(), 0.0);
        assert_eq!(counts.f1(), 0.0);
        assert_eq!(counts.ber(), 0.0);

        // All positives.
        let counts = ConfusionCounts {
            true_positives: 10,
            ..Default::default()
        };
        assert_eq!(counts.true_negative_rate(), 1.0);
        assert_eq!(counts.ber(), 0.0);
    }

    #[test]
    fn empty_eval_mask_is_an_error() {
        let m = BinaryMask::new(4, 4);
        assert!(matches!(
            confusion(&m, &m, &BinaryMask::new(4, 4)),
            Err(Error::EmptyEvalMask)
        ));
    }

    #[test]
    fn ber_scale_invariance() {
        let base = ConfusionCounts {
            true_positives: 3,
            true_negatives: 10,
            false_positives: 2,
            false_negatives: 4,
        };
        for k in [2u64, 5, 17] {
            let scaled = ConfusionCounts {
                true_positives: base.true_positives * k,
                true_negatives: base.true_negatives * k,
                false_positives: base.false_positives * k,
                false_negatives: base.false_negatives * k,
            };
            assert!((scaled.ber() - base.ber()).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        for _ in 0..200 {
            let counts = ConfusionCounts {
                true_positives: rng.random_range(1..50),
                true_negatives: rng.random_range(0..50),
                false_positives: rng.random_range(0..50),
                false_negatives: rng.random_range(0..50),
            };
            let (p, r) = (counts.precision(), counts.recall());
            if p > 0.0 && r > 0.0 {
                let harmonic = 2.0 / (1.0 / p + 1.0 / r);
                assert!((counts.f1() - harmonic).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_mask_locality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = BinaryMask::from_fn(12, 12, |_, _| rng.random_bool(0.4));
        let pred = BinaryMask::from_fn(12, 12, |_, _| rng.random_bool(0.4));
        let eval = BinaryMask::from_fn(12, 12, |x, _| x < 6);
        let base = confusion(&pred, &gt, &eval).unwrap();

        // Flipping predictions outside the eval mask changes nothing.
        let mut altered = pred.clone();
        for (x, y) in eval.clone().coords() {
            if !eval.get(x, y) {
                let v = altered.get(x, y);
                altered.set(x, y, !v);
            }
        }
        assert_eq!(confusion(&altered, &gt, &eval).unwrap(), base);
    }

    fn tri_from(cast: &BinaryMask, attached: &BinaryMask, undefined: &BinaryMask) -> TriClassMask {
        TriClassMask::from_masks(cast, attached, undefined).unwrap()
    }

    #[test]
    fn evaluate_bundle_identity() {
        let cast = BinaryMask::from_fn(8, 8, |x, y| x < 2 && y < 4);
        let attached = BinaryMask::from_fn(8, 8, |x, y| x >= 6 && y < 4);
        let undefined = BinaryMask::new(8, 8);
        let object = BinaryMask::from_fn(8, 8, |x, _| x >= 5);
        let gt = tri_from(&cast, &attached, &undefined);
        let report = evaluate_bundle(&gt, &gt, &object).unwrap();
        assert_eq!(report.full.ber, 0.0);
        assert_eq!(report.cast.ber, 0.0);
        let att = report.attached.unwrap();
        assert_eq!(att.ber, 0.0);
        assert_eq!(att.f1, 1.0);
        // Empty undefined: the cast eval mask covers everything.
        assert_eq!(report.cast.counts.evaluated_pixels(), 64);
    }

    #[test]
    fn undefined_pixels_leave_cast_counts_untouched() {
        let undefined = BinaryMask::from_fn(8, 8, |x, y| x == 0 && y == 0);
        let gt = tri_from(&BinaryMask::new(8, 8), &BinaryMask::new(8, 8), &undefined);

        // The prediction calls the undefined pixel cast.
        let pred_cast = BinaryMask::from_fn(8, 8, |x, y| x == 0 && y == 0);
        let pred = tri_from(&pred_cast, &BinaryMask::new(8, 8), &BinaryMask::new(8, 8));
        let object = BinaryMask::from_fn(8, 8, |x, _| x > 4);

        let report = evaluate_bundle(&pred, &gt, &object).unwrap();
        // Excluded from cast evaluation entirely.
        assert_eq!(report.cast.counts.false_positives, 0);
        assert_eq!(report.cast.counts.evaluated_pixels(), 63);
        // But it counts as a full-shadow true positive (undefined is shadow).
        assert_eq!(report.full.counts.true_positives, 1);
        assert_eq!(report.full.counts.false_positives, 0);
    }

    #[test]
    fn empty_object_mask_drops_attached_metrics() {
        let gt = tri_from(
            &BinaryMask::from_fn(4, 4, |x, _| x == 0),
            &BinaryMask::new(4, 4),
            &BinaryMask::new(4, 4),
        );
        let report = evaluate_bundle(&gt, &gt, &BinaryMask::new(4, 4)).unwrap();
        assert!(report.attached.is_none());
        assert_eq!(report.cast.ber, 0.0);
    }

    #[test]
    fn aggregate_modes_differ() {
        // Two images with very different sizes of the positive class.
        let mk = |tp: u64, tn: u64, fp: u64, fneg: u64| {
            CategoryMetrics::from_counts(ConfusionCounts {
                true_positives: tp,
                true_negatives: tn,
                false_positives: fp,
                false_negatives: fneg,
            })
        };
        let a = MetricsReport {
            full: mk(1, 1, 1, 1),
            cast: mk(1, 1, 1, 1),
            attached: None,
        };
        let b = MetricsReport {
            full: mk(100, 100, 0, 0),
            cast: mk(100, 100, 0, 0),
            attached: Some(mk(10, 10, 0, 0)),
        };
        let image = aggregate_reports(&[a.clone(), b.clone()], AggregateMode::Image).unwrap();
        let pixel = aggregate_reports(&[a, b], AggregateMode::Pixel).unwrap();
        assert!((image.full.ber - 25.0).abs() < 1e-12);
        let pooled = ConfusionCounts {
            true_positives: 101,
            true_negatives: 101,
            false_positives: 1,
            false_negatives: 1,
        };
        assert!((pixel.full.ber - pooled.ber()).abs() < 1e-12);
        // Attached present in only one image.
        assert!(image.attached.is_some());
    }

    #[test]
    fn report_formats_render() {
        let m = CategoryMetrics::from_counts(ConfusionCounts {
            true_positives: 3,
            true_negatives: 5,
            false_positives: 1,
            false_negatives: 1,
        });
        let report = MetricsReport {
            full: m,
            cast: m,
            attached: None,
        };
        let table = format_table(&report);
        assert!(table.contains("Full"));
        assert!(table.contains("Attached"));
        let kv = format_key_values(&report);
        assert!(kv.contains("full.ber = "));
        assert!(kv.contains("attached.absent = true"));
        assert!(kv.contains("cast.counts = tp 3 tn 5 fp 1 fn 1"));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = BinaryMask::new(4, 4);
        let b = BinaryMask::new(5, 4);
        assert!(confusion(&a, &b, &a).is_err());
        let labels4 = RasterGrid::filled(4, 4, 1, 0u8);
        let labels5 = RasterGrid::filled(5, 4, 1, 0u8);
        let t4 = TriClassMask::new(labels4, BinaryMask::new(4, 4)).unwrap();
        let t5 = TriClassMask::new(labels5, BinaryMask::new(5, 4)).unwrap();
        assert!(evaluate_bundle(&t4, &t5, &a).is_err());
    }
}
