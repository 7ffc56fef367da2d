//! Box-regression metrics and test-set aggregation.
//!
//! Four per-record measures compare a predicted BEV box against its target:
//! intersection-over-union, centroid distance in grid pixels, relative
//! height/width discrepancies, and the absolute aspect-ratio difference.
//! `evaluate` folds them into unweighted means over a test set.
//!
//! Areas are continuous (`(u_max - u_min) * (v_max - v_min)` in pixel units),
//! not integer-rasterized. Relative errors are reported as fractions; a
//! reporter may render them times 100.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DatasetError, DatasetReader, RecordRef};
use crate::geometry::BevBox;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("predictor failure: {0}")]
    Predictor(String),
}

/// Intersection-over-union of two axis-aligned boxes.
///
/// Defined as 0 when the union has zero area (both boxes degenerate).
pub fn iou(a: &BevBox, b: &BevBox) -> f64 {
    let iw = (a.u_max.min(b.u_max) - a.u_min.max(b.u_min)).max(0.0);
    let ih = (a.v_max.min(b.v_max) - a.v_min.max(b.v_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Euclidean distance between box centers, in grid pixels.
pub fn centroid_distance(a: &BevBox, b: &BevBox) -> f64 {
    let (au, av) = a.center();
    let (bu, bv) = b.center();
    ((au - bu).powi(2) + (av - bv).powi(2)).sqrt()
}

/// Converts a pixel measure to meters via the grid resolution.
pub fn px_to_meters(px: f64, px_per_m: f64) -> f64 {
    px / px_per_m
}

/// Relative height and width discrepancies `(|h_p - h_t| / h_t, |w_p - w_t| / w_t)`.
///
/// `None` when the target has a zero dimension, which flags the record as
/// skipped for this metric rather than poisoning the mean.
pub fn height_width_error(pred: &BevBox, target: &BevBox) -> Option<(f64, f64)> {
    let (ht, wt) = (target.height(), target.width());
    if ht <= 0.0 || wt <= 0.0 {
        return None;
    }
    Some((
        (pred.height() - ht).abs() / ht,
        (pred.width() - wt).abs() / wt,
    ))
}

/// Absolute aspect-ratio difference `|w_p / h_p - w_t / h_t|`.
///
/// `None` when either height is zero (skipped, not infinity).
pub fn aspect_ratio_error(pred: &BevBox, target: &BevBox) -> Option<f64> {
    if pred.height() <= 0.0 || target.height() <= 0.0 {
        return None;
    }
    Some((pred.width() / pred.height() - target.width() / target.height()).abs())
}

/// Means of the four measures over a test set, in the shape of one results row.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsSummary {
    #[serde(rename = "mIoU")]
    pub miou: f64,
    /// Mean centroid distance in grid pixels.
    #[serde(rename = "mCD")]
    pub mcd: f64,
    #[serde(rename = "mhE")]
    pub mhe: f64,
    #[serde(rename = "mwE")]
    pub mwe: f64,
    #[serde(rename = "marE")]
    pub mare: f64,
    /// Records that contributed to every mean.
    pub n: usize,
    /// Records dropped because the prediction was absent or a measure was
    /// undefined (degenerate dimensions).
    pub skipped: usize,
}

/// One evaluated record; metric cells are `None` where undefined.
#[derive(Debug, Clone)]
pub struct PerRecordRow {
    pub record_id: u64,
    pub iou: Option<f64>,
    pub cd_px: Option<f64>,
    pub cd_m: Option<f64>,
    pub he: Option<f64>,
    pub we: Option<f64>,
    pub are: Option<f64>,
    pub pred_absent: bool,
    pub degenerate_target: bool,
    pub degenerate_pred: bool,
}

impl PerRecordRow {
    pub fn skipped(&self) -> bool {
        self.pred_absent || self.degenerate_target || self.degenerate_pred
    }
}

/// Anything that can propose a BEV box for a stored record.
pub trait BoxPredictor {
    fn predict(
        &mut self,
        reader: &DatasetReader,
        rec: &RecordRef,
    ) -> Result<Option<BevBox>, EvalError>;
}

/// Evaluates a predictor over the given record ids.
///
/// Iteration follows `ids` order, so results are deterministic. A record
/// contributes to all five means or to none: predictions that are absent or
/// involve degenerate dimensions mark the record skipped.
pub fn evaluate<P: BoxPredictor + ?Sized>(
    predictor: &mut P,
    reader: &DatasetReader,
    ids: &[u64],
    px_per_m: f64,
) -> Result<(MetricsSummary, Vec<PerRecordRow>), EvalError> {
    if ids.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut rows = Vec::with_capacity(ids.len());
    let mut sums = [0.0f64; 5];
    let mut n = 0usize;
    for &id in ids {
        let rec = reader.record_ref(id)?;
        let target = rec.bev_box;
        let pred = predictor.predict(reader, &rec)?;
        let degenerate_target = target.height() <= 0.0 || target.width() <= 0.0;
        let mut row = PerRecordRow {
            record_id: id,
            iou: None,
            cd_px: None,
            cd_m: None,
            he: None,
            we: None,
            are: None,
            pred_absent: pred.is_none(),
            degenerate_target,
            degenerate_pred: false,
        };
        if let Some(p) = pred {
            row.degenerate_pred = p.height() <= 0.0;
            row.iou = Some(iou(&p, &target));
            let cd = centroid_distance(&p, &target);
            row.cd_px = Some(cd);
            row.cd_m = Some(px_to_meters(cd, px_per_m));
            if let Some((he, we)) = height_width_error(&p, &target) {
                row.he = Some(he);
                row.we = Some(we);
            }
            row.are = aspect_ratio_error(&p, &target);
        }
        if !row.skipped() {
            sums[0] += row.iou.unwrap();
            sums[1] += row.cd_px.unwrap();
            sums[2] += row.he.unwrap();
            sums[3] += row.we.unwrap();
            sums[4] += row.are.unwrap();
            n += 1;
        }
        rows.push(row);
    }
    let denom = if n > 0 { n as f64 } else { 1.0 };
    let summary = MetricsSummary {
        miou: sums[0] / denom,
        mcd: sums[1] / denom,
        mhe: sums[2] / denom,
        mwe: sums[3] / denom,
        mare: sums[4] / denom,
        n,
        skipped: ids.len() - n,
    };
    Ok((summary, rows))
}

/// Writes `summary.json` with sorted keys; optionally adds `mCD_m`.
pub fn write_summary_json(
    path: &Path,
    summary: &MetricsSummary,
    meters_per_px_div: Option<f64>,
) -> Result<(), EvalError> {
    let mut value = serde_json::to_value(summary).expect("summary serializes");
    if let Some(px_per_m) = meters_per_px_div {
        value["mCD_m"] = serde_json::json!(px_to_meters(summary.mcd, px_per_m));
    }
    let text = serde_json::to_string_pretty(&value).expect("summary serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `per_record.csv`: one row per evaluated record, empty cells where
/// a measure is undefined, plus the skip flags.
pub fn write_per_record_csv(path: &Path, rows: &[PerRecordRow]) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "record_id,iou,cd_px,cd_m,he,we,are,pred_absent,degenerate_target,degenerate_pred"
    )?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.record_id,
            cell(r.iou),
            cell(r.cd_px),
            cell(r.cd_m),
            cell(r.he),
            cell(r.we),
            cell(r.are),
            r.pred_absent,
            r.degenerate_target,
            r.degenerate_pred
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(u0: f64, v0: f64, u1: f64, v1: f64) -> BevBox {
        BevBox::from_corners((u0, v0), (u1, v1))
    }

    #[test]
    fn identical_boxes_have_unit_iou() {
        let a = bb(10.0, 20.0, 30.0, 50.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn half_overlap_example() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(5.0, 0.0, 15.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes_have_zero_iou() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(20.0, 20.0, 30.0, 30.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn zero_union_is_zero_not_nan() {
        let a = bb(5.0, 5.0, 5.0, 5.0);
        assert_eq!(iou(&a, &a), 0.0);
    }

    #[test]
    fn centroid_distance_345() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(3.0, 4.0, 13.0, 14.0);
        assert!((centroid_distance(&a, &b) - 5.0).abs() < 1e-12);
        assert!((px_to_meters(5.0, 4.0) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn height_width_error_examples() {
        let t = bb(0.0, 0.0, 8.0, 10.0);
        let p = bb(0.0, 0.0, 12.0, 9.0);
        let (he, we) = height_width_error(&p, &t).unwrap();
        assert!((he - 0.1).abs() < 1e-12);
        assert!((we - 0.5).abs() < 1e-12);
        let degenerate = bb(0.0, 0.0, 0.0, 10.0);
        assert!(height_width_error(&p, &degenerate).is_none());
    }

    #[test]
    fn aspect_ratio_error_examples() {
        let t = bb(0.0, 0.0, 10.0, 10.0);
        let wide = bb(0.0, 0.0, 20.0, 10.0);
        let tall = bb(0.0, 0.0, 10.0, 20.0);
        assert!((aspect_ratio_error(&wide, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!((aspect_ratio_error(&tall, &t).unwrap() - 0.5).abs() < 1e-12);
        let flat = bb(0.0, 0.0, 10.0, 0.0);
        assert!(aspect_ratio_error(&flat, &t).is_none());
        assert!(aspect_ratio_error(&t, &flat).is_none());
    }

    #[test]
    fn metrics_are_translation_invariant() {
        let a = bb(5.0, 5.0, 25.0, 15.0);
        let b = bb(8.0, 9.0, 20.0, 21.0);
        let shift = |x: &BevBox, du: f64, dv: f64| {
            bb(x.u_min + du, x.v_min + dv, x.u_max + du, x.v_max + dv)
        };
        let (a2, b2) = (shift(&a, 17.0, -4.0), shift(&b, 17.0, -4.0));
        assert!((iou(&a, &b) - iou(&a2, &b2)).abs() < 1e-12);
        assert!((centroid_distance(&a, &b) - centroid_distance(&a2, &b2)).abs() < 1e-12);
        assert_eq!(height_width_error(&a, &b), height_width_error(&a2, &b2));
        assert_eq!(aspect_ratio_error(&a, &b), aspect_ratio_error(&a2, &b2));
    }
}
