//! ISO/IEC 30107-3 PAD metrics and per-video score fusion.
//!
//! Decision rule throughout: a record is predicted bona fide iff
//! `score >= threshold` (ties count as bona fide). APCER is the fraction of
//! attacks wrongly accepted, BPCER the fraction of bona fide presentations
//! wrongly rejected, and HTER their mean at one threshold.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// One scored item: a frame, or a fused video (frame_index −1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub dataset_id: String,
    pub video_id: String,
    /// Frame index, or −1 for a fused per-video record.
    pub frame_index: i64,
    pub label: Label,
    /// PAD score in `[0, 1]`; higher means more bona fide.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum ThresholdPolicy {
    /// Operate at the EER threshold computed on the evaluated scores.
    EerOnTest,
    /// Operate at a caller-supplied fixed threshold.
    Fixed(f64),
}

impl std::fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdPolicy::EerOnTest => write!(f, "eer_on_test"),
            ThresholdPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub threshold: f64,
    pub threshold_policy: ThresholdPolicy,
    pub apcer: f64,
    pub bpcer: f64,
    pub hter: f64,
    pub auc: f64,
    /// `(apcer, 1 − bpcer)` per distinct sweep threshold, apcer ascending.
    pub roc: Vec<(f64, f64)>,
}

fn require_both_classes(records: &[ScoreRecord]) -> Result<()> {
    let bona = records.iter().any(|r| r.label == Label::BonaFide);
    let attack = records.iter().any(|r| r.label == Label::Attack);
    if records.is_empty() || !bona || !attack {
        return Err(Error::Metrics(
            "need at least one bona fide and one attack record".into(),
        ));
    }
    Ok(())
}

/// Mean-rule fusion: one record per `(dataset_id, video_id)` whose score is
/// the arithmetic mean of the frame scores. Fused records carry frame index
/// −1. Errors if a video mixes labels.
pub fn fuse_video_scores(records: &[ScoreRecord]) -> Result<Vec<ScoreRecord>> {
    if records.is_empty() {
        return Err(Error::Metrics("cannot fuse an empty record list".into()));
    }
    // BTreeMap keeps the fused order deterministic.
    let mut groups: BTreeMap<(String, String), (Label, f64, usize, String)> = BTreeMap::new();
    for r in records {
        let key = (r.dataset_id.clone(), r.video_id.clone());
        match groups.get_mut(&key) {
            None => {
                groups.insert(key, (r.label, r.score, 1, r.dataset_id.clone()));
            }
            Some((label, sum, count, _)) => {
                if *label != r.label {
                    return Err(Error::Metrics(format!(
                        "video {}/{} mixes bona fide and attack frames",
                        r.dataset_id, r.video_id
                    )));
                }
                *sum += r.score;
                *count += 1;
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((dataset_id, video_id), (label, sum, count, _))| ScoreRecord {
            dataset_id,
            video_id,
            frame_index: -1,
            label,
            score: sum / count as f64,
        })
        .collect())
}

/// Error rates at a threshold: `apcer` = attacks with score ≥ threshold,
/// `bpcer` = bona fide with score < threshold.
pub fn apcer_bpcer(records: &[ScoreRecord], threshold: f64) -> Result<(f64, f64)> {
    require_both_classes(records)?;
    let mut attacks = 0usize;
    let mut attacks_accepted = 0usize;
    let mut bona = 0usize;
    let mut bona_rejected = 0usize;
    for r in records {
        match r.label {
            Label::Attack => {
                attacks += 1;
                if r.score >= threshold {
                    attacks_accepted += 1;
                }
            }
            Label::BonaFide => {
                bona += 1;
                if r.score < threshold {
                    bona_rejected += 1;
                }
            }
        }
    }
    Ok((
        attacks_accepted as f64 / attacks as f64,
        bona_rejected as f64 / bona as f64,
    ))
}

/// Half total error rate: the mean of APCER and BPCER.
pub fn hter(apcer: f64, bpcer: f64) -> f64 {
    (apcer + bpcer) / 2.0
}

/// All sweep thresholds: −∞, each distinct score ascending, +∞.
fn sweep_thresholds(records: &[ScoreRecord]) -> Vec<f64> {
    let mut scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    scores.dedup();
    let mut out = Vec::with_capacity(scores.len() + 2);
    out.push(f64::NEG_INFINITY);
    out.extend(scores);
    out.push(f64::INFINITY);
    out
}

/// Threshold minimizing `|apcer − bpcer|` over the sweep; ties break toward
/// the smaller `apcer + bpcer`, then the smaller threshold.
pub fn eer_threshold(records: &[ScoreRecord]) -> Result<f64> {
    require_both_classes(records)?;
    let mut best: Option<(f64, f64, f64)> = None; // (|diff|, sum, threshold)
    for t in sweep_thresholds(records) {
        let (a, b) = apcer_bpcer(records, t)?;
        let cand = ((a - b).abs(), a + b, t);
        best = Some(match best {
            None => cand,
            Some(cur) => {
                if cand.0 < cur.0
                    || (cand.0 == cur.0 && cand.1 < cur.1)
                    || (cand.0 == cur.0 && cand.1 == cur.1 && cand.2 < cur.2)
                {
                    cand
                } else {
                    cur
                }
            }
        });
    }
    Ok(best.expect("non-empty sweep").2)
}

/// Area under the ROC curve via the rank statistic: the probability that a
/// random bona fide record outscores a random attack record, ties counted
/// half.
pub fn auc(records: &[ScoreRecord]) -> Result<f64> {
    require_both_classes(records)?;
    let mut scored: Vec<(f64, Label)> = records.iter().map(|r| (r.score, r.label)).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    // Midranks over the pooled sample.
    let n = scored.len();
    let mut rank_sum_bona = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scored[j + 1].0 == scored[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for item in scored.iter().take(j + 1).skip(i) {
            if item.1 == Label::BonaFide {
                rank_sum_bona += midrank;
            }
        }
        i = j + 1;
    }
    let n_bona = records.iter().filter(|r| r.label == Label::BonaFide).count() as f64;
    let n_attack = records.len() as f64 - n_bona;
    Ok((rank_sum_bona - n_bona * (n_bona + 1.0) / 2.0) / (n_bona * n_attack))
}

/// ROC points `(apcer, 1 − bpcer)`: one per sweep threshold, sorted by apcer
/// ascending. Includes the `(0, 0)` and `(1, 1)` endpoints (the ±∞
/// sentinels).
pub fn roc_points(records: &[ScoreRecord]) -> Result<Vec<(f64, f64)>> {
    require_both_classes(records)?;
    // Descending thresholds give both coordinates in ascending order.
    let mut points: Vec<(f64, f64)> = sweep_thresholds(records)
        .into_iter()
        .rev()
        .map(|t| {
            let (a, b) = apcer_bpcer(records, t).expect("classes checked");
            (a, 1.0 - b)
        })
        .collect();
    points.sort_by(|p, q| {
        p.0.partial_cmp(&q.0)
            .unwrap()
            .then(p.1.partial_cmp(&q.1).unwrap())
    });
    Ok(points)
}

/// Trapezoidal area under the ROC point list.
pub fn roc_trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Full report under the given threshold policy.
pub fn compute_report(records: &[ScoreRecord], policy: ThresholdPolicy) -> Result<MetricsReport> {
    require_both_classes(records)?;
    let threshold = match policy {
        ThresholdPolicy::EerOnTest => eer_threshold(records)?,
        ThresholdPolicy::Fixed(v) => v,
    };
    let (apcer, bpcer) = apcer_bpcer(records, threshold)?;
    Ok(MetricsReport {
        threshold,
        threshold_policy: policy,
        apcer,
        bpcer,
        hter: hter(apcer, bpcer),
        auc: auc(records)?,
        roc: roc_points(records)?,
    })
}

// ---------------------------------------------------------------------------
// file formats

pub const SCORE_CSV_HEADER: &str = "dataset_id,video_id,frame_index,label,score";

/// Writes the score CSV (`dataset_id,video_id,frame_index,label,score`).
pub fn write_scores(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(SCORE_CSV_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.dataset_id.as_str(),
            r.video_id.as_str(),
            &r.frame_index.to_string(),
            r.label.as_str(),
            &r.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a score CSV written by [`write_scores`].
pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |msg: &str| Error::Data(format!("{}: row {}: {msg}", path.display(), i + 1));
        if rec.len() != 5 {
            return Err(parse("expected 5 columns"));
        }
        let label = Label::parse(&rec[3]).ok_or_else(|| parse("unknown label"))?;
        out.push(ScoreRecord {
            dataset_id: rec[0].to_string(),
            video_id: rec[1].to_string(),
            frame_index: rec[2].parse().map_err(|_| parse("bad frame_index"))?,
            label,
            score: rec[4].parse().map_err(|_| parse("bad score"))?,
        });
    }
    Ok(out)
}

/// Writes the report as a flat key=value record plus an adjacent ROC CSV.
pub fn write_report(dir: impl AsRef<Path>, name: &str, report: &MetricsReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join(format!("{name}_report.txt")))?;
    writeln!(f, "threshold={}", report.threshold)?;
    writeln!(f, "threshold_policy={}", report.threshold_policy)?;
    writeln!(f, "apcer={}", report.apcer)?;
    writeln!(f, "bpcer={}", report.bpcer)?;
    writeln!(f, "hter={}", report.hter)?;
    writeln!(f, "auc={}", report.auc)?;

    let mut roc = std::fs::File::create(dir.join(format!("{name}_roc.csv")))?;
    writeln!(roc, "apcer,one_minus_bpcer")?;
    for (x, y) in &report.roc {
        writeln!(roc, "{x},{y}")?;
    }
    Ok(())
}

/// Reads back the ROC CSV written by [`write_report`].
pub fn read_roc_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let content = std::fs::read_to_string(path.as_ref())?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let mut parts = line.split(',');
        let x: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("bad roc row {i}")))?;
        let y: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("bad roc row {i}")))?;
        out.push((x, y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn rec(label: Label, score: f64) -> ScoreRecord {
        ScoreRecord {
            dataset_id: "d".into(),
            video_id: format!("v{score}"),
            frame_index: 0,
            label,
            score,
        }
    }

    fn frame(video: &str, idx: i64, label: Label, score: f64) -> ScoreRecord {
        ScoreRecord {
            dataset_id: "d".into(),
            video_id: video.into(),
            frame_index: idx,
            label,
            score,
        }
    }

    #[test]
    fn fusion_is_arithmetic_mean() {
        let records = vec![
            frame("a", 0, Label::BonaFide, 0.2),
            frame("a", 1, Label::BonaFide, 0.4),
            frame("a", 2, Label::BonaFide, 0.6),
        ];
        let fused = fuse_video_scores(&records).unwrap();
        assert_eq!(fused.len(), 1);
        assert!((fused[0].score - 0.4).abs() < 1e-12);
        assert_eq!(fused[0].frame_index, -1);
    }

    #[test]
    fn single_frame_video_unchanged() {
        let records = vec![frame("a", 0, Label::Attack, 0.37)];
        let fused = fuse_video_scores(&records).unwrap();
        assert_eq!(fused[0].score, 0.37);
    }

    #[test]
    fn mixed_label_video_rejected() {
        let records = vec![
            frame("a", 0, Label::BonaFide, 0.2),
            frame("a", 1, Label::Attack, 0.4),
        ];
        assert!(fuse_video_scores(&records).is_err());
    }

    #[test]
    fn apcer_bpcer_by_definition() {
        let records = vec![
            rec(Label::Attack, 0.2),
            rec(Label::Attack, 0.8),
            rec(Label::BonaFide, 0.6),
            rec(Label::BonaFide, 0.4),
        ];
        let (a, b) = apcer_bpcer(&records, 0.5).unwrap();
        assert_eq!((a, b), (0.5, 0.5));
    }

    #[test]
    fn perfect_separation_zero_errors() {
        let records = vec![
            rec(Label::Attack, 0.1),
            rec(Label::Attack, 0.2),
            rec(Label::BonaFide, 0.8),
            rec(Label::BonaFide, 0.9),
        ];
        let (a, b) = apcer_bpcer(&records, 0.5).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        assert_eq!(auc(&records).unwrap(), 1.0);
        let roc = roc_points(&records).unwrap();
        assert!(roc.contains(&(0.0, 1.0)));
    }

    #[test]
    fn hter_is_mean() {
        assert_eq!(hter(0.10, 0.20), 0.15000000000000002 * 1.0); // (0.1+0.2)/2
        assert!((hter(0.10, 0.20) - 0.15).abs() < 1e-12);
        assert_eq!(hter(0.0, 0.0), 0.0);
        assert_eq!(hter(1.0, 1.0), 1.0);
    }

    #[test]
    fn eer_two_cluster_case() {
        // attacks all 0.2, bona fide all 0.8: the sweep finds (0, 0) at 0.8.
        let records = vec![
            rec(Label::Attack, 0.2),
            rec(Label::Attack, 0.2000),
            rec(Label::BonaFide, 0.8),
            rec(Label::BonaFide, 0.8000),
        ];
        let t = eer_threshold(&records).unwrap();
        assert_eq!(t, 0.8);
        let (a, b) = apcer_bpcer(&records, t).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn eer_two_record_case() {
        let records = vec![rec(Label::Attack, 0.3), rec(Label::BonaFide, 0.7)];
        let t = eer_threshold(&records).unwrap();
        assert_eq!(t, 0.7);
        assert_eq!(apcer_bpcer(&records, t).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn constant_scores_auc_half() {
        let records = vec![
            rec(Label::Attack, 0.5),
            rec(Label::Attack, 0.5),
            rec(Label::BonaFide, 0.5),
        ];
        assert!((auc(&records).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_class_inputs_rejected() {
        let records = vec![rec(Label::Attack, 0.5)];
        assert!(apcer_bpcer(&records, 0.5).is_err());
        assert!(auc(&records).is_err());
        assert!(eer_threshold(&records).is_err());
        assert!(roc_points(&records).is_err());
    }

    #[test]
    fn report_internal_consistency() {
        let records = vec![
            rec(Label::Attack, 0.3),
            rec(Label::Attack, 0.6),
            rec(Label::BonaFide, 0.55),
            rec(Label::BonaFide, 0.9),
        ];
        let report = compute_report(&records, ThresholdPolicy::EerOnTest).unwrap();
        assert!((report.hter - (report.apcer + report.bpcer) / 2.0).abs() < 1e-15);
        let area = roc_trapezoid_area(&report.roc);
        assert!((area - report.auc).abs() < 1e-9);
    }
}
