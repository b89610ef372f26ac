//! Benchmark scoring: multiple-choice matching, distance accuracy, temporal
//! IoU, localization accuracy, and run-level aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_deg, EgoObservation};
use crate::qa::{Answer, Choice, Question, QuestionKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Absolute-error thresholds for distance scoring, meters.
    pub dist_thresholds: Vec<f64>,
    /// IoU thresholds for temporal-grounding recall.
    pub iou_thresholds: Vec<f64>,
    /// Angular-error bound for localization accuracy, degrees (strict <).
    pub loc_theta_max: f64,
    /// Range-error bound for localization accuracy, meters (strict <).
    pub loc_r_max: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            // exact divisions so threshold comparisons at the boundary
            // (e.g. IoU 3/10 vs tau 0.3) behave as written
            dist_thresholds: (1..=10).map(|i| i as f64 / 10.0).collect(),
            iou_thresholds: (1..=10).map(|i| i as f64 / 20.0).collect(),
            loc_theta_max: 45.0,
            loc_r_max: 1.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        for list in [&self.dist_thresholds, &self.iou_thresholds] {
            if list.is_empty() || list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::EvalMismatch(
                    "thresholds must be non-empty and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Lowercase, drop punctuation, collapse hyphenation and whitespace.
fn normalize(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c == '-' || c == '_' { ' ' } else { c })
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1 when the prediction matches the ground-truth option's letter or its
/// normalized text; 0 otherwise.
pub fn mcq_score(pred: &str, gt: &Choice) -> u8 {
    let p = normalize(pred);
    if p.is_empty() {
        return 0;
    }
    if p == normalize(&gt.letter) || p == normalize(&gt.text) {
        1
    } else {
        0
    }
}

/// Mean over the configured thresholds of 1[|pred - gt| <= tau].
pub fn distance_score(pred: f64, gt: f64, config: &MetricsConfig) -> f64 {
    if !pred.is_finite() {
        return 0.0;
    }
    let err = (pred - gt).abs();
    let hits = config
        .dist_thresholds
        .iter()
        .filter(|&&tau| err <= tau)
        .count();
    hits as f64 / config.dist_thresholds.len() as f64
}

/// Interval intersection-over-union on seconds.
pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1.max(b.1) - a.0.min(b.0)).max(1e-12);
    inter / union
}

/// Recall@1 per IoU threshold and the mean across thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalRecall {
    pub recall_at: Vec<(f64, f64)>,
    pub mean: f64,
}

pub fn t_miou(
    preds: &[(f64, f64)],
    gts: &[(f64, f64)],
    config: &MetricsConfig,
) -> Result<TemporalRecall> {
    if preds.len() != gts.len() {
        return Err(Error::EvalMismatch(format!(
            "{} predictions vs {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EvalMismatch("empty prediction set".into()));
    }
    let ious: Vec<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| interval_iou(*p, *g))
        .collect();
    let recall_at: Vec<(f64, f64)> = config
        .iou_thresholds
        .iter()
        .map(|&tau| {
            let hits = ious.iter().filter(|&&iou| iou >= tau).count();
            (tau, hits as f64 / ious.len() as f64)
        })
        .collect();
    let mean = recall_at.iter().map(|(_, r)| r).sum::<f64>() / recall_at.len() as f64;
    Ok(TemporalRecall { recall_at, mean })
}

/// Joint direction/range gate with the component errors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LocResult {
    pub correct: bool,
    pub theta_err: f64,
    pub r_err: f64,
}

/// Correct iff the wrapped angular error is below the angle bound and the
/// range error below the range bound (both strict).
pub fn loc_accuracy(pred: &EgoObservation, gt: &EgoObservation, config: &MetricsConfig) -> LocResult {
    let theta_err = wrap_deg(pred.theta - gt.theta).abs();
    let r_err = (pred.r - gt.r).abs();
    LocResult {
        correct: theta_err < config.loc_theta_max && r_err < config.loc_r_max,
        theta_err,
        r_err,
    }
}

/// Left/right and front/back agreement from azimuth signs. A ground truth
/// exactly on the axis leaves that component undetermined and is counted
/// correct.
pub fn lr_fb_accuracy(pred_phi: f64, gt_phi: f64) -> (u8, u8) {
    let (ps, pc) = pred_phi.to_radians().sin_cos();
    let (gs, gc) = gt_phi.to_radians().sin_cos();
    let agree = |p: f64, g: f64| -> u8 {
        if g.abs() < 1e-9 {
            log::debug!("axis-aligned ground truth; component counted correct");
            1
        } else if (p >= 0.0) == (g >= 0.0) {
            1
        } else {
            0
        }
    };
    (agree(ps, gs), agree(pc, gc))
}

/// Per-item score entry in the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub kind: QuestionKind,
    pub score: f64,
}

/// Run-level aggregation: per-kind means, overall mean, counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_kind: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    pub overall: f64,
    pub items: Vec<ItemScore>,
    pub config: MetricsConfig,
}

fn kind_key(kind: QuestionKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{kind:?}"))
}

/// Score a run: direction questions via `mcq_score` against the ground-truth
/// label, distance questions via `distance_score` against ground-truth
/// meters. Predictions and ground truths are matched to questions by id.
pub fn evaluate_run(
    questions: &[Question],
    predictions: &[Answer],
    gts: &[Answer],
    config: &MetricsConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if predictions.is_empty() {
        return Err(Error::EvalMismatch("empty prediction set".into()));
    }
    let find = |answers: &[Answer], id: &str, what: &str| -> Result<Answer> {
        answers
            .iter()
            .find(|a| a.id == id)
            .cloned()
            .ok_or_else(|| Error::EvalMismatch(format!("no {what} for question id {id:?}")))
    };
    let mut items = Vec::with_capacity(questions.len());
    for q in questions {
        let pred = find(predictions, &q.id, "prediction")?;
        let gt = find(gts, &q.id, "ground truth")?;
        let score = if q.kind.is_direction() {
            let gt_label = gt.label.as_deref().ok_or_else(|| {
                Error::EvalMismatch(format!("ground truth for {} lacks a label", q.id))
            })?;
            let choice = q
                .options
                .as_deref()
                .and_then(|opts| {
                    opts.iter()
                        .find(|c| normalize(&c.text) == normalize(gt_label) || c.letter == gt_label)
                })
                .cloned()
                .unwrap_or(Choice {
                    letter: String::new(),
                    text: gt_label.to_owned(),
                });
            pred.label
                .as_deref()
                .map(|p| mcq_score(p, &choice) as f64)
                .unwrap_or(0.0)
        } else {
            let gt_m = gt.meters.ok_or_else(|| {
                Error::EvalMismatch(format!("ground truth for {} lacks meters", q.id))
            })?;
            pred.meters
                .map(|p| distance_score(p, gt_m, config))
                .unwrap_or(0.0)
        };
        items.push(ItemScore {
            id: q.id.clone(),
            kind: q.kind,
            score,
        });
    }
    let mut per_kind: BTreeMap<String, f64> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for item in &items {
        let key = kind_key(item.kind);
        *per_kind.entry(key.clone()).or_default() += item.score;
        *counts.entry(key).or_default() += 1;
    }
    for (key, sum) in per_kind.iter_mut() {
        *sum /= counts[key] as f64;
    }
    let overall = if items.is_empty() {
        0.0
    } else {
        items.iter().map(|i| i.score).sum::<f64>() / items.len() as f64
    };
    Ok(EvalReport {
        per_kind,
        counts,
        overall,
        items,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn choice(letter: &str, text: &str) -> Choice {
        Choice {
            letter: letter.into(),
            text: text.into(),
        }
    }

    #[test]
    fn mcq_letter_and_text() {
        let gt = choice("C", "back");
        assert_eq!(mcq_score("C", &gt), 1);
        assert_eq!(mcq_score("c", &gt), 1);
        assert_eq!(mcq_score("back", &gt), 1);
        assert_eq!(mcq_score("Back.", &gt), 1);
        assert_eq!(mcq_score("front", &gt), 0);
        assert_eq!(mcq_score("", &gt), 0);
    }

    #[test]
    fn mcq_hyphen_space_equivalence() {
        let gt = choice("D", "back-right");
        assert_eq!(mcq_score("Back-Right", &gt), 1);
        assert_eq!(mcq_score("back right", &gt), 1);
        assert_eq!(mcq_score("backright-ish", &gt), 0);
    }

    #[test]
    fn distance_threshold_enumeration() {
        let cfg = MetricsConfig::default();
        assert_eq!(distance_score(2.0, 2.0, &cfg), 1.0);
        // |err| = 0.5 passes tau in {0.5 .. 1.0}: six of ten thresholds
        assert!((distance_score(2.5, 2.0, &cfg) - 0.6).abs() < 1e-12);
        assert_eq!(distance_score(3.2, 2.0, &cfg), 0.0);
        assert_eq!(distance_score(f64::NAN, 2.0, &cfg), 0.0);
    }

    #[test]
    fn iou_hand_cases() {
        assert!((interval_iou((10.0, 20.0), (10.0, 20.0)) - 1.0).abs() < 1e-12);
        assert!((interval_iou((10.0, 20.0), (12.0, 22.0)) - 8.0 / 12.0).abs() < 1e-12);
        assert_eq!(interval_iou((0.0, 1.0), (2.0, 3.0)), 0.0);
    }

    #[test]
    fn t_miou_partial_overlap() {
        let cfg = MetricsConfig::default();
        // All IoU = 0.3: recall 1 for tau <= 0.3 (six thresholds), mean 0.6
        // interval (0, 3) vs (0, 10): inter 3, union 10 => IoU 0.3
        let gts = vec![(0.0, 10.0); 4];
        let preds = vec![(0.0, 3.0); 4];
        let r = t_miou(&preds, &gts, &cfg).unwrap();
        assert!((r.mean - 0.6).abs() < 1e-12);
        for (tau, recall) in &r.recall_at {
            assert_eq!(*recall, if *tau <= 0.3 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn t_miou_exact_and_disjoint() {
        let cfg = MetricsConfig::default();
        let spans = vec![(1.0, 2.0), (5.0, 9.0)];
        assert_eq!(t_miou(&spans, &spans, &cfg).unwrap().mean, 1.0);
        let far = vec![(100.0, 101.0), (200.0, 201.0)];
        assert_eq!(t_miou(&far, &spans, &cfg).unwrap().mean, 0.0);
        assert!(t_miou(&spans, &far[..1], &cfg).is_err());
    }

    #[test]
    fn loc_gate() {
        let cfg = MetricsConfig::default();
        let gt = EgoObservation::new(0.0, 0.0, 2.0);
        let ok = loc_accuracy(&EgoObservation::new(0.0, 30.0, 2.5), &gt, &cfg);
        assert!(ok.correct);
        let at_bound = loc_accuracy(&EgoObservation::new(0.0, 45.0, 2.0), &gt, &cfg);
        assert!(!at_bound.correct);
        assert!((at_bound.theta_err - 45.0).abs() < 1e-12);
        let wrapped = loc_accuracy(
            &EgoObservation::new(0.0, -179.0, 2.0),
            &EgoObservation::new(0.0, 179.0, 2.0),
            &cfg,
        );
        assert!((wrapped.theta_err - 2.0).abs() < 1e-12);
        assert!(wrapped.correct);
    }

    #[test]
    fn lr_fb_signs() {
        assert_eq!(lr_fb_accuracy(60.0, 80.0), (1, 1));
        assert_eq!(lr_fb_accuracy(60.0, 120.0), (1, 0));
        assert_eq!(lr_fb_accuracy(-60.0, 60.0), (0, 1));
        // gt exactly on the forward axis: l/r component is undetermined
        assert_eq!(lr_fb_accuracy(10.0, 0.0), (1, 1));
        assert_eq!(lr_fb_accuracy(100.0, 0.0), (1, 0));
    }

    #[test]
    fn evaluate_run_hand_aggregation() {
        let cfg = MetricsConfig::default();
        let q = |id: &str, kind| Question {
            id: id.into(),
            kind,
            event: String::new(),
            span: None,
            options: crate::qa::direction_choices(kind),
            reference: None,
            facing: None,
        };
        let ans = |id: &str, label: Option<&str>, meters: Option<f64>| Answer {
            id: id.into(),
            label: label.map(str::to_owned),
            meters,
            eval_time: 0.0,
        };
        let questions = vec![
            q("a", QuestionKind::EgoDirSimple),
            q("b", QuestionKind::EgoDirSimple),
            q("c", QuestionKind::EgoDist),
            q("d", QuestionKind::EgoDist),
        ];
        let gts = vec![
            ans("a", Some("left"), None),
            ans("b", Some("back"), None),
            ans("c", None, Some(2.0)),
            ans("d", None, Some(3.0)),
        ];
        let preds = vec![
            ans("a", Some("left"), None),  // 1.0
            ans("b", Some("right"), None), // 0.0
            ans("c", None, Some(2.0)),     // 1.0
            ans("d", None, Some(3.5)),     // 0.6
        ];
        let report = evaluate_run(&questions, &preds, &gts, &cfg).unwrap();
        assert!((report.overall - 0.65).abs() < 1e-12);
        assert!((report.per_kind["ego_dir_simple"] - 0.5).abs() < 1e-12);
        assert!((report.per_kind["ego_dist"] - 0.8).abs() < 1e-12);
        assert_eq!(report.counts["ego_dist"], 2);
    }

    #[test]
    fn evaluate_run_perfect_and_errors() {
        let cfg = MetricsConfig::default();
        let questions = vec![Question {
            id: "a".into(),
            kind: QuestionKind::AlloDist,
            event: String::new(),
            span: None,
            options: None,
            reference: Some("x".into()),
            facing: None,
        }];
        let gts = vec![Answer {
            id: "a".into(),
            label: None,
            meters: Some(4.2),
            eval_time: 0.0,
        }];
        let report = evaluate_run(&questions, &gts, &gts, &cfg).unwrap();
        assert_eq!(report.overall, 1.0);
        assert!(evaluate_run(&questions, &[], &gts, &cfg).is_err());
        let wrong_id = vec![Answer {
            id: "zz".into(),
            ..gts[0].clone()
        }];
        let err = evaluate_run(&questions, &wrong_id, &gts, &cfg).unwrap_err();
        assert!(err.to_string().contains("\"a\""), "{err}");
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a0 in -50.0..50.0f64, al in 0.01..20.0f64,
                                     b0 in -50.0..50.0f64, bl in 0.01..20.0f64) {
            let a = (a0, a0 + al);
            let b = (b0, b0 + bl);
            let x = interval_iou(a, b);
            let y = interval_iou(b, a);
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
        }

        #[test]
        fn distance_score_monotone(gt in 0.1..10.0f64, e1 in 0.0..2.0f64, e2 in 0.0..2.0f64) {
            let cfg = MetricsConfig::default();
            let (small, large) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(
                distance_score(gt + small, gt, &cfg) >= distance_score(gt + large, gt, &cfg)
            );
        }

        #[test]
        fn recall_curve_non_increasing(ious in proptest::collection::vec(0.0..1.0f64, 1..20)) {
            let cfg = MetricsConfig::default();
            let gts: Vec<(f64, f64)> = vec![(0.0, 1.0); ious.len()];
            // construct prediction intervals with the given IoU against (0,1)
            let preds: Vec<(f64, f64)> = ious.iter().map(|&iou| (0.0, iou.max(1e-6))).collect();
            let r = t_miou(&preds, &gts, &cfg).unwrap();
            for w in r.recall_at.windows(2) {
                prop_assert!(w[1].1 <= w[0].1 + 1e-12);
            }
        }

        #[test]
        fn loc_accuracy_wraps(theta in -180.0..180.0f64, r in 0.1..5.0f64) {
            let cfg = MetricsConfig::default();
            let a = EgoObservation::new(0.0, theta, r);
            let b = EgoObservation { theta: theta + 360.0, ..a };
            let ra = loc_accuracy(&a, &a, &cfg);
            let rb = loc_accuracy(&b, &a, &cfg);
            prop_assert_eq!(ra.correct, rb.correct);
            prop_assert!((ra.theta_err - rb.theta_err).abs() < 1e-9);
        }
    }
}
