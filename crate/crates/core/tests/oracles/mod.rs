//! Reference implementations used as test oracles. They are written from the
//! scoring and evaluation rules directly and share no code with the library
//! beyond its plain data types.
#![allow(dead_code)]

use triage_core::detection::{Detection, LandmarkClass};

/// Landmark presence flags, one per class, named rather than indexed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Present {
    pub pleura: bool,
    pub rib: bool,
    pub shadow: bool,
    pub a_lines: bool,
    pub b_lines: bool,
    pub b_patch: bool,
    pub consolidation: bool,
    pub air_bronchogram: bool,
}

impl Present {
    pub fn from_classes(classes: impl IntoIterator<Item = LandmarkClass>) -> Self {
        let mut p = Present::default();
        for c in classes {
            match c {
                LandmarkClass::Pleura => p.pleura = true,
                LandmarkClass::Rib => p.rib = true,
                LandmarkClass::Shadow => p.shadow = true,
                LandmarkClass::ALines => p.a_lines = true,
                LandmarkClass::BLines => p.b_lines = true,
                LandmarkClass::BPatch => p.b_patch = true,
                LandmarkClass::Consolidation => p.consolidation = true,
                LandmarkClass::AirBronchogram => p.air_bronchogram = true,
            }
        }
        p
    }
}

/// One row of the flat scoring table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedScores {
    pub quality: u8,
    pub quality_label: &'static str,
    pub severity: i8,
    pub severity_class: u8,
}

/// Quality: 30 for pleura, 15 for rib, 10 for shadow, 45 once for any
/// artifact. Labels: >=90 Excellent, 75..90 Good, 45..75 Average,
/// 30..45 BelowAverage, <30 Bad.
///
/// Severity: no pleura is -2 (Class 0); pleura without any artifact is -1
/// (Class 6); otherwise the highest of A-lines 0, B-lines 1, B-patch 2,
/// consolidation 3, air bronchogram 4, with Class = score + 1.
pub fn expected_scores(p: Present) -> ExpectedScores {
    let any_artifact = p.a_lines || p.b_lines || p.b_patch || p.consolidation || p.air_bronchogram;
    let mut quality = 0u8;
    if p.pleura {
        quality += 30;
    }
    if p.rib {
        quality += 15;
    }
    if p.shadow {
        quality += 10;
    }
    if any_artifact {
        quality += 45;
    }
    let quality_label = if quality >= 90 {
        "Excellent"
    } else if quality >= 75 {
        "Good"
    } else if quality >= 45 {
        "Average"
    } else if quality >= 30 {
        "BelowAverage"
    } else {
        "Bad"
    };

    let (severity, severity_class) = if !p.pleura {
        (-2, 0)
    } else if p.air_bronchogram {
        (4, 5)
    } else if p.consolidation {
        (3, 4)
    } else if p.b_patch {
        (2, 3)
    } else if p.b_lines {
        (1, 2)
    } else if p.a_lines {
        (0, 1)
    } else {
        (-1, 6)
    };
    ExpectedScores {
        quality,
        quality_label,
        severity,
        severity_class,
    }
}

/// Every one of the 256 presence patterns, in a fixed order.
pub fn all_patterns() -> Vec<Present> {
    (0u16..256)
        .map(|bits| {
            let b = |i: u16| bits & (1 << i) != 0;
            Present {
                pleura: b(0),
                rib: b(1),
                shadow: b(2),
                a_lines: b(3),
                b_lines: b(4),
                b_patch: b(5),
                consolidation: b(6),
                air_bronchogram: b(7),
            }
        })
        .collect()
}

pub fn pattern_classes(p: Present) -> Vec<LandmarkClass> {
    let pairs = [
        (p.pleura, LandmarkClass::Pleura),
        (p.rib, LandmarkClass::Rib),
        (p.shadow, LandmarkClass::Shadow),
        (p.a_lines, LandmarkClass::ALines),
        (p.b_lines, LandmarkClass::BLines),
        (p.b_patch, LandmarkClass::BPatch),
        (p.consolidation, LandmarkClass::Consolidation),
        (p.air_bronchogram, LandmarkClass::AirBronchogram),
    ];
    pairs.into_iter().filter(|(on, _)| *on).map(|(_, c)| c).collect()
}

/// Corner-form IoU computed from scratch.
pub fn ref_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Quadratic reference NMS: build the full same-class overlap matrix, then
/// walk candidates in precedence order (confidence descending, input index
/// ascending), keeping a box unless an already-kept box overlaps it.
pub fn ref_nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let n = dets.len();
    let overlaps: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    i != j
                        && dets[i].class == dets[j].class
                        && ref_iou(dets[i].bbox.corners(), dets[j].bbox.corners()) > threshold
                })
                .collect()
        })
        .collect();
    let precedes = |j: usize, i: usize| {
        dets[j].confidence > dets[i].confidence || (dets[j].confidence == dets[i].confidence && j < i)
    };
    let mut rank: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n - 1 - i {
            if precedes(rank[j + 1], rank[j]) {
                rank.swap(j, j + 1);
            }
        }
    }
    let mut kept = vec![false; n];
    for (pos, &i) in rank.iter().enumerate() {
        kept[i] = !rank[..pos].iter().any(|&j| kept[j] && overlaps[i][j]);
    }
    rank.into_iter().filter(|&i| kept[i]).map(|i| dets[i]).collect()
}

/// Greedy matching of one frame and one class: predictions in descending
/// confidence (stable), each taking the unmatched GT with the highest IoU at
/// or above `threshold`, lowest GT index on ties. Returns (confidence, tp).
pub fn ref_match(gt: &[[f64; 4]], preds: &[([f64; 4], f64)], threshold: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].1.partial_cmp(&preds[a].1).unwrap().then(a.cmp(&b)));
    let mut taken = vec![false; gt.len()];
    let mut out = Vec::new();
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = ref_iou(preds[p].0, *gbox);
            if v >= threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        out.push((preds[p].1, best.is_some()));
    }
    out
}

/// Brute-force all-point AP. Each distinct confidence is a threshold; the
/// operating point at threshold t counts every prediction with confidence
/// at least t. Interpolated precision at recall r is the best precision
/// among operating points with recall at least r; the AP is the rectangle
/// sum of interpolated precision over the recall steps.
pub fn ref_average_precision(scored: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return if scored.is_empty() { None } else { Some(0.0) };
    }
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let selected: Vec<_> = scored.iter().filter(|s| s.0 >= t).collect();
            let tp = selected.iter().filter(|s| s.1).count() as f64;
            (tp / gt_count as f64, tp / selected.len() as f64)
        })
        .collect();

    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();

    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        ap += (r - prev) * best;
        prev = r;
    }
    Some(ap)
}
