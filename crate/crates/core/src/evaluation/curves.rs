use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClassMatches, MatchResult};
use crate::detection::LandmarkClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 against confidence, per class and pooled over all classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub per_class: BTreeMap<LandmarkClass, Vec<CurvePoint>>,
    pub all: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    tp: usize,
    predicted: usize,
    gt: usize,
}

impl Counts {
    fn at(m: &ClassMatches, threshold: f64) -> Counts {
        let kept = m.scored.iter().filter(|s| s.confidence >= threshold);
        let (tp, predicted) = kept.fold((0, 0), |(tp, n), s| (tp + usize::from(s.true_positive), n + 1));
        Counts {
            tp,
            predicted,
            gt: m.gt_count,
        }
    }

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            predicted: self.predicted + o.predicted,
            gt: self.gt + o.gt,
        }
    }

    fn precision(self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.tp as f64 / self.predicted as f64
        }
    }

    fn recall(self) -> f64 {
        if self.gt == 0 {
            0.0
        } else {
            self.tp as f64 / self.gt as f64
        }
    }

    fn point(self, threshold: f64) -> CurvePoint {
        let (p, r) = (self.precision(), self.recall());
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        CurvePoint {
            threshold,
            precision: p,
            recall: r,
            f1,
        }
    }
}

/// `steps + 1` evenly spaced thresholds covering `[0, 1]`.
pub fn confidence_grid(steps: u32) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| f64::from(i) / f64::from(steps)).collect()
}

/// Evaluates every class at each grid threshold, keeping predictions with
/// confidence `>= threshold`. With no predictions precision is 0; with no
/// ground truth recall is 0.
pub fn pr_f1_curves(matches: &MatchResult, grid: &[f64]) -> CurveSet {
    let mut per_class = BTreeMap::new();
    let mut all = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut pooled = Counts::default();
        for (class, m) in &matches.classes {
            let c = Counts::at(m, t);
            pooled = pooled.add(c);
            per_class.entry(*class).or_insert_with(Vec::new).push(c.point(t));
        }
        all.push(pooled.point(t));
    }
    CurveSet { per_class, all }
}

/// CSV with header `class,threshold,precision,recall,f1`; pooled rows use class `all`.
pub fn curves_to_csv(curves: &CurveSet) -> String {
    let mut out = String::from("class,threshold,precision,recall,f1\n");
    let rows = curves
        .per_class
        .iter()
        .map(|(c, pts)| (c.name(), pts))
        .chain(std::iter::once(("all", &curves.all)));
    for (name, pts) in rows {
        for p in pts {
            let _ = writeln!(
                out,
                "{name},{:.4},{:.6},{:.6},{:.6}",
                p.threshold, p.precision, p.recall, p.f1
            );
        }
    }
    out
}

/// Per-class counts at one confidence cut, plus a pooled `all` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointRow {
    pub class: String,
    pub labels: usize,
    pub predictions: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

pub fn operating_point(matches: &MatchResult, threshold: f64) -> Vec<OperatingPointRow> {
    let row = |name: &str, c: Counts| OperatingPointRow {
        class: name.to_string(),
        labels: c.gt,
        predictions: c.predicted,
        true_positives: c.tp,
        precision: c.precision(),
        recall: c.recall(),
    };
    let mut pooled = Counts::default();
    let mut rows = Vec::new();
    for (class, m) in &matches.classes {
        let c = Counts::at(m, threshold);
        pooled = pooled.add(c);
        rows.push(row(class.name(), c));
    }
    rows.insert(0, row("all", pooled));
    rows
}
