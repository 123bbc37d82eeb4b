use std::collections::BTreeMap;

use chrono::DateTime;
use proptest::prelude::*;
use triage_core::detection::{BBox, Detection, LandmarkClass, LandmarkSet};
use triage_core::scoring::{FrameAnalysis, QualityLabel, QualityRules};
use triage_core::video::{aggregate_video, scan_report, severity_boxplot, Diagnosis, ScanColor};

fn frame(i: usize, bits: u8) -> FrameAnalysis {
    let b = BBox::new(0.0, 0.0, 8.0, 8.0).unwrap();
    let dets = LandmarkSet::from_bits(bits)
        .iter()
        .map(|c| Detection::ground_truth(c, b))
        .collect();
    FrameAnalysis::from_kept(format!("f{i:03}"), dets, QualityRules::default())
}

fn quality_label() -> impl Strategy<Value = Option<QualityLabel>> {
    prop_oneof![
        Just(None),
        Just(Some(QualityLabel::Average)),
        Just(Some(QualityLabel::Good)),
        Just(Some(QualityLabel::Excellent)),
    ]
}

proptest! {
    #[test]
    fn video_aggregation_invariants(bits in proptest::collection::vec(any::<u8>(), 0..40), qmin in quality_label()) {
        let frames: Vec<_> = bits.iter().enumerate().map(|(i, b)| frame(i, *b)).collect();
        let v = aggregate_video("v", frames.clone(), qmin);
        let max = frames.iter().map(|f| f.severity.score).max().unwrap_or(-2);
        prop_assert_eq!(v.video_severity, max);
        let expected = match max {
            1.. => Diagnosis::Abnormal,
            0 => Diagnosis::Normal,
            _ => Diagnosis::Undetected,
        };
        prop_assert_eq!(v.diagnosis, expected);

        let earliest = frames.iter().find(|f| f.severity.score == max).map(|f| f.frame_id.clone());
        prop_assert_eq!(&v.worst_frame_id, &earliest);

        // summary: exactly the qualifying frames, in temporal order
        let want: Vec<_> = frames
            .iter()
            .filter(|f| f.severity.score >= 1 && qmin.is_none_or(|q| f.quality.label >= q))
            .map(|f| f.frame_id.clone())
            .collect();
        prop_assert_eq!(&v.summary_frame_ids, &want);
    }

    #[test]
    fn boxplot_is_ordered(scores in proptest::collection::vec(0i8..=4, 1..50)) {
        let b = severity_boxplot(&scores).unwrap();
        prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
        prop_assert_eq!(b.min, f64::from(*scores.iter().min().unwrap()));
        prop_assert_eq!(b.max, f64::from(*scores.iter().max().unwrap()));
    }

    #[test]
    fn report_always_has_fourteen_cells(sev in proptest::collection::btree_map(1u8..=14, 0u8..=4, 0..14)) {
        let videos: BTreeMap<u8, _> = sev
            .iter()
            .map(|(loc, s)| {
                // pleura plus the manifestation whose value is `s`
                let m = [LandmarkClass::ALines, LandmarkClass::BLines, LandmarkClass::BPatch,
                         LandmarkClass::Consolidation, LandmarkClass::AirBronchogram][usize::from(*s)];
                let bits = LandmarkSet::default().with(LandmarkClass::Pleura).with(m).bits();
                (*loc, aggregate_video(format!("v{loc}"), vec![frame(0, bits)], None))
            })
            .collect();
        let refs = videos.iter().map(|(l, v)| (*l, v)).collect();
        let report = scan_report("s", &refs, DateTime::UNIX_EPOCH).unwrap();
        prop_assert_eq!(report.locations.len(), 14);
        for (loc, cell) in &report.locations {
            let want = match sev.get(loc) {
                None => ScanColor::Black,
                Some(0) => ScanColor::Green,
                Some(1) => ScanColor::YellowGreen,
                Some(2) => ScanColor::Yellow,
                Some(3) => ScanColor::Orange,
                Some(_) => ScanColor::Red,
            };
            prop_assert_eq!(cell.color, want);
        }
    }
}

#[test]
fn video_severity_examples() {
    use LandmarkClass::*;
    let bits = |c: &[LandmarkClass]| c.iter().copied().collect::<LandmarkSet>().bits();
    let v = aggregate_video(
        "v",
        vec![
            frame(0, bits(&[])),
            frame(1, bits(&[Pleura])),
            frame(2, bits(&[Pleura, ALines])),
        ],
        None,
    );
    assert_eq!((v.video_severity, v.diagnosis), (0, Diagnosis::Normal));

    let v = aggregate_video(
        "v",
        vec![
            frame(0, bits(&[Pleura, ALines])),
            frame(1, bits(&[Pleura, BLines])),
            frame(2, bits(&[Pleura, BPatch])),
            frame(3, bits(&[Pleura, ALines])),
        ],
        None,
    );
    assert_eq!(v.summary_frame_ids, ["f001", "f002"]);
}
