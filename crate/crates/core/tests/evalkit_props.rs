use std::collections::HashMap;

use clpd::evalkit::synth::{World, WorldConfig};
use clpd::evalkit::{
    build_pair_dataset, char_pr, generate_dataset, read_jsonl, recall_at_k, write_jsonl, GenConfig, GoldAnnotation,
    PairExample,
};
use clpd::pipeline::Detection;
use clpd::textproc::{slice_chars, CharSpan};
use proptest::prelude::*;

fn ranked() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<Vec<String>>)> {
    proptest::collection::vec(
        (
            proptest::collection::vec("p[0-9]{1,2}", 0..60),
            proptest::collection::vec("p[0-9]{1,2}", 1..4),
        ),
        1..20,
    )
    .prop_map(|v| v.into_iter().unzip())
}

fn span_in(len: usize) -> impl Strategy<Value = CharSpan> {
    (0..=len, 0..=len).prop_map(|(a, b)| CharSpan::new(a.min(b), a.max(b)))
}

fn annotations() -> impl Strategy<Value = (Vec<Detection>, Vec<GoldAnnotation>)> {
    let det = (0..2usize, span_in(100), 0..2usize).prop_map(|(d, span, s)| Detection {
        susp_doc: format!("s{d}"),
        susp_span: span,
        src_doc: format!("r{s}"),
        src_span: CharSpan::new(0, 1),
        score: 1.0,
    });
    let gold = (0..2usize, span_in(100), 0..2usize).prop_map(|(d, span, s)| GoldAnnotation {
        susp_doc: format!("s{d}"),
        susp_span: span,
        src_doc: format!("r{s}"),
        src_span: CharSpan::new(0, 1),
    });
    (
        proptest::collection::vec(det, 0..6),
        proptest::collection::vec(gold, 0..6),
    )
}

fn lengths() -> HashMap<String, usize> {
    HashMap::from([("s0".to_string(), 100), ("s1".to_string(), 100)])
}

/// Character-mask oracle written from scratch for comparison.
fn masks(dets: &[Detection], gold: &[GoldAnnotation]) -> (f64, f64) {
    let (mut detected, mut matched, mut relevant) = (0usize, 0usize, 0usize);
    for doc in ["s0", "s1"] {
        for c in 0..100 {
            let d_here: Vec<&Detection> = dets
                .iter()
                .filter(|d| d.susp_doc == doc && d.susp_span.start <= c && c < d.susp_span.end)
                .collect();
            let g_here: Vec<&GoldAnnotation> = gold
                .iter()
                .filter(|g| g.susp_doc == doc && g.susp_span.start <= c && c < g.susp_span.end)
                .collect();
            detected += usize::from(!d_here.is_empty());
            relevant += usize::from(!g_here.is_empty());
            matched += usize::from(d_here.iter().any(|d| g_here.iter().any(|g| g.src_doc == d.src_doc)));
        }
    }
    let p = if detected == 0 {
        0.0
    } else {
        matched as f64 / detected as f64
    };
    let r = if relevant == 0 {
        0.0
    } else {
        matched as f64 / relevant as f64
    };
    (p, r)
}

proptest! {
    #[test]
    fn recall_grows_with_k((results, gold) in ranked()) {
        let mut prev = 0.0;
        for k in [0, 1, 5, 10, 50, 100] {
            let r = recall_at_k(&results, &gold, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn char_metrics_match_mask_oracle((dets, gold) in annotations()) {
        let m = char_pr(&dets, &gold, &lengths()).unwrap();
        let (p, r) = masks(&dets, &gold);
        prop_assert!((m.precision - p).abs() < 1e-12);
        prop_assert!((m.recall - r).abs() < 1e-12);
    }

    #[test]
    fn gold_as_detections_is_perfect((_, gold) in annotations()) {
        let dets: Vec<Detection> = gold
            .iter()
            .map(|g| Detection {
                susp_doc: g.susp_doc.clone(),
                susp_span: g.susp_span,
                src_doc: g.src_doc.clone(),
                src_span: g.src_span,
                score: 1.0,
            })
            .collect();
        let m = char_pr(&dets, &gold, &lengths()).unwrap();
        if gold.iter().any(|g| !g.susp_span.is_empty()) {
            prop_assert_eq!((m.precision, m.recall), (1.0, 1.0));
        }
    }

    #[test]
    fn generated_gold_points_at_parallel_text(seed in any::<u64>(), lo in 0.0f64..0.5, width in 0.0f64..0.5) {
        let world = World::generate(WorldConfig { english_words: 80, extra_concepts: 20, ..Default::default() });
        let parallel = world.parallel_corpus(200, 1);
        let hosts = world.host_documents(4, 3, 2);
        let cfg = GenConfig { seed, fraction: (lo, lo + width), suspicious_docs: 4, reference_docs: 8, ..Default::default() };
        let ds = generate_dataset(&hosts, &parallel, &cfg).unwrap();
        for g in &ds.gold {
            let s = ds.suspicious.iter().find(|d| d.id == g.susp_doc).unwrap();
            let r = ds.reference.iter().find(|d| d.id == g.src_doc).unwrap();
            let pair = (slice_chars(&r.text, g.src_span).unwrap(), slice_chars(&s.text, g.susp_span).unwrap());
            prop_assert!(parallel.iter().any(|p| (p.l1.as_str(), p.l2.as_str()) == pair));
        }
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &ds.gold).unwrap();
        let back: Vec<GoldAnnotation> = read_jsonl(buf.as_slice(), "gold").unwrap();
        prop_assert_eq!(back, ds.gold);
    }
}

#[test]
fn recall_rejects_mismatched_lists() {
    assert!(recall_at_k(&[vec!["a"]], &[] as &[Vec<&str>], 1).is_err());
    assert!(recall_at_k(&[vec!["a"]], &[Vec::<&str>::new()], 1).is_err());
}

#[test]
fn char_pr_rejects_out_of_range_spans() {
    let d = Detection {
        susp_doc: "s0".into(),
        susp_span: CharSpan::new(90, 120),
        src_doc: "r0".into(),
        src_span: CharSpan::new(0, 1),
        score: 1.0,
    };
    assert!(char_pr(&[d], &[], &lengths()).is_err());
}

#[test]
fn pair_examples_use_integer_labels() {
    let ex = build_pair_dataset(
        &[
            clpd::evalkit::ParallelPair::new("one", "un"),
            clpd::evalkit::ParallelPair::new("two", "deux"),
        ],
        "en",
        "fr",
        1,
        0,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &ex).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.lines().next().unwrap().ends_with("\"label\":1}"));
    let back: Vec<PairExample> = read_jsonl(buf.as_slice(), "pairs").unwrap();
    assert_eq!(back, ex);
}
