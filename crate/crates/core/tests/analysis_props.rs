use clpd::analysis::{calibrate, f_beta, OverlapScorer, PairInput, Scorer};
use clpd::evalkit::pair_metrics_from_scores;
use clpd::textproc::{LangResources, ResourceSet};
use clpd::thesaurus::{build_clusters, MergeMode, Pos, SenseRecord};
use proptest::prelude::*;

fn labelled() -> impl Strategy<Value = Vec<(f64, bool)>> {
    proptest::collection::vec((0u8..=20, any::<bool>()), 2..60).prop_map(|mut v| {
        v[0].1 = true;
        v[1].1 = false;
        v.into_iter().map(|(s, l)| (f64::from(s) / 20.0, l)).collect()
    })
}

fn scorer_fixture() -> (clpd::thesaurus::ClusterDictionary, ResourceSet) {
    let words = [
        ("c1", "cat", "chat"),
        ("c2", "dog", "chien"),
        ("c3", "house", "maison"),
        ("c4", "red", "rouge"),
    ];
    let recs: Vec<SenseRecord> = words
        .iter()
        .flat_map(|(c, en, fr)| {
            [("en", *en), ("fr", *fr)].map(|(lang, lemma)| SenseRecord {
                lemma: lemma.into(),
                lang: lang.into(),
                pos: Pos::Noun,
                concept_id: (*c).into(),
                freq_rank: Some(1),
                weight: None,
            })
        })
        .collect();
    let mut res = ResourceSet::new();
    res.insert(LangResources::new("en").with_stopwords(["the"]));
    res.insert(LangResources::new("fr").with_stopwords(["le", "la"]));
    (build_clusters(&recs, MergeMode::Top1).0, res)
}

fn sentence() -> impl Strategy<Value = (String, String)> {
    let word = prop_oneof![
        Just("cat"),
        Just("dog"),
        Just("house"),
        Just("red"),
        Just("the"),
        Just("chat"),
        Just("chien"),
        Just("maison"),
        Just("rouge"),
        Just("la"),
        Just("zzz"),
        Just("42"),
        Just("."),
    ];
    (
        proptest::collection::vec(word, 0..8),
        prop_oneof![Just("en"), Just("fr")],
    )
        .prop_map(|(w, l)| (w.join(" "), l.to_string()))
}

/// Best F over every threshold of the form "predict positive iff score >= t"
/// with t ranging over the observed scores and one value above them all.
fn brute_best(dev: &[(f64, bool)], beta: f64) -> f64 {
    let mut cands: Vec<f64> = dev.iter().map(|d| d.0).collect();
    cands.push(2.0);
    cands
        .into_iter()
        .map(|t| {
            let tp = dev.iter().filter(|d| d.0 >= t && d.1).count() as f64;
            let fp = dev.iter().filter(|d| d.0 >= t && !d.1).count() as f64;
            let fn_ = dev.iter().filter(|d| d.0 < t && d.1).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            f_beta(p, r, beta)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn calibration_reaches_the_brute_force_optimum(dev in labelled(), beta in prop_oneof![Just(0.25), Just(0.5), Just(1.0), Just(2.0)]) {
        let cal = calibrate(&dev, beta).unwrap();
        prop_assert!((cal.f_beta - brute_best(&dev, beta)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&cal.threshold.value));
    }

    #[test]
    fn calibration_f_survives_monotone_rescaling(dev in labelled()) {
        let squashed: Vec<(f64, bool)> = dev.iter().map(|(s, l)| (s * s * 0.5, *l)).collect();
        let a = calibrate(&dev, 0.25).unwrap();
        let b = calibrate(&squashed, 0.25).unwrap();
        prop_assert!((a.f_beta - b.f_beta).abs() < 1e-12);
    }

    #[test]
    fn pair_metrics_match_counting(dev in labelled(), t in 0.0f64..=1.0) {
        let scores: Vec<f64> = dev.iter().map(|d| d.0).collect();
        let labels: Vec<bool> = dev.iter().map(|d| d.1).collect();
        let m = pair_metrics_from_scores(&scores, &labels, t).unwrap();
        let count = |pred: bool, gold: bool| dev.iter().filter(|d| (d.0 >= t) == pred && d.1 == gold).count();
        prop_assert_eq!((m.tp, m.fp, m.fn_, m.tn), (count(true, true), count(true, false), count(false, true), count(false, false)));
        let p = if m.tp + m.fp > 0 { m.tp as f64 / (m.tp + m.fp) as f64 } else { 0.0 };
        let r = m.tp as f64 / (m.tp + m.fn_) as f64;
        prop_assert_eq!(m.precision, p);
        prop_assert_eq!(m.recall, r);
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        prop_assert!((m.f1 - f1).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_symmetric_and_bounded(x in sentence(), y in sentence()) {
        let (dict, res) = scorer_fixture();
        let scorer = OverlapScorer::new(&dict, &res);
        let ab = PairInput::new(&x.0, &x.1, &y.0, &y.1);
        let ba = PairInput::new(&y.0, &y.1, &x.0, &x.1);
        let s = scorer.score_batch(&[ab, ba]).unwrap();
        prop_assert_eq!(s[0], s[1]);
        prop_assert!((0.0..=1.0).contains(&s[0]));
    }
}

#[test]
fn translation_scores_one() {
    let (dict, res) = scorer_fixture();
    let scorer = OverlapScorer::new(&dict, &res);
    let s = scorer
        .score_batch(&[PairInput::new("The red cat.", "en", "Le chat rouge.", "fr")])
        .unwrap();
    assert_eq!(s, [1.0]);
}

#[test]
fn calibration_rejects_single_class() {
    assert!(calibrate(&[(0.2, true), (0.9, true)], 0.25).is_err());
    assert!(calibrate(&[(0.2, true), (0.9, false)], 0.0).is_err());
}
