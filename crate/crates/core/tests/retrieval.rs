mod support;

use histopatch::error::Error;
use histopatch::retrieval::{
    accuracy, knn_leave_one_out, linear_probe_cv, macro_f1, median, stratified_folds, wsi_distance,
    wsi_leave_one_out, EmbeddingStore, Exclusion, ProbeConfig, RowMeta, SoftmaxRegression,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::fixtures::{random_store, separable_blobs};
use support::oracles::{brute_rank, confusion_macro_f1, l2, median_of_min, perceptron_separates, slides_of};

fn meta(slide: &str, label: usize, patient: Option<&str>) -> RowMeta {
    RowMeta {
        slide_id: slide.into(),
        x: 0,
        y: 0,
        label,
        patient_id: patient.map(str::to_string),
    }
}

fn refs(rows: &[Vec<f32>]) -> Vec<&[f32]> {
    rows.iter().map(Vec::as_slice).collect()
}

#[test]
fn three_point_tie_goes_to_nearest() {
    let mut s = EmbeddingStore::new(1, vec!["A".into(), "B".into()]);
    s.push(&[0.0], meta("a1", 0, None)).unwrap();
    s.push(&[3.0], meta("a2", 0, None)).unwrap();
    s.push(&[1.0], meta("b1", 1, None)).unwrap();
    let r = knn_leave_one_out(&s, 2, Exclusion::SelfOnly).unwrap();
    let q = &r.queries[0];
    assert_eq!(q.neighbors, vec![2, 1]);
    assert_eq!(q.top1, 1);
    assert!(q.mv3.is_none());
}

#[test]
fn majority_of_three() {
    let mut s = EmbeddingStore::new(1, vec!["A".into(), "B".into()]);
    for (v, l) in [(0.0, 1), (1.0, 0), (2.0, 0), (3.0, 1)] {
        s.push(&[v], meta(&format!("s{v}"), l, None)).unwrap();
    }
    let r = knn_leave_one_out(&s, 3, Exclusion::SelfOnly).unwrap();
    // Neighbours of row 0 are labelled [A, A, B].
    assert_eq!(r.queries[0].mv3, Some(0));
}

#[test]
fn knn_matches_brute_force() {
    for (seed, exclusion) in [
        (1, Exclusion::SelfOnly),
        (2, Exclusion::SameSlide),
        (3, Exclusion::SamePatient),
        (4, Exclusion::SelfOnly),
    ] {
        let s = random_store(20, 5, 4, 3, true, seed);
        assert_eq!(s.len(), 100);
        let r = knn_leave_one_out(&s, 5, exclusion).unwrap();
        let m = s.meta();
        let oracle = brute_rank(
            s.len(),
            5,
            |a, b| l2(s.row(a), s.row(b)),
            |q, j| {
                q != j
                    && match exclusion {
                        Exclusion::SelfOnly => true,
                        Exclusion::SameSlide => m[q].slide_id != m[j].slide_id,
                        Exclusion::SamePatient => m[q].patient_id != m[j].patient_id,
                    }
            },
            |j| s.label_of(j),
        );
        for (got, want) in r.queries.iter().zip(&oracle) {
            assert_eq!(got.neighbors, want.neighbors, "query {}", got.query);
            assert_eq!((got.top1, got.mv3, got.mv5), (want.top1, want.mv3, want.mv5));
            assert!(got.distances.windows(2).all(|w| w[0] <= w[1]));
        }
        let preds: Vec<usize> = oracle.iter().map(|v| v.mv5.unwrap()).collect();
        let truths: Vec<usize> = (0..s.len()).map(|i| s.label_of(i)).collect();
        assert!((r.mv5.unwrap().macro_f1 - confusion_macro_f1(&preds, &truths, 3)).abs() < 1e-12);
    }
}

#[test]
fn knn_errors() {
    let empty = EmbeddingStore::new(2, vec!["A".into()]);
    assert!(matches!(knn_leave_one_out(&empty, 1, Exclusion::SelfOnly), Err(Error::EmptySet)));
    let s = random_store(2, 3, 2, 2, false, 1);
    assert!(knn_leave_one_out(&s, 3, Exclusion::SameSlide).is_ok());
    assert!(matches!(knn_leave_one_out(&s, 0, Exclusion::SelfOnly), Err(Error::Invalid(_))));
    assert!(matches!(
        knn_leave_one_out(&s, 4, Exclusion::SameSlide),
        Err(Error::InsufficientNeighbors { available: 3, required: 4, .. })
    ));
}

#[test]
fn median_examples() {
    assert_eq!(median(&mut [1.0, 2.0, 9.0]).unwrap(), 2.0);
    assert_eq!(median(&mut [9.0, 1.0, 2.0]).unwrap(), 2.0);
    assert_eq!(median(&mut [1.0, 3.0]).unwrap(), 2.0);
    assert!(matches!(median(&mut []), Err(Error::EmptySet)));
}

#[test]
fn wsi_distance_examples() {
    let q = vec![vec![0.0f32], vec![10.0], vec![20.0]];
    let t = vec![vec![1.0f32], vec![12.0], vec![29.0]];
    // Minimums 1, 2, 9.
    assert_eq!(wsi_distance(&refs(&q), &refs(&t)).unwrap(), 2.0);
    let q = vec![vec![0.0f32], vec![10.0]];
    let t = vec![vec![1.0f32], vec![13.0]];
    assert_eq!(wsi_distance(&refs(&q), &refs(&t)).unwrap(), 2.0);
    assert_eq!(wsi_distance(&refs(&q), &refs(&q)).unwrap(), 0.0);
    assert!(matches!(wsi_distance(&[], &refs(&q)), Err(Error::EmptySet)));
}

#[test]
fn wsi_identical_slide_is_top1() {
    let mut s = EmbeddingStore::new(2, vec!["A".into(), "B".into()]);
    for (slide, label, rows) in [
        ("a", 0, [[0.0, 0.0], [1.0, 1.0]]),
        ("b", 1, [[0.0, 0.0], [1.0, 1.0]]),
        ("c", 0, [[5.0, 5.0], [6.0, 6.0]]),
    ] {
        for r in rows {
            s.push(&r, meta(slide, label, None)).unwrap();
        }
    }
    let r = wsi_leave_one_out(&s, 1, false).unwrap();
    assert_eq!(r.queries[0].neighbors[0], 1);
    assert_eq!(r.queries[0].distances[0], 0.0);
}

#[test]
fn wsi_matches_brute_force() {
    for seed in 0..5 {
        let s = random_store(5, 4, 3, 2, false, 10 + seed);
        let slides = slides_of(&s);
        let r = wsi_leave_one_out(&s, 3, false).unwrap();
        let oracle = brute_rank(
            slides.len(),
            3,
            |a, b| median_of_min(&slides[a].2, &slides[b].2),
            |q, j| q != j,
            |j| slides[j].0,
        );
        for (got, want) in r.queries.iter().zip(&oracle) {
            assert_eq!(got.neighbors, want.neighbors);
            assert_eq!((got.top1, got.mv3), (want.top1, want.mv3));
        }
    }
}

#[test]
fn wsi_patient_exclusion_and_errors() {
    let s = random_store(6, 3, 2, 2, true, 3);
    let r = wsi_leave_one_out(&s, 2, true).unwrap();
    let slides = slides_of(&s);
    for q in &r.queries {
        assert!(q.neighbors.iter().all(|&n| slides[n].1 != slides[q.query].1));
    }
    let two = random_store(2, 3, 2, 2, false, 4);
    assert!(matches!(wsi_leave_one_out(&two, 3, false), Err(Error::InsufficientNeighbors { .. })));
    let one = random_store(1, 3, 2, 2, false, 4);
    assert!(matches!(wsi_leave_one_out(&one, 1, false), Err(Error::InsufficientSlides(1))));
}

#[test]
fn macro_f1_examples() {
    assert_eq!(macro_f1(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
    assert!((macro_f1(&[0, 0, 1], &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(matches!(macro_f1(&[0], &[0, 1]), Err(Error::LengthMismatch(1, 2))));
    assert!((accuracy(&[0, 0, 1], &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn macro_f1_matches_confusion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(1..60);
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let truths: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let got = macro_f1(&preds, &truths).unwrap();
        assert!((got - confusion_macro_f1(&preds, &truths, 4)).abs() < 1e-12);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let (classes, dim, n) = (3, 4, 12);
        let mut model = SoftmaxRegression::zeros(classes, dim);
        model.weights.iter_mut().chain(model.bias.iter_mut()).for_each(|v| *v = rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let (_, grad) = model.loss_and_grad(&x, &y);
        let eps = 1e-5;
        let mut numeric = Vec::new();
        for i in 0..model.weights.len() + model.bias.len() {
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                if i < m.weights.len() {
                    m.weights[i] += delta;
                } else {
                    let j = i - m.weights.len();
                    m.bias[j] += delta;
                }
                m.loss_and_grad(&x, &y).0
            };
            numeric.push((loss_at(eps) - loss_at(-eps)) / (2.0 * eps));
        }
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = analytic.iter().map(|a| a.abs()).fold(0.0, f64::max);
        assert!(diff / scale < 1e-5, "relative error {}", diff / scale);
    }
}

#[test]
fn loss_never_increases_with_small_step() {
    let s = random_store(10, 6, 5, 3, false, 7);
    let x: Vec<f64> = (0..s.len()).flat_map(|i| s.row(i).iter().map(|&v| v as f64)).collect();
    let y: Vec<usize> = (0..s.len()).map(|i| s.label_of(i)).collect();
    let mut model = SoftmaxRegression::zeros(3, 5);
    let history = model.fit(&x, &y, 200, 0.01);
    assert!(history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn separable_blobs_are_learned() {
    let s = separable_blobs(40, 8, 8);
    let x: Vec<Vec<f64>> = (0..s.len()).map(|i| s.row(i).iter().map(|&v| v as f64).collect()).collect();
    let y: Vec<usize> = (0..s.len()).map(|i| s.label_of(i)).collect();
    assert!(perceptron_separates(&x, &y, 100));
    let report = linear_probe_cv(&s, &ProbeConfig::default()).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert!(report.folds.iter().all(|f| f.accuracy >= 0.99));
    assert_eq!(report.formatted_accuracy(), "100.00±0.00");
}

#[test]
fn probe_rejects_small_classes() {
    let mut single = EmbeddingStore::new(2, vec!["A".into()]);
    for i in 0..10 {
        single.push(&[i as f32, 0.0], meta(&format!("s{i}"), 0, None)).unwrap();
    }
    assert!(matches!(linear_probe_cv(&single, &ProbeConfig::default()), Err(Error::ClassTooSmall { .. })));

    let mut lopsided = EmbeddingStore::new(1, vec!["A".into(), "B".into()]);
    for i in 0..13 {
        lopsided.push(&[i as f32], meta(&format!("s{i}"), (i >= 10) as usize, None)).unwrap();
    }
    assert!(matches!(
        linear_probe_cv(&lopsided, &ProbeConfig::default()),
        Err(Error::ClassTooSmall { count: 3, required: 5, .. })
    ));
}

#[test]
fn probe_is_deterministic() {
    let s = random_store(20, 3, 4, 2, false, 9);
    let cfg = ProbeConfig { epochs: 50, ..ProbeConfig::default() };
    let a = linear_probe_cv(&s, &cfg).unwrap();
    let b = linear_probe_cv(&s, &cfg).unwrap();
    assert_eq!(a.formatted_macro_f1(), b.formatted_macro_f1());
    assert_eq!(a.folds, b.folds);
}

#[test]
fn store_round_trip() {
    let s = random_store(4, 3, 6, 2, true, 11);
    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let back = EmbeddingStore::load(dir.path()).unwrap();
    assert_eq!(back.len(), s.len());
    assert_eq!(back.labels, s.labels);
    assert_eq!(back.meta(), s.meta());
    for i in 0..s.len() {
        assert_eq!(back.row(i), s.row(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_are_stratified(labels in prop::collection::vec(0usize..3, 15..80), seed in 0u64..100) {
        let folds = stratified_folds(&labels, 5, seed);
        for c in 0..3 {
            let mut per_fold = [0usize; 5];
            for (l, f) in labels.iter().zip(&folds) {
                if *l == c {
                    per_fold[*f] += 1;
                }
            }
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn macro_f1_relabel_invariant(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
        let perm = [2usize, 0, 3, 1];
        let (p, t): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let pp: Vec<usize> = p.iter().map(|&v| perm[v]).collect();
        let tt: Vec<usize> = t.iter().map(|&v| perm[v]).collect();
        let a = macro_f1(&p, &t).unwrap();
        prop_assert!((a - macro_f1(&pp, &tt).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn self_distance_is_zero(rows in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 3), 1..8),
                             other in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 3), 1..8)) {
        prop_assert_eq!(wsi_distance(&refs(&rows), &refs(&rows)).unwrap(), 0.0);
        prop_assert!(wsi_distance(&refs(&rows), &refs(&other)).unwrap() >= 0.0);
    }
}
