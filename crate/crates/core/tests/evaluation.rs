use geouq_core::evaluation::{
    analyze_terms, auroc, delta_hr, f1_score, mann_whitney_exact, mann_whitney_one_sided, predict,
    split_by_hallucination_rate, tune_threshold, QuestionTerms, SubsetName, Term, TermOptions,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn pair_count_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn best_f1_by_scan(scores: &[f64], labels: &[u8]) -> f64 {
    let mut cands: Vec<f64> = scores.to_vec();
    cands.push(f64::NEG_INFINITY);
    cands
        .iter()
        .map(|&t| f1_score(&predict(scores, t), labels).unwrap())
        .fold(0.0, f64::max)
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-20i32..20, n), prop::collection::vec(0u8..2, n)).prop_map(|(s, mut l)| {
            l[0] = 0;
            l[1] = 1;
            (s.into_iter().map(|v| v as f64 / 4.0).collect(), l)
        })
    })
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting((scores, labels) in scored_labels()) {
        prop_assert_eq!(auroc(&scores, &labels).unwrap(), pair_count_auroc(&scores, &labels));
    }

    #[test]
    fn auroc_ignores_strictly_increasing_transforms((scores, labels) in scored_labels(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let base = auroc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| a * s * s * s + b).collect();
        let exped: Vec<f64> = scores.iter().map(|s| (s / 4.0).exp()).collect();
        prop_assert_eq!(auroc(&cubed, &labels).unwrap(), base);
        prop_assert_eq!(auroc(&exped, &labels).unwrap(), base);
    }

    #[test]
    fn tuned_threshold_reaches_the_scan_optimum((scores, labels) in scored_labels()) {
        let t = tune_threshold(&scores, &labels, 1.0, 0).unwrap();
        let f1 = f1_score(&predict(&scores, t.tau), &labels).unwrap();
        let best = best_f1_by_scan(&scores, &labels);
        prop_assert!(f1 >= best - 1e-12);
        prop_assert_eq!(f1, t.val_f1);
    }

    #[test]
    fn delta_hr_is_count_weighted_over_disjoint_parts(
        a in prop::collection::vec((0u8..2, 0u8..2), 1..30),
        b in prop::collection::vec((0u8..2, 0u8..2), 1..30),
    ) {
        let split = |v: &[(u8, u8)]| (v.iter().map(|p| p.0).collect::<Vec<_>>(), v.iter().map(|p| p.1).collect::<Vec<_>>());
        let (ad, asel) = split(&a);
        let (bd, bsel) = split(&b);
        let whole: Vec<(u8, u8)> = a.iter().chain(&b).copied().collect();
        let (wd, wsel) = split(&whole);
        let ra = delta_hr(&ad, &asel).unwrap();
        let rb = delta_hr(&bd, &bsel).unwrap();
        let rw = delta_hr(&wd, &wsel).unwrap();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        prop_assert!((rw.delta_hr - (na * ra.delta_hr + nb * rb.delta_hr) / (na + nb)).abs() < 1e-12);
        prop_assert!((rw.delta_hr - (rw.baseline_hr - rw.bon_hr)).abs() == 0.0);
    }

    #[test]
    fn subsets_partition_the_valid_questions(labels in prop::collection::vec(prop::collection::vec(0u8..2, 1..12), 1..40)) {
        let mut seen = vec![0usize; labels.len()];
        for s in SubsetName::BANDS {
            for i in split_by_hallucination_rate(&labels, &s.spec()) {
                seen[i] += 1;
            }
        }
        let valid = split_by_hallucination_rate(&labels, &SubsetName::AllValid.spec());
        for (i, l) in labels.iter().enumerate() {
            let mixed = l.contains(&0) && l.contains(&1);
            prop_assert_eq!(seen[i], usize::from(mixed));
            prop_assert_eq!(valid.contains(&i), mixed);
        }
    }
}

#[test]
fn subset_boundary_examples() {
    let quarter = vec![vec![1, 0, 0, 0]];
    assert_eq!(split_by_hallucination_rate(&quarter, &SubsetName::Low.spec()), vec![0]);
    assert!(split_by_hallucination_rate(&quarter, &SubsetName::MidLow.spec()).is_empty());
    let extremes = vec![vec![0, 0], vec![1, 1]];
    for s in SubsetName::ALL {
        assert!(split_by_hallucination_rate(&extremes, &s.spec()).is_empty(), "{s}");
    }
    assert_eq!(split_by_hallucination_rate(&[vec![1, 0]], &SubsetName::MidValid.spec()), vec![0]);
}

#[test]
fn f1_examples() {
    assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
    assert_eq!(f1_score(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
    assert_eq!(f1_score(&[1, 1, 0], &[1, 0, 1]).unwrap(), 0.5);
    assert!(f1_score(&[1], &[1, 0]).is_err());
}

#[test]
fn shifted_normals_are_significant_and_exact_path_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lo: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
    let hi: Vec<f64> = (0..20).map(|_| 2.0 + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    assert!(mann_whitney_one_sided(&hi, &lo).unwrap().p_value < 1e-3);

    // exact p by enumerating every split of the pooled ranks
    let hi4 = &hi[..4];
    let lo4 = &lo[..4];
    let pooled: Vec<f64> = hi4.iter().chain(lo4).copied().collect();
    let u_of = |idx: &[usize]| {
        let mut u = 0.0;
        for &i in idx {
            for j in (0..8).filter(|j| !idx.contains(j)) {
                u += if pooled[i] > pooled[j] { 1.0 } else if pooled[i] == pooled[j] { 0.5 } else { 0.0 };
            }
        }
        u
    };
    let observed = u_of(&[0, 1, 2, 3]);
    let mut count = 0;
    let mut total = 0;
    for mask in 0u32..256 {
        if mask.count_ones() != 4 {
            continue;
        }
        let idx: Vec<usize> = (0..8).filter(|i| mask >> i & 1 == 1).collect();
        total += 1;
        if u_of(&idx) >= observed - 1e-12 {
            count += 1;
        }
    }
    let p = mann_whitney_exact(hi4, lo4).unwrap().p_value;
    assert!((p - count as f64 / total as f64).abs() < 1e-12);
}

fn kolmogorov_smirnov_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

#[test]
fn shuffled_labels_give_uniform_p_values() {
    let reps = 200;
    let p_values: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + rep);
            let questions: Vec<QuestionTerms> = (0..8)
                .map(|q| {
                    let mut labels: Vec<u8> = (0..12).map(|i| u8::from(i < 5)).collect();
                    labels.shuffle(&mut rng);
                    let mut t = QuestionTerms { question_id: format!("q{q}"), labels, ..Default::default() };
                    t.set(Term::LocalDensity, (0..12).map(|_| rng.random::<f64>()).collect());
                    t
                })
                .collect();
            let table = analyze_terms(&questions, &[SubsetName::AllValid], TermOptions::default()).unwrap();
            table.get(Term::LocalDensity, SubsetName::AllValid).unwrap().p_value.unwrap()
        })
        .collect();
    let d = kolmogorov_smirnov_uniform(p_values);
    assert!(d < 1.358 / (reps as f64).sqrt(), "KS distance {d}");
}

#[test]
fn inverted_separation_gives_p_near_one() {
    let questions: Vec<QuestionTerms> = (0..6)
        .map(|q| {
            let labels: Vec<u8> = (0..10).map(|i| u8::from(i < 9)).collect();
            let mut t = QuestionTerms { question_id: format!("q{q}"), labels: labels.clone(), ..Default::default() };
            t.set(Term::UsageRarity, labels.iter().enumerate().map(|(i, &l)| if l == 1 { i as f64 } else { 100.0 }).collect());
            t
        })
        .collect();
    let table = analyze_terms(&questions, &[SubsetName::High], TermOptions::default()).unwrap();
    let cell = table.get(Term::UsageRarity, SubsetName::High).unwrap();
    assert!(cell.p_value.unwrap() > 0.999);
    assert_eq!(table.get(Term::Voronoi, SubsetName::High).unwrap().p_value, None);
}
