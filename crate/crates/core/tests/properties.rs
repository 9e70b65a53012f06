mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use svseval::audio::{mixdown_mono, AudioBuffer};
use svseval::bsseval::{sdr_fir, si_sdr, ProjectionConfig};
use svseval::correlation::{srcc, CorrelationError};
use svseval::embedding::{embedding_mse, fad_song2song, EmbeddingSequence, Ridge};
use svseval::study::{build_groups, compute_dmos, BootstrapConfig, RatingRecord, StudyConfig};

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn pair(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(-1.0f64..1.0, n)))
}

fn energetic(x: &[f64]) -> bool {
    x.iter().map(|v| v * v).sum::<f64>() > 1e-3
}

fn tied(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(f64::from), n)
}

fn embeddings(frames: std::ops::Range<usize>, dims: usize) -> impl Strategy<Value = EmbeddingSequence> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dims), frames)
        .prop_map(|rows| EmbeddingSequence::from_rows(&rows, "enc", 10.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn si_sdr_is_scale_invariant_in_both_arguments(
        (est, reference) in pair(8..200),
        c in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
    ) {
        prop_assume!(energetic(&reference) && energetic(&est));
        let b = |x: &[f64]| common::buf(x.to_vec(), 16000);
        let base = si_sdr(&b(&est), &b(&reference)).unwrap();
        let scaled_est: Vec<f64> = est.iter().map(|v| v * c).collect();
        let scaled_ref: Vec<f64> = reference.iter().map(|v| v * c).collect();
        prop_assert!((si_sdr(&b(&scaled_est), &b(&reference)).unwrap() - base).abs() <= 1e-9);
        prop_assert!((si_sdr(&b(&est), &b(&scaled_ref)).unwrap() - base).abs() <= 1e-9);
    }

    #[test]
    fn fir_projection_never_loses_to_a_single_gain((est, reference) in pair(20..120), taps in 1usize..8) {
        prop_assume!(energetic(&reference) && energetic(&est));
        let b = |x: &[f64]| common::buf(x.to_vec(), 16000);
        let cfg = ProjectionConfig { filter_length: taps, ..ProjectionConfig::default() };
        let fir = sdr_fir(&b(&est), &b(&reference), &cfg).unwrap();
        let si = si_sdr(&b(&est), &b(&reference)).unwrap();
        prop_assert!(fir >= si - 1e-6, "fir {fir} < si {si}");
    }

    #[test]
    fn srcc_matches_rank_oracle_and_is_symmetric(n in 3usize..40, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rand::Rng::random_range(&mut r, 0..5))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rand::Rng::random_range(&mut r, 0..5))).collect();
        match srcc(&x, &y) {
            Ok(v) => {
                prop_assert!((v - common::srcc_bruteforce(&x, &y)).abs() <= 1e-12);
                prop_assert_eq!(v, srcc(&y, &x).unwrap());
                prop_assert!((-1.0..=1.0).contains(&v));
            }
            Err(e) => {
                prop_assert!(matches!(e, CorrelationError::Undefined), "{e}");
                let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
                prop_assert!(constant(&x) || constant(&y));
            }
        }
    }

    #[test]
    fn srcc_ignores_strictly_monotone_transforms(x in tied(25), y in tied(25)) {
        if let Ok(v) = srcc(&x, &y) {
            let fx: Vec<f64> = x.iter().map(|a| 3.0 * a + 7.0).collect();
            let gy: Vec<f64> = y.iter().map(|a| a.exp()).collect();
            prop_assert_eq!(srcc(&fx, &gy).unwrap(), v);
            let neg: Vec<f64> = x.iter().map(|a| -a).collect();
            prop_assert_eq!(srcc(&neg, &y).unwrap(), -v);
        }
    }

    #[test]
    fn dmos_is_order_invariant_and_bounded(
        ratings in prop::collection::vec((0usize..4, 0usize..6, 1u8..=5), 30..120),
        seed in any::<u64>(),
    ) {
        let records: Vec<RatingRecord> = ratings
            .iter()
            .enumerate()
            .map(|(k, &(s, p, rating))| RatingRecord {
                participant_id: format!("p{p}"),
                stimulus_id: format!("s{s}"),
                rating,
                timestamp: k as u64,
                group_id: 0,
            })
            .collect();
        let stimuli: Vec<String> = ratings.iter().map(|r| format!("s{}", r.0)).collect::<BTreeSet<_>>().into_iter().collect();
        let retained: BTreeSet<String> = (0..6).map(|p| format!("p{p}")).collect();
        let cfg = BootstrapConfig { resamples: 200, confidence: 0.95, seed: 3 };
        let a = compute_dmos(&records, &retained, &stimuli, &cfg).unwrap();
        let mut shuffled = records.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut common::rng(seed));
        let b = compute_dmos(&shuffled, &retained, &stimuli, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for s in &a {
            prop_assert!((1.0..=5.0).contains(&s.dmos));
            prop_assert!(s.ci_low <= s.median && s.median <= s.ci_high);
            prop_assert!(s.ci_low >= 1.0 && s.ci_high <= 5.0);
        }
    }

    #[test]
    fn groups_partition_the_stimuli(n in 20usize..300, groups in 1usize..5, gold in 0usize..4, seed in any::<u64>()) {
        let songs = (groups * gold).max(1);
        let mut cfg = StudyConfig::new(common::synthetic_stimuli(n, songs), seed);
        cfg.group_count = groups;
        cfg.gold_per_group = gold;
        let a = build_groups(&cfg).unwrap();
        prop_assert_eq!(a.groups.len(), groups);
        let mut all: Vec<&String> = a.groups.iter().flat_map(|g| &g.stimuli).collect();
        all.sort();
        let expected: Vec<String> = cfg.stimuli.iter().map(|s| s.id.clone()).collect();
        prop_assert_eq!(all, expected.iter().collect::<Vec<_>>());
        let sizes: Vec<usize> = a.groups.iter().map(|g| g.stimuli.len()).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(sizes[groups - 1] - sizes[0] <= 1);
        let refs: BTreeSet<&String> = a.groups.iter().flat_map(|g| g.gold.iter().map(|p| &p.reference_path)).collect();
        prop_assert_eq!(refs.len(), groups * gold);
        prop_assert!(a.groups.iter().all(|g| g.gold.len() == gold));
        prop_assert_eq!(build_groups(&cfg).unwrap(), a);
    }

    #[test]
    fn fad_is_a_symmetric_permutation_invariant_divergence(
        a in embeddings(3..30, 3),
        b in embeddings(3..30, 3),
        seed in any::<u64>(),
    ) {
        let ridge = Ridge::default();
        let ab = fad_song2song(&a, &b, ridge).unwrap();
        let ba = fad_song2song(&b, &a, ridge).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab), "{ab} vs {ba}");
        prop_assert!(fad_song2song(&a, &a, ridge).unwrap() <= 1e-8);
        let mut order: Vec<usize> = (0..a.frame_count()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut common::rng(seed));
        prop_assert_eq!(fad_song2song(&a.permuted(&order), &b, ridge).unwrap(), ab);
        prop_assert!(embedding_mse(&a, &a).unwrap() == 0.0);
    }

    #[test]
    fn mixdown_ignores_channel_order(chans in prop::collection::vec(signal(16..17), 1..6), seed in any::<u64>()) {
        let bufs: Vec<AudioBuffer> = chans.iter().map(|c| common::buf(c.clone(), 8000)).collect();
        let mut perm = bufs.clone();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut common::rng(seed));
        prop_assert_eq!(mixdown_mono(&bufs).unwrap(), mixdown_mono(&perm).unwrap());
    }
}
