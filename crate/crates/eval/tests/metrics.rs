use kinchain_core::chain::{padded_length_label, sample_config, LENGTH_LABEL_WIDTH};
use kinchain_eval::{accuracy, confusion, length_error, mean_length_error};
use kinchain_models::pad_lengths;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn accuracy_examples() {
    assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
    assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 4]).unwrap(), 2.0 / 3.0);
    assert_eq!(accuracy(&[2, 3, 4], &[1, 2, 3]).unwrap(), 0.0);
    assert!(accuracy(&[], &[]).is_err());
    assert!(accuracy(&[1], &[1, 2]).is_err());
}

#[test]
fn length_error_examples() {
    let truth = [1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(length_error(&truth, &truth).unwrap(), 0.0);
    let pred = [0.8, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert!((length_error(&truth, &pred).unwrap() - 0.2).abs() < 1e-12);
    // a spurious third link is charged in full
    let naive = [1.0, 0.5, 0.3, 0.0, 0.0, 0.0, 0.0];
    assert!((length_error(&truth, &naive).unwrap() - 0.09).abs() < 1e-12);
    // same case through the regressor padding, which rounds through f32
    let padded = pad_lengths(2, &[1.0, 0.5, 0.3]).unwrap();
    assert!((length_error(&truth, &padded).unwrap() - 0.09).abs() < 1e-7);
    assert!(length_error(&truth[..6], &pred).is_err());
    assert!(length_error(&truth, &[0.0; 8]).is_err());
}

#[test]
fn confusion_examples() {
    let perfect = confusion(&[1, 2, 3, 4, 5, 6, 6], &[1, 2, 3, 4, 5, 6, 6]).unwrap();
    for t in 0..6 {
        for p in 0..6 {
            let want = match (t == p, t) {
                (false, _) => 0,
                (true, 5) => 2,
                (true, _) => 1,
            };
            assert_eq!(perfect.counts[t][p], want);
        }
    }
    let single = confusion(&[5], &[2]).unwrap();
    assert_eq!(single.counts[1][4], 1);
    assert_eq!(single.total(), 1);
    assert!(confusion(&[0], &[1]).is_err());
    assert!(confusion(&[7], &[1]).is_err());
    assert!(confusion(&[1], &[7]).is_err());
}

/// Squared error computed from the unpadded vectors, treating any index past
/// either vector's end as zero.
fn oracle_error(truth: &[f64], pred: &[f64]) -> f64 {
    let span = truth.len().max(pred.len());
    let mut e = 0.0;
    for i in 0..span {
        let a = truth.get(i).copied().unwrap_or(0.0);
        let b = pred.get(i).copied().unwrap_or(0.0);
        e += (a - b).powi(2);
    }
    e
}

#[test]
fn metrics_agree_with_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs = 10_000;
    let mut truths = Vec::with_capacity(pairs);
    let mut preds = Vec::with_capacity(pairs);
    let mut padded_t = Vec::with_capacity(pairs);
    let mut padded_p = Vec::with_capacity(pairs);
    let mut oracle_total = 0.0;
    for _ in 0..pairs {
        let n = rng.gen_range(1..=6);
        let config = sample_config(&mut rng, n).unwrap();
        let n_hat = if rng.gen_bool(0.5) { n } else { rng.gen_range(1..=6) };
        let raw: Vec<f32> = (0..=n_hat).map(|_| rng.gen_range(-0.5f32..2.5)).collect();
        let raw64: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
        let truth = padded_length_label(&config).padded;
        let pred = pad_lengths(n_hat, &raw).unwrap();
        let e = length_error(&truth, &pred).unwrap();
        let want = oracle_error(config.lengths(), &raw64);
        assert!((e - want).abs() <= 1e-9, "E_L {e} vs oracle {want}");
        oracle_total += want;
        truths.push(n);
        preds.push(n_hat);
        padded_t.push(truth);
        padded_p.push(pred);
    }
    let mean = mean_length_error(&padded_t, &padded_p).unwrap();
    assert!((mean - oracle_total / pairs as f64).abs() <= 1e-9);

    let hits = (0..pairs).filter(|&i| truths[i] == preds[i]).count();
    let acc = accuracy(&preds, &truths).unwrap();
    assert_eq!(acc, hits as f64 / pairs as f64);

    let m = confusion(&preds, &truths).unwrap();
    for t in 1..=6 {
        for p in 1..=6 {
            let count = (0..pairs).filter(|&i| truths[i] == t && preds[i] == p).count() as u64;
            assert_eq!(m.counts[t - 1][p - 1], count);
        }
    }
    assert_eq!(m.total(), pairs as u64);
    assert_eq!(m.trace(), hits as u64);
}

fn length_vec() -> impl Strategy<Value = [f64; LENGTH_LABEL_WIDTH]> {
    prop::array::uniform7(-3.0f64..3.0)
}

proptest! {
    #[test]
    fn length_error_is_symmetric_and_nonnegative(a in length_vec(), b in length_vec()) {
        let ab = length_error(&a, &b).unwrap();
        let ba = length_error(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
        prop_assert_eq!(length_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn trace_over_total_is_accuracy(pairs in prop::collection::vec((1usize..=6, 1usize..=6), 1..200)) {
        let (preds, truths): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = confusion(&preds, &truths).unwrap();
        prop_assert_eq!(m.total(), preds.len() as u64);
        prop_assert_eq!(m.accuracy().unwrap(), accuracy(&preds, &truths).unwrap());
    }

    #[test]
    fn padding_zeroes_everything_past_the_count(n in 1usize..=6, raw in prop::collection::vec(-2.0f32..2.0, 7)) {
        let padded = pad_lengths(n, &raw[..=n]).unwrap();
        prop_assert!(padded[n + 1..].iter().all(|&v| v == 0.0));
        for i in 0..=n {
            prop_assert_eq!(padded[i], raw[i] as f64);
        }
    }

    #[test]
    fn normalized_rows_sum_to_one(pairs in prop::collection::vec((1usize..=6, 1usize..=6), 1..100)) {
        let (preds, truths): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = confusion(&preds, &truths).unwrap();
        for (row, counts) in m.row_normalized().iter().zip(&m.counts) {
            let s: f64 = row.iter().sum();
            if counts.iter().sum::<u64>() > 0 {
                prop_assert!((s - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }
}
