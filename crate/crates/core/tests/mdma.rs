use pcsc::channel::ChannelConfig;
use pcsc::mdma::{shared_len, sigma, sigma_at_sor, slot_seed, split_shared, transmit_frame};
use pcsc::pipeline::send_analog;
use proptest::prelude::*;

fn pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

#[test]
fn sor_zero_matches_single_user_links() {
    let s1: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
    let s2: Vec<f64> = (0..64).map(|i| (i as f64 * 0.11).cos()).collect();
    let ch = ChannelConfig::awgn(5.0, 0);
    let frame = split_shared(&s1, &s2, 0.0).unwrap();
    let (r1, r2) = transmit_frame(&frame, &ch, 77).unwrap();
    assert_eq!(r1, send_analog(&s1, &ch.with_seed(slot_seed(77, 1))).unwrap());
    assert_eq!(r2, send_analog(&s2, &ch.with_seed(slot_seed(77, 2))).unwrap());
}

#[test]
fn full_sharing_sends_half_the_symbols() {
    let s1 = vec![1.0; 10];
    let s2 = vec![2.0; 10];
    let frame = split_shared(&s1, &s2, 1.0).unwrap();
    assert_eq!(frame.transmitted_len(), 10);
    let (r1, r2) = transmit_frame(&frame, &ChannelConfig::awgn(f64::INFINITY, 0), 1).unwrap();
    assert_eq!(r1, vec![1.5; 10]);
    assert_eq!(r1, r2);
}

proptest! {
    #[test]
    fn shared_set_minimizes_total_difference((s1, s2) in pair(9), sor in 0.0f64..=1.0) {
        let frame = split_shared(&s1, &s2, sor).unwrap();
        let sg = sigma(&s1, &s2).unwrap();
        let n = shared_len(s1.len(), sor);
        prop_assert_eq!(frame.shared_indices.len(), n);
        let got: f64 = frame.shared_indices.iter().map(|&i| sg[i]).sum();
        let mut best = f64::INFINITY;
        for subset in 0u32..1 << s1.len() {
            if subset.count_ones() as usize == n {
                let total: f64 = (0..s1.len()).filter(|i| subset >> i & 1 == 1).map(|i| sg[i]).sum();
                best = best.min(total);
            }
        }
        prop_assert!((got - best).abs() < 1e-12);
        let mut all: Vec<usize> = frame.shared_indices.iter().chain(&frame.personal_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..s1.len()).collect::<Vec<_>>());
    }

    #[test]
    fn noiseless_shared_error_is_half_sigma((s1, s2) in pair(40), sor in 0.0f64..=1.0) {
        let frame = split_shared(&s1, &s2, sor).unwrap();
        let (r1, r2) = transmit_frame(&frame, &ChannelConfig::awgn(f64::INFINITY, 0), 5).unwrap();
        for &i in &frame.shared_indices {
            let half = 0.5 * (s1[i] - s2[i]).abs();
            prop_assert!(((r1[i] - s1[i]).abs() - half).abs() < 1e-12);
            prop_assert!(((r2[i] - s2[i]).abs() - half).abs() < 1e-12);
        }
        for &i in &frame.personal_indices {
            prop_assert_eq!(r1[i], s1[i]);
            prop_assert_eq!(r2[i], s2[i]);
        }
    }

    #[test]
    fn sigma_at_sor_is_monotone((s1, s2) in pair(40), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sigma_at_sor(&s1, &s2, lo).unwrap() <= sigma_at_sor(&s1, &s2, hi).unwrap());
    }
}
