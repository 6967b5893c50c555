//! Property tests over the pure building blocks.

use corsa::missingness::{pattern_loglik, ModelVariant};
use corsa::panel::{
    derive_career_states, validate_panel, CareerSequence, CareerState, RawRecord,
};
use corsa::scoring::{crps_ensemble, interval_score, pairwise_compare};
use corsa::stats::{log_sum_exp, quantile_type7, sorted_copy};
use corsa_testkit::crps_double_sum;
use proptest::prelude::*;

fn career_strategy(t_n: usize) -> impl Strategy<Value = CareerSequence> {
    // Pick a (not-started, in-career, finished) split; b = 0 encodes the
    // never-started career.
    (0..=t_n, 0..=t_n).prop_map(move |(a, b)| {
        let a = a.min(t_n);
        let b = b.min(t_n - a);
        let mut states = vec![CareerState::NotStarted; a];
        states.extend(std::iter::repeat(CareerState::InCareer).take(b));
        states.extend(std::iter::repeat(CareerState::Finished).take(t_n - a - b));
        // An all-not-started career is valid; a jump 0 -> 2 only happens
        // with b = 0 and c > 0, which the chain gives probability zero but
        // the sequence type allows.
        CareerSequence::new(states).unwrap()
    })
}

proptest! {
    #[test]
    fn derived_careers_are_monotone(mask in prop::collection::vec(any::<bool>(), 1..20)) {
        prop_assume!(mask.iter().any(|&b| b));
        let career = derive_career_states(&mask).unwrap();
        for w in career.states().windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        // In-career exactly spans the observed range.
        let first = mask.iter().position(|&b| b).unwrap();
        let last = mask.iter().rposition(|&b| b).unwrap();
        for (t, s) in career.states().iter().enumerate() {
            let want = if t < first {
                CareerState::NotStarted
            } else if t <= last {
                CareerState::InCareer
            } else {
                CareerState::Finished
            };
            prop_assert_eq!(*s, want);
        }
    }

    #[test]
    fn complete_pattern_loglik_is_additive(
        career in career_strategy(6),
        mask_bits in prop::collection::vec(any::<bool>(), 12),
        l1 in 0.01f64..0.99,
        l2 in 0.01f64..0.99,
        d1 in 0.01f64..0.99,
        d2 in 0.01f64..0.99,
    ) {
        // Mask restricted to in-career years so the zero-probability guard
        // never fires.
        let t_n = 6;
        let mut mask = vec![false; 12];
        for p in 0..2 {
            for t in 0..t_n {
                if career.state(t) == CareerState::InCareer {
                    mask[p * t_n + t] = mask_bits[p * t_n + t];
                }
            }
        }
        let delta = [d1, d2];
        let full = pattern_loglik(&career, &mask, 2, Some((l1, l2)), Some(&delta), ModelVariant::Complete);
        let att = pattern_loglik(&career, &mask, 2, None, Some(&delta), ModelVariant::AttitudeOnly);
        let hist = pattern_loglik(&career, &mask, 2, Some((l1, l2)), None, ModelVariant::HistoryOnly);
        let none = pattern_loglik(&career, &mask, 2, None, None, ModelVariant::NoMissing);
        prop_assert_eq!(none, 0.0);
        if full.is_finite() {
            prop_assert!((full - (att + hist)).abs() < 1e-12);
        } else {
            // Only the 0 -> 2 jump career is impossible; then the history
            // factor must carry the -inf.
            prop_assert!(hist == f64::NEG_INFINITY);
        }
    }

    #[test]
    fn crps_sorted_form_equals_double_sum(
        draws in prop::collection::vec(-50.0f64..150.0, 1..200),
        y in -60.0f64..160.0,
    ) {
        let fast = crps_ensemble(&draws, y);
        let brute = crps_double_sum(&draws, y);
        prop_assert!((fast - brute).abs() < 1e-12, "{} vs {}", fast, brute);
        prop_assert!(fast >= -1e-12);
    }

    #[test]
    fn pairwise_preference_is_antisymmetric(
        pairs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..60),
        tie_every in 1usize..5,
    ) {
        let mut a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        // Force some exact ties.
        for i in (0..a.len()).step_by(tie_every) {
            a[i] = b[i];
        }
        let ab = pairwise_compare(&a, &b).unwrap();
        let ba = pairwise_compare(&b, &a).unwrap();
        prop_assert_eq!(ab + ba, 1.0);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn interval_score_at_least_band_width(
        draws in prop::collection::vec(0.0f64..100.0, 2..120),
        y in -20.0f64..120.0,
        alpha in 0.01f64..0.49,
    ) {
        let s = interval_score(&draws, y, alpha);
        let sorted = sorted_copy(&draws);
        let width = quantile_type7(&sorted, 1.0 - alpha / 2.0) - quantile_type7(&sorted, alpha / 2.0);
        prop_assert!(s >= width - 1e-12);
        prop_assert!(width >= 0.0);
    }

    #[test]
    fn log_sum_exp_bounds(xs in prop::collection::vec(-700.0f64..700.0, 1..40)) {
        let lse = log_sum_exp(&xs);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lse >= max - 1e-12);
        prop_assert!(lse <= max + (xs.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn panel_round_trips_through_records(
        cells in prop::collection::btree_set((0usize..3, 0usize..5, 0usize..4), 2..30),
    ) {
        // (p, q, t) cells; ensure every runner keeps >= 1 cell and T >= 2.
        let disciplines: Vec<String> = ["800", "1500", "5000"].iter().map(|s| s.to_string()).collect();
        let mut records: Vec<RawRecord> = cells
            .iter()
            .map(|&(p, q, t)| RawRecord {
                runner_id: format!("r{q}"),
                discipline: disciplines[p].clone(),
                year: 2006 + t as i32,
                seconds: 100.0 + (p * 31 + q * 7 + t) as f64,
            })
            .collect();
        records.push(RawRecord {
            runner_id: "anchor".into(),
            discipline: "800".into(),
            year: 2006,
            seconds: 100.0,
        });
        records.push(RawRecord {
            runner_id: "anchor".into(),
            discipline: "800".into(),
            year: 2009,
            seconds: 100.0,
        });
        let panel = validate_panel(&records, &disciplines, 1).unwrap();
        let back = panel.to_records();
        let panel2 = validate_panel(&back, &disciplines, 1).unwrap();
        prop_assert_eq!(panel, panel2);
    }
}
