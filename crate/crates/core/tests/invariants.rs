use proptest::prelude::*;
use qkdsim_core::channel::{class_rates, expected_gain, expected_qber, sample_tally, DriftState};
use qkdsim_core::finite_key::{binary_entropy, clopper_pearson, decoy_bounds, ChannelEstimates};
use qkdsim_core::{ClassRates, LinkConfig, SourceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn source() -> impl Strategy<Value = SourceConfig> {
    (0.05f64..1.2, 0.05f64..0.6, 0.0f64..0.3, 0.1f64..0.98, 0.05f64..0.9).prop_map(|(mu, f1, f2, p_mu, split)| {
        let nu1 = mu * f1;
        let nu2 = nu1 * f2;
        let p_nu1 = (1.0 - p_mu) * split;
        SourceConfig {
            mu,
            nu1,
            nu2,
            p_mu,
            p_nu1,
            p_nu2: 1.0 - p_mu - p_nu1,
            ..SourceConfig::default()
        }
    })
}

fn drift() -> impl Strategy<Value = DriftState> {
    (-4.0f64..4.0, -2.0f64..2.0, -500.0f64..500.0, 0.5f64..1.5).prop_map(|(ph, pol, t, pw)| DriftState {
        phase_error: ph,
        polarization_angle: pol,
        timing_offset: t,
        power_factor: pw,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sampled_tallies_are_consistent(s in source(), d in drift(), sent in prop::array::uniform3(0u64..5_000_000), seed in any::<u64>()) {
        let rates = class_rates(&d, &s, &LinkConfig::default());
        for (q, e) in rates.gain.iter().zip(rates.qber) {
            prop_assert!((0.0..=1.0).contains(q));
            prop_assert!((0.0..=0.5).contains(&e));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = sample_tally(&rates, sent, &mut rng);
        prop_assert!(t.is_consistent());
        for (c, n) in t.classes.iter().zip(sent) {
            prop_assert_eq!(c.sent, n);
        }
    }
}

proptest! {
    #[test]
    fn entropy_is_concave(a in 0.0f64..=1.0, b in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let h = |x: f64| binary_entropy(x).unwrap();
        let mid = w * a + (1.0 - w) * b;
        prop_assert!(h(mid) >= w * h(a) + (1.0 - w) * h(b) - 1e-12);
        prop_assert!(h(mid) <= 1.0);
        prop_assert!((h(a) - h(1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn gain_grows_with_photons_and_transmittance(m in 0.0f64..5.0, dm in 0.0f64..1.0, eta in 0.0f64..1.0, de in 0.0f64..0.5, y0 in 0.0f64..1e-3) {
        let eta2 = (eta + de).min(1.0);
        let q = expected_gain(m, eta, y0);
        prop_assert!(expected_gain(m + dm, eta, y0) >= q);
        prop_assert!(expected_gain(m, eta2, y0) >= q);
        prop_assert!(q >= y0 - 1e-18 && q <= 1.0);
    }

    #[test]
    fn interval_contains_point_estimate(n in 1u64..10_000_000, frac in 0.0f64..=1.0, eps in 1e-12f64..0.5) {
        let k = ((n as f64) * frac).floor() as u64;
        let b = clopper_pearson(k, n, eps).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!(b.lower <= p + 1e-15 && p <= b.upper + 1e-15);
        prop_assert!(0.0 <= b.lower && b.upper <= 1.0);
    }

    #[test]
    fn decoy_bounds_are_sound_with_exact_gains(s in source(), log_eta in -4.0f64..-0.7, y0 in 0.0f64..1e-3, e_mis in 0.0f64..0.1) {
        let eta = 10f64.powf(log_eta);
        let rates = ClassRates {
            gain: s.intensities().map(|m| expected_gain(m, eta, y0)),
            qber: s.intensities().map(|m| expected_qber(m, eta, y0, e_mis)),
        };
        let y1 = y0 + eta - y0 * eta;
        let e1 = (0.5 * y0 + e_mis * (1.0 - y0) * eta) / y1;
        let b = decoy_bounds(&ChannelEstimates::exact(&rates), &s);
        prop_assert!(b.y1_lower <= y1 * (1.0 + 1e-9));
        prop_assert!(b.e1_upper >= e1 * (1.0 - 1e-9));
        prop_assert!(b.y0_lower <= y0 * (1.0 + 1e-9) + 1e-18);
    }
}
