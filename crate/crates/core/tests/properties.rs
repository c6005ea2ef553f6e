use proptest::prelude::*;

use sepkit_core::criteria::{
    mixit_wrap, pit_wrap_with, si_snr, Criterion, CriterionKind, CriterionSpec, PitSolver, DEFAULT_EPS,
};
use sepkit_core::metrics::si_snr_improvement;
use sepkit_core::{istft, stft, StftConfig, Waveform};

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn spec() -> CriterionSpec {
    CriterionSpec::new(CriterionKind::SiSnr)
}

fn loss(a: &[f64], b: &[f64]) -> f64 {
    Criterion::<[f64]>::loss(&spec(), a, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_round_trip_any_length(x in signal(256..3000), quarter in any::<bool>()) {
        let hop = if quarter { 64 } else { 128 };
        let cfg = StftConfig::new(256, hop);
        let wave = Waveform::mono(x.clone(), 16_000).unwrap();
        let back = istft(&stft(&wave, &cfg).unwrap(), &cfg, x.len()).unwrap();
        let err: f64 = x.iter().zip(back.channel(0)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-9 * norm.max(1e-12));
    }

    #[test]
    fn stft_is_linear(pair in (300usize..2000).prop_flat_map(|n| (signal(n..n + 1), signal(n..n + 1))), a in -3.0f64..3.0) {
        let (x, y) = pair;
        let cfg = StftConfig::new(256, 64);
        let sx = stft(&Waveform::mono(x.clone(), 16_000).unwrap(), &cfg).unwrap();
        let sy = stft(&Waveform::mono(y.clone(), 16_000).unwrap(), &cfg).unwrap();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let sm = stft(&Waveform::mono(mixed, 16_000).unwrap(), &cfg).unwrap();
        for ((m, p), q) in sm.data().iter().zip(sx.data()).zip(sy.data()) {
            prop_assert!((m - (p * a + q)).norm() < 1e-9);
        }
    }

    #[test]
    fn si_snr_ignores_estimate_scale(
        pair in (64usize..1000).prop_flat_map(|n| (signal(n..n + 1), signal(n..n + 1))),
        noise_gain in 0.05f64..3.0,
        log_alpha in -1.0f64..1.0,
    ) {
        let (r, n) = pair;
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + noise_gain * b).collect();
        // eps is absolute, so the energies involved must sit well above it
        prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1.0 && n.iter().map(|v| v * v).sum::<f64>() > 1.0);
        let alpha = 10f64.powf(log_alpha);
        let scaled: Vec<f64> = e.iter().map(|v| alpha * v).collect();
        let a = si_snr(&r, &e, DEFAULT_EPS).unwrap();
        let b = si_snr(&r, &scaled, DEFAULT_EPS).unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn unprocessed_improvement_is_zero(pair in (64usize..600).prop_flat_map(|n| (signal(n..n + 1), signal(n..n + 1)))) {
        let (r, m) = pair;
        prop_assume!(r.iter().any(|v| *v != 0.0));
        prop_assert_eq!(si_snr_improvement(&m, &m, &r).unwrap(), 0.0);
    }

    #[test]
    fn pit_beats_every_pairing(s in 2usize..6, seed_signals in prop::collection::vec(signal(64..65), 10)) {
        let refs = &seed_signals[..s];
        let ests: Vec<Vec<f64>> = seed_signals[5..5 + s].to_vec();
        for solver in [PitSolver::Exhaustive, PitSolver::Hungarian] {
            let best = pit_wrap_with::<[f64], _, _>(&spec(), refs, &ests, solver).unwrap();
            let perm = best.permutation().unwrap().as_slice().to_vec();
            let at: f64 = perm.iter().enumerate().map(|(i, &j)| loss(&refs[i], &ests[j])).sum::<f64>() / s as f64;
            prop_assert!((at - best.value).abs() < 1e-12);
            // a few rotations of the identity as competitors
            for shift in 0..s {
                let other: f64 = (0..s).map(|i| loss(&refs[i], &ests[(i + shift) % s])).sum::<f64>() / s as f64;
                prop_assert!(best.value <= other + 1e-12);
            }
        }
    }

    #[test]
    fn mixit_beats_every_assignment(m in 2usize..5, sigs in prop::collection::vec(signal(48..49), 6)) {
        let mixtures = sigs[..2].to_vec();
        let ests = sigs[2..2 + m].to_vec();
        let best = mixit_wrap(&spec(), &mixtures, &ests).unwrap();
        for code in 0..(1usize << m) {
            let assign: Vec<usize> = (0..m).map(|j| (code >> j) & 1).collect();
            let mut total = 0.0;
            for (row, mix) in mixtures.iter().enumerate() {
                let mut remix = vec![0.0; mix.len()];
                for (e, _) in assign.iter().enumerate().filter(|(_, &r)| r == row) {
                    remix.iter_mut().zip(&ests[e]).for_each(|(a, b)| *a += b);
                }
                total += loss(mix, &remix);
            }
            prop_assert!(best.value <= total / 2.0 + 1e-12);
        }
    }
}
