mod common;

use common::oracle;
use histo_adapt::losses::{
    classification_loss, combine_adversarial, combine_total, discriminator_loss, mapping_loss, siamese_loss, LossReport,
};
use histo_adapt::nn::Matrix;
use proptest::prelude::*;

fn probs(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..0.999, n)
}

proptest! {
    #[test]
    fn adversarial_losses_match_oracle(ds in probs(1..9), dt in probs(1..9)) {
        let d = discriminator_loss(&ds, &dt).unwrap();
        let m = mapping_loss(&dt).unwrap();
        prop_assert!((d - oracle::discriminator_loss(&ds, &dt)).abs() < 1e-9);
        prop_assert!((m - oracle::mapping_loss(&dt)).abs() < 1e-9);
        prop_assert!(d >= 0.0 && m >= 0.0);
        prop_assert!((combine_adversarial(d, m) - (d + m)).abs() < 1e-12);
    }

    #[test]
    fn siamese_loss_matches_oracle(p in probs(1..9), bits in prop::collection::vec(any::<bool>(), 8)) {
        let y: Vec<f64> = bits.iter().take(p.len()).map(|&b| b as u8 as f64).collect();
        let s = siamese_loss(&p, &y).unwrap();
        prop_assert!((s - oracle::siamese_loss(&p, &y)).abs() < 1e-9);
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn classification_loss_matches_oracle(
        rows in prop::collection::vec((-8.0f64..8.0, -8.0f64..8.0, any::<bool>()), 1..9)
    ) {
        let logits: Vec<[f64; 2]> = rows.iter().map(|r| [r.0, r.1]).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.2 as usize).collect();
        let lm = Matrix::from_rows(&logits.iter().map(|l| l.to_vec()).collect::<Vec<_>>()).unwrap();
        let ym = Matrix::from_rows(&labels.iter().map(|&c| if c == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect::<Vec<_>>()).unwrap();
        let l = classification_loss(&lm, &ym).unwrap();
        prop_assert!((l - oracle::classification_loss(&logits, &labels)).abs() < 1e-9);
    }

    #[test]
    fn log_line_round_trips(d in 0.0f64..10.0, m in 0.0f64..10.0, s in 0.0f64..10.0, step in 0u64..100_000) {
        let r = LossReport { step, l_adv_d: Some(d), l_adv_m: Some(m), l_s: Some(s), ..Default::default() }.with_derived();
        prop_assert_eq!(r.l_t, Some(combine_total(d + m, s)));
        let back = LossReport::parse_log_line(&r.to_log_line(), 1).unwrap();
        prop_assert_eq!(back, r);
    }
}

#[test]
fn saturated_probabilities_stay_finite() {
    assert!(discriminator_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap().is_finite());
    assert!(mapping_loss(&[0.0]).unwrap().is_finite());
    assert!(siamese_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap().is_finite());
}

#[test]
fn empty_and_mismatched_inputs_are_rejected() {
    assert!(discriminator_loss(&[], &[0.5]).is_err());
    assert!(mapping_loss(&[]).is_err());
    assert!(siamese_loss(&[0.5], &[1.0, 0.0]).is_err());
}
