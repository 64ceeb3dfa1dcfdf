mod common;

use common::{grad_instance, max_grad_error};
use glancevad::scorer::LossTerms;
use glancevad::types::VideoLabel;
use proptest::prelude::*;

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;

#[test]
fn every_loss_matches_finite_differences() {
    let cases = [
        ("l_mil", VideoLabel::Abnormal, LossTerms::MIL),
        ("l_abn", VideoLabel::Abnormal, LossTerms::ABN),
        ("l_nor", VideoLabel::Normal, LossTerms::NOR),
        ("l_total abnormal", VideoLabel::Abnormal, LossTerms::ALL),
        ("l_total normal", VideoLabel::Normal, LossTerms::ALL),
    ];
    for seed in 0..24 {
        let inst = grad_instance(seed);
        for (name, label, terms) in cases {
            let err = max_grad_error(&inst, label, terms, STEP);
            assert!(err < TOL, "{name}, instance {seed}: relative error {err:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn total_gradient_is_sum_of_terms(seed in 1000u64..1_000_000) {
        let inst = grad_instance(seed);
        let r = Some(&inst.target);
        let (_, total) = inst.model.backward(&inst.features, VideoLabel::Abnormal, r, Default::default(), LossTerms::ALL).unwrap();
        let (_, mil) = inst.model.backward(&inst.features, VideoLabel::Abnormal, r, Default::default(), LossTerms::MIL).unwrap();
        let (_, abn) = inst.model.backward(&inst.features, VideoLabel::Abnormal, r, Default::default(), LossTerms::ABN).unwrap();
        for i in 0..total.len() {
            prop_assert!((total[i] - mil[i] - abn[i]).abs() <= 1e-12 * (1.0 + total[i].abs()));
        }
    }
}
