//! DSL transcriptions of the built-in native models.
//!
//! Each source here mirrors its native counterpart operation-for-operation,
//! so interpreting the transcription reproduces the native outputs to
//! floating-point identity. They serve as baseline definitions in prompts
//! and as equivalence fixtures in tests.

use crate::models::ModelFamily;

/// One shared car-following acceleration block with the three leader/follower
/// expressions spliced in. `p_*` are the family's parameter names for the
/// embedded car-following constants (`idm` and `mobil` order them
/// differently, but the names coincide).
fn accel_block(spacing: &str, sv: &str, lv: &str) -> String {
    let s_star = format!(
        "(add (param jam_space) (max (add (mul {sv} (param desired_time_window)) \
         (div (mul {sv} (sub {sv} {lv})) (mul (const 2) (sqrt (mul (param max_acc) \
         (param comfort_acc)))))) (const 0)))"
    );
    let v_ratio = format!("(div {sv} (max (param desired_speed) (const 0.000001)))");
    let s_ratio = format!("(div {s_star} (max {spacing} (const 0.000001)))");
    format!(
        "(if (le {spacing} (const 0)) (neg (param max_acc)) \
         (mul (param max_acc) (sub (sub (const 1) (pow {v_ratio} (param beta))) \
         (mul {s_ratio} {s_ratio}))))"
    )
}

/// Baseline car-following model.
pub fn idm_baseline() -> String {
    let body = accel_block("(input spacing)", "(input sv_spd)", "(input lv_spd)");
    format!("(defmodel idm (extra-params) {body})")
}

/// Final improved car-following model: closing-speed-gated blend of tanh
/// free-road and interaction terms.
pub fn idm_improved_final() -> String {
    let sv = "(input sv_spd)";
    let lv = "(input lv_spd)";
    let spacing = "(input spacing)";
    let s_star = format!(
        "(add (param jam_space) (max (add (mul {sv} (param desired_time_window)) \
         (div (mul {sv} (sub {sv} {lv})) (mul (const 2) (sqrt (mul (param max_acc) \
         (param comfort_acc)))))) (const 0)))"
    );
    let z = format!("(div (sub {spacing} {s_star}) (max {s_star} (const 1)))");
    let acc_free = format!(
        "(mul (param max_acc) (sub (const 1) (tanh (mul (param beta) \
         (sub (div {sv} (param desired_speed)) (const 1))))))"
    );
    let acc_interaction =
        format!("(mul (neg (param max_acc)) (sub (const 1) (tanh (mul (param beta) {z}))))");
    let weight = format!("(sigmoid (mul (param beta) (sub {sv} {lv})))");
    format!(
        "(defmodel idm (extra-params) (add (mul (sub (const 1) {weight}) {acc_free}) \
         (mul {weight} {acc_interaction})))"
    )
}

/// The four gap accelerations every lane-change rule probes.
struct MobilBlocks {
    current: String,
    new_self: String,
    new_rear_target: String,
    new_rear_original: String,
}

fn mobil_blocks() -> MobilBlocks {
    MobilBlocks {
        current: accel_block("(input s)", "(input v)", "(input of_v)"),
        new_self: accel_block("(input rtf_x)", "(input v)", "(input tf_v)"),
        new_rear_target: accel_block("(input rtr_x)", "(input tr_v)", "(input v)"),
        new_rear_original: accel_block("(input rr_x)", "(input or_v)", "(input v)"),
    }
}

/// Baseline lane-change model: politeness-weighted incentive against observed
/// follower accelerations with the deceleration safety check.
pub fn mobil_baseline() -> String {
    let b = mobil_blocks();
    let incentive = format!(
        "(add (sub {ns} {c}) (mul (param politeness) (add (sub {nrt} (input tr_acc)) \
         (sub {nro} (input or_acc)))))",
        ns = b.new_self,
        c = b.current,
        nrt = b.new_rear_target,
        nro = b.new_rear_original,
    );
    format!(
        "(defmodel mobil (extra-params) (mul (gt {incentive} (param acc_thres)) \
         (le {nrt} (param b_safe))))",
        nrt = b.new_rear_target,
    )
}

/// Final improved lane-change model: modeled-follower incentive, two-sided
/// gap safety, batch-adaptive threshold at the 75th percentile of
/// current-lane accelerations.
pub fn mobil_improved_final() -> String {
    let b = mobil_blocks();
    let incentive = format!(
        "(add (sub {ns} {c}) (mul (param politeness) (sub {nrt} {nro})))",
        ns = b.new_self,
        c = b.current,
        nrt = b.new_rear_target,
        nro = b.new_rear_original,
    );
    let threshold = format!("(percentile {c} 75)", c = b.current);
    let safe = "(mul (gt (input rtf_x) (param b_safe)) (gt (input rtr_x) (param b_safe)))";
    format!(
        "(defmodel mobil (extra-params) (mul (gt {incentive} {threshold}) {safe}))"
    )
}

/// Baseline linear density→speed relation.
pub fn lwr_baseline() -> String {
    "(defmodel lwr (extra-params) (mul (param v_f) (sub (const 1) \
     (div (input density) (param rho_max)))))"
        .to_string()
}

/// Final improved logistic density→speed relation with the extra steepness
/// parameter `k`.
pub fn lwr_improved_final() -> String {
    let safe = "(min (max (input density) (const 0)) (param rho_max))";
    format!(
        "(defmodel lwr (extra-params (k 0.1 10)) (mul (param v_f) (sub (const 1) \
         (sigmoid (mul (param k) (sub {safe} (div (param rho_max) (const 2))))))))"
    )
}

/// Transcription for a registered `(family, variant)` pair, if one exists.
pub fn reference_source(family: ModelFamily, variant: &str) -> Option<String> {
    match (family, variant) {
        (ModelFamily::Idm, "baseline") => Some(idm_baseline()),
        (ModelFamily::Idm, "improved-final") => Some(idm_improved_final()),
        (ModelFamily::Mobil, "baseline") => Some(mobil_baseline()),
        (ModelFamily::Mobil, "improved-final") => Some(mobil_improved_final()),
        (ModelFamily::Lwr, "baseline") => Some(lwr_baseline()),
        (ModelFamily::Lwr, "improved-final") => Some(lwr_improved_final()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::LaneChangeSample;
    use crate::dsl::{compile_candidate, parse_candidate, validate_candidate};
    use crate::models::{
        idm_accel, idm_improved_final_accel, lwr_improved_speed, lwr_speed, mobil_decide,
        mobil_improved_final_decide, IdmParams, LwrParams, MobilParams,
    };

    fn idm_params() -> IdmParams {
        IdmParams {
            desired_speed: 20.0,
            desired_time_window: 1.5,
            max_acc: 1.5,
            comfort_acc: 2.0,
            beta: 4.0,
            jam_space: 2.0,
        }
    }

    #[test]
    fn all_references_parse_and_validate() {
        for (family, variant) in [
            (ModelFamily::Idm, "baseline"),
            (ModelFamily::Idm, "improved-final"),
            (ModelFamily::Mobil, "baseline"),
            (ModelFamily::Mobil, "improved-final"),
            (ModelFamily::Lwr, "baseline"),
            (ModelFamily::Lwr, "improved-final"),
        ] {
            let source = reference_source(family, variant).unwrap();
            let candidate = parse_candidate(&source).unwrap();
            assert_eq!(candidate.family, family);
            let diagnostics = validate_candidate(&candidate);
            assert!(diagnostics.is_ok(), "{family}/{variant}: {diagnostics}");
        }
        assert!(reference_source(ModelFamily::Idm, "v1").is_none());
    }

    #[test]
    fn car_following_references_match_native_bitwise() {
        let p = idm_params();
        let params = p.to_vec();
        let cases = [
            (30.0, 15.0, 12.0),
            (5.0, 8.0, 10.0),
            (-2.0, 3.0, 3.0),
            (0.0, 0.0, 0.0),
            (2.0, 0.0, 0.0),
            (120.0, 33.0, 31.0),
        ];
        for (source, native) in [
            (idm_baseline(), idm_accel as fn(&IdmParams, f64, f64, f64) -> f64),
            (idm_improved_final(), idm_improved_final_accel),
        ] {
            let compiled = compile_candidate(&parse_candidate(&source).unwrap()).unwrap();
            for &(s, sv, lv) in &cases {
                let got = compiled.eval_rows(&params, &[vec![s, sv, lv]]).unwrap()[0];
                let want = native(&p, s, sv, lv);
                assert_eq!(got.to_bits(), want.to_bits(), "s={s} sv={sv} lv={lv}");
            }
        }
    }

    #[test]
    fn lane_change_references_match_native() {
        let p = MobilParams { idm: idm_params(), politeness: 0.35, b_safe: 4.0, acc_thres: 0.1 };
        let params = p.to_vec();
        let samples: Vec<LaneChangeSample> = (0..40)
            .map(|i| {
                let x = i as f64;
                LaneChangeSample {
                    v: 10.0 + (x * 0.37).sin().abs() * 20.0,
                    s: 5.0 + (x * 0.73).cos().abs() * 40.0,
                    of_v: 9.0 + (x * 0.11).sin().abs() * 18.0,
                    or_v: 8.0 + (x * 0.23).cos().abs() * 15.0,
                    tf_v: 11.0 + (x * 0.31).sin().abs() * 16.0,
                    tr_v: 7.0 + (x * 0.41).cos().abs() * 14.0,
                    rtf_x: 3.0 + (x * 0.53).sin().abs() * 50.0,
                    rtr_x: 3.0 + (x * 0.61).cos().abs() * 50.0,
                    rr_x: 3.0 + (x * 0.67).sin().abs() * 50.0,
                    or_acc: (x * 0.71).sin(),
                    tr_acc: (x * 0.79).cos(),
                    label: 0,
                }
            })
            .collect();
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features().to_vec()).collect();

        for (source, native) in [
            (mobil_baseline(), mobil_decide as fn(&MobilParams, &[LaneChangeSample]) -> Vec<u8>),
            (mobil_improved_final(), mobil_improved_final_decide),
        ] {
            let compiled = compile_candidate(&parse_candidate(&source).unwrap()).unwrap();
            let scores = compiled.eval_rows(&params, &rows).unwrap();
            let decisions: Vec<u8> = scores.iter().map(|&y| u8::from(y > 0.5)).collect();
            assert_eq!(decisions, native(&p, &samples));
        }
    }

    #[test]
    fn flow_references_match_native_bitwise() {
        let p = LwrParams { free_flow_speed: 1.1, max_density: 0.85, steepness: 6.5 };
        let linear = compile_candidate(&parse_candidate(&lwr_baseline()).unwrap()).unwrap();
        let logistic = compile_candidate(&parse_candidate(&lwr_improved_final()).unwrap()).unwrap();
        for i in 0..60 {
            let density = -0.1 + i as f64 * 0.02;
            let got = linear
                .eval_rows(&[p.free_flow_speed, p.max_density], &[vec![density]])
                .unwrap()[0];
            assert_eq!(got.to_bits(), lwr_speed(&p, density).to_bits());
            let got = logistic
                .eval_rows(
                    &[p.free_flow_speed, p.max_density, p.steepness],
                    &[vec![density]],
                )
                .unwrap()[0];
            assert_eq!(got.to_bits(), lwr_improved_speed(&p, density).to_bits());
        }
    }
}
