//! Acceptance gate: numbered end-to-end checks covering metric anchors,
//! model fixed points, DSL–native equivalence, calibration, and the replay
//! trial pipeline. Each criterion prints one `[acceptance] ... PASS/FAIL`
//! line (visible with `--nocapture`) and also enforces its runtime budget.

mod common;

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trafficlab::agent::{read_trial_log, TrialLog, TrialStatus};
use trafficlab::calibration::{
    calibrate_model, ga_minimize, GaConfig, GeneBounds, ModelSpec, ParamBounds,
};
use trafficlab::datasets::{
    write_flow_csv, CarFollowEvent, CarFollowStep, FlowSample, LaneChangeSample, StateThresholds,
};
use trafficlab::dsl::{compile_candidate, parse_candidate, reference::reference_source};
use trafficlab::evaluation::{
    classification_metrics, evaluate, improvement_rate, lanechange_loss, metrics_from_confusion,
    simulate_event, BoundModel, ConfusionCounts, Dataset,
};
use trafficlab::llm::ReplayBackend;
use trafficlab::models::{
    get_variant, idm_accel, idm_improved_final_accel, lwr_improved_speed, lwr_speed, IdmParams,
    LwrParams, ModelFamily, VariantFn,
};

type CriterionFn = Box<dyn FnOnce() -> Result<String, String>>;

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, &str, Duration, CriterionFn)> = vec![
        (
            "C1",
            "classification metrics from fixed confusion counts",
            Duration::from_secs(1),
            Box::new(c01_classification_metric_anchors),
        ),
        (
            "C2",
            "lane-change loss and improvement-rate anchors",
            Duration::from_secs(1),
            Box::new(c02_loss_and_improvement_anchors),
        ),
        (
            "C3",
            "stratified losses recombine to the total",
            Duration::from_secs(10),
            Box::new(c03_stratified_mean_identity),
        ),
        (
            "C4",
            "model fixed points and limits",
            Duration::from_secs(1),
            Box::new(c04_model_fixed_points),
        ),
        (
            "C5",
            "DSL transcriptions match native models",
            Duration::from_secs(30),
            Box::new(c05_dsl_native_equivalence),
        ),
        (
            "C6",
            "classification metrics match a brute-force oracle",
            Duration::from_secs(5),
            Box::new(c06_brute_force_metric_oracle),
        ),
        (
            "C7",
            "simulation invariants and hand-computed step",
            Duration::from_secs(1),
            Box::new(c07_simulation_properties),
        ),
        (
            "C8",
            "genetic algorithm convergence and determinism",
            Duration::from_secs(60),
            Box::new(c08_ga_properties),
        ),
        (
            "C9",
            "self-consistency calibration recovers synthesized events",
            Duration::from_secs(300),
            Box::new(c09_self_consistency_calibration),
        ),
        (
            "C10",
            "end-to-end replay trial through the binary",
            Duration::from_secs(120),
            Box::new(c10_end_to_end_replay_trial),
        ),
    ];

    let mut failures = Vec::new();
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) if elapsed <= budget => {
                println!("[acceptance] {id} {name}: PASS ({elapsed:.2?} < {budget:?}; {detail})");
            }
            Ok(_) => {
                println!(
                    "[acceptance] {id} {name}: FAIL (runtime {elapsed:.2?} exceeds {budget:?})"
                );
                failures.push(id);
            }
            Err(reason) => {
                println!("[acceptance] {id} {name}: FAIL ({reason})");
                failures.push(id);
            }
        }
    }
    println!(
        "[acceptance] C11 baseline losses on the original recorded datasets: SKIP \
         (datasets not bundled; dataset-gated check)"
    );
    assert!(failures.is_empty(), "failed acceptance criteria: {failures:?}");
}

fn c01_classification_metric_anchors() -> Result<String, String> {
    let m = metrics_from_confusion(ConfusionCounts { tp: 3188, tn: 12208, fp: 2592, fn_: 11612 });
    for (name, got, want) in [
        ("precision", m.precision, 0.552),
        ("recall", m.recall, 0.215),
        ("f1", m.f1, 0.310),
        ("specificity", m.specificity, 0.825),
    ] {
        if (got - want).abs() > 0.001 {
            return Err(format!("{name} {got:.6} is not within 0.001 of {want}"));
        }
    }
    Ok(format!(
        "precision {:.4}, recall {:.4}, f1 {:.4}, specificity {:.4}",
        m.precision, m.recall, m.f1, m.specificity
    ))
}

fn c02_loss_and_improvement_anchors() -> Result<String, String> {
    let loss_baseline = lanechange_loss(0.310);
    if loss_baseline != 0.690 {
        return Err(format!("loss(F1=0.310) = {loss_baseline}, expected exactly 0.690"));
    }
    let loss_improved = lanechange_loss(0.846);
    if (loss_improved - 0.154).abs() > 1e-15 {
        return Err(format!("loss(F1=0.846) = {loss_improved:.17}, expected 0.154"));
    }
    let rate_lc = improvement_rate(0.690, 0.154).map_err(|e| e.to_string())?;
    if (rate_lc - 77.68).abs() > 0.01 {
        return Err(format!("lane-change improvement rate {rate_lc:.4} not within 0.01 of 77.68"));
    }
    let rate_flow = improvement_rate(0.4346, 0.034).map_err(|e| e.to_string())?;
    if (rate_flow - 92.26).abs() > 0.1 {
        return Err(format!("flow improvement rate {rate_flow:.4} not within 0.1 of 92.26"));
    }
    Ok(format!("rates {rate_lc:.4} and {rate_flow:.4}"))
}

fn weighted_total_error(report: &trafficlab::evaluation::EvalReport) -> f64 {
    let weighted: f64 = report.per_scenario.iter().map(|s| s.loss * s.count as f64).sum();
    let count: usize = report.per_scenario.iter().map(|s| s.count).sum();
    (weighted / count as f64 - report.total_loss).abs()
}

fn c03_stratified_mean_identity() -> Result<String, String> {
    // Fixed anchor: per-bucket means and counts recombine to the total.
    let losses = [0.1123, 0.3367, 0.7519];
    let counts = [3339.0, 1780.0, 3942.0];
    let weighted: f64 =
        losses.iter().zip(&counts).map(|(l, c)| l * c).sum::<f64>() / counts.iter().sum::<f64>();
    if (weighted - 0.4346).abs() > 0.0005 {
        return Err(format!("weighted mean {weighted:.6} is not within 0.0005 of 0.4346"));
    }

    // Property: the engine's own per-scenario losses always satisfy the
    // count-weighted-mean identity, for both stratified report kinds.
    let prop_config =
        || PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() };
    let mut runner = TestRunner::new(prop_config());
    let thresholds = StateThresholds::default();

    let step = (2.0f64..60.0, 0.0f64..25.0, 0.0f64..25.0);
    let events_strategy = proptest::collection::vec(
        proptest::collection::vec(step, 4..40),
        1..4usize,
    );
    let idm_params_strategy = (
        5.0f64..40.0,
        0.5f64..3.0,
        0.5f64..4.0,
        0.5f64..4.0,
        1.0f64..8.0,
        0.5f64..8.0,
    );
    let variant = get_variant(ModelFamily::Idm, "baseline").map_err(|e| e.to_string())?;
    runner
        .run(&(events_strategy, idm_params_strategy), |(raw_events, p)| {
            let events: Vec<CarFollowEvent> = raw_events
                .into_iter()
                .enumerate()
                .map(|(i, steps)| CarFollowEvent {
                    event_id: format!("e{i}"),
                    steps: steps
                        .into_iter()
                        .map(|(s, sv, lv)| CarFollowStep {
                            spacing_m: s,
                            sv_speed_mps: sv,
                            lv_speed_mps: lv,
                            rel_speed_mps: sv - lv,
                        })
                        .collect(),
                })
                .collect();
            let params = vec![p.0, p.1, p.2, p.3, p.4, p.5];
            let bound = BoundModel::from_native(variant, &params).unwrap();
            let report = evaluate(&bound, &Dataset::CarFollow(events), &thresholds).unwrap();
            prop_assert!(weighted_total_error(&report) <= 1e-9);
            Ok(())
        })
        .map_err(|e| format!("car-following identity: {e}"))?;

    let mut runner = TestRunner::new(prop_config());
    let samples_strategy =
        proptest::collection::vec((0.0f64..1.0, 0.0f64..1.2), 1..200usize);
    let flow_params_strategy = (0.001f64..1.5, 0.001f64..1.0);
    let flow_variant = get_variant(ModelFamily::Lwr, "baseline").map_err(|e| e.to_string())?;
    runner
        .run(&(samples_strategy, flow_params_strategy), |(raw, p)| {
            let samples: Vec<FlowSample> = raw
                .into_iter()
                .map(|(density, speed)| FlowSample { density, speed })
                .collect();
            let bound = BoundModel::from_native(flow_variant, &[p.0, p.1]).unwrap();
            let report = evaluate(&bound, &Dataset::Flow(samples), &thresholds).unwrap();
            prop_assert!(weighted_total_error(&report) <= 1e-9);
            Ok(())
        })
        .map_err(|e| format!("flow identity: {e}"))?;

    Ok(format!("anchor mean {weighted:.6}; identity held on 2000 randomized reports"))
}

fn c04_model_fixed_points() -> Result<String, String> {
    let p = common::reference_idm_params();

    let at_rest = idm_accel(&p, p.jam_space, 0.0, 0.0);
    if at_rest.abs() > 1e-12 {
        return Err(format!("acceleration at rest with the jam gap is {at_rest:e}, not 0"));
    }
    for spacing in [0.0, -3.0] {
        let a = idm_accel(&p, spacing, 10.0, 8.0);
        if a != -p.max_acc {
            return Err(format!("acceleration at spacing {spacing} is {a}, not -max_acc"));
        }
    }

    let flow = LwrParams { free_flow_speed: 1.2, max_density: 0.9, steepness: 4.0 };
    if lwr_speed(&flow, 0.0) != flow.free_flow_speed {
        return Err("flow speed at zero density is not the free-flow speed".into());
    }
    if lwr_speed(&flow, flow.max_density) != 0.0 {
        return Err("flow speed at jam density is not zero".into());
    }
    let half = lwr_improved_speed(&flow, flow.max_density / 2.0);
    if (half - flow.free_flow_speed / 2.0).abs() > 1e-12 {
        return Err(format!("logistic flow speed at half jam density is {half}, not v_f/2"));
    }

    let v = p.desired_speed;
    let equilibrium_gap = p.desired_spacing(v, 0.0);
    let a_eq = idm_improved_final_accel(&p, equilibrium_gap, v, v);
    if a_eq.abs() > 1e-12 {
        return Err(format!("improved model equilibrium acceleration is {a_eq:e}, not 0"));
    }
    Ok("all five fixed points hold".into())
}

fn c05_dsl_native_equivalence() -> Result<String, String> {
    const ROWS: usize = 10_000;
    const DRAWS: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    let idm_rows: Vec<Vec<f64>> = (0..ROWS)
        .map(|_| {
            vec![rng.gen_range(-5.0..80.0), rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0)]
        })
        .collect();
    let lwr_rows: Vec<Vec<f64>> = (0..ROWS).map(|_| vec![rng.gen_range(-0.1..1.1)]).collect();
    let mobil_samples: Vec<LaneChangeSample> = (0..ROWS)
        .map(|_| LaneChangeSample {
            v: rng.gen_range(0.0..30.0),
            s: rng.gen_range(0.1..80.0),
            of_v: rng.gen_range(0.0..30.0),
            or_v: rng.gen_range(0.0..30.0),
            tf_v: rng.gen_range(0.0..30.0),
            tr_v: rng.gen_range(0.0..30.0),
            rtf_x: rng.gen_range(0.1..80.0),
            rtr_x: rng.gen_range(0.1..80.0),
            rr_x: rng.gen_range(0.1..80.0),
            or_acc: rng.gen_range(-4.0..4.0),
            tr_acc: rng.gen_range(-4.0..4.0),
            label: 0,
        })
        .collect();
    let mobil_rows: Vec<Vec<f64>> = mobil_samples.iter().map(|s| s.features().to_vec()).collect();

    let checks: [(ModelFamily, &str, &Vec<Vec<f64>>); 5] = [
        (ModelFamily::Lwr, "baseline", &lwr_rows),
        (ModelFamily::Lwr, "improved-final", &lwr_rows),
        (ModelFamily::Idm, "baseline", &idm_rows),
        (ModelFamily::Idm, "improved-final", &idm_rows),
        (ModelFamily::Mobil, "improved-final", &mobil_rows),
    ];

    let mut max_diff = 0.0f64;
    for (family, variant_name, rows) in checks {
        let source = reference_source(family, variant_name)
            .ok_or_else(|| format!("no transcription for {family}/{variant_name}"))?;
        let candidate = parse_candidate(&source).map_err(|e| e.to_string())?;
        let compiled = compile_candidate(&candidate).map_err(|e| e.to_string())?;
        let bounds = candidate.param_bounds();
        let variant = get_variant(family, variant_name).map_err(|e| e.to_string())?;

        for draw in 0..DRAWS {
            let params: Vec<f64> =
                bounds.iter().map(|(_, lo, hi)| rng.gen_range(*lo..*hi)).collect();
            let dsl_out = compiled.eval_rows(&params, rows).map_err(|e| e.to_string())?;
            let native_out: Vec<f64> = match variant.function {
                VariantFn::Accel(f) => {
                    let p = IdmParams::from_slice(&params).map_err(|e| e.to_string())?;
                    rows.iter().map(|r| f(&p, r[0], r[1], r[2])).collect()
                }
                VariantFn::Decide(f) => {
                    let p = trafficlab::models::MobilParams::from_slice(&params)
                        .map_err(|e| e.to_string())?;
                    f(&p, &mobil_samples).into_iter().map(f64::from).collect()
                }
                VariantFn::Speed(f) => {
                    let p = LwrParams::from_slice(&params).map_err(|e| e.to_string())?;
                    rows.iter().map(|r| f(&p, r[0])).collect()
                }
            };
            for (i, (d, n)) in dsl_out.iter().zip(&native_out).enumerate() {
                let diff = (d - n).abs();
                if diff.is_nan() || diff > 1e-9 {
                    return Err(format!(
                        "{family}/{variant_name} draw {draw} row {i}: dsl {d} vs native {n}"
                    ));
                }
                max_diff = max_diff.max(diff);
            }
        }
    }
    Ok(format!("5 variants × {DRAWS} draws × {ROWS} rows, max |diff| = {max_diff:e}"))
}

fn c06_brute_force_metric_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..1000 {
        let n = rng.gen_range(1..=50usize);
        let predictions: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let got = classification_metrics(&predictions, &labels).map_err(|e| e.to_string())?;

        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&p, &l) in predictions.iter().zip(&labels) {
            match (p, l) {
                (1, 1) => tp += 1,
                (0, 0) => tn += 1,
                (1, 0) => fp += 1,
                _ => fn_ += 1,
            }
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let specificity = ratio(tn, tn + fp);

        let counts_match = got.confusion == ConfusionCounts { tp, tn, fp, fn_ };
        let ratios_match = got.precision == precision
            && got.recall == recall
            && got.f1 == f1
            && got.specificity == specificity;
        if !(counts_match && ratios_match) {
            return Err(format!("case {case} (n={n}): engine {got:?} disagrees with the oracle"));
        }
    }
    Ok("1000 random instances matched exactly".into())
}

fn c07_simulation_properties() -> Result<String, String> {
    let constant_steps: Vec<CarFollowStep> = (0..10_001)
        .map(|_| CarFollowStep {
            spacing_m: 20.0,
            sv_speed_mps: 15.0,
            lv_speed_mps: 15.0,
            rel_speed_mps: 0.0,
        })
        .collect();
    let event = CarFollowEvent { event_id: "constant".into(), steps: constant_steps };
    let trace = simulate_event(&|_, _, _| Ok(0.0), &event).map_err(|e| e.to_string())?;
    for (t, s) in trace.spacing.iter().enumerate() {
        if (s - 20.0).abs() > 1e-12 {
            return Err(format!("spacing drifted to {s} at step {t} with zero acceleration"));
        }
    }

    let two_steps: Vec<CarFollowStep> = (0..2)
        .map(|_| CarFollowStep {
            spacing_m: 10.0,
            sv_speed_mps: 5.0,
            lv_speed_mps: 5.0,
            rel_speed_mps: 0.0,
        })
        .collect();
    let event = CarFollowEvent { event_id: "hand".into(), steps: two_steps };
    let trace = simulate_event(&|_, _, _| Ok(-1.0), &event).map_err(|e| e.to_string())?;
    if trace.speed[1] != 4.9 {
        return Err(format!("one-step speed is {}, expected exactly 4.9", trace.speed[1]));
    }
    if trace.spacing[1] != 10.005 {
        return Err(format!("one-step spacing is {}, expected exactly 10.005", trace.spacing[1]));
    }
    Ok("constant-spacing invariant over 10000 steps; hand-computed step exact".into())
}

fn c08_ga_properties() -> Result<String, String> {
    let bounds = ParamBounds::new(
        (0..4)
            .map(|i| GeneBounds { name: format!("x{i}"), lower: -5.0, upper: 5.0 })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let config = GaConfig::default();
    let sphere = |genes: &[f64]| genes.iter().map(|g| g * g).sum::<f64>();

    let first = ga_minimize(sphere, &bounds, &config).map_err(|e| e.to_string())?;
    if first.best_loss >= 1e-3 {
        return Err(format!("sphere best loss {} is not below 1e-3", first.best_loss));
    }
    if first.curve.windows(2).any(|w| w[1] > w[0]) {
        return Err("best-so-far curve increased between generations".into());
    }
    let second = ga_minimize(sphere, &bounds, &config).map_err(|e| e.to_string())?;
    if first != second {
        return Err("same seed produced different calibration results".into());
    }
    Ok(format!("sphere best loss {:e}, deterministic per seed", first.best_loss))
}

fn c09_self_consistency_calibration() -> Result<String, String> {
    let events = common::synthetic_carfollow_events(10, 150, 9);
    let (calibration, validation) = events.split_at(5);

    let variant = get_variant(ModelFamily::Idm, "baseline").map_err(|e| e.to_string())?;
    let spec = ModelSpec::Native(variant);
    let bounds = spec.default_bounds().map_err(|e| e.to_string())?;
    let ga = GaConfig {
        population_size: 200,
        generations: 600,
        mutation_sigma_fraction: 0.05,
        seed: 42,
        ..GaConfig::default()
    };
    let result = calibrate_model(&spec, &Dataset::CarFollow(calibration.to_vec()), &bounds, &ga)
        .map_err(|e| e.to_string())?;
    let bound = spec.bind(&result.best_params).map_err(|e| e.to_string())?;
    let report = evaluate(
        &bound,
        &Dataset::CarFollow(validation.to_vec()),
        &StateThresholds::default(),
    )
    .map_err(|e| e.to_string())?;
    if report.total_loss >= 0.05 {
        return Err(format!(
            "validation spacing MAE {:.4} m is not below 0.05 m",
            report.total_loss
        ));
    }
    Ok(format!(
        "calibration loss {:.4} m, validation MAE {:.4} m",
        result.best_loss, report.total_loss
    ))
}

fn c10_end_to_end_replay_trial() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let samples = common::logistic_flow_samples(200, 8.0, 0.01, 4);
    write_flow_csv(dir.path().join("flow.csv"), &samples).map_err(|e| e.to_string())?;
    ReplayBackend::write_transcript(
        &dir.path().join("transcript.jsonl"),
        &common::flow_improve_transcript(),
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("improve.toml"), common::flow_improve_config("flow.csv"))
        .map_err(|e| e.to_string())?;

    let args = [
        "improve",
        "--config",
        "improve.toml",
        "--backend",
        "replay:transcript.jsonl",
        "--out",
        "trial.jsonl",
    ];
    let output = common::run_cli(dir.path(), &args);
    if output.status.code() != Some(0) {
        return Err(format!(
            "improve exited with {:?}: {}",
            output.status.code(),
            common::stderr_of(&output)
        ));
    }
    let stdout = common::stdout_of(&output);
    if !stdout.contains("Improved model found!") {
        return Err("improve stdout lacks the success line".into());
    }

    let events = read_trial_log(&dir.path().join("trial.jsonl")).map_err(|e| e.to_string())?;
    let log = TrialLog::from_events(events).map_err(|e| e.to_string())?;
    if log.status != Some(TrialStatus::ImprovedModelFound) {
        return Err(format!("trial status is {:?}", log.status));
    }
    if log.iterations.len() != 2 {
        return Err(format!("expected 2 iterations, found {}", log.iterations.len()));
    }
    if log.iterations[0].codegen_attempts != 2 {
        return Err(format!(
            "iteration 0 took {} code-generation attempts, expected 2 (one invalid, one fixed)",
            log.iterations[0].codegen_attempts
        ));
    }
    let rate = log.iterations[1]
        .improvement_rate_pct
        .ok_or("iteration 1 has no improvement rate")?;
    if rate < 50.0 {
        return Err(format!("improvement rate {rate:.2}% is below 50%"));
    }

    let first_bytes =
        std::fs::read(dir.path().join("trial.jsonl")).map_err(|e| e.to_string())?;
    let rerun_args = [
        "improve",
        "--config",
        "improve.toml",
        "--backend",
        "replay:transcript.jsonl",
        "--out",
        "rerun.jsonl",
    ];
    let rerun = common::run_cli(dir.path(), &rerun_args);
    if rerun.status.code() != Some(0) {
        return Err("rerun exited non-zero".into());
    }
    let rerun_bytes =
        std::fs::read(dir.path().join("rerun.jsonl")).map_err(|e| e.to_string())?;
    if first_bytes != rerun_bytes {
        return Err("rerunning the trial produced different log bytes".into());
    }
    Ok(format!("improvement rate {rate:.2}%, reruns byte-identical"))
}
