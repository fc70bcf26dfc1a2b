//! Shared fixtures for the CLI and acceptance test targets: synthetic
//! datasets generated from the native models, scripted chat transcripts,
//! and a helper for spawning the built binary.
#![allow(dead_code)]

use std::path::Path;
use std::process::Output;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trafficlab::datasets::{CarFollowEvent, CarFollowStep, FlowSample, TIME_STEP_S};
use trafficlab::models::{idm_accel, IdmParams};

/// Car-following parameters used to synthesize self-consistent events.
pub fn reference_idm_params() -> IdmParams {
    IdmParams {
        desired_speed: 20.0,
        desired_time_window: 1.5,
        max_acc: 1.5,
        comfort_acc: 2.0,
        beta: 4.0,
        jam_space: 2.0,
    }
}

/// Standard-normal draw via Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Flow samples on an even density grid from the logistic density→speed
/// relation (free-flow speed 1, jam density 1) plus Gaussian noise.
pub fn logistic_flow_samples(n: usize, steepness: f64, noise_sigma: f64, seed: u64) -> Vec<FlowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let density = i as f64 / (n - 1) as f64;
            let clean = 1.0 - logistic(steepness * (density - 0.5));
            let speed = (clean + noise_sigma * gaussian(&mut rng)).max(0.0);
            FlowSample { density, speed }
        })
        .collect()
}

/// Car-following events driven by a three-phase leader profile (cruise,
/// braking ramp, steady slow) and forward-simulated with the baseline
/// car-following model, so the generating parameters reproduce the observed
/// spacing exactly.
pub fn synthetic_carfollow_events(n_events: usize, steps: usize, seed: u64) -> Vec<CarFollowEvent> {
    let p = reference_idm_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_events)
        .map(|e| {
            let fast: f64 = rng.gen_range(13.0..17.0);
            let slow: f64 = rng.gen_range(4.0..7.0);
            let ramp_start = steps / 3;
            let ramp_end = 2 * steps / 3;
            let lv: Vec<f64> = (0..steps)
                .map(|t| {
                    if t < ramp_start {
                        fast
                    } else if t < ramp_end {
                        let frac = (t - ramp_start) as f64 / (ramp_end - ramp_start) as f64;
                        fast + (slow - fast) * frac
                    } else {
                        slow
                    }
                })
                .collect();
            let mut spacing: f64 = rng.gen_range(25.0..45.0);
            let mut speed: f64 = rng.gen_range(5.0..9.0);
            let mut event_steps = Vec::with_capacity(steps);
            for (t, &lv_speed) in lv.iter().enumerate() {
                event_steps.push(CarFollowStep {
                    spacing_m: spacing,
                    sv_speed_mps: speed,
                    lv_speed_mps: lv_speed,
                    rel_speed_mps: speed - lv_speed,
                });
                if t + 1 < steps {
                    let a = idm_accel(&p, spacing, speed, lv_speed);
                    let next = (speed + a * TIME_STEP_S).max(0.0);
                    spacing += lv_speed * TIME_STEP_S - (speed + next) / 2.0 * TIME_STEP_S;
                    speed = next;
                }
            }
            CarFollowEvent { event_id: format!("event-{e}"), steps: event_steps }
        })
        .collect()
}

/// The linear density→speed relation as candidate source.
pub fn linear_flow_candidate() -> String {
    "(defmodel lwr (extra-params) (mul (param v_f) (sub (const 1) \
     (div (input density) (param rho_max)))))"
        .to_string()
}

fn fenced(code: &str) -> String {
    format!("```dsl\n{code}\n```")
}

/// A scripted two-iteration improvement conversation for the flow family:
/// iteration 0 produces an invalid candidate, gets a refinement that merely
/// restates the linear baseline (below target), and iteration 1 lands the
/// logistic candidate.
pub fn flow_improve_transcript() -> Vec<String> {
    let linear = linear_flow_candidate();
    let broken = linear.replace("density", "densty");
    let logistic = trafficlab::dsl::reference::reference_source(
        trafficlab::models::ModelFamily::Lwr,
        "improved-final",
    )
    .unwrap();
    vec![
        "Replace the linear speed-density relation with a curve that stays flat at low \
         density and decays smoothly near jam density."
            .to_string(),
        format!("Here is the candidate:\n{}", fenced(&broken)),
        format!("Fixed the input name:\n{}", fenced(&linear)),
        "Reasons:\n- The candidate reproduces the linear relation, so it cannot beat the \
         baseline.\nSuggestions:\n- Use a smooth sigmoid transition centered at half the jam \
         density.\nNew questions:\n- How steep should the transition be?"
            .to_string(),
        "Model speed as a logistic fall-off: v = v_f * (1 - sigmoid(k * (density - rho_max \
         / 2))) with a calibratable steepness k."
            .to_string(),
        format!("Candidate:\n{}", fenced(&logistic)),
        "The logistic transition matches the plateau at low density and the sharp drop near \
         half the jam density; the extra steepness parameter let calibration match the \
         transition width."
            .to_string(),
    ]
}

/// TOML config driving a fast deterministic flow-improvement trial.
pub fn flow_improve_config(data_file: &str) -> String {
    format!(
        "family = \"lwr\"\n\
         variant = \"baseline\"\n\
         data = \"{data_file}\"\n\
         split_fraction = 0.5\n\
         split_seed = 11\n\n\
         [ga]\n\
         population_size = 48\n\
         generations = 80\n\
         seed = 3\n\n\
         [trial]\n\
         model_name = \"replay-model\"\n\
         target_improvement_pct = 50.0\n\
         max_iterations = 3\n"
    )
}

/// Path of the built `trafficlab` binary.
pub fn trafficlab_bin() -> &'static str {
    env!("CARGO_BIN_EXE_trafficlab")
}

/// Run the binary with `args` inside `dir` and capture everything.
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(trafficlab_bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn trafficlab binary")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}
