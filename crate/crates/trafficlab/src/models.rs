//! Native traffic models: parameter vectors, family signatures, the model
//! functions themselves, and a registry of named variants.
//!
//! Three families are covered:
//!
//! * `idm` — car-following acceleration `a(spacing, sv_spd, lv_spd)`;
//! * `mobil` — lane-change decisions over a batch of surrounding-vehicle
//!   snapshots (batch-level statistics are part of some variants);
//! * `lwr` — macroscopic density→speed relations `v(density)`.
//!
//! Each family fixes a canonical parameter order used everywhere a flat
//! `&[f64]` crosses an API boundary (calibration genomes, params JSON files,
//! DSL parameter environments).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datasets::LaneChangeSample;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Families and signatures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Idm,
    Mobil,
    Lwr,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Idm, ModelFamily::Mobil, ModelFamily::Lwr];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Idm => "idm",
            ModelFamily::Mobil => "mobil",
            ModelFamily::Lwr => "lwr",
        }
    }

    /// Display name used in prompts and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelFamily::Idm => "IDM",
            ModelFamily::Mobil => "MOBIL",
            ModelFamily::Lwr => "LWR",
        }
    }

    pub fn parse(name: &str) -> Result<ModelFamily> {
        match name.to_ascii_lowercase().as_str() {
            "idm" => Ok(ModelFamily::Idm),
            "mobil" => Ok(ModelFamily::Mobil),
            "lwr" => Ok(ModelFamily::Lwr),
            other => Err(Error::Config(format!(
                "unknown model family '{other}' (expected idm, mobil, or lwr)"
            ))),
        }
    }

    /// Canonical parameter names, in flat-vector order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Idm => &[
                "desired_speed",
                "desired_time_window",
                "max_acc",
                "comfort_acc",
                "beta",
                "jam_space",
            ],
            ModelFamily::Mobil => &[
                "desired_speed",
                "jam_space",
                "desired_time_window",
                "max_acc",
                "comfort_acc",
                "beta",
                "politeness",
                "b_safe",
                "acc_thres",
            ],
            ModelFamily::Lwr => &["v_f", "rho_max"],
        }
    }

    /// Input column names, in the order candidate-model rows are laid out.
    pub fn input_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Idm => &["spacing", "sv_spd", "lv_spd"],
            ModelFamily::Mobil => &[
                "v", "s", "of_v", "or_v", "tf_v", "tr_v", "rtf_x", "rtr_x", "rr_x", "or_acc",
                "tr_acc",
            ],
            ModelFamily::Lwr => &["density"],
        }
    }

    /// What a model of this family emits per input row.
    pub fn output_role(self) -> &'static str {
        match self {
            ModelFamily::Idm => "acceleration (m/s^2)",
            ModelFamily::Mobil => "lane-change decision score (> 0.5 means change)",
            ModelFamily::Lwr => "normalized speed",
        }
    }

    /// Default calibration bounds per canonical parameter, `(name, lo, hi)`.
    pub fn default_bounds(self) -> Vec<(&'static str, f64, f64)> {
        match self {
            ModelFamily::Idm => vec![
                ("desired_speed", 1.0, 42.0),
                ("desired_time_window", 0.1, 5.0),
                ("max_acc", 0.1, 5.0),
                ("comfort_acc", 0.1, 5.0),
                ("beta", 1.0, 10.0),
                ("jam_space", 0.1, 10.0),
            ],
            ModelFamily::Mobil => vec![
                ("desired_speed", 1.0, 42.0),
                ("jam_space", 0.1, 10.0),
                ("desired_time_window", 0.1, 5.0),
                ("max_acc", 0.1, 5.0),
                ("comfort_acc", 0.1, 5.0),
                ("beta", 1.0, 10.0),
                ("politeness", 0.0, 1.0),
                ("b_safe", 0.1, 10.0),
                ("acc_thres", 0.0, 1.0),
            ],
            ModelFamily::Lwr => vec![("v_f", 1e-3, 1.5), ("rho_max", 1e-3, 1.0)],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Parameter structs
// ---------------------------------------------------------------------------

/// Car-following parameters shared by all `idm` variants and embedded in
/// `mobil` variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired (free-road) speed v0, m/s.
    pub desired_speed: f64,
    /// Desired time headway T, s.
    pub desired_time_window: f64,
    /// Maximum acceleration a_max, m/s².
    pub max_acc: f64,
    /// Comfortable braking deceleration b, m/s².
    pub comfort_acc: f64,
    /// Acceleration exponent β (the classic formulation uses 4).
    pub beta: f64,
    /// Jam (standstill) spacing s0, m.
    pub jam_space: f64,
}

impl IdmParams {
    /// Parse from the canonical `idm` flat order.
    pub fn from_slice(params: &[f64]) -> Result<IdmParams> {
        if params.len() != 6 {
            return Err(Error::Params(format!(
                "idm expects 6 parameters {:?}, got {}",
                ModelFamily::Idm.param_names(),
                params.len()
            )));
        }
        Ok(IdmParams {
            desired_speed: params[0],
            desired_time_window: params[1],
            max_acc: params[2],
            comfort_acc: params[3],
            beta: params[4],
            jam_space: params[5],
        })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.desired_speed,
            self.desired_time_window,
            self.max_acc,
            self.comfort_acc,
            self.beta,
            self.jam_space,
        ]
    }

    /// Desired spacing s* for the current subject speed and closing speed
    /// `dv = sv_spd - lv_spd`.
    pub fn desired_spacing(&self, sv_spd: f64, dv: f64) -> f64 {
        self.jam_space
            + (sv_spd * self.desired_time_window
                + sv_spd * dv / (2.0 * (self.max_acc * self.comfort_acc).sqrt()))
            .max(0.0)
    }
}

/// Lane-change parameters: an embedded car-following parameter set for gap
/// evaluation plus the incentive/safety knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilParams {
    pub idm: IdmParams,
    /// Politeness factor p weighting follower costs.
    pub politeness: f64,
    /// Safety bound (deceleration limit or gap threshold, per variant).
    pub b_safe: f64,
    /// Incentive threshold Δa_th.
    pub acc_thres: f64,
}

impl MobilParams {
    /// Parse from the canonical `mobil` flat order (note: the embedded
    /// car-following block is ordered `desired_speed, jam_space,
    /// desired_time_window, max_acc, comfort_acc, beta` here).
    pub fn from_slice(params: &[f64]) -> Result<MobilParams> {
        if params.len() != 9 {
            return Err(Error::Params(format!(
                "mobil expects 9 parameters {:?}, got {}",
                ModelFamily::Mobil.param_names(),
                params.len()
            )));
        }
        Ok(MobilParams {
            idm: IdmParams {
                desired_speed: params[0],
                jam_space: params[1],
                desired_time_window: params[2],
                max_acc: params[3],
                comfort_acc: params[4],
                beta: params[5],
            },
            politeness: params[6],
            b_safe: params[7],
            acc_thres: params[8],
        })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.idm.desired_speed,
            self.idm.jam_space,
            self.idm.desired_time_window,
            self.idm.max_acc,
            self.idm.comfort_acc,
            self.idm.beta,
            self.politeness,
            self.b_safe,
            self.acc_thres,
        ]
    }
}

/// Macroscopic flow parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LwrParams {
    /// Free-flow speed (normalized), v_f.
    pub free_flow_speed: f64,
    /// Jam density (normalized), ρ_max.
    pub max_density: f64,
    /// Logistic steepness k — only used by the improved variant.
    pub steepness: f64,
}

impl LwrParams {
    /// Parse from the canonical flat order: `[v_f, rho_max]` for the linear
    /// baseline, `[v_f, rho_max, k]` for the logistic improved variant.
    pub fn from_slice(params: &[f64]) -> Result<LwrParams> {
        match params.len() {
            2 => Ok(LwrParams {
                free_flow_speed: params[0],
                max_density: params[1],
                steepness: 1.0,
            }),
            3 => Ok(LwrParams {
                free_flow_speed: params[0],
                max_density: params[1],
                steepness: params[2],
            }),
            n => Err(Error::Params(format!(
                "lwr expects 2 or 3 parameters [v_f, rho_max(, k)], got {n}"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Shared math helpers
// ---------------------------------------------------------------------------

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Percentile with linear interpolation between order statistics: rank
/// position `q/100 · (n-1)`. `q` must be in [0, 100] and `values` non-empty.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of an empty slice".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Domain(format!("percentile rank {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Population mean (ddof = 0 convention matches [`population_std`]).
pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (ddof = 0).
pub(crate) fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// idm family
// ---------------------------------------------------------------------------

/// Baseline car-following acceleration:
///
/// `a = a_max · [1 − (v / v0)^β − (s* / s)²]` with
/// `s* = s0 + max(0, v·T + v·Δv / (2·√(a_max·b)))` and `Δv = sv_spd − lv_spd`.
///
/// Non-positive spacing returns `−a_max` (full braking). Denominators are
/// floored at 1e-6 so near-zero desired speeds or gaps cannot blow up, while
/// ordinary inputs are untouched (the standstill fixed point
/// `a(s0, 0, 0) = 0` holds exactly).
pub fn idm_accel(p: &IdmParams, spacing: f64, sv_spd: f64, lv_spd: f64) -> f64 {
    if spacing <= 0.0 {
        return -p.max_acc;
    }
    let dv = sv_spd - lv_spd;
    let s_star = p.desired_spacing(sv_spd, dv);
    let v_ratio = sv_spd / p.desired_speed.max(1e-6);
    let s_ratio = s_star / spacing.max(1e-6);
    p.max_acc * (1.0 - v_ratio.powf(p.beta) - s_ratio * s_ratio)
}

/// First logged improvement of the car-following model: a sigmoid squashing
/// of the spacing surplus `s − s*`, normalized by `max(1, |s − s*|)`, mapped
/// into `(−a_max/2, a_max/2)`.
pub fn idm_v1_accel(p: &IdmParams, spacing: f64, sv_spd: f64, lv_spd: f64) -> f64 {
    let dv = sv_spd - lv_spd;
    let s_star = p.desired_spacing(sv_spd, dv);
    let gap = spacing - s_star;
    let acc_input = gap / gap.abs().max(1.0);
    p.max_acc / (1.0 + (-p.beta * acc_input).exp()) - p.max_acc / 2.0
}

/// Second logged improvement: piecewise response around the desired spacing —
/// quadratic braking below it, free-road drive term weighted by a sigmoid
/// above it.
pub fn idm_v2_accel(p: &IdmParams, spacing: f64, sv_spd: f64, lv_spd: f64) -> f64 {
    let dv = sv_spd - lv_spd;
    let s_star = p.desired_spacing(sv_spd, dv);
    let z = spacing - s_star;
    if z < 0.0 {
        let ratio = spacing / s_star;
        -p.max_acc * (1.0 - ratio * ratio)
    } else {
        let v_ratio = sv_spd / p.desired_speed;
        p.max_acc * (1.0 - v_ratio.powi(4)) * sigmoid(p.beta * z)
    }
}

/// Final improved car-following model: a closing-speed-gated blend of a
/// tanh free-road term and a tanh interaction term over the normalized
/// spacing surplus `z = (s − s*) / max(s*, 1)`.
///
/// `a = (1−w)·a_max·(1 − tanh(β(v/v0 − 1))) − w·a_max·(1 − tanh(β·z))`,
/// `w = sigmoid(β·Δv)`.
pub fn idm_improved_final_accel(p: &IdmParams, spacing: f64, sv_spd: f64, lv_spd: f64) -> f64 {
    let dv = sv_spd - lv_spd;
    let s_star = p.desired_spacing(sv_spd, dv);
    let z = (spacing - s_star) / s_star.max(1.0);
    let acc_free_road = p.max_acc * (1.0 - (p.beta * (sv_spd / p.desired_speed - 1.0)).tanh());
    let acc_interaction = -p.max_acc * (1.0 - (p.beta * z).tanh());
    let weight = sigmoid(p.beta * dv);
    (1.0 - weight) * acc_free_road + weight * acc_interaction
}

// ---------------------------------------------------------------------------
// mobil family
// ---------------------------------------------------------------------------

/// Car-following accelerations the lane-change models probe, for one sample.
/// Leader/follower/spacing triplets follow the classic incentive layout.
struct GapAccels {
    /// Current lane, current follower: IDM(leader = of_v, follower = v, gap = s).
    current: f64,
    /// Target lane, subject after the change: IDM(tf_v, v, rtf_x).
    new_self: f64,
    /// Target-lane follower after the change: IDM(v, tr_v, rtr_x).
    new_rear_target: f64,
    /// Original-lane follower after the change: IDM(v, or_v, rr_x).
    new_rear_original: f64,
}

fn gap_accels(p: &IdmParams, sample: &LaneChangeSample) -> GapAccels {
    GapAccels {
        current: idm_accel(p, sample.s, sample.v, sample.of_v),
        new_self: idm_accel(p, sample.rtf_x, sample.v, sample.tf_v),
        new_rear_target: idm_accel(p, sample.rtr_x, sample.tr_v, sample.v),
        new_rear_original: idm_accel(p, sample.rr_x, sample.or_v, sample.v),
    }
}

/// Baseline lane-change rule: politeness-weighted acceleration incentive
/// against observed follower accelerations, with a deceleration-based safety
/// check on the target-lane follower.
///
/// `incentive = (ã_c − a_c) + p·[(ã_n − a_n_obs) + (ã_o − a_o_obs)]`,
/// change iff `incentive > Δa_th` and `ã_n ≤ b_safe`.
pub fn mobil_decide(p: &MobilParams, samples: &[LaneChangeSample]) -> Vec<u8> {
    samples
        .iter()
        .map(|sample| {
            let acc = gap_accels(&p.idm, sample);
            let incentive = (acc.new_self - acc.current)
                + p.politeness
                    * ((acc.new_rear_target - sample.tr_acc)
                        + (acc.new_rear_original - sample.or_acc));
            let safe = acc.new_rear_target <= p.b_safe;
            u8::from(incentive > p.acc_thres && safe)
        })
        .collect()
}

/// First logged improvement: the baseline incentive with gap-based safety
/// checks on both adjacent followers (`rtf_x > b_safe` and `rtr_x > b_safe`).
pub fn mobil_v1_decide(p: &MobilParams, samples: &[LaneChangeSample]) -> Vec<u8> {
    samples
        .iter()
        .map(|sample| {
            let acc = gap_accels(&p.idm, sample);
            let incentive = acc.new_self - acc.current
                + p.politeness
                    * ((acc.new_rear_original - sample.or_acc)
                        + (acc.new_rear_target - sample.tr_acc));
            let safe = sample.rtf_x > p.b_safe && sample.rtr_x > p.b_safe;
            u8::from(incentive > p.acc_thres && safe)
        })
        .collect()
}

/// Second logged improvement: incentive against observed follower
/// accelerations only, inclusive gap safety, and a batch-adaptive threshold
/// `Δa_th · std(v) / mean(v)` (population std over the evaluated batch).
pub fn mobil_v2_decide(p: &MobilParams, samples: &[LaneChangeSample]) -> Vec<u8> {
    let speeds: Vec<f64> = samples.iter().map(|s| s.v).collect();
    let threshold = p.acc_thres * population_std(&speeds) / mean(&speeds);
    samples
        .iter()
        .map(|sample| {
            let acc = gap_accels(&p.idm, sample);
            let incentive =
                acc.new_self - acc.current + p.politeness * (sample.tr_acc - sample.or_acc);
            let safe = sample.rtf_x >= p.b_safe && sample.rtr_x >= p.b_safe;
            u8::from(incentive > threshold && safe)
        })
        .collect()
}

/// Final improved lane-change model: modeled-follower incentive, gap safety
/// on both sides, and a batch-adaptive threshold at the 75th percentile of
/// current-lane accelerations.
pub fn mobil_improved_final_decide(p: &MobilParams, samples: &[LaneChangeSample]) -> Vec<u8> {
    if samples.is_empty() {
        return Vec::new();
    }
    let accs: Vec<GapAccels> = samples.iter().map(|s| gap_accels(&p.idm, s)).collect();
    let current: Vec<f64> = accs.iter().map(|a| a.current).collect();
    let threshold = percentile(&current, 75.0).expect("non-empty batch");
    samples
        .iter()
        .zip(&accs)
        .map(|(sample, acc)| {
            let incentive = acc.new_self - acc.current
                + p.politeness * (acc.new_rear_target - acc.new_rear_original);
            let safe = sample.rtf_x > p.b_safe && sample.rtr_x > p.b_safe;
            u8::from(incentive > threshold && safe)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// lwr family
// ---------------------------------------------------------------------------

/// Baseline linear density→speed relation: `v = v_f · (1 − ρ/ρ_max)`.
/// Exact endpoints: `v(0) = v_f`, `v(ρ_max) = 0`.
pub fn lwr_speed(p: &LwrParams, density: f64) -> f64 {
    p.free_flow_speed * (1.0 - density / p.max_density)
}

/// Improved logistic relation: `v = v_f · (1 − sigmoid(k · (ρ̂ − ρ_max/2)))`
/// with `ρ̂ = clamp(ρ, 0, ρ_max)`. Exact midpoint: `v(ρ_max/2) = v_f/2`.
pub fn lwr_improved_speed(p: &LwrParams, density: f64) -> f64 {
    let safe_density = density.clamp(0.0, p.max_density);
    p.free_flow_speed * (1.0 - sigmoid(p.steepness * (safe_density - p.max_density / 2.0)))
}

// ---------------------------------------------------------------------------
// Variant registry
// ---------------------------------------------------------------------------

/// The family-specific callable behind a registered variant.
#[derive(Debug, Clone, Copy)]
pub enum VariantFn {
    /// `(params, spacing, sv_spd, lv_spd) -> acceleration`
    Accel(fn(&IdmParams, f64, f64, f64) -> f64),
    /// `(params, batch) -> 0/1 decisions`
    Decide(fn(&MobilParams, &[LaneChangeSample]) -> Vec<u8>),
    /// `(params, density) -> speed`
    Speed(fn(&LwrParams, f64) -> f64),
}

/// A named, registered native model.
#[derive(Debug)]
pub struct ModelVariant {
    pub family: ModelFamily,
    pub name: &'static str,
    /// Flat parameter order for this variant (canonical family order, plus
    /// `k` for the logistic flow variant).
    pub param_names: &'static [&'static str],
    pub function: VariantFn,
}

impl ModelVariant {
    pub fn param_count(&self) -> usize {
        self.param_names.len()
    }
}

const IDM_PARAM_NAMES: &[&str] = &[
    "desired_speed",
    "desired_time_window",
    "max_acc",
    "comfort_acc",
    "beta",
    "jam_space",
];
const MOBIL_PARAM_NAMES: &[&str] = &[
    "desired_speed",
    "jam_space",
    "desired_time_window",
    "max_acc",
    "comfort_acc",
    "beta",
    "politeness",
    "b_safe",
    "acc_thres",
];
const LWR_PARAM_NAMES: &[&str] = &["v_f", "rho_max"];
const LWR_IMPROVED_PARAM_NAMES: &[&str] = &["v_f", "rho_max", "k"];

static REGISTRY: &[ModelVariant] = &[
    ModelVariant {
        family: ModelFamily::Idm,
        name: "baseline",
        param_names: IDM_PARAM_NAMES,
        function: VariantFn::Accel(idm_accel),
    },
    ModelVariant {
        family: ModelFamily::Idm,
        name: "v1",
        param_names: IDM_PARAM_NAMES,
        function: VariantFn::Accel(idm_v1_accel),
    },
    ModelVariant {
        family: ModelFamily::Idm,
        name: "v2",
        param_names: IDM_PARAM_NAMES,
        function: VariantFn::Accel(idm_v2_accel),
    },
    ModelVariant {
        family: ModelFamily::Idm,
        name: "improved-final",
        param_names: IDM_PARAM_NAMES,
        function: VariantFn::Accel(idm_improved_final_accel),
    },
    ModelVariant {
        family: ModelFamily::Mobil,
        name: "baseline",
        param_names: MOBIL_PARAM_NAMES,
        function: VariantFn::Decide(mobil_decide),
    },
    ModelVariant {
        family: ModelFamily::Mobil,
        name: "v1",
        param_names: MOBIL_PARAM_NAMES,
        function: VariantFn::Decide(mobil_v1_decide),
    },
    ModelVariant {
        family: ModelFamily::Mobil,
        name: "v2",
        param_names: MOBIL_PARAM_NAMES,
        function: VariantFn::Decide(mobil_v2_decide),
    },
    ModelVariant {
        family: ModelFamily::Mobil,
        name: "improved-final",
        param_names: MOBIL_PARAM_NAMES,
        function: VariantFn::Decide(mobil_improved_final_decide),
    },
    ModelVariant {
        family: ModelFamily::Lwr,
        name: "baseline",
        param_names: LWR_PARAM_NAMES,
        function: VariantFn::Speed(lwr_speed),
    },
    ModelVariant {
        family: ModelFamily::Lwr,
        name: "improved-final",
        param_names: LWR_IMPROVED_PARAM_NAMES,
        function: VariantFn::Speed(lwr_improved_speed),
    },
];

/// All registered variants.
pub fn variants() -> &'static [ModelVariant] {
    REGISTRY
}

/// Look up a registered variant by family and name.
pub fn get_variant(family: ModelFamily, name: &str) -> Result<&'static ModelVariant> {
    REGISTRY
        .iter()
        .find(|v| v.family == family && v.name == name)
        .ok_or_else(|| {
            let available: Vec<&str> = REGISTRY
                .iter()
                .filter(|v| v.family == family)
                .map(|v| v.name)
                .collect();
            Error::UnknownVariant {
                family: family.name().to_string(),
                variant: name.to_string(),
                available: available.join(", "),
            }
        })
}

// ---------------------------------------------------------------------------
// Params document (JSON interchange)
// ---------------------------------------------------------------------------

/// On-disk parameter vector for a calibrated model: which family/variant it
/// belongs to, plus the flat values in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub family: ModelFamily,
    pub variant: String,
    pub params: Vec<f64>,
}

impl ParamsDoc {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<ParamsDoc> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!(
            "invalid params document {}: {e}",
            path.display()
        )))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("params serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
