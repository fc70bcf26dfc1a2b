//! Dataset types, CSV loaders/writers, driving-state classification, and the
//! seeded calibration/validation split.
//!
//! Three on-disk CSV schemas are supported:
//!
//! * car-following events (`event_id,t_index,spacing_m,sv_speed_mps,lv_speed_mps,rel_speed_mps`),
//!   sampled at a fixed 0.1 s step;
//! * lane-change decision samples (`v,s,of_v,or_v,tf_v,tr_v,rtf_x,rtr_x,rr_x,or_acc,tr_acc,label`);
//! * normalized flow samples (`density_norm,speed_norm`).
//!
//! Loaders reject malformed headers (schema errors) and rows that violate data
//! invariants (data-integrity errors naming the offending row).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation and sampling interval for car-following events, in seconds.
pub const TIME_STEP_S: f64 = 0.1;

/// Tolerance for the recorded relative speed against `sv_speed - lv_speed`.
pub const REL_SPEED_TOLERANCE: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Car-following events
// ---------------------------------------------------------------------------

/// One time step of a car-following event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarFollowStep {
    /// Bumper-to-bumper gap to the leading vehicle, in meters. May be
    /// negative in recorded data (sensor artifacts are kept as-is).
    pub spacing_m: f64,
    /// Subject-vehicle speed, m/s.
    pub sv_speed_mps: f64,
    /// Leading-vehicle speed, m/s.
    pub lv_speed_mps: f64,
    /// Recorded relative speed (subject minus leader), m/s.
    pub rel_speed_mps: f64,
}

/// A contiguous car-following trajectory for one subject/leader pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarFollowEvent {
    pub event_id: String,
    pub steps: Vec<CarFollowStep>,
}

impl CarFollowEvent {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Driving regime of a single car-following step, used to stratify
/// car-following losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrivingState {
    FreeDriving,
    Following,
    ClosingIn,
    EmergencyBraking,
}

impl DrivingState {
    pub const ALL: [DrivingState; 4] = [
        DrivingState::FreeDriving,
        DrivingState::Following,
        DrivingState::ClosingIn,
        DrivingState::EmergencyBraking,
    ];

    /// Human-readable label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            DrivingState::FreeDriving => "free driving",
            DrivingState::Following => "following",
            DrivingState::ClosingIn => "closing in",
            DrivingState::EmergencyBraking => "emergency braking",
        }
    }
}

impl fmt::Display for DrivingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Thresholds for [`classify_steps`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StateThresholds {
    /// A step is free driving when the gap exceeds this many seconds of
    /// headway (at the subject's speed, floored by `speed_floor_mps`).
    pub free_headway_s: f64,
    /// Minimum closing speed (m/s) for the closing-in state.
    pub closing_dv_mps: f64,
    /// Time-to-collision (s) below which a closing step is emergency braking.
    pub emergency_ttc_s: f64,
    /// Speed floor (m/s) so that near-stopped subjects still need a
    /// non-trivial gap to count as free driving.
    pub speed_floor_mps: f64,
}

impl Default for StateThresholds {
    fn default() -> Self {
        StateThresholds {
            free_headway_s: 3.0,
            closing_dv_mps: 0.5,
            emergency_ttc_s: 3.0,
            speed_floor_mps: 1.0,
        }
    }
}

/// Classify every step of an event into exactly one [`DrivingState`].
///
/// Decision order per step (first match wins):
/// 1. emergency braking: closing (`Δv > 0`) with time-to-collision
///    `spacing / max(Δv, 1e-6)` below `emergency_ttc_s`;
/// 2. free driving: `spacing > free_headway_s · max(sv_speed, speed_floor_mps)`
///    — the speed floor keeps a crawling subject from counting bumper-to-bumper
///    gaps as free driving;
/// 3. closing in: `Δv > closing_dv_mps`;
/// 4. following: everything else.
///
/// `Δv` is the closing speed `sv_speed - lv_speed`.
pub fn classify_steps(event: &CarFollowEvent, thresholds: &StateThresholds) -> Vec<DrivingState> {
    event
        .steps
        .iter()
        .map(|step| {
            let dv = step.sv_speed_mps - step.lv_speed_mps;
            if dv > 0.0 && step.spacing_m / dv.max(1e-6) < thresholds.emergency_ttc_s {
                DrivingState::EmergencyBraking
            } else if step.spacing_m
                > thresholds.free_headway_s * step.sv_speed_mps.max(thresholds.speed_floor_mps)
            {
                DrivingState::FreeDriving
            } else if dv > thresholds.closing_dv_mps {
                DrivingState::ClosingIn
            } else {
                DrivingState::Following
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Lane-change samples
// ---------------------------------------------------------------------------

/// One lane-change decision sample: the subject vehicle `v` plus the
/// surrounding vehicles in the original (`o*`) and target (`t*`) lanes,
/// with relative gaps (`r*_x`) and observed follower accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeSample {
    /// Subject speed, m/s.
    pub v: f64,
    /// Gap to the leader in the original lane, m.
    pub s: f64,
    /// Original-lane leader ("old front") speed, m/s.
    pub of_v: f64,
    /// Original-lane follower ("old rear") speed, m/s.
    pub or_v: f64,
    /// Target-lane leader speed, m/s.
    pub tf_v: f64,
    /// Target-lane follower speed, m/s.
    pub tr_v: f64,
    /// Gap to the target-lane leader, m.
    pub rtf_x: f64,
    /// Gap to the target-lane follower, m.
    pub rtr_x: f64,
    /// Gap to the original-lane follower, m.
    pub rr_x: f64,
    /// Observed acceleration of the original-lane follower, m/s².
    pub or_acc: f64,
    /// Observed acceleration of the target-lane follower, m/s².
    pub tr_acc: f64,
    /// Ground truth: 1 if the subject changed lanes, 0 otherwise.
    pub label: u8,
}

impl LaneChangeSample {
    /// Feature columns in on-disk order (everything except `label`).
    pub const INPUT_NAMES: [&'static str; 11] = [
        "v", "s", "of_v", "or_v", "tf_v", "tr_v", "rtf_x", "rtr_x", "rr_x", "or_acc", "tr_acc",
    ];

    /// Features in [`Self::INPUT_NAMES`] order.
    pub fn features(&self) -> [f64; 11] {
        [
            self.v, self.s, self.of_v, self.or_v, self.tf_v, self.tr_v, self.rtf_x, self.rtr_x,
            self.rr_x, self.or_acc, self.tr_acc,
        ]
    }
}

// ---------------------------------------------------------------------------
// Flow samples
// ---------------------------------------------------------------------------

/// One macroscopic flow observation with both axes normalized to [0, 1]
/// (density) and [0, ~1] (speed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub density: f64,
    pub speed: f64,
}

/// Density stratum for flow-model losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityBucket {
    Low,
    Medium,
    High,
}

impl DensityBucket {
    pub const ALL: [DensityBucket; 3] =
        [DensityBucket::Low, DensityBucket::Medium, DensityBucket::High];

    /// Bucket for a normalized density: low `[0, 0.3)`, medium `[0.3, 0.6)`,
    /// high `[0.6, 1.0]`.
    pub fn from_density(density: f64) -> DensityBucket {
        if density < 0.3 {
            DensityBucket::Low
        } else if density < 0.6 {
            DensityBucket::Medium
        } else {
            DensityBucket::High
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DensityBucket::Low => "low",
            DensityBucket::Medium => "medium",
            DensityBucket::High => "high",
        }
    }

    /// Range annotation used by the text report renderer.
    pub fn range_label(self) -> &'static str {
        match self {
            DensityBucket::Low => "low (0~0.3)",
            DensityBucket::Medium => "medium (0.3~0.6)",
            DensityBucket::High => "high (0.6~1.0)",
        }
    }
}

impl fmt::Display for DensityBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Normalize raw (density, speed) pairs by dividing each column by its
/// maximum. Helper for ingesting unnormalized flow observations.
pub fn normalize_flow_pairs(raw: &[(f64, f64)]) -> Vec<FlowSample> {
    let dmax = raw.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let smax = raw.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&(d, s)| FlowSample {
            density: if dmax > 0.0 { d / dmax } else { d },
            speed: if smax > 0.0 { s / smax } else { s },
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    Error::io(path, io)
                } else {
                    unreachable!()
                }
            }
            _ => Error::Schema {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
        })
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("expected columns {expected:?}, found {got:?}"),
        });
    }
    Ok(())
}

fn parse_field(path: &Path, row: usize, name: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| Error::DataIntegrity {
        path: path.to_path_buf(),
        row,
        message: format!("column '{name}' is not a number: '{raw}'"),
    })?;
    if value.is_nan() {
        return Err(Error::DataIntegrity {
            path: path.to_path_buf(),
            row,
            message: format!("column '{name}' is NaN"),
        });
    }
    Ok(value)
}

/// Load car-following events, grouped by `event_id` in first-appearance order
/// with steps ordered by `t_index`.
///
/// Rejects: wrong headers (schema error), non-numeric/NaN fields, duplicate
/// `(event_id, t_index)` pairs, non-contiguous time indices, events shorter
/// than two steps, and rows whose recorded relative speed differs from
/// `sv_speed - lv_speed` by more than [`REL_SPEED_TOLERANCE`]. Negative
/// spacings are kept.
pub fn load_carfollow_events(path: impl AsRef<Path>) -> Result<Vec<CarFollowEvent>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(
        path,
        &mut reader,
        &["event_id", "t_index", "spacing_m", "sv_speed_mps", "lv_speed_mps", "rel_speed_mps"],
    )?;

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(u64, CarFollowStep)>> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, counting the header line
        let record = record.map_err(|e| Error::DataIntegrity {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let event_id = record[0].to_string();
        let t_index: u64 = record[1].parse().map_err(|_| Error::DataIntegrity {
            path: path.to_path_buf(),
            row,
            message: format!("column 't_index' is not a non-negative integer: '{}'", &record[1]),
        })?;
        let step = CarFollowStep {
            spacing_m: parse_field(path, row, "spacing_m", &record[2])?,
            sv_speed_mps: parse_field(path, row, "sv_speed_mps", &record[3])?,
            lv_speed_mps: parse_field(path, row, "lv_speed_mps", &record[4])?,
            rel_speed_mps: parse_field(path, row, "rel_speed_mps", &record[5])?,
        };
        let implied = step.sv_speed_mps - step.lv_speed_mps;
        if (step.rel_speed_mps - implied).abs() > REL_SPEED_TOLERANCE {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!(
                    "rel_speed_mps {} disagrees with sv_speed - lv_speed = {} (tolerance {})",
                    step.rel_speed_mps, implied, REL_SPEED_TOLERANCE
                ),
            });
        }
        if !by_id.contains_key(&event_id) {
            order.push(event_id.clone());
        }
        let steps = by_id.entry(event_id.clone()).or_default();
        if steps.iter().any(|(t, _)| *t == t_index) {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!("duplicate t_index {t_index} for event '{event_id}'"),
            });
        }
        steps.push((t_index, step));
    }

    let mut events = Vec::with_capacity(order.len());
    for event_id in order {
        let mut steps = by_id.remove(&event_id).expect("event recorded in order list");
        steps.sort_by_key(|(t, _)| *t);
        if steps.len() < 2 {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row: 0,
                message: format!("event '{event_id}' has fewer than 2 steps"),
            });
        }
        let first = steps[0].0;
        for (offset, (t, _)) in steps.iter().enumerate() {
            if *t != first + offset as u64 {
                return Err(Error::DataIntegrity {
                    path: path.to_path_buf(),
                    row: 0,
                    message: format!(
                        "event '{event_id}' has non-contiguous t_index values (gap near {t})"
                    ),
                });
            }
        }
        events.push(CarFollowEvent {
            event_id,
            steps: steps.into_iter().map(|(_, s)| s).collect(),
        });
    }
    Ok(events)
}

/// Load lane-change decision samples. Labels must be 0 or 1.
pub fn load_lanechange_samples(path: impl AsRef<Path>) -> Result<Vec<LaneChangeSample>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let mut expected: Vec<&str> = LaneChangeSample::INPUT_NAMES.to_vec();
    expected.push("label");
    check_header(path, &mut reader, &expected)?;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::DataIntegrity {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != 12 {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!("expected 12 fields, found {}", record.len()),
            });
        }
        let mut values = [0.0f64; 11];
        for (j, name) in LaneChangeSample::INPUT_NAMES.iter().enumerate() {
            values[j] = parse_field(path, row, name, &record[j])?;
        }
        let label: u8 = match &record[11] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::DataIntegrity {
                    path: path.to_path_buf(),
                    row,
                    message: format!("column 'label' must be 0 or 1, found '{other}'"),
                })
            }
        };
        samples.push(LaneChangeSample {
            v: values[0],
            s: values[1],
            of_v: values[2],
            or_v: values[3],
            tf_v: values[4],
            tr_v: values[5],
            rtf_x: values[6],
            rtr_x: values[7],
            rr_x: values[8],
            or_acc: values[9],
            tr_acc: values[10],
            label,
        });
    }
    Ok(samples)
}

/// Load normalized flow samples. Densities must lie in [0, 1] and speeds must
/// be non-negative.
pub fn load_flow_samples(path: impl AsRef<Path>) -> Result<Vec<FlowSample>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["density_norm", "speed_norm"])?;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::DataIntegrity {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let density = parse_field(path, row, "density_norm", &record[0])?;
        let speed = parse_field(path, row, "speed_norm", &record[1])?;
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!("density_norm {density} outside [0, 1]"),
            });
        }
        if speed < 0.0 {
            return Err(Error::DataIntegrity {
                path: path.to_path_buf(),
                row,
                message: format!("speed_norm {speed} is negative"),
            });
        }
        samples.push(FlowSample { density, speed });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Writers (round-trip partners of the loaders; also used to materialize
// synthetic datasets)
// ---------------------------------------------------------------------------

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })
}

fn write_record(path: &Path, w: &mut csv::Writer<std::fs::File>, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Serialize floats so that reloading reproduces the exact same f64.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_carfollow_csv(path: impl AsRef<Path>, events: &[CarFollowEvent]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    write_record(
        path,
        &mut w,
        &["event_id", "t_index", "spacing_m", "sv_speed_mps", "lv_speed_mps", "rel_speed_mps"]
            .map(String::from),
    )?;
    for event in events {
        for (t, step) in event.steps.iter().enumerate() {
            write_record(
                path,
                &mut w,
                &[
                    event.event_id.clone(),
                    t.to_string(),
                    fmt_f64(step.spacing_m),
                    fmt_f64(step.sv_speed_mps),
                    fmt_f64(step.lv_speed_mps),
                    fmt_f64(step.rel_speed_mps),
                ],
            )?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lanechange_csv(path: impl AsRef<Path>, samples: &[LaneChangeSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = LaneChangeSample::INPUT_NAMES.iter().map(|s| s.to_string()).collect();
    header.push("label".to_string());
    write_record(path, &mut w, &header)?;
    for sample in samples {
        let mut fields: Vec<String> = sample.features().iter().map(|v| fmt_f64(*v)).collect();
        fields.push(sample.label.to_string());
        write_record(path, &mut w, &fields)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_flow_csv(path: impl AsRef<Path>, samples: &[FlowSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    write_record(path, &mut w, &["density_norm", "speed_norm"].map(String::from))?;
    for sample in samples {
        write_record(path, &mut w, &[fmt_f64(sample.density), fmt_f64(sample.speed)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Calibration/validation split
// ---------------------------------------------------------------------------

/// Seeded index split: `round(n · fraction)` calibration indices, the rest
/// validation, both in ascending order. Deterministic for a given
/// `(n, fraction, seed)`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let k = ((n as f64) * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut calibration: Vec<usize> = indices[..k].to_vec();
    let mut validation: Vec<usize> = indices[k..].to_vec();
    calibration.sort_unstable();
    validation.sort_unstable();
    Ok((calibration, validation))
}

/// Split events into disjoint, exhaustive (calibration, validation) parts
/// with `round(len · fraction)` calibration events, preserving input order
/// within each part.
pub fn split_events<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (calib_idx, valid_idx) = split_indices(items.len(), fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&calib_idx), pick(&valid_idx)))
}
