//! Parameter calibration with a seeded, elitist genetic algorithm.
//!
//! The optimizer is deterministic for a fixed configuration: all randomness
//! flows from one ChaCha8 stream seeded by [`GaConfig::seed`], and the best
//! loss per generation forms a non-increasing curve.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{self, CandidateModel};
use crate::error::{Error, Result};
use crate::evaluation::{
    carfollow_total_mae, classification_metrics, lanechange_loss, BoundModel, Dataset,
};
use crate::models::{ModelVariant, VariantFn};

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

/// Calibration range for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneBounds {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// Ordered calibration ranges matching a model's flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub genes: Vec<GeneBounds>,
}

/// Default range for the logistic steepness parameter of the improved flow
/// variant (it is not part of the family's canonical parameter list).
const STEEPNESS_BOUNDS: (f64, f64) = (0.1, 10.0);

impl ParamBounds {
    pub fn new(genes: Vec<GeneBounds>) -> Result<ParamBounds> {
        let bounds = ParamBounds { genes };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.genes.is_empty() {
            return Err(Error::Params("parameter bounds are empty".into()));
        }
        for g in &self.genes {
            if !(g.lower.is_finite() && g.upper.is_finite() && g.lower < g.upper) {
                return Err(Error::Params(format!(
                    "invalid bounds for {}: [{}, {}]",
                    g.name, g.lower, g.upper
                )));
            }
        }
        Ok(())
    }

    /// Default bounds for a registered native variant.
    pub fn for_native(variant: &ModelVariant) -> Result<ParamBounds> {
        let defaults = variant.family.default_bounds();
        let mut genes = Vec::with_capacity(variant.param_count());
        for name in variant.param_names {
            let (lower, upper) = match defaults.iter().find(|(n, _, _)| n == name) {
                Some(&(_, lo, hi)) => (lo, hi),
                None if *name == "k" => STEEPNESS_BOUNDS,
                None => {
                    return Err(Error::Params(format!(
                        "no default bounds for parameter {name} of {}/{}",
                        variant.family, variant.name
                    )))
                }
            };
            genes.push(GeneBounds { name: name.to_string(), lower, upper });
        }
        ParamBounds::new(genes)
    }

    /// Bounds for a candidate: family defaults plus its declared extras.
    pub fn for_candidate(candidate: &CandidateModel) -> Result<ParamBounds> {
        let genes = candidate
            .param_bounds()
            .into_iter()
            .map(|(name, lower, upper)| GeneBounds { name, lower, upper })
            .collect();
        ParamBounds::new(genes)
    }
}

// ---------------------------------------------------------------------------
// GA configuration and result
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Gaussian mutation sigma as a fraction of each gene's range.
    pub mutation_sigma_fraction: f64,
    pub elite_count: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 100,
            generations: 200,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma_fraction: 0.1,
            elite_count: 2,
            seed: 42,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("population_size must be at least 2".into()));
        }
        if self.generations == 0 {
            return Err(Error::Config("generations must be at least 1".into()));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return Err(Error::Config(format!(
                "tournament_size must be in 1..={}, got {}",
                self.population_size, self.tournament_size
            )));
        }
        if self.elite_count >= self.population_size {
            return Err(Error::Config(format!(
                "elite_count must be below population_size, got {} >= {}",
                self.elite_count, self.population_size
            )));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        if !(self.mutation_sigma_fraction.is_finite() && self.mutation_sigma_fraction > 0.0) {
            return Err(Error::Config(format!(
                "mutation_sigma_fraction must be positive, got {}",
                self.mutation_sigma_fraction
            )));
        }
        Ok(())
    }
}

/// Outcome of one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best_params: Vec<f64>,
    pub best_loss: f64,
    /// Best loss after each generation; non-increasing.
    pub curve: Vec<f64>,
}

/// Persist a loss curve as `generation,best_loss` CSV.
pub fn write_curve_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        let text = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => Error::Schema { path: path.into(), message: text },
        }
    })?;
    writer
        .write_record(["generation", "best_loss"])
        .and_then(|_| {
            curve.iter().enumerate().try_for_each(|(g, loss)| {
                writer.write_record([g.to_string(), format!("{loss}")])
            })
        })
        .and_then(|_| writer.flush().map_err(csv::Error::from))
        .map_err(|e| Error::Schema { path: path.into(), message: e.to_string() })
}

// ---------------------------------------------------------------------------
// The optimizer
// ---------------------------------------------------------------------------

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller: two uniforms to one normal deviate.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn fitness_of(value: f64) -> f64 {
    if value.is_finite() {
        value
    } else {
        f64::INFINITY
    }
}

/// Minimize `objective` over box bounds with a seeded genetic algorithm.
///
/// Selection is tournament of [`GaConfig::tournament_size`]; crossover blends
/// parent genes uniformly over their spanned interval extended by half its
/// width on each side (clamped to bounds); mutation adds per-gene Gaussian
/// noise scaled to the gene range. The top [`GaConfig::elite_count`]
/// individuals survive unchanged, which makes the reported curve
/// non-increasing. Non-finite objective values are treated as +∞.
pub fn ga_minimize<F>(objective: F, bounds: &ParamBounds, config: &GaConfig) -> Result<CalibrationResult>
where
    F: Fn(&[f64]) -> f64,
{
    bounds.validate()?;
    config.validate()?;

    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let uniform_gene = |rng: &mut ChaCha8Rng, g: &GeneBounds| -> f64 {
        g.lower + rng.gen::<f64>() * (g.upper - g.lower)
    };

    let mut population: Vec<Vec<f64>> = (0..config.population_size)
        .map(|_| bounds.genes.iter().map(|g| uniform_gene(&mut rng, g)).collect())
        .collect();
    let mut fitness: Vec<f64> = population.iter().map(|ind| fitness_of(objective(ind))).collect();

    let best_index = |fitness: &[f64]| -> usize {
        let mut best = 0;
        for i in 1..fitness.len() {
            if fitness[i] < fitness[best] {
                best = i;
            }
        }
        best
    };

    let best = best_index(&fitness);
    let mut best_params = population[best].clone();
    let mut best_loss = fitness[best];
    let mut curve = Vec::with_capacity(config.generations);

    for _ in 0..config.generations {
        // Rank the current generation; elites carry over verbatim.
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));

        let mut next: Vec<Vec<f64>> =
            order.iter().take(config.elite_count).map(|&i| population[i].clone()).collect();

        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            let mut winner = rng.gen_range(0..population.len());
            for _ in 1..config.tournament_size {
                let challenger = rng.gen_range(0..population.len());
                if fitness[challenger] < fitness[winner] {
                    winner = challenger;
                }
            }
            winner
        };

        while next.len() < config.population_size {
            let p1 = tournament(&mut rng);
            let p2 = tournament(&mut rng);
            let mut child: Vec<f64> = if rng.gen::<f64>() < config.crossover_rate {
                (0..dim)
                    .map(|i| {
                        let (a, b) = (population[p1][i], population[p2][i]);
                        let (lo, hi) = (a.min(b), a.max(b));
                        let spread = hi - lo;
                        let sample = lo - 0.5 * spread + rng.gen::<f64>() * 2.0 * spread;
                        sample.clamp(bounds.genes[i].lower, bounds.genes[i].upper)
                    })
                    .collect()
            } else {
                population[p1].clone()
            };
            for (i, gene) in child.iter_mut().enumerate() {
                if rng.gen::<f64>() < config.mutation_rate {
                    let range = bounds.genes[i].upper - bounds.genes[i].lower;
                    *gene += sample_standard_normal(&mut rng)
                        * config.mutation_sigma_fraction
                        * range;
                    *gene = gene.clamp(bounds.genes[i].lower, bounds.genes[i].upper);
                }
            }
            next.push(child);
        }

        population = next;
        fitness = population.iter().map(|ind| fitness_of(objective(ind))).collect();

        let gen_best = best_index(&fitness);
        if fitness[gen_best] < best_loss {
            best_loss = fitness[gen_best];
            best_params = population[gen_best].clone();
        }
        curve.push(best_loss);
    }

    Ok(CalibrationResult { best_params, best_loss, curve })
}

// ---------------------------------------------------------------------------
// Model-aware calibration
// ---------------------------------------------------------------------------

/// What to calibrate: a registered native variant or a parsed candidate.
#[derive(Clone, Copy)]
pub enum ModelSpec<'a> {
    Native(&'static ModelVariant),
    Candidate(&'a CandidateModel),
}

impl ModelSpec<'_> {
    pub fn family(&self) -> crate::models::ModelFamily {
        match self {
            ModelSpec::Native(v) => v.family,
            ModelSpec::Candidate(c) => c.family,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::Native(v) => v.param_count(),
            ModelSpec::Candidate(c) => c.param_count(),
        }
    }

    /// Default calibration bounds for this model.
    pub fn default_bounds(&self) -> Result<ParamBounds> {
        match self {
            ModelSpec::Native(v) => ParamBounds::for_native(v),
            ModelSpec::Candidate(c) => ParamBounds::for_candidate(c),
        }
    }

    /// Bind this model to a parameter vector.
    pub fn bind(&self, params: &[f64]) -> Result<BoundModel> {
        match self {
            ModelSpec::Native(v) => BoundModel::from_native(v, params),
            ModelSpec::Candidate(c) => BoundModel::from_candidate(c, params),
        }
    }
}

/// Calibrate a model's parameters against a dataset by minimizing the
/// family loss (spacing MAE, `1 − F1`, or speed MAE).
pub fn calibrate_model(
    spec: &ModelSpec,
    dataset: &Dataset,
    bounds: &ParamBounds,
    config: &GaConfig,
) -> Result<CalibrationResult> {
    if spec.family() != dataset.family() {
        return Err(Error::Domain(format!(
            "cannot calibrate a {} model on a {} dataset",
            spec.family(),
            dataset.family()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Domain("cannot calibrate on an empty dataset".into()));
    }
    if bounds.len() != spec.param_count() {
        return Err(Error::Params(format!(
            "bounds cover {} parameters but the model has {}",
            bounds.len(),
            spec.param_count()
        )));
    }

    match (spec, dataset) {
        (ModelSpec::Native(variant), Dataset::CarFollow(events)) => {
            let VariantFn::Accel(f) = variant.function else { unreachable!() };
            ga_minimize(
                |genes| match crate::models::IdmParams::from_slice(genes) {
                    Ok(p) => carfollow_total_mae(&|s, sv, lv| Ok(f(&p, s, sv, lv)), events)
                        .unwrap_or(f64::INFINITY),
                    Err(_) => f64::INFINITY,
                },
                bounds,
                config,
            )
        }
        (ModelSpec::Native(variant), Dataset::LaneChange(samples)) => {
            let VariantFn::Decide(f) = variant.function else { unreachable!() };
            let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
            ga_minimize(
                |genes| match crate::models::MobilParams::from_slice(genes) {
                    Ok(p) => {
                        let predictions = f(&p, samples);
                        classification_metrics(&predictions, &labels)
                            .map(|m| lanechange_loss(m.f1))
                            .unwrap_or(f64::INFINITY)
                    }
                    Err(_) => f64::INFINITY,
                },
                bounds,
                config,
            )
        }
        (ModelSpec::Native(variant), Dataset::Flow(samples)) => {
            let VariantFn::Speed(f) = variant.function else { unreachable!() };
            ga_minimize(
                |genes| match crate::models::LwrParams::from_slice(genes) {
                    Ok(p) => {
                        samples
                            .iter()
                            .map(|s| (f(&p, s.density) - s.speed).abs())
                            .sum::<f64>()
                            / samples.len() as f64
                    }
                    Err(_) => f64::INFINITY,
                },
                bounds,
                config,
            )
        }
        (ModelSpec::Candidate(candidate), dataset) => {
            let compiled = dsl::compile_candidate(candidate)?;
            match dataset {
                Dataset::CarFollow(events) => ga_minimize(
                    |genes| {
                        let accel = |s: f64, sv: f64, lv: f64| {
                            compiled.eval_rows(genes, &[vec![s, sv, lv]]).map(|out| out[0])
                        };
                        carfollow_total_mae(&accel, events).unwrap_or(f64::INFINITY)
                    },
                    bounds,
                    config,
                ),
                Dataset::LaneChange(samples) => {
                    let rows: Vec<Vec<f64>> =
                        samples.iter().map(|s| s.features().to_vec()).collect();
                    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
                    ga_minimize(
                        |genes| {
                            let Ok(scores) = compiled.eval_rows(genes, &rows) else {
                                return f64::INFINITY;
                            };
                            let predictions: Vec<u8> = scores
                                .iter()
                                .map(|&y| {
                                    u8::from(y > crate::evaluation::DECISION_SCORE_THRESHOLD)
                                })
                                .collect();
                            classification_metrics(&predictions, &labels)
                                .map(|m| lanechange_loss(m.f1))
                                .unwrap_or(f64::INFINITY)
                        },
                        bounds,
                        config,
                    )
                }
                Dataset::Flow(samples) => {
                    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.density]).collect();
                    ga_minimize(
                        |genes| {
                            let Ok(speeds) = compiled.eval_rows(genes, &rows) else {
                                return f64::INFINITY;
                            };
                            speeds
                                .iter()
                                .zip(samples)
                                .map(|(pred, s)| (pred - s.speed).abs())
                                .sum::<f64>()
                                / samples.len() as f64
                        },
                        bounds,
                        config,
                    )
                }
            }
        }
    }
}
