//! Likelihood-free Bayesian inference of rule parameters and combination of
//! per-model posteriors.
//!
//! Fitting is single-stage weighted rejection: draw parameter assignments
//! from the joint uniform prior over the declared ranges, weight each sample
//! by the model score (optionally sharpened as `score^k`), and build
//! weight-normalized marginal histograms. The full sample cloud is retained
//! so sequential schemes can be layered on top later.
//!
//! Posteriors learned on different models combine multiplicatively:
//! `combined[b] ∝ prior[b] · Π_i posterior_i[b] / prior[b]`, the histogram
//! form of chaining Bayesian updates over independent evidence. Evidence
//! marginals cancel in the normalization. Combination operates on marginal
//! posteriors per parameter; joint dependence within a parameter group is
//! preserved only inside a single model's sample cloud.

use crate::knowledge::KnowledgeBase;
use crate::ontology::{Ontology, OntologyError};
use crate::rng::RandomStream;
use crate::rules::{ParameterAssignment, UnknownParameter};
use crate::scoring::{score_model, ScoreError};
use crate::simulation::Scenario;
use crate::worldview::{WorldView, WorldViewError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Bin masses below this floor are lifted before entering a product, so a
/// single empty bin cannot veto a parameter region on its own.
pub const MASS_FLOOR: f64 = 1e-12;

/// Posteriors must normalize to 1 within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("parameter `{0}` does not appear in any rule of the worldview")]
    UnknownParameterInGroup(String),
    #[error("parameter `{parameter}` is not used by any effective rule of scenario `{scenario}`")]
    ParameterUnusedInScenario { parameter: String, scenario: String },
    #[error("posterior grids do not match: {0}")]
    GridMismatch(String),
    #[error("no posteriors to combine")]
    EmptyInput,
    #[error("prior must be strictly positive on every bin")]
    PriorNotPositive,
    #[error("no scenario uses the parameter group; nothing to fit")]
    NoApplicableModel,
    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    WorldView(#[from] WorldViewError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// A discretized probability distribution over one parameter's declared
/// range: `bins.len()` equal-width bins spanning exactly `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<f64>,
}

impl Posterior {
    pub fn uniform(parameter: &str, lo: f64, hi: f64, n_bins: usize) -> Self {
        Self {
            parameter: parameter.to_owned(),
            lo,
            hi,
            bins: vec![1.0 / n_bins as f64; n_bins],
        }
    }

    /// All mass in the bin containing `value`.
    pub fn point_mass(parameter: &str, lo: f64, hi: f64, n_bins: usize, value: f64) -> Self {
        let mut p = Self { parameter: parameter.to_owned(), lo, hi, bins: vec![0.0; n_bins] };
        let idx = p.bin_of(value);
        p.bins[idx] = 1.0;
        p
    }

    /// Weight-normalized histogram of samples; `None` when the total weight
    /// is zero.
    pub fn from_weighted<I>(parameter: &str, lo: f64, hi: f64, n_bins: usize, samples: I) -> Option<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut p = Self { parameter: parameter.to_owned(), lo, hi, bins: vec![0.0; n_bins] };
        let mut total = 0.0;
        for (value, weight) in samples {
            let idx = p.bin_of(value);
            p.bins[idx] += weight;
            total += weight;
        }
        if total == 0.0 {
            return None;
        }
        for b in &mut p.bins {
            *b /= total;
        }
        Some(p)
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins.len() as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }

    /// Index of the bin containing `value` (clamped to the grid).
    pub fn bin_of(&self, value: f64) -> usize {
        let n = self.bins.len();
        let rel = (value - self.lo) / (self.hi - self.lo);
        ((rel * n as f64).floor() as i64).clamp(0, n as i64 - 1) as usize
    }

    /// Center of the highest-mass bin (lowest index on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, mass) in self.bins.iter().enumerate() {
            if *mass > self.bins[best] {
                best = i;
            }
        }
        self.center(best)
    }

    pub fn mean(&self) -> f64 {
        self.bins.iter().enumerate().map(|(i, m)| m * self.center(i)).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.bins
            .iter()
            .enumerate()
            .map(|(i, m)| m * (self.center(i) - mean).powi(2))
            .sum()
    }

    /// Draw a value at the grid's resolution: pick a bin by mass, return its
    /// center. Point-mass posteriors therefore sample deterministically.
    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        let u = rng.next_f64();
        let mut cum = 0.0;
        for (i, mass) in self.bins.iter().enumerate() {
            cum += mass;
            if u < cum {
                return self.center(i);
            }
        }
        // Rounding left u above the accumulated total; take the last bin.
        self.center(self.bins.len() - 1)
    }

    /// KL divergence (nats) from the uniform distribution on the same grid.
    pub fn kl_from_uniform(&self) -> f64 {
        let n = self.bins.len() as f64;
        self.bins
            .iter()
            .filter(|m| **m > 0.0)
            .map(|m| m * (m * n).ln())
            .sum()
    }

    /// Central credible interval covering `mass` (e.g. 0.9), by linear
    /// interpolation of the CDF within bins.
    pub fn credible_interval(&self, mass: f64) -> (f64, f64) {
        let tail = (1.0 - mass) / 2.0;
        (self.quantile(tail), self.quantile(1.0 - tail))
    }

    fn quantile(&self, target: f64) -> f64 {
        let mut cum = 0.0;
        for (i, m) in self.bins.iter().enumerate() {
            if cum + m >= target {
                let frac = if *m > 0.0 { (target - cum) / m } else { 0.0 };
                return self.lo + (i as f64 + frac) * self.bin_width();
            }
            cum += m;
        }
        self.hi
    }

    /// Validate the type invariants: grid sane, masses non-negative and
    /// summing to 1 within tolerance.
    pub fn check(&self) -> Result<(), InferenceError> {
        if !(self.lo < self.hi) || self.bins.is_empty() {
            return Err(InferenceError::InvalidPosterior(format!(
                "degenerate grid for `{}`",
                self.parameter
            )));
        }
        if self.bins.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(InferenceError::InvalidPosterior(format!(
                "negative or non-finite mass for `{}`",
                self.parameter
            )));
        }
        let sum: f64 = self.bins.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(InferenceError::InvalidPosterior(format!(
                "masses for `{}` sum to {sum}",
                self.parameter
            )));
        }
        Ok(())
    }

    fn same_grid(&self, other: &Posterior) -> bool {
        self.parameter == other.parameter
            && self.lo.to_bits() == other.lo.to_bits()
            && self.hi.to_bits() == other.hi.to_bits()
            && self.bins.len() == other.bins.len()
    }

    fn is_constant(&self) -> bool {
        self.bins.iter().all(|m| *m == self.bins[0])
    }
}

/// Combine per-model posteriors over identical grids into one distribution:
/// `combined[b] ∝ prior[b] · Π_i posterior_i[b] / prior[b]`.
///
/// Constant factors cancel under normalization and are skipped, so combining
/// a single posterior (or adding uniform, uninformative evidence) under a
/// uniform prior returns the informative posterior bit for bit.
pub fn combine_posteriors(
    posteriors: &[Posterior],
    prior: &Posterior,
) -> Result<Posterior, InferenceError> {
    if posteriors.is_empty() {
        return Err(InferenceError::EmptyInput);
    }
    for p in posteriors {
        if !p.same_grid(prior) {
            return Err(InferenceError::GridMismatch(format!(
                "`{}` [{}, {}] x{} vs `{}` [{}, {}] x{}",
                p.parameter,
                p.lo,
                p.hi,
                p.bins.len(),
                prior.parameter,
                prior.lo,
                prior.hi,
                prior.bins.len()
            )));
        }
        p.check()?;
    }
    if prior.bins.iter().any(|m| *m <= 0.0) {
        return Err(InferenceError::PriorNotPositive);
    }

    if prior.is_constant() {
        // Uniform prior: the combination reduces to the normalized pointwise
        // product of the evidence; uniform evidence contributes a constant
        // factor and drops out exactly.
        let informative: Vec<&Posterior> = posteriors.iter().filter(|p| !p.is_constant()).collect();
        match informative.len() {
            0 => return Ok(Posterior {
                parameter: prior.parameter.clone(),
                lo: prior.lo,
                hi: prior.hi,
                bins: prior.bins.clone(),
            }),
            1 => return Ok((*informative[0]).clone()),
            _ => {}
        }
        let mut log_acc = vec![0.0f64; prior.bins.len()];
        for p in informative {
            for (acc, mass) in log_acc.iter_mut().zip(&p.bins) {
                *acc += mass.max(MASS_FLOOR).ln();
            }
        }
        return Ok(normalize_log(&prior.parameter, prior.lo, prior.hi, log_acc));
    }

    let mut log_acc: Vec<f64> = prior.bins.iter().map(|m| m.ln()).collect();
    for p in posteriors {
        for ((acc, mass), prior_mass) in log_acc.iter_mut().zip(&p.bins).zip(&prior.bins) {
            *acc += mass.max(MASS_FLOOR).ln() - prior_mass.ln();
        }
    }
    Ok(normalize_log(&prior.parameter, prior.lo, prior.hi, log_acc))
}

fn normalize_log(parameter: &str, lo: f64, hi: f64, log_masses: Vec<f64>) -> Posterior {
    let max = log_masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut bins: Vec<f64> = log_masses.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = bins.iter().sum();
    for b in &mut bins {
        *b /= sum;
    }
    Posterior { parameter: parameter.to_owned(), lo, hi, bins }
}

/// Parameters learned jointly from one or more models.
#[derive(Debug, Clone)]
pub struct ParameterGroup {
    pub parameters: Vec<UnknownParameter>,
}

impl ParameterGroup {
    /// Resolve parameter names against the worldview's rules.
    pub fn resolve(names: &[String], worldview: &WorldView) -> Result<Self, InferenceError> {
        let known = worldview.parameters();
        let mut parameters = Vec::new();
        for name in names {
            let p = known
                .get(name)
                .ok_or_else(|| InferenceError::UnknownParameterInGroup(name.clone()))?;
            parameters.push(p.clone());
        }
        Ok(Self { parameters })
    }

    pub fn names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }
}

/// Budget and knobs of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Prior samples drawn per model.
    pub n_samples: usize,
    /// Monte Carlo runs averaged into each sample's weight.
    pub n_runs_per_sample: usize,
    /// Bins per marginal posterior.
    pub bins: usize,
    /// Score-kernel width factor.
    pub tau: f64,
    /// Sharpening exponent: sample weight = score^k.
    pub weight_exponent: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_runs_per_sample: 10,
            bins: 100,
            tau: crate::scoring::DEFAULT_TAU,
            weight_exponent: 1.0,
        }
    }
}

/// One retained prior sample and its weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedSample {
    pub assignment: ParameterAssignment,
    pub weight: f64,
}

/// Identifies the model-plus-data evidence a posterior was learned from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvidence {
    pub scenario: String,
    pub kb_snapshot: String,
}

/// Result of fitting one parameter group on one model.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Marginal posterior per parameter.
    pub posteriors: BTreeMap<String, Posterior>,
    /// The full sample cloud (assignment, weight).
    pub cloud: Vec<WeightedSample>,
    /// Set when every sample scored zero; the posteriors then equal the
    /// prior.
    pub zero_evidence: bool,
    pub total_weight: f64,
    pub evidence: ModelEvidence,
}

/// Free parameters used by the scenario's effective rules.
fn scenario_parameters(
    scenario: &Scenario,
    ontology: &Ontology,
    worldview: &WorldView,
) -> Result<BTreeSet<String>, InferenceError> {
    let mut out = BTreeSet::new();
    for agent in &scenario.agents {
        for rule in ontology.effective_rules(&agent.agent_type, worldview)? {
            for p in rule.free_parameters() {
                out.insert(p.name.clone());
            }
        }
    }
    Ok(out)
}

/// Likelihood-free fit of a parameter group on one scenario: samples the
/// joint uniform prior, weights each sample by the model score averaged over
/// `n_runs_per_sample` runs, and returns weight-normalized marginal
/// histograms plus the sample cloud.
pub fn abc_fit(
    group: &ParameterGroup,
    scenario: &Scenario,
    ontology: &Ontology,
    worldview: &WorldView,
    kb: &KnowledgeBase,
    config: &FitConfig,
    seed: u64,
) -> Result<FitResult, InferenceError> {
    scenario.validate(ontology).map_err(ScoreError::from)?;
    let used = scenario_parameters(scenario, ontology, worldview)?;
    for p in &group.parameters {
        if !used.contains(&p.name) {
            return Err(InferenceError::ParameterUnusedInScenario {
                parameter: p.name.clone(),
                scenario: scenario.id.clone(),
            });
        }
    }
    // Parameters the scenario needs but the group does not fit are fixed at
    // their posterior modes.
    let group_names: BTreeSet<String> = group.names().into_iter().collect();
    let fixed = worldview
        .modes_for(used.iter().filter(|n| !group_names.contains(*n)).cloned())?;

    let base = RandomStream::new(seed);
    let draw_base = base.split(0);
    let score_base = base.split(1);
    let cloud: Vec<WeightedSample> = (0..config.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut draw = draw_base.split(i as u64);
            let mut assignment = fixed.clone();
            for p in &group.parameters {
                assignment.insert(p.name.clone(), draw.uniform(p.lo, p.hi));
            }
            let report = score_model(
                scenario,
                ontology,
                worldview,
                kb,
                &assignment,
                config.n_runs_per_sample,
                score_base.split(i as u64).as_seed(),
                config.tau,
            )?;
            let weight = report.model_score.powf(config.weight_exponent);
            Ok(WeightedSample { assignment, weight })
        })
        .collect::<Result<_, InferenceError>>()?;

    let total_weight: f64 = cloud.iter().map(|s| s.weight).sum();
    let zero_evidence = total_weight == 0.0;
    let mut posteriors = BTreeMap::new();
    for p in &group.parameters {
        let posterior = if zero_evidence {
            Posterior::uniform(&p.name, p.lo, p.hi, config.bins)
        } else {
            Posterior::from_weighted(
                &p.name,
                p.lo,
                p.hi,
                config.bins,
                cloud.iter().map(|s| (s.assignment[&p.name], s.weight)),
            )
            .expect("total weight is positive")
        };
        posteriors.insert(p.name.clone(), posterior);
    }
    Ok(FitResult {
        posteriors,
        cloud,
        zero_evidence,
        total_weight,
        evidence: ModelEvidence { scenario: scenario.id.clone(), kb_snapshot: kb.snapshot_id() },
    })
}

/// Result of fitting one group across several models.
#[derive(Debug, Clone)]
pub struct MultiModelFit {
    /// Per-model fits in scenario order, skipped scenarios excluded.
    pub per_model: Vec<(String, FitResult)>,
    /// Scenarios whose rules use none (or not all) of the group parameters.
    pub skipped: Vec<String>,
    /// Combined posterior per parameter (uniform prior).
    pub overall: BTreeMap<String, Posterior>,
    /// Notes about scenarios sharing knowledge-base entities, where the
    /// independent-evidence assumption of the combination is doubtful.
    pub warnings: Vec<String>,
}

/// Fit a parameter group on every applicable scenario and combine the
/// per-model posteriors into an overall posterior per parameter.
pub fn fit_across_models(
    group_names: &[String],
    scenarios: &[Scenario],
    ontology: &Ontology,
    worldview: &WorldView,
    kb: &KnowledgeBase,
    config: &FitConfig,
    seed: u64,
) -> Result<MultiModelFit, InferenceError> {
    let group = ParameterGroup::resolve(group_names, worldview)?;
    let base = RandomStream::new(seed);
    let mut per_model = Vec::new();
    let mut skipped = Vec::new();
    for (idx, scenario) in scenarios.iter().enumerate() {
        let used = scenario_parameters(scenario, ontology, worldview)?;
        if !group.parameters.iter().all(|p| used.contains(&p.name)) {
            skipped.push(scenario.id.clone());
            continue;
        }
        let fit = abc_fit(
            &group,
            scenario,
            ontology,
            worldview,
            kb,
            config,
            base.split(idx as u64).as_seed(),
        )?;
        per_model.push((scenario.id.clone(), fit));
    }
    if per_model.is_empty() {
        return Err(InferenceError::NoApplicableModel);
    }

    let mut overall = BTreeMap::new();
    for p in &group.parameters {
        let prior = Posterior::uniform(&p.name, p.lo, p.hi, config.bins);
        let inputs: Vec<Posterior> =
            per_model.iter().map(|(_, fit)| fit.posteriors[&p.name].clone()).collect();
        overall.insert(p.name.clone(), combine_posteriors(&inputs, &prior)?);
    }

    Ok(MultiModelFit {
        warnings: shared_entity_warnings(scenarios, ontology, kb),
        per_model,
        skipped,
        overall,
    })
}

/// Entities referenced by each scenario (bound entities plus all candidates
/// of unbound slots); overlapping sets get a warning.
fn shared_entity_warnings(
    scenarios: &[Scenario],
    ontology: &Ontology,
    kb: &KnowledgeBase,
) -> Vec<String> {
    let mut sets: Vec<(String, BTreeSet<String>)> = Vec::new();
    for scenario in scenarios {
        let mut entities = BTreeSet::new();
        for agent in &scenario.agents {
            match &agent.entity {
                Some(e) => {
                    entities.insert(e.clone());
                }
                None => {
                    if let Ok(candidates) = kb.entities_of_type(&agent.agent_type, ontology) {
                        entities.extend(candidates);
                    }
                }
            }
        }
        sets.push((scenario.id.clone(), entities));
    }
    let mut warnings = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let shared: Vec<&String> = sets[i].1.intersection(&sets[j].1).collect();
            if !shared.is_empty() {
                warnings.push(format!(
                    "scenarios `{}` and `{}` share entities ({}); combined posteriors assume independent evidence",
                    sets[i].0,
                    sets[j].0,
                    shared.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                ));
            }
        }
    }
    warnings
}
