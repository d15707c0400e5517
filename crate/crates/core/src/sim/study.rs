use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{simulate_cohort, CohortGroup, CohortSpec};
use super::model::{expected_arm_means, expected_gap, DynamicsKind, UserModel};
use super::SimError;
use crate::bandit::ArmId;
use crate::config::{Algorithm, Catalog, ExperimentConfig};
use crate::seed::{derive_seed, derived_rng, stream};
use crate::stats::{bootstrap_ci, stratified_report, AnalysisOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub n_datasets: usize,
    pub cohort: CohortSpec,
    pub analysis: AnalysisOptions,
    pub seed: u64,
}

impl StudyOptions {
    /// 40 CYCLE and 38 REPEAT participants, unstratified analysis.
    pub fn drift_defaults(n_datasets: usize, seed: u64) -> Self {
        Self {
            n_datasets,
            cohort: CohortSpec {
                groups: vec![CohortGroup::new(Algorithm::Cycle, 40), CohortGroup::new(Algorithm::Repeat, 38)],
            },
            analysis: AnalysisOptions::default(),
            seed,
        }
    }
}

/// Rejection frequencies of the overall stratum across simulated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub n_datasets: usize,
    /// Share of datasets with at least one Holm rejection.
    pub family_wise_rate: f64,
    pub per_arm_rejection: Vec<f64>,
    pub mean_tau: Vec<f64>,
}

/// Simulates `n_datasets` cohorts and analyses each. Dataset `i` is
/// generated and analysed from seeds derived from `(seed, i)` alone.
pub fn run_study(
    config: &ExperimentConfig,
    catalog: &Catalog,
    model: &UserModel,
    opts: &StudyOptions,
) -> Result<StudyOutcome, SimError> {
    if opts.n_datasets == 0 {
        return Err(SimError::Cohort("n_datasets must be at least 1".into()));
    }
    let k = config.num_arms;
    let rows = (0..opts.n_datasets as u64)
        .into_par_iter()
        .map(|i| {
            let data_seed = derive_seed(opts.seed, stream::DATASET, i);
            let dataset = simulate_cohort(config, catalog, model, &opts.cohort, data_seed)?;
            let analysis = AnalysisOptions { seed: data_seed, stratify: false, ..opts.analysis.clone() };
            let report = stratified_report(&dataset, &analysis)?;
            let overall = &report.strata[0];
            Ok(overall.arms.iter().map(|a| (a.rejected, a.tau)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let n = rows.len() as f64;
    let mut per_arm_rejection = vec![0.0; k];
    let mut mean_tau = vec![0.0; k];
    let mut any = 0usize;
    for row in &rows {
        any += row.iter().any(|(r, _)| *r) as usize;
        for (slot, (rejected, tau)) in row.iter().enumerate() {
            per_arm_rejection[slot] += *rejected as u8 as f64 / n;
            mean_tau[slot] += tau / n;
        }
    }
    Ok(StudyOutcome { n_datasets: rows.len(), family_wise_rate: any as f64 / n, per_arm_rejection, mean_tau })
}

/// [`run_study`] restricted to static users, where every rejection is false.
pub fn calibration_study(
    config: &ExperimentConfig,
    catalog: &Catalog,
    model: &UserModel,
    opts: &StudyOptions,
) -> Result<StudyOutcome, SimError> {
    if model.kind != DynamicsKind::Static || opts.cohort.groups.iter().any(|g| g.model.is_some() || g.heavy_model.is_some())
    {
        return Err(SimError::Model("calibration needs one static model for every participant".into()));
    }
    run_study(config, catalog, model, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub gamma: f64,
    /// Expected CYCLE minus REPEAT gap averaged over arms.
    pub expected_gap: f64,
    pub outcome: StudyOutcome,
}

/// Rejection rates of satiating cohorts over a grid of satiation strengths.
/// `gamma = 0` runs the static counterpart of `model`.
pub fn power_study(
    config: &ExperimentConfig,
    catalog: &Catalog,
    model: &UserModel,
    gammas: &[f64],
    opts: &StudyOptions,
) -> Result<Vec<PowerPoint>, SimError> {
    let cycle = config.fixed_sequence(Algorithm::Cycle)?;
    let repeat = config.fixed_sequence(Algorithm::Repeat)?;
    gammas
        .iter()
        .map(|&gamma| {
            let mut m = model.clone();
            m.gamma = gamma;
            m.kind = if gamma == 0.0 { DynamicsKind::Static } else { DynamicsKind::Satiation };
            Ok(PowerPoint {
                gamma,
                expected_gap: expected_gap(&m, &cycle, &repeat),
                outcome: run_study(config, catalog, &m, opts)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOutcome {
    pub n_datasets: usize,
    pub true_tau: Vec<f64>,
    pub per_arm_coverage: Vec<f64>,
    /// Coverage pooled over arms and datasets.
    pub coverage: f64,
}

/// How often the bootstrap interval for each arm contains the true
/// difference between a CYCLE group drawn from `model_a` and a REPEAT group
/// drawn from `model_b`.
#[allow(clippy::too_many_arguments)]
pub fn coverage_study(
    config: &ExperimentConfig,
    catalog: &Catalog,
    model_a: &UserModel,
    model_b: &UserModel,
    sizes: (usize, usize),
    n_datasets: usize,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<CoverageOutcome, SimError> {
    for m in [model_a, model_b] {
        if m.kind != DynamicsKind::Static || m.participant_sd != 0.0 {
            return Err(SimError::Model("coverage needs static models without participant spread".into()));
        }
    }
    if n_datasets == 0 {
        return Err(SimError::Cohort("n_datasets must be at least 1".into()));
    }
    let cycle = config.fixed_sequence(Algorithm::Cycle)?;
    let repeat = config.fixed_sequence(Algorithm::Repeat)?;
    let true_tau: Vec<f64> = expected_arm_means(model_a, &cycle)
        .iter()
        .zip(expected_arm_means(model_b, &repeat))
        .map(|(a, b)| a - b)
        .collect();
    let spec = CohortSpec {
        groups: vec![
            CohortGroup { model: Some(model_a.clone()), ..CohortGroup::new(Algorithm::Cycle, sizes.0) },
            CohortGroup { model: Some(model_b.clone()), ..CohortGroup::new(Algorithm::Repeat, sizes.1) },
        ],
    };
    let m = config.pulls_per_arm() as usize;
    let hits = (0..n_datasets as u64)
        .into_par_iter()
        .map(|i| {
            let data_seed = derive_seed(seed, stream::DATASET, i);
            let dataset = simulate_cohort(config, catalog, model_a, &spec, data_seed)?;
            let (a, b) = (dataset.group(Algorithm::Cycle), dataset.group(Algorithm::Repeat));
            true_tau
                .iter()
                .enumerate()
                .map(|(slot, truth)| {
                    let mut rng = derived_rng(data_seed, stream::BOOTSTRAP, slot as u64);
                    let (lo, hi) = bootstrap_ci(&a, &b, ArmId::from_zero_based(slot), m, n_boot, level, &mut rng)?;
                    Ok(lo <= *truth && *truth <= hi)
                })
                .collect::<Result<Vec<bool>, SimError>>()
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let n = hits.len() as f64;
    let per_arm_coverage: Vec<f64> = (0..true_tau.len())
        .map(|slot| hits.iter().filter(|row| row[slot]).count() as f64 / n)
        .collect();
    let coverage = per_arm_coverage.iter().sum::<f64>() / per_arm_coverage.len() as f64;
    Ok(CoverageOutcome { n_datasets, true_tau, per_arm_coverage, coverage })
}
