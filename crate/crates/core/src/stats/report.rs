use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::drift::{bootstrap_ci, participant_arm_means, permutation_test, tau, ArmTestReport};
use super::holm::holm_correct;
use super::metrics::{AlgorithmComparison, PolicySummary};
use super::StatsError;
use crate::bandit::ArmId;
use crate::config::Algorithm;
use crate::dataset::{ParticipantTrajectory, TrajectoryDataset};
use crate::seed::{derived_rng, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub n_perm: usize,
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
    pub group_a: Algorithm,
    pub group_b: Algorithm,
    /// Add heavy and light reader strata after the overall one.
    pub stratify: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            n_perm: 10_000,
            n_boot: 5_000,
            level: 0.95,
            seed: 0,
            group_a: Algorithm::Cycle,
            group_b: Algorithm::Repeat,
            stratify: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stratum {
    Overall,
    Heavy,
    Light,
}

impl Stratum {
    fn index(self) -> u64 {
        self as u64
    }

    fn label(self) -> &'static str {
        match self {
            Stratum::Overall => "Overall",
            Stratum::Heavy => "Heavy",
            Stratum::Light => "Light",
        }
    }

    fn admits(self, p: &ParticipantTrajectory) -> bool {
        match self {
            Stratum::Overall => true,
            Stratum::Heavy => p.heavy == Some(true),
            Stratum::Light => p.heavy == Some(false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StratumStatus {
    Ok,
    /// Fewer than two participants in one of the groups.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub stratum: Stratum,
    pub status: StratumStatus,
    pub n_a: usize,
    pub n_b: usize,
    pub arms: Vec<ArmTestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub study_id: Option<String>,
    pub options: AnalysisOptions,
    pub pulls_per_arm: u32,
    pub strata: Vec<StratumReport>,
}

impl DriftReport {
    pub fn stratum(&self, stratum: Stratum) -> Option<&StratumReport> {
        self.strata.iter().find(|s| s.stratum == stratum)
    }

    /// Whether any arm in the overall stratum was rejected.
    pub fn any_rejection(&self) -> bool {
        self.stratum(Stratum::Overall)
            .is_some_and(|s| s.arms.iter().any(|a| a.rejected))
    }
}

fn stratum_report(
    dataset: &TrajectoryDataset,
    stratum: Stratum,
    a: &[&ParticipantTrajectory],
    b: &[&ParticipantTrajectory],
    opts: &AnalysisOptions,
) -> Result<StratumReport, StatsError> {
    let a: Vec<_> = a.iter().copied().filter(|p| stratum.admits(p)).collect();
    let b: Vec<_> = b.iter().copied().filter(|p| stratum.admits(p)).collect();
    let (n_a, n_b) = (a.len(), b.len());
    if n_a < 2 || n_b < 2 {
        return Ok(StratumReport { stratum, status: StratumStatus::Insufficient, n_a, n_b, arms: Vec::new() });
    }
    let m = dataset.pulls_per_arm() as usize;
    let rows: Vec<_> = (0..dataset.num_arms)
        .into_par_iter()
        .map(|slot| {
            let arm = ArmId::from_zero_based(slot);
            let index = stratum.index() * 1000 + slot as u64;
            let mut perm_rng = derived_rng(opts.seed, stream::PERMUTATION, index);
            let mut boot_rng = derived_rng(opts.seed, stream::BOOTSTRAP, index);
            let perm = permutation_test(&a, &b, arm, m, opts.n_perm, &mut perm_rng)?;
            let (ci_low, ci_high) = bootstrap_ci(&a, &b, arm, m, opts.n_boot, opts.level, &mut boot_rng)?;
            Ok(ArmTestReport {
                arm,
                label: dataset.arm_label(arm),
                tau: tau(&a, &b, arm, m)?,
                ci_low,
                ci_high,
                p_value: perm.p_value,
                exhaustive: perm.exhaustive,
                corrected_alpha: f64::NAN,
                rejected: false,
            })
        })
        .collect::<Result<_, StatsError>>()?;
    let mut arms: Vec<ArmTestReport> = rows;
    let p_values: Vec<f64> = arms.iter().map(|r| r.p_value).collect();
    for (row, decision) in arms.iter_mut().zip(holm_correct(&p_values, opts.alpha)?) {
        row.corrected_alpha = decision.corrected_alpha;
        row.rejected = decision.rejected;
    }
    Ok(StratumReport { stratum, status: StratumStatus::Ok, n_a, n_b, arms })
}

/// Per-arm drift tests between `group_a` and `group_b`, Holm-corrected
/// within each stratum. Every random draw comes from a stream keyed by
/// (stratum, arm), so output is identical however the work is scheduled.
pub fn stratified_report(dataset: &TrajectoryDataset, opts: &AnalysisOptions) -> Result<DriftReport, StatsError> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(StatsError::InvalidParameter(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let a = dataset.group(opts.group_a);
    let b = dataset.group(opts.group_b);
    let m = dataset.pulls_per_arm() as usize;
    for slot in 0..dataset.num_arms {
        let arm = ArmId::from_zero_based(slot);
        participant_arm_means(&a, arm, m)?;
        participant_arm_means(&b, arm, m)?;
    }
    let mut strata = vec![Stratum::Overall];
    if opts.stratify {
        if let Some(p) = a.iter().chain(&b).find(|p| p.heavy.is_none()) {
            return Err(StatsError::UndefinedStratum(p.id.clone()));
        }
        strata.extend([Stratum::Heavy, Stratum::Light]);
    }
    let strata = strata
        .into_iter()
        .map(|s| stratum_report(dataset, s, &a, &b, opts))
        .collect::<Result<_, _>>()?;
    Ok(DriftReport {
        study_id: dataset.study_id.clone(),
        options: opts.clone(),
        pulls_per_arm: dataset.pulls_per_arm(),
        strata,
    })
}

fn fmt_p(p: f64, n_perm: usize) -> String {
    if p < 0.001 && n_perm >= 1000 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn push_row(out: &mut String, head: &str, cells: &[String], width: usize) {
    let _ = write!(out, "{head:<20}");
    for c in cells {
        let _ = write!(out, " {c:>width$}");
    }
    out.push('\n');
}

/// Plain-text table with one column per arm and a block of rows per stratum.
/// Rejected hypotheses carry a trailing `*`.
pub fn render_drift_report(report: &DriftReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} minus {}: alpha={} permutations={} bootstrap={} level={}",
        report.options.group_a,
        report.options.group_b,
        report.options.alpha,
        report.options.n_perm,
        report.options.n_boot,
        report.options.level
    );
    let labels: Vec<String> = report
        .strata
        .iter()
        .find(|s| !s.arms.is_empty())
        .map(|s| s.arms.iter().map(|a| a.label.clone()).collect())
        .unwrap_or_default();
    let width = labels.iter().map(String::len).max().unwrap_or(0).max(18);
    push_row(&mut out, "", &labels, width);
    for s in &report.strata {
        let title = format!("{} ({}/{})", s.stratum.label(), s.n_a, s.n_b);
        if s.status == StratumStatus::Insufficient {
            let _ = writeln!(out, "{title:<20} INSUFFICIENT");
            continue;
        }
        let star = |r: &ArmTestReport| if r.rejected { "*" } else { "" };
        push_row(&mut out, &title, &[], width);
        push_row(&mut out, "  tau", &s.arms.iter().map(|r| format!("{:.3}", r.tau)).collect::<Vec<_>>(), width);
        push_row(
            &mut out,
            "  CI",
            &s.arms.iter().map(|r| format!("[{:.3}, {:.3}]", r.ci_low, r.ci_high)).collect::<Vec<_>>(),
            width,
        );
        push_row(
            &mut out,
            "  p-value",
            &s.arms
                .iter()
                .map(|r| format!("{}{}", fmt_p(r.p_value, report.options.n_perm), star(r)))
                .collect::<Vec<_>>(),
            width,
        );
    }
    out
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.2}%", 100.0 * v))
}

/// Enjoyment and memory figures, one column per policy.
pub fn render_summary(summaries: &[PolicySummary]) -> String {
    let mut out = String::new();
    let width = 16;
    push_row(&mut out, "", &summaries.iter().map(|s| s.policy.to_string()).collect::<Vec<_>>(), width);
    let rows: [(&str, fn(&PolicySummary) -> String); 7] = [
        ("Participants", |s| s.participants.to_string()),
        ("Cumulative reward", |s| format!("{:.2}", s.mean_cumulative_reward)),
        ("  range", |s| format!("[{:.0}, {:.0}]", s.reward_range.0, s.reward_range.1)),
        ("Hindsight", |s| pct(s.hindsight_rate)),
        ("Autonomy", |s| pct(s.autonomy_rate)),
        ("Reading memory", |s| pct(s.reading_memory)),
        ("Rating memory", |s| pct(s.rating_memory)),
    ];
    for (head, f) in rows {
        push_row(&mut out, head, &summaries.iter().map(f).collect::<Vec<_>>(), width);
    }
    out
}

/// Differences against the self-selected group, one column per policy.
pub fn render_comparisons(comparisons: &[AlgorithmComparison], alpha: f64) -> String {
    let mut out = String::new();
    let width = 20;
    push_row(&mut out, "", &comparisons.iter().map(|c| c.algorithm.to_string()).collect::<Vec<_>>(), width);
    let blocks: [(&str, fn(&AlgorithmComparison) -> &super::DiffTest); 2] =
        [("hindsight", |c| &c.hindsight), ("rating memory", |c| &c.rating_memory)];
    for (name, get) in blocks {
        push_row(&mut out, name, &[], width);
        push_row(
            &mut out,
            "  delta",
            &comparisons.iter().map(|c| format!("{:.2}%", 100.0 * get(c).delta)).collect::<Vec<_>>(),
            width,
        );
        push_row(
            &mut out,
            "  CI",
            &comparisons
                .iter()
                .map(|c| format!("[{:.2}%, {:.2}%]", 100.0 * get(c).ci_low, 100.0 * get(c).ci_high))
                .collect::<Vec<_>>(),
            width,
        );
        push_row(
            &mut out,
            "  p-value",
            &comparisons
                .iter()
                .map(|c| {
                    let p = get(c).p_value;
                    format!("{:.3}{}", p, if p < alpha { "*" } else { "" })
                })
                .collect::<Vec<_>>(),
            width,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{cycle_sequence, LikertReward};
    use crate::config::ExperimentConfig;
    use crate::dataset::PullRow;

    fn participant(id: usize, policy: Algorithm, heavy: bool, reward: impl Fn(usize, usize) -> u8) -> ParticipantTrajectory {
        let seq = cycle_sequence(10, 5).unwrap();
        let mut seen = [0u32; 5];
        let pulls = seq
            .iter()
            .enumerate()
            .map(|(i, arm)| {
                seen[arm.slot()] += 1;
                PullRow {
                    t: i as u32 + 1,
                    arm: *arm,
                    within_arm_index: seen[arm.slot()],
                    item_id: format!("{}-{}", arm.get(), seen[arm.slot()]),
                    reward: LikertReward::new(reward(id, i)).unwrap(),
                    dwell_s: 10.0,
                    attention_correct: true,
                }
            })
            .collect();
        ParticipantTrajectory {
            id: format!("{policy}-{id}"),
            policy,
            heavy: Some(heavy),
            attention_rate: Some(1.0),
            attention_passed: Some(true),
            pulls,
            survey: None,
        }
    }

    fn dataset(participants: Vec<ParticipantTrajectory>) -> TrajectoryDataset {
        let config = ExperimentConfig { horizon: 10, ..ExperimentConfig::default() };
        let mut d = TrajectoryDataset::empty(&config);
        d.participants = participants;
        d
    }

    fn opts() -> AnalysisOptions {
        AnalysisOptions { n_perm: 500, n_boot: 300, seed: 11, stratify: true, ..AnalysisOptions::default() }
    }

    #[test]
    fn all_heavy_leaves_light_insufficient() {
        let mut ps = Vec::new();
        for i in 0..4 {
            ps.push(participant(i, Algorithm::Cycle, true, |id, t| 1 + ((id + t) % 9) as u8));
            ps.push(participant(i, Algorithm::Repeat, true, |id, t| 1 + ((id * 3 + t) % 9) as u8));
        }
        let r = stratified_report(&dataset(ps), &opts()).unwrap();
        assert_eq!(r.strata.len(), 3);
        assert_eq!(r.stratum(Stratum::Light).unwrap().status, StratumStatus::Insufficient);
        let taus = |s: Stratum| r.stratum(s).unwrap().arms.iter().map(|a| a.tau).collect::<Vec<_>>();
        assert_eq!(taus(Stratum::Heavy), taus(Stratum::Overall));
        let text = render_drift_report(&r);
        assert!(text.contains("INSUFFICIENT"));
        assert!(text.contains("political (liberal)"));
    }

    #[test]
    fn strata_partition_overall() {
        let mut ps = Vec::new();
        for i in 0..6 {
            ps.push(participant(i, Algorithm::Cycle, i % 2 == 0, |id, t| 1 + ((id + t) % 9) as u8));
            ps.push(participant(i, Algorithm::Repeat, i % 3 == 0, |id, t| 1 + ((id + 2 * t) % 9) as u8));
        }
        let r = stratified_report(&dataset(ps), &opts()).unwrap();
        let overall = r.stratum(Stratum::Overall).unwrap();
        let heavy = r.stratum(Stratum::Heavy).unwrap();
        let light = r.stratum(Stratum::Light).unwrap();
        assert_eq!(heavy.n_a + light.n_a, overall.n_a);
        assert_eq!(heavy.n_b + light.n_b, overall.n_b);
        for row in &overall.arms {
            assert!(row.ci_low <= row.ci_high);
            assert!((0.0..=1.0).contains(&row.p_value));
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let mut ps = Vec::new();
        for i in 0..3 {
            ps.push(participant(i, Algorithm::Cycle, true, |_, t| 3 + (t % 5) as u8));
            ps.push(participant(i, Algorithm::Repeat, false, |_, t| 2 + (t % 4) as u8));
        }
        let d = dataset(ps);
        assert_eq!(stratified_report(&d, &opts()).unwrap(), stratified_report(&d, &opts()).unwrap());

        let mut broken = d.clone();
        broken.participants[0].pulls[0].arm = ArmId::from_zero_based(1);
        let err = stratified_report(&broken, &opts()).unwrap_err();
        assert!(err.to_string().starts_with("UNBALANCED_PULLS"));

        let mut unflagged = d;
        unflagged.participants[1].heavy = None;
        assert!(matches!(stratified_report(&unflagged, &opts()), Err(StatsError::UndefinedStratum(_))));
    }
}
