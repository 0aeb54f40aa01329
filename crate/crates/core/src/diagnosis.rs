//! Rule-based corrective diagnosis of a failed audit.
//!
//! Turns an [`AuditReport`] into a [`CorrectiveRecord`]: which family of
//! failure dominates, how severe it is, a templated repair hint and the
//! action kind the planner should lean towards next.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{AuditReport, CandidatePool, MetricField, RequirementSet, ResidualVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosisError {
    #[error("residual vector has {residuals} entries for {requirements} requirements")]
    Misaligned { residuals: usize, requirements: usize },
    #[error("residual `{found}` at position {index} does not match requirement `{expected}`")]
    LabelMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("no requirement is violated")]
    NoViolation,
    #[error("audit passed; nothing to diagnose")]
    PassedAuditNoDiagnosis,
}

/// Share of total severity a family needs to be reported on its own.
pub const DOMINANCE_THRESHOLD: f64 = 0.5;

/// Normalized contribution of a strict requirement violated exactly at its
/// threshold, where the residual itself is zero.
pub const BOUNDARY_VIOLATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureFamily {
    SizeDeficit,
    DiversityCollapse,
    BindingBottleneck,
    DevelopabilityViolation,
    NoveltyDeficit,
    Mixed,
}

impl FailureFamily {
    pub const ALL: [FailureFamily; 6] = [
        FailureFamily::SizeDeficit,
        FailureFamily::DiversityCollapse,
        FailureFamily::BindingBottleneck,
        FailureFamily::DevelopabilityViolation,
        FailureFamily::NoveltyDeficit,
        FailureFamily::Mixed,
    ];

    /// Family a violated metric counts towards. Custom metrics belong to no
    /// family and only dilute the others' shares.
    pub fn of_field(field: &MetricField) -> Option<FailureFamily> {
        Some(match field {
            MetricField::PoolSize => FailureFamily::SizeDeficit,
            MetricField::Diversity => FailureFamily::DiversityCollapse,
            MetricField::Docking => FailureFamily::BindingBottleneck,
            MetricField::Qed | MetricField::Sas | MetricField::Lipinski => {
                FailureFamily::DevelopabilityViolation
            }
            MetricField::Novelty => FailureFamily::NoveltyDeficit,
            MetricField::Custom(_) => return None,
        })
    }

    pub fn description(self) -> &'static str {
        match self {
            FailureFamily::SizeDeficit => "size deficit",
            FailureFamily::DiversityCollapse => "diversity collapse",
            FailureFamily::BindingBottleneck => "binding bottleneck",
            FailureFamily::DevelopabilityViolation => "developability violation",
            FailureFamily::NoveltyDeficit => "novelty deficit",
            FailureFamily::Mixed => "mixed",
        }
    }

    pub fn from_description(s: &str) -> Option<FailureFamily> {
        FailureFamily::ALL
            .into_iter()
            .find(|f| f.description() == s)
    }
}

impl fmt::Display for FailureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.description())
    }
}

/// The planner's action space; a diagnosis recommends one of these as its bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Generate,
    Optimize,
    CodeScreen,
}

pub type ActionBias = ActionKind;

impl ActionKind {
    /// Upper-case token used in rendered memory text.
    pub fn render(self) -> &'static str {
        match self {
            ActionKind::Generate => "GENERATE",
            ActionKind::Optimize => "OPTIMIZE",
            ActionKind::CodeScreen => "CODE",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render())
    }
}

impl FromStr for ActionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "GENERATE" => Ok(ActionKind::Generate),
            "OPTIMIZE" => Ok(ActionKind::Optimize),
            "CODE" => Ok(ActionKind::CodeScreen),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectiveRecord {
    pub iteration: usize,
    pub family: FailureFamily,
    pub severity: f64,
    pub failed_labels: Vec<String>,
    pub rationale: String,
    pub repair_hint: String,
    pub bias: ActionBias,
}

impl CorrectiveRecord {
    /// Header line as it appears in rendered memory; the planner parses it.
    pub fn header_line(&self) -> String {
        format!(
            "Iteration {}; failure family: {}; severity: {:.3}; recommended bias: {}.",
            self.iteration, self.family, self.severity, self.bias
        )
    }

    pub fn render_lines(&self) -> Vec<String> {
        vec![
            self.header_line(),
            format!("Failed requirements: {}.", self.failed_labels.join(", ")),
            format!("Rationale: {}", self.rationale),
            format!("Repair hint: {}", self.repair_hint),
        ]
    }
}

fn check_aligned(residuals: &ResidualVector, reqs: &RequirementSet) -> Result<(), DiagnosisError> {
    if residuals.len() != reqs.len() {
        return Err(DiagnosisError::Misaligned {
            residuals: residuals.len(),
            requirements: reqs.len(),
        });
    }
    for (index, (e, r)) in residuals.iter().zip(reqs.iter()).enumerate() {
        if e.label != r.label {
            return Err(DiagnosisError::LabelMismatch {
                index,
                expected: r.label.clone(),
                found: e.label.clone(),
            });
        }
    }
    Ok(())
}

fn violation_magnitude(residual: f64, strict: bool, threshold: f64) -> Option<f64> {
    let violated = residual < 0.0 || (strict && residual == 0.0);
    violated.then(|| {
        let normalized = residual.abs() / threshold.abs().max(1.0);
        normalized.max(BOUNDARY_VIOLATION)
    })
}

/// Normalized severity of each requirement, zero where it is satisfied.
pub fn per_requirement_severity(
    residuals: &ResidualVector,
    reqs: &RequirementSet,
) -> Result<Vec<f64>, DiagnosisError> {
    check_aligned(residuals, reqs)?;
    Ok(residuals
        .iter()
        .zip(reqs.iter())
        .map(|(e, r)| {
            violation_magnitude(e.residual, r.comparison.is_strict(), r.threshold).unwrap_or(0.0)
        })
        .collect())
}

/// Sum over violated requirements of `|residual| / max(|threshold|, 1)`.
pub fn severity(residuals: &ResidualVector, reqs: &RequirementSet) -> Result<f64, DiagnosisError> {
    Ok(per_requirement_severity(residuals, reqs)?.iter().sum())
}

pub fn classify_family(
    residuals: &ResidualVector,
    reqs: &RequirementSet,
) -> Result<FailureFamily, DiagnosisError> {
    let parts = per_requirement_severity(residuals, reqs)?;
    let total: f64 = parts.iter().sum();
    if total <= 0.0 {
        return Err(DiagnosisError::NoViolation);
    }
    let mut sums = [0.0f64; 5];
    for (sev, r) in parts.iter().zip(reqs.iter()) {
        if let Some(family) = FailureFamily::of_field(&r.field) {
            sums[family as usize] += sev;
        }
    }
    // strict `>` keeps the earlier family on ties
    let mut best = 0;
    for i in 1..sums.len() {
        if sums[i] > sums[best] {
            best = i;
        }
    }
    if sums[best] / total > DOMINANCE_THRESHOLD {
        Ok(FailureFamily::ALL[best])
    } else {
        Ok(FailureFamily::Mixed)
    }
}

/// Number of molecules meeting every per-molecule threshold on their own.
pub fn compliant_count(pool: &CandidatePool, reqs: &RequirementSet) -> usize {
    pool.molecules
        .iter()
        .filter(|m| reqs.molecule_compliant(m))
        .count()
}

pub fn bias_for(family: FailureFamily, enough_compliant: bool) -> ActionBias {
    match family {
        FailureFamily::SizeDeficit
        | FailureFamily::NoveltyDeficit
        | FailureFamily::DiversityCollapse => ActionKind::Generate,
        FailureFamily::BindingBottleneck if enough_compliant => ActionKind::CodeScreen,
        FailureFamily::BindingBottleneck
        | FailureFamily::DevelopabilityViolation
        | FailureFamily::Mixed => ActionKind::Optimize,
    }
}

/// Build the corrective record for a failed audit.
pub fn diagnose(
    reqs: &RequirementSet,
    pool: &CandidatePool,
    report: &AuditReport,
    iteration: usize,
) -> Result<CorrectiveRecord, DiagnosisError> {
    if report.passed {
        return Err(DiagnosisError::PassedAuditNoDiagnosis);
    }
    let parts = per_requirement_severity(&report.residuals, reqs)?;
    let severity: f64 = parts.iter().sum();
    let family = classify_family(&report.residuals, reqs)?;

    // focus: the worst violation inside the chosen family, or overall for Mixed
    let focus_idx = parts
        .iter()
        .enumerate()
        .filter(|(i, s)| {
            **s > 0.0
                && (family == FailureFamily::Mixed
                    || FailureFamily::of_field(&reqs.requirements[*i].field) == Some(family))
        })
        .fold(None::<(usize, f64)>, |best, (i, &s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
        .ok_or(DiagnosisError::NoViolation)?;
    let focus = &reqs.requirements[focus_idx];
    let focus_obs = report.observation(&focus.label).unwrap_or(f64::NAN);

    let required = reqs.required_pool_size();
    let compliant = compliant_count(pool, reqs);
    let enough = compliant >= required;
    let bias = bias_for(family, enough);

    let per_molecule: Vec<&str> = reqs.per_molecule().map(|r| r.label.as_str()).collect();
    let repair_hint = match (family, bias) {
        (FailureFamily::BindingBottleneck, ActionKind::CodeScreen) => format!(
            "{compliant} molecules already meet every per-molecule threshold; filter the existing pools by {} and construct a diverse subset of at least {required} molecules.",
            per_molecule.join(", ")
        ),
        (FailureFamily::BindingBottleneck, _) => format!(
            "only {compliant} of {} molecules meet every per-molecule threshold (need {required}); optimize {} on the current pool (worst {:.3} vs {}).",
            pool.len(),
            focus.label,
            focus_obs,
            focus.threshold
        ),
        (FailureFamily::SizeDeficit, _) => format!(
            "pool holds {} molecules but {required} are required; generate a fresh pool before filtering again.",
            pool.len()
        ),
        (FailureFamily::DiversityCollapse, _) => format!(
            "{} is {:.3} against {}; generate new candidates to widen the pool.",
            focus.label, focus_obs, focus.threshold
        ),
        (FailureFamily::NoveltyDeficit, _) => format!(
            "worst {} is {:.3} against {}; generate candidates further from the reference library.",
            focus.label, focus_obs, focus.threshold
        ),
        (FailureFamily::DevelopabilityViolation, _) => format!(
            "optimize {} on the current pool (worst {:.3} vs {}) while keeping the other thresholds.",
            focus.label, focus_obs, focus.threshold
        ),
        (FailureFamily::Mixed, _) => format!(
            "{} constraints fail together; optimize {} first (worst {:.3} vs {}).",
            report.failed_labels.len(),
            focus.label,
            focus_obs,
            focus.threshold
        ),
    };
    let rationale = format!(
        "focus {} [{}]; {compliant} of {} molecules meet every per-molecule threshold.",
        focus.label,
        focus.field,
        pool.len()
    );

    Ok(CorrectiveRecord {
        iteration,
        family,
        severity,
        failed_labels: report.failed_labels.clone(),
        rationale,
        repair_hint,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{
        expected_aggregation, gate, Comparison, Molecule, Requirement, ResidualEntry,
    };

    fn req(label: &str, field: MetricField, cmp: Comparison, b: f64) -> Requirement {
        let agg = expected_aggregation(&field, cmp);
        Requirement::new(label, field, agg, cmp, b).unwrap()
    }

    fn kit() -> RequirementSet {
        RequirementSet::new(
            "KIT",
            vec![
                req("n", MetricField::PoolSize, Comparison::Ge, 5.0),
                req("vina", MetricField::Docking, Comparison::Lt, -7.77),
                req("novelty", MetricField::Novelty, Comparison::Ge, 0.80),
                req("diversity", MetricField::Diversity, Comparison::Ge, 0.80),
                req("qed", MetricField::Qed, Comparison::Gt, 0.43),
                req("sas", MetricField::Sas, Comparison::Lt, 2.77),
                req("lipinski", MetricField::Lipinski, Comparison::Ge, 3.19),
            ],
        )
        .unwrap()
    }

    fn residuals(reqs: &RequirementSet, values: &[f64]) -> ResidualVector {
        ResidualVector(
            reqs.iter()
                .zip(values)
                .map(|(r, v)| ResidualEntry {
                    label: r.label.clone(),
                    residual: *v,
                })
                .collect(),
        )
    }

    fn mol(id: &str, dock: f64, qed: f64, features: &[u32]) -> Molecule {
        Molecule::new(
            id,
            [
                ("docking", dock),
                ("qed", qed),
                ("sas", 2.0),
                ("lipinski", 4.0),
                ("novelty", 0.9),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            features.iter().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn severity_zero_without_violations() {
        let reqs = kit();
        let r = residuals(&reqs, &[1.0, 0.5, 0.0, 0.1, 0.2, 0.3, 0.0]);
        assert_eq!(severity(&r, &reqs).unwrap(), 0.0);
    }

    #[test]
    fn severity_single_docking_violation() {
        let reqs = kit();
        let r = residuals(&reqs, &[1.0, -0.412, 0.0, 0.1, 0.2, 0.3, 0.0]);
        let s = severity(&r, &reqs).unwrap();
        assert!((s - 0.412 / 7.77).abs() < 1e-12);
        assert!((s - 0.05302).abs() < 1e-5);
    }

    #[test]
    fn severity_is_additive() {
        let reqs = kit();
        let a = residuals(&reqs, &[1.0, -0.412, 0.0, 0.1, 0.2, 0.3, 0.0]);
        let b = residuals(&reqs, &[1.0, 0.5, 0.0, 0.1, -0.1, 0.3, 0.0]);
        let both = residuals(&reqs, &[1.0, -0.412, 0.0, 0.1, -0.1, 0.3, 0.0]);
        let sum = severity(&a, &reqs).unwrap() + severity(&b, &reqs).unwrap();
        assert!((severity(&both, &reqs).unwrap() - sum).abs() < 1e-15);
    }

    #[test]
    fn strict_boundary_counts_as_violation() {
        let reqs = kit();
        // qed is `>`: residual 0 violates
        let r = residuals(&reqs, &[1.0, 0.5, 0.0, 0.1, 0.0, 0.3, 0.0]);
        assert!(severity(&r, &reqs).unwrap() > 0.0);
        assert_eq!(
            classify_family(&r, &reqs).unwrap(),
            FailureFamily::DevelopabilityViolation
        );
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let reqs = kit();
        let short = residuals(&reqs, &[1.0, 0.5]);
        assert!(matches!(
            severity(&short, &reqs),
            Err(DiagnosisError::Misaligned { .. })
        ));
        let mut swapped = residuals(&reqs, &[1.0; 7]);
        swapped.0.swap(0, 1);
        assert!(matches!(
            severity(&swapped, &reqs),
            Err(DiagnosisError::LabelMismatch { .. })
        ));
    }

    #[test]
    fn family_of_size_only_failure() {
        let reqs = kit();
        let r = residuals(&reqs, &[-3.0, 0.5, 0.0, 0.1, 0.2, 0.3, 0.0]);
        assert_eq!(classify_family(&r, &reqs).unwrap(), FailureFamily::SizeDeficit);
    }

    #[test]
    fn equal_family_sums_fall_back_to_mixed() {
        // diversity -0.5 (scale 1) and vina -3.885 (scale 7.77) both normalize to 0.5;
        // a tied pair can never exceed half of the total, so the share rule decides
        let reqs = kit();
        let r = residuals(&reqs, &[1.0, -3.885, 0.0, -0.5, 0.2, 0.3, 0.0]);
        let parts = per_requirement_severity(&r, &reqs).unwrap();
        assert_eq!(parts[1], parts[3]);
        assert_eq!(classify_family(&r, &reqs).unwrap(), FailureFamily::Mixed);
    }

    #[test]
    fn family_sums_group_by_field() {
        // two size requirements together outweigh one diversity violation
        let reqs = RequirementSet::new(
            "t",
            vec![
                req("div", MetricField::Diversity, Comparison::Ge, 0.8),
                req("n1", MetricField::PoolSize, Comparison::Ge, 1.0),
                req("n2", MetricField::PoolSize, Comparison::Ge, 1.0),
            ],
        )
        .unwrap();
        let r = residuals(&reqs, &[-0.5, -0.3, -0.3]);
        assert_eq!(classify_family(&r, &reqs).unwrap(), FailureFamily::SizeDeficit);
    }

    #[test]
    fn no_violation_is_an_error() {
        let reqs = kit();
        let r = residuals(&reqs, &[1.0; 7]);
        assert_eq!(classify_family(&r, &reqs), Err(DiagnosisError::NoViolation));
    }

    #[test]
    fn every_family_maps_to_one_bias() {
        for family in FailureFamily::ALL {
            for enough in [false, true] {
                let bias = bias_for(family, enough);
                let expected = match family {
                    FailureFamily::BindingBottleneck if enough => ActionKind::CodeScreen,
                    FailureFamily::BindingBottleneck
                    | FailureFamily::DevelopabilityViolation
                    | FailureFamily::Mixed => ActionKind::Optimize,
                    _ => ActionKind::Generate,
                };
                assert_eq!(bias, expected, "{family:?}/{enough}");
            }
        }
    }

    #[test]
    fn passed_audit_cannot_be_diagnosed() {
        let reqs = RequirementSet::new(
            "t",
            vec![req("n", MetricField::PoolSize, Comparison::Ge, 0.0)],
        )
        .unwrap();
        let pool = CandidatePool::new("MOL001", vec![mol("a", -9.0, 0.6, &[1])], 1).unwrap();
        let report = gate(&pool, &reqs).unwrap();
        assert_eq!(
            diagnose(&reqs, &pool, &report, 1),
            Err(DiagnosisError::PassedAuditNoDiagnosis)
        );
    }

    #[test]
    fn size_only_failure_biases_generate() {
        let reqs = kit();
        let pool = CandidatePool::new(
            "MOL002",
            vec![mol("a", -9.0, 0.6, &[1, 2]), mol("b", -9.0, 0.6, &[3, 4])],
            2,
        )
        .unwrap();
        let report = gate(&pool, &reqs).unwrap();
        assert_eq!(report.failed_labels, vec!["n".to_string()]);
        let rec = diagnose(&reqs, &pool, &report, 2).unwrap();
        assert_eq!(rec.family, FailureFamily::SizeDeficit);
        assert_eq!(rec.bias, ActionKind::Generate);
        assert!(rec.severity > 0.0);
        assert_eq!(rec.iteration, 2);
    }

    #[test]
    fn qed_only_failure_biases_optimize() {
        let reqs = kit();
        let mols = (0..6)
            .map(|i| {
                let qed = if i == 0 { 0.30 } else { 0.6 };
                mol(&format!("m{i}"), -9.0, qed, &[i * 10, i * 10 + 1])
            })
            .collect();
        let pool = CandidatePool::new("MOL003", mols, 3).unwrap();
        let report = gate(&pool, &reqs).unwrap();
        assert_eq!(report.failed_labels, vec!["qed".to_string()]);
        let rec = diagnose(&reqs, &pool, &report, 3).unwrap();
        assert_eq!(rec.family, FailureFamily::DevelopabilityViolation);
        assert_eq!(rec.bias, ActionKind::Optimize);
        assert!(rec.rationale.contains("[qed]"));
    }

    #[test]
    fn binding_bottleneck_bias_depends_on_compliant_count() {
        let reqs = kit();
        // five compliant molecules plus one weak binder
        let mut mols: Vec<Molecule> = (0..5)
            .map(|i| mol(&format!("m{i}"), -9.0, 0.6, &[i * 10, i * 10 + 1]))
            .collect();
        mols.push(mol("weak", -3.0, 0.6, &[99]));
        let pool = CandidatePool::new("MOL004", mols.clone(), 4).unwrap();
        let report = gate(&pool, &reqs).unwrap();
        let rec = diagnose(&reqs, &pool, &report, 4).unwrap();
        assert_eq!(rec.family, FailureFamily::BindingBottleneck);
        assert_eq!(rec.bias, ActionKind::CodeScreen);
        assert!(rec.repair_hint.contains("at least 5 molecules"));

        mols.remove(0);
        mols.push(mol("weak2", -3.5, 0.6, &[98]));
        let pool = CandidatePool::new("MOL005", mols, 5).unwrap();
        let report = gate(&pool, &reqs).unwrap();
        let rec = diagnose(&reqs, &pool, &report, 5).unwrap();
        assert_eq!(rec.family, FailureFamily::BindingBottleneck);
        assert_eq!(rec.bias, ActionKind::Optimize);
    }

    #[test]
    fn header_round_trips_through_text() {
        let rec = CorrectiveRecord {
            iteration: 2,
            family: FailureFamily::BindingBottleneck,
            severity: 0.5271,
            failed_labels: vec!["vina".into()],
            rationale: "focus vina [docking]".into(),
            repair_hint: "x".into(),
            bias: ActionKind::CodeScreen,
        };
        assert_eq!(
            rec.header_line(),
            "Iteration 2; failure family: binding bottleneck; severity: 0.527; recommended bias: CODE."
        );
        assert_eq!(
            FailureFamily::from_description("binding bottleneck"),
            Some(FailureFamily::BindingBottleneck)
        );
        assert_eq!("CODE".parse::<ActionKind>(), Ok(ActionKind::CodeScreen));
    }
}
