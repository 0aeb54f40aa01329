//! Returned-set audit.
//!
//! A [`RequirementSet`] is a conjunction of set-level constraints. Each
//! [`Requirement`] names a metric, how per-molecule values are folded into one
//! set-level observation, a comparison and a threshold. [`gate`] evaluates all
//! of them on a [`CandidatePool`] and reports the observations, the signed
//! residuals and the pass/fail verdict. Everything here is a pure function of
//! its inputs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("molecule `{molecule}` has no `{field}` property")]
    MissingProperty { molecule: String, field: String },
    #[error("aggregation over an empty pool")]
    EmptyPool,
    #[error("pairwise diversity is undefined for a single molecule")]
    SingletonPool,
    #[error("novelty needs a non-empty reference library")]
    EmptyReference,
    #[error("invalid requirement `{label}`: {reason}")]
    InvalidRequirement { label: String, reason: String },
    #[error("invalid requirement set: {0}")]
    InvalidRequirementSet(String),
    #[error("invalid molecule `{id}`: {reason}")]
    InvalidMolecule { id: String, reason: String },
    #[error("duplicate molecule id `{0}` in pool")]
    DuplicateMolecule(String),
    #[error("unknown token `{token}` for {kind}")]
    UnknownToken { kind: &'static str, token: String },
    #[error("requirement config: {0}")]
    Config(String),
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

/// Property key under which the environment stores per-molecule novelty.
pub const NOVELTY_KEY: &str = "novelty";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricField {
    PoolSize,
    Diversity,
    Novelty,
    Qed,
    Sas,
    Lipinski,
    Docking,
    /// Any other scalar molecule property, looked up by name.
    Custom(String),
}

impl MetricField {
    pub fn token(&self) -> String {
        match self {
            MetricField::PoolSize => "pool_size".into(),
            MetricField::Diversity => "diversity".into(),
            MetricField::Novelty => "novelty".into(),
            MetricField::Qed => "qed".into(),
            MetricField::Sas => "sas".into(),
            MetricField::Lipinski => "lipinski".into(),
            MetricField::Docking => "docking".into(),
            MetricField::Custom(name) => format!("custom:{name}"),
        }
    }

    /// Key of the per-molecule property backing this metric, if it has one.
    pub fn property_key(&self) -> Option<&str> {
        match self {
            MetricField::PoolSize | MetricField::Diversity => None,
            MetricField::Novelty => Some(NOVELTY_KEY),
            MetricField::Qed => Some("qed"),
            MetricField::Sas => Some("sas"),
            MetricField::Lipinski => Some("lipinski"),
            MetricField::Docking => Some("docking"),
            MetricField::Custom(name) => Some(name),
        }
    }

    /// Whether each molecule carries its own value for this metric.
    pub fn is_per_molecule(&self) -> bool {
        !matches!(self, MetricField::PoolSize | MetricField::Diversity)
    }

    /// Human-readable name used in rendered memory text.
    pub fn display_name(&self) -> String {
        match self {
            MetricField::PoolSize => "Pool size".into(),
            MetricField::Diversity => "Diversity".into(),
            MetricField::Novelty => "Novelty".into(),
            MetricField::Qed => "QED".into(),
            MetricField::Sas => "SAScore".into(),
            MetricField::Lipinski => "Lipinski".into(),
            MetricField::Docking => "Vina score".into(),
            MetricField::Custom(name) => name.clone(),
        }
    }
}

impl fmt::Display for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

impl FromStr for MetricField {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pool_size" => MetricField::PoolSize,
            "diversity" => MetricField::Diversity,
            "novelty" => MetricField::Novelty,
            "qed" => MetricField::Qed,
            "sas" => MetricField::Sas,
            "lipinski" => MetricField::Lipinski,
            "docking" => MetricField::Docking,
            other => match other.strip_prefix("custom:") {
                Some(name) if is_custom_name(name) => MetricField::Custom(name.to_string()),
                _ => {
                    return Err(ProtocolError::UnknownToken {
                        kind: "metric field",
                        token: s.to_string(),
                    })
                }
            },
        })
    }
}

fn is_custom_name(name: &str) -> bool {
    const RESERVED: [&str; 5] = ["qed", "sas", "lipinski", "docking", NOVELTY_KEY];
    !name.is_empty()
        && !RESERVED.contains(&name)
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl TryFrom<String> for MetricField {
    type Error = ProtocolError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MetricField> for String {
    fn from(f: MetricField) -> String {
        f.token()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregationKind {
    #[serde(rename = "cardinality")]
    Cardinality,
    #[serde(rename = "set_functional")]
    SetFunctional,
    #[serde(rename = "worst_min")]
    WorstCaseMin,
    #[serde(rename = "worst_max")]
    WorstCaseMax,
}

impl FromStr for AggregationKind {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cardinality" => AggregationKind::Cardinality,
            "set_functional" => AggregationKind::SetFunctional,
            "worst_min" => AggregationKind::WorstCaseMin,
            "worst_max" => AggregationKind::WorstCaseMax,
            _ => {
                return Err(ProtocolError::UnknownToken {
                    kind: "aggregation",
                    token: s.to_string(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Ge,
    Gt,
    Le,
    Lt,
}

impl Comparison {
    pub fn holds(self, observation: f64, threshold: f64) -> bool {
        match self {
            Comparison::Ge => observation >= threshold,
            Comparison::Gt => observation > threshold,
            Comparison::Le => observation <= threshold,
            Comparison::Lt => observation < threshold,
        }
    }

    pub fn larger_is_better(self) -> bool {
        matches!(self, Comparison::Ge | Comparison::Gt)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Comparison::Gt | Comparison::Lt)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
            Comparison::Le => "<=",
            Comparison::Lt => "<",
        }
    }
}

impl FromStr for Comparison {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ge" => Comparison::Ge,
            "gt" => Comparison::Gt,
            "le" => Comparison::Le,
            "lt" => Comparison::Lt,
            _ => {
                return Err(ProtocolError::UnknownToken {
                    kind: "comparison",
                    token: s.to_string(),
                })
            }
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequirement {
    label: String,
    field: MetricField,
    agg: AggregationKind,
    cmp: Comparison,
    threshold: f64,
}

/// One protocol constraint: `aggregate(field) cmp threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequirement")]
pub struct Requirement {
    pub label: String,
    pub field: MetricField,
    #[serde(rename = "agg")]
    pub aggregation: AggregationKind,
    #[serde(rename = "cmp")]
    pub comparison: Comparison,
    pub threshold: f64,
}

impl TryFrom<RawRequirement> for Requirement {
    type Error = ProtocolError;
    fn try_from(raw: RawRequirement) -> Result<Self> {
        Requirement::new(raw.label, raw.field, raw.agg, raw.cmp, raw.threshold)
    }
}

impl Requirement {
    pub fn new(
        label: impl Into<String>,
        field: MetricField,
        aggregation: AggregationKind,
        comparison: Comparison,
        threshold: f64,
    ) -> Result<Self> {
        let label = label.into();
        let invalid = |reason: String| ProtocolError::InvalidRequirement {
            label: label.clone(),
            reason,
        };
        if label.trim().is_empty() {
            return Err(invalid("empty label".into()));
        }
        if !threshold.is_finite() {
            return Err(invalid(format!("threshold {threshold} is not finite")));
        }
        if field == MetricField::Novelty && !comparison.larger_is_better() {
            // the set-level functional is the worst (minimum) molecule, which
            // only makes sense as a lower bound
            return Err(invalid("novelty can only be bounded from below".into()));
        }
        let expected = expected_aggregation(&field, comparison);
        if aggregation != expected {
            return Err(invalid(format!(
                "{field} with `{}` must use {expected:?}, not {aggregation:?}",
                comparison.symbol()
            )));
        }
        Ok(Requirement {
            label,
            field,
            aggregation,
            comparison,
            threshold,
        })
    }

    /// Requirement that every returned molecule must meet on its own.
    pub fn is_per_molecule(&self) -> bool {
        self.field.is_per_molecule()
    }

    /// Whether a single molecule satisfies this requirement's threshold.
    /// `None` for set-level requirements (pool size, diversity) or when the
    /// property is missing.
    pub fn molecule_satisfies(&self, molecule: &Molecule) -> Option<bool> {
        let key = self.field.property_key()?;
        let value = molecule.property(key)?;
        Some(self.comparison.holds(value, self.threshold))
    }

    /// Threshold in the natural reading, e.g. `docking < -7.77`.
    pub fn describe(&self) -> String {
        format!(
            "{} {} {}",
            self.label,
            self.comparison.symbol(),
            fmt_threshold(self.threshold)
        )
    }
}

/// Aggregation forced by the pairing rule for a (field, comparison).
pub fn expected_aggregation(field: &MetricField, comparison: Comparison) -> AggregationKind {
    match field {
        MetricField::PoolSize => AggregationKind::Cardinality,
        MetricField::Diversity | MetricField::Novelty => AggregationKind::SetFunctional,
        _ if comparison.larger_is_better() => AggregationKind::WorstCaseMin,
        _ => AggregationKind::WorstCaseMax,
    }
}

pub(crate) fn fmt_threshold(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e9 {
        format!("{value:.0}")
    } else {
        format!("{value}")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequirementSet {
    target: String,
    requirements: Vec<Requirement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequirementSet")]
pub struct RequirementSet {
    pub target: String,
    pub requirements: Vec<Requirement>,
}

impl TryFrom<RawRequirementSet> for RequirementSet {
    type Error = ProtocolError;
    fn try_from(raw: RawRequirementSet) -> Result<Self> {
        RequirementSet::new(raw.target, raw.requirements)
    }
}

impl RequirementSet {
    pub fn new(target: impl Into<String>, requirements: Vec<Requirement>) -> Result<Self> {
        let target = target.into();
        if requirements.is_empty() {
            return Err(ProtocolError::InvalidRequirementSet(
                "no requirements".into(),
            ));
        }
        let mut seen = HashSet::new();
        for r in &requirements {
            if !seen.insert(r.label.as_str()) {
                return Err(ProtocolError::InvalidRequirementSet(format!(
                    "duplicate label `{}`",
                    r.label
                )));
            }
        }
        Ok(RequirementSet {
            target,
            requirements,
        })
    }

    /// Parse the JSON requirement config document.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ProtocolError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("requirement sets always serialize")
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Requirement> {
        self.requirements.iter()
    }

    pub fn get(&self, label: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.label == label)
    }

    pub fn per_molecule(&self) -> impl Iterator<Item = &Requirement> {
        self.requirements.iter().filter(|r| r.is_per_molecule())
    }

    /// Smallest pool size satisfying every lower-bound size requirement.
    pub fn required_pool_size(&self) -> usize {
        self.requirements
            .iter()
            .filter(|r| r.field == MetricField::PoolSize && r.comparison.larger_is_better())
            .map(|r| {
                let b = r.threshold.max(0.0);
                let n = match r.comparison {
                    Comparison::Gt => b.floor() + 1.0,
                    _ => b.ceil(),
                };
                n as usize
            })
            .max()
            .unwrap_or(0)
    }

    /// Whether a molecule meets every per-molecule threshold of the set.
    pub fn molecule_compliant(&self, molecule: &Molecule) -> bool {
        self.per_molecule()
            .all(|r| r.molecule_satisfies(molecule) == Some(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub id: String,
    pub properties: BTreeMap<String, f64>,
    pub features: BTreeSet<u32>,
}

impl Molecule {
    pub fn new(
        id: impl Into<String>,
        properties: BTreeMap<String, f64>,
        features: BTreeSet<u32>,
    ) -> Result<Self> {
        let m = Molecule {
            id: id.into(),
            properties,
            features,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn property(&self, key: &str) -> Option<f64> {
        self.properties.get(key).copied()
    }

    /// Checks the declared ranges of the standard properties that are present.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| ProtocolError::InvalidMolecule {
            id: self.id.clone(),
            reason,
        };
        if self.features.is_empty() {
            return Err(invalid("empty feature signature".into()));
        }
        for (key, &value) in &self.properties {
            if !value.is_finite() {
                return Err(invalid(format!("{key} = {value} is not finite")));
            }
            let ok = match key.as_str() {
                "qed" | NOVELTY_KEY => (0.0..=1.0).contains(&value),
                "sas" => value > 0.0,
                "lipinski" => (0.0..=4.0).contains(&value),
                _ => true,
            };
            if !ok {
                return Err(invalid(format!("{key} = {value} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub id: String,
    pub molecules: Vec<Molecule>,
    pub created_at_iteration: usize,
}

impl CandidatePool {
    pub fn new(
        id: impl Into<String>,
        molecules: Vec<Molecule>,
        created_at_iteration: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &molecules {
            if !seen.insert(m.id.as_str()) {
                return Err(ProtocolError::DuplicateMolecule(m.id.clone()));
            }
        }
        Ok(CandidatePool {
            id: id.into(),
            molecules,
            created_at_iteration,
        })
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub label: String,
    pub residual: f64,
}

/// Signed residuals in requirement order; negative means violated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResidualVector(pub Vec<ResidualEntry>);

impl ResidualVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.0.iter().find(|e| e.label == label).map(|e| e.residual)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ResidualEntry> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub observations: Vec<Observation>,
    pub residuals: ResidualVector,
    pub passed: bool,
    pub failed_labels: Vec<String>,
}

impl AuditReport {
    pub fn observation(&self, label: &str) -> Option<f64> {
        self.observations
            .iter()
            .find(|o| o.label == label)
            .map(|o| o.value)
    }
}

/// Jaccard similarity of two feature signatures. Two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// One minus the mean pairwise Jaccard similarity over all unordered pairs.
///
/// Pairwise similarities are summed in sorted order so the value does not
/// depend on molecule order.
pub fn diversity(pool: &CandidatePool) -> Result<f64> {
    diversity_of(&pool.molecules)
}

pub fn diversity_of(molecules: &[Molecule]) -> Result<f64> {
    match molecules.len() {
        0 => return Err(ProtocolError::EmptyPool),
        1 => return Err(ProtocolError::SingletonPool),
        _ => {}
    }
    let mut sims = Vec::with_capacity(molecules.len() * (molecules.len() - 1) / 2);
    for (i, a) in molecules.iter().enumerate() {
        for b in &molecules[i + 1..] {
            sims.push(jaccard(&a.features, &b.features));
        }
    }
    sims.sort_by(f64::total_cmp);
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    Ok(1.0 - mean)
}

/// One minus the largest Jaccard similarity to any reference molecule.
pub fn novelty(molecule: &Molecule, reference: &[Molecule]) -> Result<f64> {
    reference
        .iter()
        .map(|r| jaccard(&molecule.features, &r.features))
        .max_by(f64::total_cmp)
        .map(|max_sim| 1.0 - max_sim)
        .ok_or(ProtocolError::EmptyReference)
}

fn per_molecule_values<'a>(
    pool: &'a CandidatePool,
    key: &'a str,
) -> impl Iterator<Item = Result<f64>> + 'a {
    pool.molecules.iter().map(move |m| {
        m.property(key).ok_or_else(|| ProtocolError::MissingProperty {
            molecule: m.id.clone(),
            field: key.to_string(),
        })
    })
}

fn fold_extreme(pool: &CandidatePool, key: &str, want_min: bool) -> Result<f64> {
    if pool.is_empty() {
        return Err(ProtocolError::EmptyPool);
    }
    let mut acc = if want_min {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    for v in per_molecule_values(pool, key) {
        let v = v?;
        acc = if want_min { acc.min(v) } else { acc.max(v) };
    }
    Ok(acc)
}

/// Set-level observation of one requirement on a pool.
pub fn aggregate(pool: &CandidatePool, req: &Requirement) -> Result<Observation> {
    let value = match (req.aggregation, &req.field) {
        (AggregationKind::Cardinality, _) => pool.len() as f64,
        (AggregationKind::SetFunctional, MetricField::Diversity) => match diversity(pool) {
            Ok(d) => d,
            Err(ProtocolError::SingletonPool) => 0.0,
            Err(e) => return Err(e),
        },
        (AggregationKind::SetFunctional, MetricField::Novelty) => {
            fold_extreme(pool, NOVELTY_KEY, true)?
        }
        (AggregationKind::SetFunctional, other) => {
            return Err(ProtocolError::InvalidRequirement {
                label: req.label.clone(),
                reason: format!("{other} has no set functional"),
            })
        }
        (AggregationKind::WorstCaseMin | AggregationKind::WorstCaseMax, field) => {
            let key = field
                .property_key()
                .ok_or_else(|| ProtocolError::InvalidRequirement {
                    label: req.label.clone(),
                    reason: format!("{field} is not a per-molecule property"),
                })?;
            fold_extreme(pool, key, req.aggregation == AggregationKind::WorstCaseMin)?
        }
    };
    Ok(Observation {
        label: req.label.clone(),
        value,
    })
}

/// Signed distance to satisfaction: `o - b` for lower bounds, `b - o` for upper bounds.
pub fn residual(observation: &Observation, req: &Requirement) -> f64 {
    if req.comparison.larger_is_better() {
        observation.value - req.threshold
    } else {
        req.threshold - observation.value
    }
}

pub fn residual_vector(pool: &CandidatePool, reqs: &RequirementSet) -> Result<ResidualVector> {
    reqs.iter()
        .map(|r| {
            let obs = aggregate(pool, r)?;
            Ok(ResidualEntry {
                label: r.label.clone(),
                residual: residual(&obs, r),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(ResidualVector)
}

/// Deterministic acceptance gate over the whole requirement set.
pub fn gate(pool: &CandidatePool, reqs: &RequirementSet) -> Result<AuditReport> {
    let mut observations = Vec::with_capacity(reqs.len());
    let mut residuals = Vec::with_capacity(reqs.len());
    let mut failed_labels = Vec::new();
    for r in reqs.iter() {
        let obs = aggregate(pool, r)?;
        if !r.comparison.holds(obs.value, r.threshold) {
            failed_labels.push(r.label.clone());
        }
        residuals.push(ResidualEntry {
            label: r.label.clone(),
            residual: residual(&obs, r),
        });
        observations.push(obs);
    }
    Ok(AuditReport {
        observations,
        residuals: ResidualVector(residuals),
        passed: failed_labels.is_empty(),
        failed_labels,
    })
}
