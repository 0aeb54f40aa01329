use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rng::Prng;
use crate::memory::PocketSummary;
use crate::protocol::{
    self, expected_aggregation, Comparison, MetricField, Molecule, Requirement, RequirementSet,
};

/// Tags `0..REFERENCE_TAGS` are the reference library's region of feature space.
pub const REFERENCE_TAGS: u32 = 48;
/// Tags `REFERENCE_TAGS..REFERENCE_TAGS + NOVEL_TAGS` are reachable only by generated molecules.
pub const NOVEL_TAGS: u32 = 40;
pub const TAGS_PER_MOLECULE: usize = 12;
pub const REFERENCE_LIBRARY_SIZE: usize = 24;

/// Docking threshold no synthetic molecule can reach.
pub const UNREACHABLE_DOCKING: f64 = -50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn token(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

/// Hidden distribution the generator samples from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyModel {
    pub docking_mean: f64,
    pub docking_sd: f64,
    pub qed_mean: f64,
    pub qed_sd: f64,
    pub sas_mean: f64,
    pub sas_sd: f64,
    pub lipinski_mean: f64,
    pub lipinski_sd: f64,
    /// Probability that a generated feature tag falls in the reference region.
    pub reference_tag_prob: f64,
}

impl PropertyModel {
    fn base(difficulty: Difficulty) -> Self {
        let docking_mean = match difficulty {
            Difficulty::Easy => -9.6,
            Difficulty::Medium => -6.6,
            Difficulty::Hard => -4.8,
        };
        PropertyModel {
            docking_mean,
            docking_sd: 1.5,
            qed_mean: 0.60,
            qed_sd: 0.06,
            sas_mean: 2.25,
            sas_sd: 0.18,
            lipinski_mean: 3.75,
            lipinski_sd: 0.18,
            reference_tag_prob: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTarget {
    pub seed: u64,
    pub difficulty: Difficulty,
    pub name: String,
    pub requirements: RequirementSet,
    pub reference: Vec<Molecule>,
    pub model: PropertyModel,
    pub pocket: PocketSummary,
}

fn req(label: &str, field: MetricField, cmp: Comparison, threshold: f64) -> Requirement {
    let agg = expected_aggregation(&field, cmp);
    Requirement::new(label, field, agg, cmp, threshold).expect("built-in requirement is valid")
}

/// The KIT-style seven-requirement protocol used by every synthetic target.
pub fn kit_requirements(target: &str) -> RequirementSet {
    RequirementSet::new(
        target,
        vec![
            req("pool_size", MetricField::PoolSize, Comparison::Ge, 5.0),
            req("vina", MetricField::Docking, Comparison::Lt, -7.77),
            req("novelty", MetricField::Novelty, Comparison::Ge, 0.80),
            req("diversity", MetricField::Diversity, Comparison::Ge, 0.80),
            req("qed", MetricField::Qed, Comparison::Gt, 0.43),
            req("sas", MetricField::Sas, Comparison::Lt, 2.77),
            req("lipinski", MetricField::Lipinski, Comparison::Ge, 3.19),
        ],
    )
    .expect("built-in requirement set is valid")
}

/// Draw one feature tag from the mixed reference/novel distribution.
pub(crate) fn draw_tag(rng: &mut Prng, reference_prob: f64) -> u32 {
    if rng.chance(reference_prob) {
        rng.below(REFERENCE_TAGS as u64) as u32
    } else {
        REFERENCE_TAGS + rng.below(NOVEL_TAGS as u64) as u32
    }
}

pub(crate) fn draw_features(rng: &mut Prng, reference_prob: f64) -> BTreeSet<u32> {
    let mut tags = BTreeSet::new();
    while tags.len() < TAGS_PER_MOLECULE {
        tags.insert(draw_tag(rng, reference_prob));
    }
    tags
}

pub fn make_target(seed: u64, difficulty: Difficulty) -> SyntheticTarget {
    let mut rng = Prng::new(seed, 0);
    let name = format!("SYN{seed:03}");

    let mut model = PropertyModel::base(difficulty);
    model.docking_mean += rng.range(-0.3, 0.3);
    model.qed_mean += rng.range(-0.02, 0.02);
    model.sas_mean += rng.range(-0.05, 0.05);
    model.lipinski_mean += rng.range(-0.05, 0.05);

    let reference = (0..REFERENCE_LIBRARY_SIZE)
        .map(|i| {
            let mut tags = BTreeSet::new();
            while tags.len() < TAGS_PER_MOLECULE {
                tags.insert(rng.below(REFERENCE_TAGS as u64) as u32);
            }
            Molecule::new(format!("REF{i:03}"), BTreeMap::new(), tags)
                .expect("reference molecule has features")
        })
        .collect();

    let atoms = 200 + rng.below(150);
    let residues = 25 + rng.below(20);
    let hydrophobic = rng.range(0.35, 0.6);
    let positive = rng.range(0.05, 0.2);
    let negative = rng.range(0.05, 0.2);
    let aromatic = rng.range(0.05, 0.2);
    let center = [
        rng.range(0.0, 50.0),
        rng.range(0.0, 50.0),
        rng.range(0.0, 50.0),
    ];
    let pocket = PocketSummary(vec![
        (
            "Atom count".into(),
            format!("{atoms}; residue count: {residues}; chain count: 1"),
        ),
        ("Bounding-box size".into(), "[20.000, 24.000, 24.000]".into()),
        (
            "Pocket center".into(),
            format!("[{:.3}, {:.3}, {:.3}]", center[0], center[1], center[2]),
        ),
        (
            "Hydrophobic ratio".into(),
            format!(
                "{hydrophobic:.3}; positive ratio: {positive:.3}; negative ratio: {negative:.3}; aromatic ratio: {aromatic:.3}"
            ),
        ),
    ]);

    SyntheticTarget {
        seed,
        difficulty,
        requirements: kit_requirements(&name),
        name,
        reference,
        model,
        pocket,
    }
}

impl SyntheticTarget {
    /// Same target with a docking threshold nothing can reach, so every
    /// episode runs to the iteration cap.
    pub fn with_unreachable_docking(mut self) -> Self {
        let reqs = self
            .requirements
            .requirements
            .iter()
            .map(|r| {
                if r.field == MetricField::Docking {
                    Requirement {
                        threshold: UNREACHABLE_DOCKING,
                        ..r.clone()
                    }
                } else {
                    r.clone()
                }
            })
            .collect();
        self.requirements =
            RequirementSet::new(self.name.clone(), reqs).expect("same labels as before");
        self
    }

    pub fn novelty_of(&self, features: &BTreeSet<u32>) -> f64 {
        let probe = Molecule {
            id: String::new(),
            properties: BTreeMap::new(),
            features: features.clone(),
        };
        protocol::novelty(&probe, &self.reference).expect("reference library is non-empty")
    }
}
