use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use protoloop_core::protocol::{
    aggregate, diversity, expected_aggregation, gate, jaccard, novelty, residual_vector,
    CandidatePool, Comparison, MetricField, Molecule, ProtocolError, Requirement, RequirementSet,
    NOVELTY_KEY,
};

const FIELDS: [MetricField; 7] = [
    MetricField::PoolSize,
    MetricField::Diversity,
    MetricField::Novelty,
    MetricField::Qed,
    MetricField::Sas,
    MetricField::Lipinski,
    MetricField::Docking,
];
const CMPS: [Comparison; 4] = [Comparison::Ge, Comparison::Gt, Comparison::Le, Comparison::Lt];

// Property values on a coarse grid so thresholds often land exactly on them.
fn grid(lo: i32, hi: i32, step: f64) -> impl Strategy<Value = f64> {
    (lo..=hi).prop_map(move |k| k as f64 * step)
}

fn molecule(id: usize) -> impl Strategy<Value = Molecule> {
    (
        grid(0, 20, 0.05),
        grid(0, 20, 0.05),
        grid(2, 20, 0.5),
        grid(0, 16, 0.25),
        grid(-24, 0, 0.5),
        prop::collection::btree_set(0u32..16, 1..6),
    )
        .prop_map(move |(qed, nov, sas, lip, dock, features)| {
            let props: BTreeMap<String, f64> = [
                ("qed", qed),
                (NOVELTY_KEY, nov),
                ("sas", sas),
                ("lipinski", lip),
                ("docking", dock),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            Molecule::new(format!("m{id}"), props, features).unwrap()
        })
}

fn pool(min: usize, max: usize) -> impl Strategy<Value = CandidatePool> {
    (min..=max)
        .prop_flat_map(|n| (0..n).map(molecule).collect::<Vec<_>>())
        .prop_map(|ms| CandidatePool::new("P", ms, 1).unwrap())
}

/// Thresholds sit on the same grid as the property values, so boundary
/// equality is exercised.
fn requirement_set() -> impl Strategy<Value = RequirementSet> {
    prop::collection::vec((0..FIELDS.len(), 0..CMPS.len(), grid(-24, 24, 0.25)), 3..=7).prop_map(
        |specs| {
            let reqs = specs
                .into_iter()
                .enumerate()
                .map(|(i, (f, c, b))| {
                    let field = FIELDS[f].clone();
                    let b = match field {
                        MetricField::PoolSize => (b.abs() * 2.0).round() / 4.0,
                        MetricField::Diversity | MetricField::Novelty | MetricField::Qed => {
                            (b.abs() / 24.0 * 20.0).round() * 0.05
                        }
                        _ => b,
                    };
                    let mut cmp = CMPS[c];
                    if field == MetricField::Novelty && !cmp.larger_is_better() {
                        cmp = if cmp.is_strict() { Comparison::Gt } else { Comparison::Ge };
                    }
                    let agg = expected_aggregation(&field, cmp);
                    Requirement::new(format!("r{i}"), field, agg, cmp, b).unwrap()
                })
                .collect();
            RequirementSet::new("T", reqs).unwrap()
        },
    )
}

fn holds(cmp: Comparison, o: f64, b: f64) -> bool {
    match cmp {
        Comparison::Ge => o >= b,
        Comparison::Gt => o > b,
        Comparison::Le => o <= b,
        Comparison::Lt => o < b,
    }
}

fn brute_diversity(ms: &[Molecule]) -> f64 {
    if ms.len() < 2 {
        return 0.0;
    }
    let mut sims = Vec::new();
    for i in 0..ms.len() {
        for j in i + 1..ms.len() {
            let inter = ms[i].features.intersection(&ms[j].features).count() as f64;
            let union = ms[i].features.union(&ms[j].features).count() as f64;
            sims.push(inter / union);
        }
    }
    // ascending summation order is part of the functional's definition
    sims.sort_by(f64::total_cmp);
    1.0 - sims.iter().sum::<f64>() / sims.len() as f64
}

/// Direct definition of each requirement: every molecule for per-molecule
/// fields, the count for pool size, the pairwise mean for diversity.
fn oracle_passes(pool: &CandidatePool, r: &Requirement) -> bool {
    match &r.field {
        MetricField::PoolSize => holds(r.comparison, pool.len() as f64, r.threshold),
        MetricField::Diversity => holds(r.comparison, brute_diversity(&pool.molecules), r.threshold),
        field => {
            let key = field.property_key().unwrap();
            pool.molecules
                .iter()
                .all(|m| holds(r.comparison, m.property(key).unwrap(), r.threshold))
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn gate_matches_definitional_oracle(p in pool(1, 8), reqs in requirement_set()) {
        let report = gate(&p, &reqs).unwrap();
        let expected: Vec<String> = reqs
            .iter()
            .filter(|r| !oracle_passes(&p, r))
            .map(|r| r.label.clone())
            .collect();
        prop_assert_eq!(&report.failed_labels, &expected);
        prop_assert_eq!(report.passed, expected.is_empty());
    }

    #[test]
    fn residual_sign_agrees_with_verdict(p in pool(1, 8), reqs in requirement_set()) {
        let report = gate(&p, &reqs).unwrap();
        prop_assert_eq!(report.residuals.len(), reqs.len());
        for (r, e) in reqs.iter().zip(report.residuals.iter()) {
            prop_assert_eq!(&e.label, &r.label);
            let passed = !report.failed_labels.contains(&r.label);
            let by_sign = if r.comparison.is_strict() { e.residual > 0.0 } else { e.residual >= 0.0 };
            prop_assert_eq!(passed, by_sign, "{} residual {}", r.label, e.residual);
        }
        prop_assert_eq!(residual_vector(&p, &reqs).unwrap(), report.residuals);
    }

    #[test]
    fn worst_case_aggregation_is_monotone(p in pool(1, 7), extra in molecule(99), reqs in requirement_set()) {
        let mut bigger = p.clone();
        bigger.molecules.push(extra);
        for r in reqs.iter().filter(|r| r.is_per_molecule()) {
            let before = aggregate(&p, r).unwrap().value;
            let after = aggregate(&bigger, r).unwrap().value;
            if r.comparison.larger_is_better() {
                prop_assert!(after <= before);
            } else {
                prop_assert!(after >= before);
            }
        }
    }

    #[test]
    fn audit_is_permutation_invariant(
        p in pool(2, 8),
        reqs in requirement_set(),
        perm in Just(()).prop_flat_map(|_| prop::collection::vec(any::<u32>(), 8)),
    ) {
        let mut shuffled = p.clone();
        let mut keyed: Vec<(u32, Molecule)> = perm.into_iter().zip(shuffled.molecules.drain(..)).collect();
        keyed.sort_by_key(|(k, m)| (*k, m.id.clone()));
        shuffled.molecules = keyed.into_iter().map(|(_, m)| m).collect();

        let a = gate(&p, &reqs).unwrap();
        let b = gate(&shuffled, &reqs).unwrap();
        prop_assert_eq!(&a, &b);
        for (x, y) in a.residuals.iter().zip(b.residuals.iter()) {
            prop_assert_eq!(x.residual.to_bits(), y.residual.to_bits());
        }
        prop_assert_eq!(diversity(&p).unwrap().to_bits(), diversity(&shuffled).unwrap().to_bits());
    }

    #[test]
    fn gate_is_pure(p in pool(1, 8), reqs in requirement_set()) {
        let a = gate(&p, &reqs).unwrap();
        let b = gate(&p, &reqs).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn diversity_matches_pairwise_mean(p in pool(2, 8)) {
        let d = diversity(&p).unwrap();
        prop_assert!((d - brute_diversity(&p.molecules)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn novelty_matches_linear_scan(
        m in molecule(0),
        refs in prop::collection::vec(prop::collection::btree_set(0u32..16, 1..6), 1..20),
    ) {
        let reference: Vec<Molecule> = refs
            .into_iter()
            .enumerate()
            .map(|(i, f)| Molecule::new(format!("R{i}"), BTreeMap::new(), f).unwrap())
            .collect();
        let mut best: f64 = 0.0;
        for r in &reference {
            let inter = m.features.intersection(&r.features).count() as f64;
            let union = m.features.union(&r.features).count() as f64;
            best = best.max(inter / union);
        }
        prop_assert!((novelty(&m, &reference).unwrap() - (1.0 - best)).abs() < 1e-12);
    }

    #[test]
    fn worst_case_min_is_brute_force_min(p in pool(6, 6)) {
        let r = Requirement::new("qed", MetricField::Qed, expected_aggregation(&MetricField::Qed, Comparison::Gt), Comparison::Gt, 0.43).unwrap();
        let brute = p.molecules.iter().map(|m| m.property("qed").unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(aggregate(&p, &r).unwrap().value, brute);
    }
}

#[test]
fn jaccard_extremes() {
    let a: BTreeSet<u32> = [1, 2, 3].into();
    let b: BTreeSet<u32> = [4, 5].into();
    assert_eq!(jaccard(&a, &b), 0.0);
    assert_eq!(jaccard(&a, &a), 1.0);
}

#[test]
fn empty_pool_behaviour() {
    let empty = CandidatePool::new("E", vec![], 0).unwrap();
    let size = Requirement::new(
        "n",
        MetricField::PoolSize,
        expected_aggregation(&MetricField::PoolSize, Comparison::Ge),
        Comparison::Ge,
        5.0,
    )
    .unwrap();
    assert_eq!(aggregate(&empty, &size).unwrap().value, 0.0);
    let qed = Requirement::new(
        "qed",
        MetricField::Qed,
        expected_aggregation(&MetricField::Qed, Comparison::Gt),
        Comparison::Gt,
        0.43,
    )
    .unwrap();
    assert_eq!(aggregate(&empty, &qed), Err(ProtocolError::EmptyPool));
    let reqs = RequirementSet::new("T", vec![size, qed]).unwrap();
    assert!(gate(&empty, &reqs).is_err());
}

#[test]
fn size_at_least_zero_always_passes() {
    let size = Requirement::new(
        "n",
        MetricField::PoolSize,
        expected_aggregation(&MetricField::PoolSize, Comparison::Ge),
        Comparison::Ge,
        0.0,
    )
    .unwrap();
    let reqs = RequirementSet::new("T", vec![size]).unwrap();
    let empty = CandidatePool::new("E", vec![], 0).unwrap();
    assert!(gate(&empty, &reqs).unwrap().passed);
}

#[test]
fn novelty_upper_bound_is_rejected() {
    let agg = expected_aggregation(&MetricField::Novelty, Comparison::Le);
    assert!(matches!(
        Requirement::new("nov", MetricField::Novelty, agg, Comparison::Le, 0.5),
        Err(ProtocolError::InvalidRequirement { .. })
    ));
}
