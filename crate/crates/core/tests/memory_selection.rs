//! Retained pools and corrective records against independent full sorts.

use std::cmp::Ordering;

use proptest::prelude::*;
use protoloop_core::diagnosis::{ActionKind, CorrectiveRecord, FailureFamily};
use protoloop_core::memory::{
    char_len, ActionRecord, Budgets, CorrectiveMemory, DynamicMemory, PoolStats, PoolSummary,
};

fn summary(iteration: usize, score_step: u8) -> PoolSummary {
    PoolSummary {
        pool_id: format!("MOL{iteration:03}"),
        iteration,
        stats: PoolStats {
            size: 100,
            diversity: 0.85,
            worst_docking: Some(-5.0),
            min_novelty: None,
            min_qed: None,
            max_sas: None,
            min_lipinski: None,
        },
        // coarse grid so ties on score are common
        quality_score: score_step as f64 / 8.0,
    }
}

fn action(iteration: usize) -> ActionRecord {
    ActionRecord {
        iteration,
        action: ActionKind::Generate,
        pool_id: format!("MOL{iteration:03}"),
        passed: false,
    }
}

fn record(iteration: usize, sev_step: u8, content: u8) -> CorrectiveRecord {
    let family = FailureFamily::ALL[content as usize % FailureFamily::ALL.len()];
    CorrectiveRecord {
        iteration,
        family,
        severity: sev_step as f64 / 4.0,
        failed_labels: vec![format!("r{}", content % 3)],
        rationale: format!("focus r{} [qed]", content % 3),
        repair_hint: format!("hint {}", content % 2),
        bias: ActionKind::Optimize,
    }
}

fn budgets() -> impl Strategy<Value = Budgets> {
    (1usize..=6, 1usize..=5, 1usize..=5).prop_map(|(k_d, w_d, k_c)| Budgets {
        k_d,
        w_d,
        k_c,
        ..Budgets::default()
    })
}

/// Larger first under (primary desc, iteration desc), written out directly.
fn by_key_desc(a: (f64, usize), b: (f64, usize)) -> Ordering {
    if a.0 > b.0 {
        Ordering::Less
    } else if a.0 < b.0 {
        Ordering::Greater
    } else {
        b.1.cmp(&a.1)
    }
}

fn content_key(r: &CorrectiveRecord) -> (FailureFamily, Vec<String>, String) {
    (r.family, r.failed_labels.clone(), r.repair_hint.clone())
}

/// Selection over the previous retained set plus the new record: content
/// duplicates collapse to their best-ranked copy, the newest survivor is
/// pinned, the rest fill `k_c - 1` slots by (severity, iteration).
fn corrective_oracle(
    prev: &[CorrectiveRecord],
    new: &CorrectiveRecord,
    k_c: usize,
) -> Vec<CorrectiveRecord> {
    let mut all: Vec<CorrectiveRecord> = prev.to_vec();
    all.push(new.clone());
    let mut unique: Vec<CorrectiveRecord> = Vec::new();
    for r in all {
        let dup = unique
            .iter()
            .position(|u| content_key(u) == content_key(&r));
        match dup {
            Some(i) => {
                if by_key_desc((r.severity, r.iteration), (unique[i].severity, unique[i].iteration))
                    == Ordering::Less
                {
                    unique[i] = r;
                }
            }
            None => unique.push(r),
        }
    }
    let newest_iter = unique.iter().map(|r| r.iteration).max().unwrap();
    let newest_pos = unique.iter().position(|r| r.iteration == newest_iter).unwrap();
    let newest = unique.remove(newest_pos);
    unique.sort_by(|a, b| by_key_desc((a.severity, a.iteration), (b.severity, b.iteration)));
    unique.truncate(k_c - 1);
    let mut out = vec![newest];
    out.extend(unique);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn dynamic_pools_are_top_k_of_full_history(
        b in budgets(),
        scores in prop::collection::vec(0u8..=8, 1..15),
    ) {
        let mut mem = DynamicMemory::default();
        let mut history = Vec::new();
        for (i, s) in scores.iter().enumerate() {
            let it = i + 1;
            mem = mem.update(summary(it, *s), action(it), &b);
            history.push(summary(it, *s));

            let mut expected = history.clone();
            expected.sort_by(|x, y| by_key_desc((x.quality_score, x.iteration), (y.quality_score, y.iteration)));
            expected.truncate(b.k_d);
            prop_assert_eq!(&mem.pools, &expected);

            let first = it.saturating_sub(b.w_d) + 1;
            let want: Vec<usize> = (first..=it).collect();
            let got: Vec<usize> = mem.actions.iter().map(|a| a.iteration).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn corrective_records_match_selection_oracle(
        b in budgets(),
        steps in prop::collection::vec((0u8..=8, 0u8..12), 1..15),
    ) {
        let mut mem = CorrectiveMemory::default();
        for (i, (sev, content)) in steps.iter().enumerate() {
            let r = record(i + 1, *sev, *content);
            let expected = corrective_oracle(&mem.records, &r, b.k_c);
            mem = mem.update(r, &b);
            prop_assert_eq!(&mem.records, &expected);
            prop_assert!(mem.records.len() <= b.k_c);
        }
    }

    #[test]
    fn rendered_channels_respect_budgets(
        scores in prop::collection::vec(0u8..=8, 1..12),
        b_d in 64usize..600,
        b_c in 64usize..600,
    ) {
        let b = Budgets { b_d, b_c, ..Budgets::default() };
        let mut dynamic = DynamicMemory::default();
        let mut corrective = CorrectiveMemory::default();
        for (i, s) in scores.iter().enumerate() {
            let it = i + 1;
            dynamic = dynamic.update(summary(it, *s), action(it), &b);
            corrective = corrective.update(record(it, *s, it as u8), &b);
            prop_assert!(char_len(&dynamic.render(b.b_d).unwrap()) <= b.b_d);
            prop_assert!(char_len(&corrective.render(b.b_c).unwrap()) <= b.b_c);
        }
    }
}
