//! Property tests over the persistence, merge, and code-extraction
//! invariants.

use proptest::prelude::*;

use repogen_core::model::{load_function_base, save_function_base, FunctionBase, FunctionRecord};
use repogen_core::promptgen::extract_code;
use repogen_core::retrieval::{merge_retrievals, Channel, RetrievalHit};

fn finite_f64() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn arb_record(index: usize, dim: usize) -> impl Strategy<Value = FunctionRecord> {
    (
        prop::collection::vec(finite_f64(), dim),
        prop::collection::vec(finite_f64(), dim),
        "[a-z_][a-z0-9_]{0,10}",
        prop::option::of("[ -~]{0,40}"),
        "[ -~\\n]{0,80}",
        any::<bool>(),
    )
        .prop_map(
            move |(sv, cv, name, comment, source, is_empty)| FunctionRecord {
                fqn: format!("pkg.mod{index}.{name}{index}"),
                file_path: format!("pkg/mod{index}.py"),
                class_name: None,
                signature: format!("def {name}{index}()"),
                comment,
                source: format!("def {name}{index}():\n{source}"),
                is_empty,
                summary: format!("Does {name}."),
                summary_vector: sv,
                code_vector: cv,
            },
        )
}

fn arb_base() -> impl Strategy<Value = FunctionBase> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::vec(any::<u8>(), 0..6).prop_flat_map(move |seeds| {
            let records: Vec<_> = seeds
                .iter()
                .enumerate()
                .map(|(i, _)| arb_record(i, dim))
                .collect();
            records.prop_map(move |records| FunctionBase {
                records,
                embed_dim: dim,
                provider_id: "prop-test".to_string(),
            })
        })
    })
}

proptest! {
    #[test]
    fn persistence_round_trip_is_identity(base in arb_base()) {
        let dir = tempfile::tempdir().unwrap();
        save_function_base(&base, dir.path()).unwrap();
        let loaded = load_function_base(dir.path()).unwrap();
        prop_assert_eq!(loaded, base);
    }

    #[test]
    fn fenced_extraction_round_trips(code in "[ -~\\n]{1,200}") {
        prop_assume!(!code.contains("```"));
        prop_assume!(!code.trim().is_empty());
        let wrapped = format!("```python\n{code}\n```");
        let extracted = extract_code(&wrapped).unwrap();
        prop_assert_eq!(extracted, code);
    }

    #[test]
    fn merge_commutes_on_fqn_score_pairs(
        a_scores in prop::collection::vec(0.0f64..1.0, 0..8),
        b_scores in prop::collection::vec(0.0f64..1.0, 0..8),
    ) {
        let mk = |scores: &[f64], channel: Channel, prefix: &str| -> Vec<RetrievalHit> {
            let mut sorted = scores.to_vec();
            sorted.sort_by(|x, y| y.total_cmp(x));
            sorted
                .iter()
                .enumerate()
                .map(|(i, &score)| RetrievalHit {
                    fqn: format!("{prefix}{}", i % 5),
                    score,
                    channel,
                })
                .collect()
        };
        // overlapping fqn pools so duplicates occur
        let a = mk(&a_scores, Channel::Description, "pkg.f");
        let b = mk(&b_scores, Channel::Code, "pkg.f");

        let ab = merge_retrievals(&a, &b);
        let ba = merge_retrievals(&b, &a);
        let pairs = |hits: &[RetrievalHit]| -> Vec<(String, u64)> {
            hits.iter().map(|h| (h.fqn.clone(), h.score.to_bits())).collect()
        };
        prop_assert_eq!(pairs(&ab), pairs(&ba));

        for window in ab.windows(2) {
            prop_assert!(window[0].score >= window[1].score);
        }
    }
}
