use privmatch::similarity::{common_attributes, priority_ochiai, tanimoto, weighted_intersection_size, AttributeProfile};
use proptest::prelude::*;

const POOL: [&str; 8] = ["art", "books", "chess", "dance", "film", "golf", "hiking", "jazz"];

fn profile_strategy() -> impl Strategy<Value = AttributeProfile> {
    proptest::collection::btree_map(0..POOL.len(), 1u32..=10, 1..=POOL.len())
        .prop_map(|m| AttributeProfile::new(m.into_iter().map(|(i, a)| (POOL[i], a)), 10).unwrap())
}

fn same(a: &AttributeProfile, b: &AttributeProfile) -> bool {
    a.iter().eq(b.iter())
}

proptest! {
    #[test]
    fn coefficients_are_symmetric_and_bounded(a in profile_strategy(), b in profile_strategy()) {
        let o = priority_ochiai(&a, &b);
        prop_assert!((o - priority_ochiai(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&o));
        let ab = common_attributes(&a, &b);
        if !ab.is_empty() {
            let ba = common_attributes(&b, &a);
            let t = tanimoto(&ab.initiator, &ab.responder).unwrap();
            prop_assert!((t - tanimoto(&ba.initiator, &ba.responder).unwrap()).abs() < 1e-12);
            prop_assert!(t > 0.0 && t <= 1.0);
        }
    }

    #[test]
    fn ochiai_boundaries(a in profile_strategy(), b in profile_strategy()) {
        let o = priority_ochiai(&a, &b);
        prop_assert_eq!(o == 1.0, same(&a, &b));
        prop_assert_eq!(o == 0.0, common_attributes(&a, &b).is_empty());
    }

    #[test]
    fn raising_a_shared_priority_never_shrinks_intersection(a in profile_strategy(), b in profile_strategy(), bump in 1u32..5) {
        let before = weighted_intersection_size(&a, &b);
        let common = common_attributes(&a, &b);
        if let Some(attr) = common.ids.first() {
            let raise = |p: &AttributeProfile| {
                AttributeProfile::new(p.iter().map(|(x, v)| (x.to_owned(), if x == attr { v + bump } else { v })), 20).unwrap()
            };
            prop_assert!(weighted_intersection_size(&raise(&a), &raise(&b)) >= before);
        }
    }

    #[test]
    fn padding_with_foreign_attributes_lowers_ochiai(b in profile_strategy(), pad in 1u32..=10, extra in 1usize..=4) {
        // A shares one attribute with B, then grows with attributes B lacks
        let (shared, prio) = b.iter().next().map(|(x, v)| (x.to_owned(), v)).unwrap();
        let mut entries = vec![(shared, prio)];
        let base = AttributeProfile::new(entries.clone(), 10).unwrap();
        let mut last = priority_ochiai(&base, &b);
        for i in 0..extra {
            entries.push((format!("foreign-{i}"), pad));
            let grown = AttributeProfile::new(entries.clone(), 10).unwrap();
            let now = priority_ochiai(&grown, &b);
            prop_assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }
}

#[test]
fn table_two_orders() {
    let alice = AttributeProfile::new([("cancer", 8), ("music", 4), ("football", 1), ("tennis", 3), ("cooking", 2)], 10).unwrap();
    let candidates = [
        ("bob", vec![("cancer", 7), ("football", 2)]),
        (
            "charles",
            vec![("cancer", 1), ("music", 9), ("football", 4), ("tennis", 2), ("cooking", 1)],
        ),
        ("david", vec![("cancer", 9), ("music", 8), ("tennis", 6)]),
        ("emmy", vec![("music", 2), ("football", 9), ("tennis", 1), ("cooking", 1)]),
        ("frank", vec![("cancer", 8), ("music", 3)]),
    ];
    let mut by_ochiai = Vec::new();
    let mut by_tanimoto = Vec::new();
    for (name, entries) in candidates {
        let c = AttributeProfile::new(entries, 10).unwrap();
        let common = common_attributes(&alice, &c);
        by_ochiai.push((priority_ochiai(&alice, &c), name));
        by_tanimoto.push((tanimoto(&common.initiator, &common.responder).unwrap(), name));
    }
    by_ochiai.sort_by(|a, b| b.0.total_cmp(&a.0));
    by_tanimoto.sort_by(|a, b| b.0.total_cmp(&a.0));
    let names = |v: &[(f64, &'static str)]| v.iter().map(|e| e.1).collect::<Vec<_>>();
    assert_eq!(names(&by_ochiai), ["frank", "david", "bob", "charles", "emmy"]);
    assert_eq!(names(&by_tanimoto), ["frank", "bob", "david", "charles", "emmy"]);
}
