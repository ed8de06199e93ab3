use proptest::prelude::*;
use scfem::index_set::{is_monotone, IndexSet, MultiIndex};

/// Downward-closed sets grown from the root by a random walk over the margin.
fn monotone_set() -> impl Strategy<Value = IndexSet> {
    (1usize..=4, proptest::collection::vec(any::<u32>(), 0..20)).prop_map(|(dim, picks)| {
        let mut set = IndexSet::root(dim);
        for p in picks {
            let margin = set.reduced_margin();
            let nu = margin[p as usize % margin.len()].clone();
            set = set.enrich(&[nu]).unwrap();
        }
        set
    })
}

/// Definition-level check: every backward neighbour with entries ≥ 1 is present.
fn downward_closed(indices: &[MultiIndex]) -> bool {
    indices.iter().all(|nu| {
        (0..nu.dim()).all(|m| match nu.backward(m) {
            Some(b) => indices.contains(&b),
            None => true,
        })
    })
}

proptest! {
    #[test]
    fn margin_elements_are_admissible(set in monotone_set()) {
        let margin = set.reduced_margin();
        prop_assert!(!margin.is_empty());
        for nu in &margin {
            prop_assert!(!set.contains(nu));
            let mut grown: Vec<MultiIndex> = set.iter().cloned().collect();
            grown.push(nu.clone());
            prop_assert!(downward_closed(&grown));
        }
    }

    #[test]
    fn margin_is_complete(set in monotone_set()) {
        // every forward neighbour that keeps the set closed is in the margin
        let margin = set.reduced_margin();
        for nu in set.iter() {
            for m in 0..set.dim() {
                let f = nu.forward(m);
                if set.contains(&f) {
                    continue;
                }
                let mut grown: Vec<MultiIndex> = set.iter().cloned().collect();
                grown.push(f.clone());
                prop_assert_eq!(downward_closed(&grown), margin.contains(&f));
            }
        }
    }

    #[test]
    fn enriching_with_any_margin_subset_stays_monotone(set in monotone_set(), mask in any::<u64>()) {
        let margin = set.reduced_margin();
        let subset: Vec<MultiIndex> =
            margin.iter().enumerate().filter(|(k, _)| mask >> (k % 64) & 1 == 1).map(|(_, n)| n.clone()).collect();
        let grown = set.enrich(&subset).unwrap();
        prop_assert_eq!(grown.len(), set.len() + subset.len());
        let all: Vec<MultiIndex> = grown.iter().cloned().collect();
        prop_assert!(is_monotone(&all).unwrap());
        prop_assert!(downward_closed(&all));
    }

    #[test]
    fn with_margin_is_union(set in monotone_set()) {
        let margin = set.reduced_margin();
        let all = set.with_margin();
        prop_assert_eq!(all.len(), set.len() + margin.len());
        prop_assert!(set.iter().all(|nu| all.contains(nu)));
        prop_assert!(margin.iter().all(|nu| all.contains(nu)));
    }

    #[test]
    fn is_monotone_matches_definition(set in monotone_set(), drop in any::<usize>()) {
        let mut all: Vec<MultiIndex> = set.iter().cloned().collect();
        if all.len() > 1 {
            all.remove(drop % all.len());
        }
        prop_assert_eq!(is_monotone(&all).unwrap(), downward_closed(&all) && all.contains(&MultiIndex::root(set.dim())));
    }
}

#[test]
fn enrich_rejects_non_margin_indices() {
    let set = IndexSet::root(2);
    assert!(set.enrich(&[MultiIndex::new(vec![2, 2]).unwrap()]).is_err());
    assert!(set.enrich(&[MultiIndex::new(vec![2, 1, 1]).unwrap()]).is_err());
}

#[test]
fn zero_entries_are_rejected() {
    assert!(MultiIndex::new(vec![1, 0]).is_err());
}
