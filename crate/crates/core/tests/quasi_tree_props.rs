use proptest::prelude::*;
use qtlab_core::metric_core::Word;
use qtlab_core::projections::{axes_family, check_strong_axioms, FamilyPoint, Verdict};
use qtlab_core::quasi_tree::{build_quasi_tree, validate_distance_formula};
use qtlab_core::rational::q;

fn family(words: &[&str], radius: usize) -> qtlab_core::projections::AxesFamily {
    let words: Vec<Word> = words.iter().map(|w| Word::parse(w).unwrap()).collect();
    axes_family(2, radius, &words, 2, 200).unwrap()
}

fn point_pairs(sizes: &[usize]) -> impl Strategy<Value = Vec<(FamilyPoint, FamilyPoint)>> {
    let sizes = sizes.to_vec();
    let n = sizes.len();
    let point = (0..n, 0usize..1000).prop_map(move |(m, v)| FamilyPoint::Vertex(m, v % sizes[m]));
    prop::collection::vec((point.clone(), point), 1..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn carrier_distances_shrink_as_k_grows(pairs in point_pairs(&sizes(&["a", "b"], 5))) {
        let af = family(&["a", "b"], 5);
        let trees: Vec<_> = [2, 4, 8, 16].iter().map(|&k| build_quasi_tree(af.family.clone(), q(k)).unwrap()).collect();
        for &(a, b) in &pairs {
            let d: Vec<_> = trees.iter().map(|t| t.distance(a, b).unwrap()).collect();
            // Raising K only admits more bridges.
            prop_assert!(d.windows(2).all(|w| w[1] <= w[0]), "{:?}", d);
        }
    }

    #[test]
    fn carrier_never_exceeds_member_distance(pairs in point_pairs(&sizes(&["a", "ab"], 5))) {
        let af = family(&["a", "ab"], 5);
        let qt = build_quasi_tree(af.family.clone(), q(4)).unwrap();
        for &(a, b) in &pairs {
            let (FamilyPoint::Vertex(m, u), FamilyPoint::Vertex(_, v)) = (a, b) else { unreachable!() };
            let g = &af.family.member(m).graph;
            let v = v % g.vertex_count();
            let carrier = qt.distance(a, FamilyPoint::Vertex(m, v)).unwrap();
            prop_assert!(carrier <= g.shortest_distance(u, v).unwrap());
        }
    }

    #[test]
    fn lower_bound_holds_whenever_strong_axioms_pass(pairs in point_pairs(&sizes(&["a", "b"], 6)), k in 1i64..4) {
        let af = family(&["a", "b"], 6);
        let xi = q(k);
        prop_assume!(check_strong_axioms(&af.family, xi).unwrap().verdict == Verdict::Pass);
        let qt = build_quasi_tree(af.family.clone(), q(4) * xi).unwrap();
        let rep = validate_distance_formula(&qt, &pairs, false).unwrap();
        prop_assert_eq!(rep.lower_failures, 0);
    }
}

fn sizes(words: &[&str], radius: usize) -> Vec<usize> {
    let af = family(words, radius);
    af.family.members().iter().map(|m| m.graph.vertex_count()).collect()
}
