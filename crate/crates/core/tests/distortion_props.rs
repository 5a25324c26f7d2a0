use std::collections::HashMap;

use proptest::prelude::*;
use qtlab_core::distortion::{
    baumslag_solitar, distortion_profile, heisenberg, sol, subadditivity_violations, word_ball, z2, Matrix, MatrixGroupPresentation,
};

const CAP: usize = 3_000_000;

/// Shortest length of every element reachable by words of length at most
/// `radius`, by enumerating every word.
fn enumerate_words(p: &MatrixGroupPresentation, radius: usize) -> HashMap<Matrix, u32> {
    let mut best = HashMap::from([(p.identity(), 0u32)]);
    let mut layer = vec![p.identity()];
    for len in 1..=radius as u32 {
        let mut next = Vec::with_capacity(layer.len() * p.generators.len());
        for g in &layer {
            for s in &p.generators {
                let h = g.mul(s);
                best.entry(h.clone()).or_insert(len);
                next.push(h);
            }
        }
        layer = next;
    }
    best
}

fn presentations() -> Vec<MatrixGroupPresentation> {
    vec![heisenberg(), sol(), baumslag_solitar(2), z2()]
}

fn matrix3() -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3i64..=3, 2).prop_map(|v| Matrix::from_ints(&[&[1, v[0], v[1]], &[0, 1, v[0] - v[1]], &[0, 0, 1]]))
}

#[test]
fn ball_agrees_with_word_enumeration() {
    for p in presentations() {
        let radius = if p.generators.len() > 4 { 4 } else { 6 };
        let ball = word_ball(&p, radius, CAP).unwrap();
        let oracle = enumerate_words(&p, radius);
        assert_eq!(ball.len(), oracle.len(), "{}", p.name);
        for (g, l) in &oracle {
            assert_eq!(ball.length(g), Some(*l), "{}", p.name);
        }
    }
}

#[test]
fn ball_table_invariants() {
    for p in presentations() {
        let ball = word_ball(&p, 5, CAP).unwrap();
        assert_eq!(ball.length(&p.identity()), Some(0));
        assert!(!p.generators.contains(&p.identity()));
        for g in &p.generators {
            assert!(p.generators.contains(&g.inverse().unwrap()), "{}: generators closed under inverses", p.name);
        }
        for (g, &l) in &ball.table {
            assert!(l as usize <= ball.radius);
            assert_eq!(ball.length(&g.inverse().unwrap()), Some(l));
            if (l as usize) < ball.radius {
                for s in &p.generators {
                    let m = ball.length(&g.mul(s)).expect("closed under generator multiplication");
                    assert!(m + 1 >= l && m <= l + 1);
                }
            }
        }
    }
}

#[test]
fn lengths_are_subadditive_at_small_radius() {
    for p in presentations() {
        let ball = word_ball(&p, 6, CAP).unwrap();
        assert_eq!(subadditivity_violations(&ball), 0, "{}", p.name);
        let half: Vec<(&Matrix, u32)> = ball.table.iter().filter(|(_, &l)| l <= 3).map(|(g, &l)| (g, l)).collect();
        for &(g, lg) in &half {
            for &(h, lh) in &half {
                assert!(ball.length(&g.mul(h)).unwrap() <= lg + lh);
            }
        }
    }
}

#[test]
fn abelian_generators_are_undistorted() {
    let z3 = MatrixGroupPresentation::new(
        "z3",
        vec![
            ("a".into(), Matrix::from_ints(&[&[1, 0, 0, 1], &[0, 1, 0, 0], &[0, 0, 1, 0], &[0, 0, 0, 1]])),
            ("b".into(), Matrix::from_ints(&[&[1, 0, 0, 0], &[0, 1, 0, 1], &[0, 0, 1, 0], &[0, 0, 0, 1]])),
            ("c".into(), Matrix::from_ints(&[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, 1, 1], &[0, 0, 0, 1]])),
        ],
    )
    .unwrap();
    for (p, element) in [(z2(), "a"), (z2(), "a b"), (z3, "a b c")] {
        let ball = word_ball(&p, 16, CAP).unwrap();
        let g = p.eval(element).unwrap();
        let prof = distortion_profile(&p, element, &g, &ball).unwrap();
        assert_eq!(prof.exponent, 1.0, "{} {element}", p.name);
    }
}

#[test]
fn sol_translations_are_exponentially_distorted() {
    let p = sol();
    let ball = word_ball(&p, 12, CAP).unwrap();
    let g = p.eval("a").unwrap();
    let prof = distortion_profile(&p, "a", &g, &ball).unwrap();
    assert!(prof.exponent < 0.6, "exponent {}", prof.exponent);
}

proptest! {
    #[test]
    fn matrix_inverse_and_powers(a in matrix3(), b in matrix3(), n in 0u64..6) {
        let id = Matrix::identity(3);
        prop_assert_eq!(a.mul(&a.inverse().unwrap()), id.clone());
        prop_assert_eq!(a.mul(&b).inverse().unwrap(), b.inverse().unwrap().mul(&a.inverse().unwrap()));
        let repeated = (0..n).fold(id, |acc, _| acc.mul(&a));
        prop_assert_eq!(a.pow(n), repeated);
    }
}
