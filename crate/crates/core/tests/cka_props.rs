use std::sync::OnceLock;

use num_traits::Signed;
use proptest::prelude::*;
use qtlab_core::cka_space::{build_window, special_path, CkaWindow, DeckTransform, PiecePoint, WindowParams};
use qtlab_core::cli_io::{Scenario, ScenarioBody};
use qtlab_core::metric_core::Word;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn window(name: &str) -> CkaWindow {
    let ScenarioBody::Cka(cfg) = Scenario::load(name).unwrap().body else { panic!("{name} is not a cka scenario") };
    build_window(&cfg, None, WindowParams::scaled(2)).unwrap()
}

fn windows() -> &'static [CkaWindow; 3] {
    static W: OnceLock<[CkaWindow; 3]> = OnceLock::new();
    W.get_or_init(|| [window("flip3"), window("twisted3"), window("star4")])
}

fn pairs(win: &CkaWindow, seed: u64, count: usize) -> Vec<(PiecePoint, PiecePoint)> {
    let pts = win.sample_points(&mut ChaCha8Rng::seed_from_u64(seed), 2 * count);
    pts.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn frame_conversion_round_trips(which in 0usize..3, h in -50i64..50, f in -50i64..50) {
        let win = &windows()[which];
        for e in &win.edges {
            let there = win.frame_map(e.id, e.parent).apply((h, f));
            prop_assert_eq!(win.frame_map(e.id, e.child).apply(there), (h, f));
            prop_assert_eq!(e.to_child.det().abs(), 1);
        }
    }

    #[test]
    fn special_path_components_are_deck_invariant(which in 0usize..3, seed in any::<u64>(), letter in prop::sample::select(vec![1i8, -1, 2, -2]), fiber in -1i64..=1) {
        let win = &windows()[which];
        let g = DeckTransform { shift: Word::letter(letter), fiber };
        for (x, y) in pairs(win, seed, 6) {
            let (Some(gx), Some(gy)) = (g.apply(win, &x), g.apply(win, &y)) else { continue };
            let (Ok(p), Ok(q)) = (special_path(win, &x, &y), special_path(win, &gx, &gy)) else { continue };
            prop_assert_eq!((p.d_h(), p.d_v()), (q.d_h(), q.d_v()), "{} {}", win.describe(&x), win.describe(&y));
        }
    }

    #[test]
    fn corner_rounding_moves_each_vertical_term_by_the_bound(which in 0usize..3, seed in any::<u64>()) {
        let win = &windows()[which];
        for (x, y) in pairs(win, seed, 8) {
            let Ok(p) = special_path(win, &x, &y) else { continue };
            let bound = p.rounding_bound(win);
            for s in &p.segments {
                let r = qtlab_core::rational::q(s.r);
                prop_assert!((r - s.r_exact).abs() <= bound, "segment {:?}", s);
            }
        }
    }

    #[test]
    fn interior_corners_depend_only_on_the_geodesic(which in 0usize..3, seed in any::<u64>()) {
        let win = &windows()[which];
        let pts = win.sample_points(&mut ChaCha8Rng::seed_from_u64(seed), 24);
        for c in pts.chunks_exact(3) {
            let (x, x2, y) = (&c[0], &c[1], &c[2]);
            if win.bs_distance(x.vertex, y.vertex) < 3 {
                continue;
            }
            // Move the start inside its own piece.
            let x2 = PiecePoint::new(x.vertex, x2.base.clone(), x2.fiber);
            if !win.contains(&x2) {
                continue;
            }
            let (Ok(p), Ok(q)) = (special_path(win, x, y), special_path(win, &x2, y)) else { continue };
            let inner = |sp: &qtlab_core::cka_space::SpecialPath| -> Vec<(usize, [i64; 2])> {
                let n = sp.corners.len();
                sp.corners[1..n - 1].iter().map(|c| (c.edge, c.from_frame)).collect()
            };
            prop_assert_eq!(inner(&p), inner(&q));
        }
    }
}
