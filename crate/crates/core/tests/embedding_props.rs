use qtlab_core::cka_space::{build_window, WindowParams};
use qtlab_core::cli_io::{Scenario, ScenarioBody};
use qtlab_core::embedding_report::Embedding;
use qtlab_core::rational::q;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn product_distance_is_a_pseudometric_and_quasi_tree_terms_shrink_with_k() {
    let ScenarioBody::Cka(cfg) = Scenario::load("twisted3").unwrap().body else { unreachable!() };
    let win = build_window(&cfg, None, WindowParams::scaled(2)).unwrap();
    let pts = win.sample_orbit_points(&mut ChaCha8Rng::seed_from_u64(11), 18);
    let emb = Embedding::build(&win, q(8)).unwrap();
    let wide = Embedding::build(&win, q(16)).unwrap();
    let coords: Vec<_> = pts.iter().map(|p| emb.embed(p).unwrap()).collect();
    let wide_coords: Vec<_> = pts.iter().map(|p| wide.embed(p).unwrap()).collect();
    let n = coords.len();
    let d: Vec<Vec<_>> = (0..n).map(|i| (0..n).map(|j| emb.product_distance(&coords[i], &coords[j]).unwrap()).collect()).collect();
    for i in 0..n {
        assert_eq!(d[i][i], q(0));
        for j in 0..n {
            assert_eq!(d[i][j], d[j][i]);
            for k in 0..n {
                assert!(d[i][k] <= d[i][j] + d[j][k], "triangle fails at {i} {j} {k}");
            }
            let narrow = emb.terms(&coords[i], &coords[j]).unwrap();
            let broad = wide.terms(&wide_coords[i], &wide_coords[j]).unwrap();
            assert_eq!(narrow[0], broad[0], "Bass-Serre term does not depend on K");
            assert!(broad[1] <= narrow[1] && broad[2] <= narrow[2], "quasi-tree terms {narrow:?} vs {broad:?}");
        }
    }
}
