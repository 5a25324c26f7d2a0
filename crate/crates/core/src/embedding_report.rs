//! The product map `Φ = ρ × Π₁ × Π₂ × Π₃ × Π₄` on window orbit points and
//! fitted quasi-isometric embedding constants.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cka_space::{special_path, CkaError, CkaWindow, PiecePoint};
use crate::coned_off::{build_coned_pieces, global_thick_distance, pi3, pi4, Anchor, ConedError, ConedPieces};
use crate::fiber_lines::{build_fiber_family, pi1, pi2, FiberFamily};
use crate::metric_core::{MetricError, Word};
use crate::projections::{FamilyPoint, ProjectionError};
use crate::quasi_tree::{build_quasi_tree, QuasiTreeOfSpaces};
use crate::rational::{q, serde_q, to_f64, Q};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("outside the window: {0}")]
    WindowExceeded(String),
    #[error("only {usable} usable pairs, at least {needed} required")]
    InsufficientSample { usable: usize, needed: usize },
    #[error(transparent)]
    Cka(#[from] CkaError),
    #[error(transparent)]
    Coned(#[from] ConedError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub const MIN_PAIRS: usize = 50;
/// Largest special-path length of the pairs the Lipschitz constant is fitted on.
pub const LOCAL_SCALE: i64 = 4;
const LOCAL_POINTS: usize = 100;

/// `Φ(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmbeddingCoordinates {
    pub tree: usize,
    #[serde(serialize_with = "ser_point")]
    pub f1: FamilyPoint,
    #[serde(serialize_with = "ser_point")]
    pub f2: FamilyPoint,
    pub x1: Anchor,
    pub x2: Anchor,
}

fn ser_point<S: serde::Serializer>(p: &FamilyPoint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::quasi_tree::fmt_point(*p))
}

/// Everything `Φ` needs on one window: both fiber-line families, their
/// quasi-trees at `K`, and the coned pieces.
pub struct Embedding<'a> {
    pub win: &'a CkaWindow,
    pub k: Q,
    pub f1: FiberFamily,
    pub f2: FiberFamily,
    pub qt1: QuasiTreeOfSpaces,
    pub qt2: QuasiTreeOfSpaces,
    pub pieces: ConedPieces,
}

impl<'a> Embedding<'a> {
    pub fn build(win: &'a CkaWindow, k: Q) -> Result<Self, EmbeddingError> {
        let f1 = build_fiber_family(win, 1)?;
        let f2 = build_fiber_family(win, 2)?;
        let qt1 = build_quasi_tree(Arc::clone(&f1.family), k)?;
        let qt2 = build_quasi_tree(Arc::clone(&f2.family), k)?;
        let pieces = build_coned_pieces(win)?;
        Ok(Self { win, k, f1, f2, qt1, qt2, pieces })
    }

    pub fn embed(&self, x: &PiecePoint) -> Result<EmbeddingCoordinates, EmbeddingError> {
        self.win.check_point(x).map_err(|e| EmbeddingError::WindowExceeded(e.to_string()))?;
        Ok(EmbeddingCoordinates {
            tree: self.win.index_map(x),
            f1: pi1(&self.f1, x)?,
            f2: pi2(self.win, &self.f2, x)?.0,
            x1: pi3(x),
            x2: pi4(self.win, x),
        })
    }

    /// The five coordinate distances, in the order `ρ, Π₁, Π₂, Π₃, Π₄`.
    pub fn terms(&self, a: &EmbeddingCoordinates, b: &EmbeddingCoordinates) -> Result<[Q; 5], EmbeddingError> {
        Ok([
            q(self.win.bs_distance(a.tree, b.tree) as i64),
            self.qt1.distance(a.f1, b.f1)?,
            self.qt2.distance(a.f2, b.f2)?,
            global_thick_distance(self.win, &self.pieces, &a.x1, &b.x1, self.k)?,
            global_thick_distance(self.win, &self.pieces, &a.x2, &b.x2, self.k)?,
        ])
    }

    /// ℓ¹ distance in `T × C_K(𝔽₁) × C_K(𝔽₂) × (Ẋ₁, d^K) × (Ẋ₂, d^K)`.
    pub fn product_distance(&self, a: &EmbeddingCoordinates, b: &EmbeddingCoordinates) -> Result<Q, EmbeddingError> {
        Ok(self.terms(a, b)?.iter().sum())
    }

    /// Generator neighbours of `x`: fiber `±1` and every base letter.
    fn neighbours(&self, x: &PiecePoint) -> Vec<PiecePoint> {
        let rank = self.win.config.vertices[self.win.vertices[x.vertex].underlying].rank as i8;
        let mut out = vec![PiecePoint { fiber: x.fiber + 1, ..x.clone() }, PiecePoint { fiber: x.fiber - 1, ..x.clone() }];
        for s in (1..=rank).flat_map(|s| [s, -s]) {
            out.push(PiecePoint { base: x.base.mul(&Word::letter(s)), ..x.clone() });
        }
        out.retain(|p| self.win.check_point(p).is_ok() && !self.win.on_shell(p));
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QIRow {
    pub pair: usize,
    /// Special-path length, the stand-in for `d_X`.
    pub d_x: i64,
    #[serde(with = "serde_q")]
    pub d_product: Q,
    pub ratio: f64,
    #[serde(with = "crate::rational::serde_q_vec")]
    pub terms: Vec<Q>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowProvenance {
    pub r_bs: usize,
    pub r_tree: usize,
    pub w: i64,
    #[serde(with = "serde_q")]
    pub k: Q,
    #[serde(with = "serde_q")]
    pub r: Q,
    pub seed: u64,
}

impl fmt::Display for WindowProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R_bs={} R_tree={} W={} K={} r={} seed={}", self.r_bs, self.r_tree, self.w, self.k, self.r, self.seed)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QIFitReport {
    /// Least `λ = c` with `d_Φ ≤ λ·d_X + c` and `d_X ≤ λ·d_Φ + c` on every row.
    pub lambda: f64,
    pub c: f64,
    /// Multiplicative constant alone: largest ratio either way over rows with both distances positive.
    pub lambda_multiplicative: f64,
    pub violations: usize,
    pub pairs: usize,
    pub skipped: usize,
    /// Least `L` with `d_Φ ≤ L·d_X + L` on pairs at scale `LOCAL_SCALE`; checked on every row.
    pub lipschitz: f64,
    pub lipschitz_moves: usize,
    pub lipschitz_failures: Vec<usize>,
    /// Largest ratio of special-path length to exact distance on the spot checks.
    pub mu_spot_check: f64,
    pub spot_checks: usize,
    pub window: WindowProvenance,
    pub rows: Vec<QIRow>,
}

impl QIFitReport {
    pub fn headline(&self) -> String {
        format!("QI({:.4}, {:.4}, {}, {}, {})", self.lambda, self.c, self.violations, self.pairs, self.window)
    }

    pub fn lipschitz_holds(&self) -> bool {
        self.lipschitz_failures.is_empty()
    }

    /// Relative change of `λ` against another run.
    pub fn drift(&self, other: &QIFitReport) -> f64 {
        (self.lambda - other.lambda).abs() / self.lambda.max(other.lambda)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,d_x,d_product,ratio,rho,pi1,pi2,pi3,pi4\n");
        for r in &self.rows {
            let t: Vec<String> = r.terms.iter().map(|t| t.to_string()).collect();
            out.push_str(&format!("{},{},{},{:.6},{}\n", r.pair, r.d_x, r.d_product, r.ratio, t.join(",")));
        }
        out
    }
}

fn spot_check_count(pairs: usize) -> usize {
    pairs.min(10)
}

/// Fits `λ = c` for `Φ` on the sampled pairs; `d_X` is the special-path length.
pub fn fit_qi_constants(emb: &Embedding, samples: &[(PiecePoint, PiecePoint)], seed: u64) -> Result<QIFitReport, EmbeddingError> {
    let win = emb.win;
    let usable: Vec<(usize, &PiecePoint, &PiecePoint)> = samples
        .iter()
        .enumerate()
        .filter(|(_, (x, y))| x != y && !win.on_shell(x) && !win.on_shell(y))
        .map(|(i, (x, y))| (i, x, y))
        .collect();
    if usable.len() < MIN_PAIRS {
        return Err(EmbeddingError::InsufficientSample { usable: usable.len(), needed: MIN_PAIRS });
    }
    let rows: Vec<QIRow> = usable
        .par_iter()
        .filter_map(|&(pair, x, y)| {
            let run = || -> Result<QIRow, EmbeddingError> {
                let d_x = special_path(win, x, y)?.length();
                let terms = emb.terms(&emb.embed(x)?, &emb.embed(y)?)?;
                let d_product: Q = terms.iter().sum();
                let ratio = to_f64(&d_product) / d_x.max(1) as f64;
                Ok(QIRow { pair, d_x, d_product, ratio, terms: terms.to_vec() })
            };
            run().ok()
        })
        .collect();
    if rows.len() < MIN_PAIRS {
        return Err(EmbeddingError::InsufficientSample { usable: rows.len(), needed: MIN_PAIRS });
    }
    let lambda = rows
        .iter()
        .map(|r| {
            let (a, b) = (to_f64(&r.d_product), r.d_x as f64);
            (a / (b + 1.0)).max(b / (a + 1.0))
        })
        .fold(1.0, f64::max);
    let lambda_multiplicative = rows
        .iter()
        .filter(|r| r.d_x > 0 && r.d_product > q(0))
        .map(|r| r.ratio.max(1.0 / r.ratio))
        .fold(1.0, f64::max);
    let violations = rows
        .iter()
        .filter(|r| {
            let (a, b) = (to_f64(&r.d_product), r.d_x as f64);
            a > lambda * b + lambda + 1e-9 || b > lambda * a + lambda + 1e-9
        })
        .count();

    // Lipschitz constant fitted at small scale: generator moves and close sample pairs.
    let mut points: Vec<&PiecePoint> = usable.iter().flat_map(|&(_, x, y)| [x, y]).collect();
    points.sort();
    points.dedup();
    points.truncate(LOCAL_POINTS);
    let mut local: Vec<(PiecePoint, PiecePoint)> = Vec::new();
    for (i, &x) in points.iter().enumerate() {
        local.extend(emb.neighbours(x).into_iter().map(|nb| (x.clone(), nb)));
        local.extend(points[i + 1..].iter().filter(|&&y| win.bs_distance(x.vertex, y.vertex) <= 2).map(|&y| (x.clone(), y.clone())));
    }
    let moves: Vec<f64> = local
        .par_iter()
        .filter_map(|(x, y)| {
            let d_x = special_path(win, x, y).ok()?.length();
            if d_x > LOCAL_SCALE {
                return None;
            }
            let d = emb.product_distance(&emb.embed(x).ok()?, &emb.embed(y).ok()?).ok()?;
            Some(to_f64(&d) / (d_x + 1) as f64)
        })
        .collect();
    let lipschitz = moves.iter().copied().fold(1.0, f64::max);
    let lipschitz_failures = rows
        .iter()
        .filter(|r| to_f64(&r.d_product) > lipschitz * r.d_x as f64 + lipschitz + 1e-9)
        .map(|r| r.pair)
        .collect();

    let spot: Vec<f64> = rows
        .iter()
        .take(spot_check_count(rows.len()))
        .filter_map(|r| {
            let (x, y) = &samples[r.pair];
            let exact = win.brute_force_distance(x, y).ok()?;
            Some(r.d_x as f64 / (exact.max(1)) as f64)
        })
        .collect();
    let p = &win.params;
    Ok(QIFitReport {
        lambda,
        c: lambda,
        lambda_multiplicative,
        violations,
        pairs: rows.len(),
        skipped: samples.len() - rows.len(),
        lipschitz,
        lipschitz_moves: moves.len(),
        lipschitz_failures,
        mu_spot_check: spot.iter().copied().fold(1.0, f64::max),
        spot_checks: spot.len(),
        window: WindowProvenance { r_bs: p.r_bs, r_tree: p.r_tree, w: p.w, k: emb.k, r: crate::coned_off::piece_cone_radius(), seed },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cka_space::{build_window, GraphOfGroupsConfig, WindowParams};
    use rand::SeedableRng;

    const FLIP: &str = r#"
[vertex.u]
rank = 2
boundary = { e = "a" }
quasi_lines = ["ab"]
[vertex.w]
rank = 2
boundary = { e = "a", f = "b" }
quasi_lines = ["ab"]
[vertex.v]
rank = 2
boundary = { f = "a" }
quasi_lines = ["ab"]
[edge.e]
ends = ["u", "w"]
matrix = [[0, 1], [1, 0]]
[edge.f]
ends = ["w", "v"]
matrix = [[0, 1], [1, 0]]
"#;

    fn window() -> CkaWindow {
        let cfg = GraphOfGroupsConfig::from_toml(FLIP).unwrap().validate().unwrap();
        build_window(&cfg, None, WindowParams::scaled(2)).unwrap()
    }

    #[test]
    fn fiber_translate_moves_only_fiber_coordinates() {
        let win = window();
        let emb = Embedding::build(&win, q(8)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for x in win.sample_orbit_points(&mut rng, 20) {
            let y = PiecePoint { fiber: x.fiber + 1, ..x.clone() };
            let (a, b) = (emb.embed(&x).unwrap(), emb.embed(&y).unwrap());
            assert_eq!((a.tree, &a.x1, &a.x2), (b.tree, &b.x1, &b.x2));
            let t = emb.terms(&a, &b).unwrap();
            assert_eq!(t[0] + t[3] + t[4], q(0));
            assert!(t[1] > q(0) && t[2] > q(0));
            assert_eq!(emb.product_distance(&a, &a).unwrap(), q(0));
            assert_eq!(emb.product_distance(&a, &b).unwrap(), emb.product_distance(&b, &a).unwrap());
        }
    }

    #[test]
    fn identical_pairs_are_rejected() {
        let win = window();
        let emb = Embedding::build(&win, q(8)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = win.sample_orbit_points(&mut rng, 1).remove(0);
        let samples = vec![(x.clone(), x); 80];
        assert!(matches!(fit_qi_constants(&emb, &samples, 2), Err(EmbeddingError::InsufficientSample { usable: 0, .. })));
    }
}
