use num_rational::Ratio;
use num_traits::Signed;
use serde::Serialize;

use crate::metric_core::{closest_params, Word};
use crate::rational::{round_half_down, serde_q, Q};

use super::window::{CkaWindow, PiecePoint};
use super::CkaError;

/// One end of a strip inside a piece.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum StripEnd {
    /// Boundary line of an incident window edge.
    Edge(usize),
    /// A base point of the piece.
    Point(Word),
}

/// Base segment of a strip: the shortest geodesic between its two ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Strip {
    pub vertex: usize,
    pub start: Word,
    pub end: Word,
    /// Line parameters of the endpoints, for line ends.
    pub h_start: Option<i64>,
    pub h_end: Option<i64>,
    pub width: usize,
}

pub fn strip_between(win: &CkaWindow, v: usize, a: &StripEnd, b: &StripEnd) -> Result<Strip, CkaError> {
    let tree = win.tree(v);
    let incident = |e: usize| -> Result<(), CkaError> {
        if win.vertices[v].edges.contains(&e) {
            Ok(())
        } else {
            Err(CkaError::WindowExceeded(format!("edge {e} is not incident to {}", win.vertices[v].label)))
        }
    };
    let (start, end, h_start, h_end) = match (a, b) {
        (StripEnd::Edge(e1), StripEnd::Edge(e2)) => {
            incident(*e1)?;
            incident(*e2)?;
            let (l1, l2) = (win.line(*e1, v), win.line(*e2, v));
            let (j1, j2) = closest_params(l1, l2)?;
            (l1.vertex(j1), l2.vertex(j2), Some(j1), Some(j2))
        }
        (StripEnd::Edge(e), StripEnd::Point(x)) => {
            incident(*e)?;
            let (j, p) = win.line(*e, v).project_vertex(x);
            (p, x.clone(), Some(j), None)
        }
        (StripEnd::Point(x), StripEnd::Edge(e)) => {
            incident(*e)?;
            let (j, p) = win.line(*e, v).project_vertex(x);
            (x.clone(), p, None, Some(j))
        }
        (StripEnd::Point(x), StripEnd::Point(y)) => (x.clone(), y.clone(), None, None),
    };
    tree.check(&start)?;
    tree.check(&end)?;
    let width = tree.distance(&start, &end);
    Ok(Strip { vertex: v, start, end, h_start, h_end, width })
}

/// Corner `p_i` on the plane of `edge`, in both frames.
#[derive(Clone, Debug, Serialize)]
pub struct Corner {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
    /// `(h, f)` in the frame of `from` after rounding.
    pub from_frame: [i64; 2],
    /// The same point in the frame of `to`.
    pub to_frame: [i64; 2],
    pub from_base: Word,
    pub to_base: Word,
    /// Unrounded fiber coordinate on the `from` side.
    #[serde(with = "serde_q")]
    pub f_exact: Q,
    /// Unrounded point on the `to` side: line parameter and fiber.
    pub to_h_exact: i64,
    #[serde(with = "serde_q")]
    pub to_f_exact: Q,
}

/// Geodesic piece of a special path inside one piece.
#[derive(Clone, Debug, Serialize)]
pub struct Segment {
    pub vertex: usize,
    pub start: (Word, i64),
    pub end: (Word, i64),
    /// Horizontal length: base tree distance.
    pub h: i64,
    /// Vertical length: fiber difference.
    pub r: i64,
    pub h_exact: i64,
    #[serde(with = "serde_q")]
    pub r_exact: Q,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecialPath {
    pub x: PiecePoint,
    pub y: PiecePoint,
    pub geodesic: Vec<usize>,
    pub corners: Vec<Corner>,
    pub segments: Vec<Segment>,
}

impl SpecialPath {
    pub fn d_h(&self) -> i64 {
        self.segments.iter().map(|s| s.h).sum()
    }

    pub fn d_v(&self) -> i64 {
        self.segments.iter().map(|s| s.r).sum()
    }

    pub fn length(&self) -> i64 {
        self.d_h() + self.d_v()
    }

    pub fn d_h_exact(&self) -> i64 {
        self.segments.iter().map(|s| s.h_exact).sum()
    }

    pub fn d_v_exact(&self) -> Q {
        self.segments.iter().map(|s| s.r_exact).sum()
    }

    /// Largest |m22| over the gluings crossed, which scales the rounding
    /// error on the far side of a corner.
    pub fn rounding_bound(&self, win: &CkaWindow) -> Q {
        let m = self
            .corners
            .iter()
            .map(|c| win.frame_map(c.edge, c.from).m[1][1].abs())
            .max()
            .unwrap_or(0);
        Ratio::new(m + 1, 2)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("special path serializes")
    }
}

/// `(d^h, d^v, d^h + d^v)`.
pub fn path_components(sp: &SpecialPath) -> (i64, i64, i64) {
    (sp.d_h(), sp.d_v(), sp.length())
}

fn segment(win: &CkaWindow, v: usize, a: (&Word, i64, Q), b: (&Word, i64, Q), exact_bases: (&Word, &Word)) -> Segment {
    let tree = win.tree(v);
    Segment {
        vertex: v,
        start: (a.0.clone(), a.1),
        end: (b.0.clone(), b.1),
        h: tree.distance(a.0, b.0) as i64,
        r: (a.1 - b.1).abs(),
        h_exact: tree.distance(exact_bases.0, exact_bases.1) as i64,
        r_exact: (a.2 - b.2).abs(),
    }
}

/// Special path from `x` to `y`: through the strip corners along the
/// Bass-Serre geodesic between their pieces.
pub fn special_path(win: &CkaWindow, x: &PiecePoint, y: &PiecePoint) -> Result<SpecialPath, CkaError> {
    win.check_point(x)?;
    win.check_point(y)?;
    let geodesic = win.bs_geodesic(x.vertex, y.vertex);
    let n = geodesic.len() - 1;
    let qi = Ratio::from_integer;
    if n == 0 {
        let seg = segment(win, x.vertex, (&x.base, x.fiber, qi(x.fiber)), (&y.base, y.fiber, qi(y.fiber)), (&x.base, &y.base));
        return Ok(SpecialPath { x: x.clone(), y: y.clone(), geodesic, corners: Vec::new(), segments: vec![seg] });
    }
    let edges: Vec<usize> =
        (1..=n).map(|i| win.edge_between(geodesic[i - 1], geodesic[i]).expect("geodesic steps are edges")).collect();
    // h_from[i]: parameter on the line of edges[i] in geodesic[i];
    // h_to[i]: parameter on the same line in geodesic[i + 1].
    let mut h_from = vec![0i64; n];
    let mut h_to = vec![0i64; n];
    h_from[0] = win.line(edges[0], geodesic[0]).project_vertex(&x.base).0;
    for i in 1..n {
        let v = geodesic[i];
        let (ja, jb) = closest_params(win.line(edges[i - 1], v), win.line(edges[i], v))?;
        h_to[i - 1] = ja;
        h_from[i] = jb;
    }
    h_to[n - 1] = win.line(edges[n - 1], geodesic[n]).project_vertex(&y.base).0;

    let mut corners = Vec::with_capacity(n);
    for i in 0..n {
        let (from, to, e) = (geodesic[i], geodesic[i + 1], edges[i]);
        let a = win.frame_map(e, from);
        let [[m11, m12], [m21, m22]] = a.m;
        if m12 == 0 {
            return Err(CkaError::FiberParallel(win.config.edges[win.edges[e].underlying].name.clone()));
        }
        let f_exact = Ratio::new(h_to[i] - a.t[0] - m11 * h_from[i], m12);
        let f = round_half_down(&f_exact);
        let (h2, f2) = a.apply((h_from[i], f));
        let from_base = win.line(e, from).vertex(h_from[i]);
        let to_base = win.line(e, to).vertex(h2);
        let corner_from = PiecePoint::new(from, from_base.clone(), f);
        let corner_to = PiecePoint::new(to, to_base.clone(), f2);
        for p in [&corner_from, &corner_to] {
            if !win.contains(p) {
                return Err(CkaError::WindowExceeded(format!("corner {}", win.describe(p))));
            }
        }
        let to_f_exact = qi(m21 * h_from[i] + a.t[1]) + qi(m22) * f_exact;
        corners.push(Corner {
            edge: e,
            from,
            to,
            from_frame: [h_from[i], f],
            to_frame: [h2, f2],
            from_base,
            to_base,
            f_exact,
            to_h_exact: h_to[i],
            to_f_exact,
        });
    }

    let mut segments = Vec::with_capacity(n + 1);
    let first = &corners[0];
    segments.push(segment(
        win,
        geodesic[0],
        (&x.base, x.fiber, qi(x.fiber)),
        (&first.from_base, first.from_frame[1], first.f_exact),
        (&x.base, &first.from_base),
    ));
    for i in 1..n {
        let (c0, c1) = (&corners[i - 1], &corners[i]);
        let exact_start = win.line(c0.edge, c0.to).vertex(c0.to_h_exact);
        segments.push(segment(
            win,
            geodesic[i],
            (&c0.to_base, c0.to_frame[1], c0.to_f_exact),
            (&c1.from_base, c1.from_frame[1], c1.f_exact),
            (&exact_start, &c1.from_base),
        ));
    }
    let last = &corners[n - 1];
    let exact_start = win.line(last.edge, last.to).vertex(last.to_h_exact);
    segments.push(segment(
        win,
        geodesic[n],
        (&last.to_base, last.to_frame[1], last.to_f_exact),
        (&y.base, y.fiber, qi(y.fiber)),
        (&exact_start, &y.base),
    ));
    Ok(SpecialPath { x: x.clone(), y: y.clone(), geodesic, corners, segments })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecialPathRow {
    pub pair: usize,
    pub length: i64,
    pub oracle: u32,
}

/// Quasi-geodesic fit of special paths against the window's exact distance.
#[derive(Clone, Debug, Serialize)]
pub struct SpecialPathFit {
    /// Least `μ ≥ 1` with `length ≤ μ·oracle + μ` on every row.
    pub mu: f64,
    pub pairs: usize,
    pub boundary_skipped: usize,
    /// Rows where the special path is shorter than the exact distance.
    pub shorter_than_oracle: usize,
    pub rows: Vec<SpecialPathRow>,
}

impl SpecialPathFit {
    pub fn drift(&self, other: &SpecialPathFit) -> f64 {
        (self.mu - other.mu).abs() / self.mu.max(other.mu)
    }

    /// Rows violating `length ≤ μ·oracle + μ`.
    pub fn violations(&self, mu: f64) -> usize {
        self.rows.iter().filter(|r| r.length as f64 > mu * r.oracle as f64 + mu + 1e-9).count()
    }
}

/// Fits `μ` on the pairs whose exact geodesics stay off the window shell.
pub fn fit_special_paths(win: &CkaWindow, samples: &[(PiecePoint, PiecePoint)]) -> Result<SpecialPathFit, CkaError> {
    use rayon::prelude::*;
    let results: Vec<Option<SpecialPathRow>> = samples
        .par_iter()
        .enumerate()
        .map(|(pair, (x, y))| {
            let o = win.brute_force_flagged(x, y)?;
            if o.boundary_suspect {
                return Ok(None);
            }
            Ok(Some(SpecialPathRow { pair, length: special_path(win, x, y)?.length(), oracle: o.distance }))
        })
        .collect::<Result<_, CkaError>>()?;
    let boundary_skipped = results.iter().filter(|r| r.is_none()).count();
    let rows: Vec<SpecialPathRow> = results.into_iter().flatten().collect();
    let mu = rows.iter().map(|r| r.length as f64 / (r.oracle as f64 + 1.0)).fold(1.0, f64::max);
    let shorter_than_oracle = rows.iter().filter(|r| r.length < r.oracle as i64).count();
    Ok(SpecialPathFit { mu, pairs: rows.len(), boundary_skipped, shorter_than_oracle, rows })
}

#[cfg(test)]
mod tests {
    use super::super::config::GraphOfGroupsConfig;
    use super::super::window::{build_window, WindowParams};
    use super::*;
    use crate::metric_core::Axis;

    const FLIP: &str = r#"
[vertex.v]
rank = 2
boundary = { e = "a" }
[vertex.w]
rank = 2
boundary = { e = "a" }
[edge.e]
ends = ["v", "w"]
matrix = [[0, 1], [1, 0]]
"#;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    #[test]
    fn same_piece_path() {
        let cfg = GraphOfGroupsConfig::from_toml(FLIP).unwrap().validate().unwrap();
        let win = build_window(&cfg, None, WindowParams { r_bs: 1, r_tree: 4, w: 8, r_coset: 0 }).unwrap();
        let x = PiecePoint::new(0, w("ab"), -2);
        let y = PiecePoint::new(0, w("B"), 3);
        let sp = special_path(&win, &x, &y).unwrap();
        assert_eq!(path_components(&sp), (3, 5, 8));
    }

    #[test]
    fn flip_corner_is_exact() {
        let cfg = GraphOfGroupsConfig::from_toml(FLIP).unwrap().validate().unwrap();
        let win = build_window(&cfg, None, WindowParams { r_bs: 1, r_tree: 4, w: 8, r_coset: 0 }).unwrap();
        let x = PiecePoint::new(0, Word::identity(), 0);
        let y = PiecePoint::new(1, Word::identity(), 5);
        let sp = special_path(&win, &x, &y).unwrap();
        let c = &sp.corners[0];
        assert_eq!(c.from_frame, [0, 0]);
        assert_eq!(c.to_frame, [0, 0]);
        assert_eq!(c.f_exact, Ratio::from_integer(0));
        assert_eq!(path_components(&sp), (0, 5, 5));
        assert_eq!(win.brute_force_distance(&x, &y).unwrap(), 5);
    }

    #[test]
    fn strip_between_translated_axes() {
        let text = r#"
[vertex.v]
rank = 2
boundary = { e = "a" }
[vertex.w]
rank = 2
boundary = { e = "a" }
[edge.e]
ends = ["v", "w"]
matrix = [[0, 1], [1, 0]]
"#;
        let cfg = GraphOfGroupsConfig::from_toml(text).unwrap().validate().unwrap();
        let win = build_window(&cfg, None, WindowParams { r_bs: 1, r_tree: 3, w: 2, r_coset: 1 }).unwrap();
        let e0 = win.vertices[0].edges.iter().copied().find(|&e| win.edges[e].parent_line == Axis::through_identity(w("a")).unwrap()).unwrap();
        let e1 = win.vertices[0].edges.iter().copied().find(|&e| win.edges[e].parent_line.conj == w("b")).unwrap();
        let s = strip_between(&win, 0, &StripEnd::Edge(e0), &StripEnd::Edge(e1)).unwrap();
        assert_eq!((s.start.clone(), s.end.clone(), s.width), (Word::identity(), w("b"), 1));
        let p = strip_between(&win, 0, &StripEnd::Point(w("bb")), &StripEnd::Edge(e0)).unwrap();
        assert_eq!((p.end, p.width), (Word::identity(), 2));
    }
}
