//! Thickened fiber lines: the binding line of a piece, a width-one strip to
//! each incident boundary plane, and each plane coned along the fiber lines
//! of the neighboring piece. Includes the two fiber-line projection families,
//! the maps into them, and the vertical distance estimates.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;

use crate::cka_space::{special_path, Affine, CkaError, CkaWindow, PiecePoint, SpecialPath};
use crate::metric_core::{closest_params, project_axis_onto_axis, Axis, VertexId, WeightedGraph};
use crate::projections::{verify_axioms, AxiomReport, FamilyPoint, Member, ProjectionFamily, Verdict};
use crate::rational::{q, serde_q, to_f64, Q};

/// Cone radius of the apex model.
pub const CONE_RADIUS: i64 = 1;
/// Spacing of the coned fiber lines.
pub const CONE_SPACING: i64 = 1;

/// Bound on the diameter of any projection set between fiber lines.
pub fn projection_diameter_bound() -> Q {
    q(2 * CONE_RADIUS + CONE_SPACING + 2)
}

/// Window of one coned boundary plane, keyed by owner-frame coordinates.
#[derive(Clone, Debug)]
pub struct PlaneWindow {
    pub edge: usize,
    pub neighbor: usize,
    /// Owner frame to neighbor frame.
    pub to_neighbor: Affine,
    points: BTreeMap<(i64, i64), VertexId>,
    apexes: BTreeMap<i64, VertexId>,
}

impl PlaneWindow {
    pub fn point(&self, h: i64, f: i64) -> Option<VertexId> {
        self.points.get(&(h, f)).copied()
    }

    pub fn apex(&self, c: i64) -> Option<VertexId> {
        self.apexes.get(&c).copied()
    }

    /// Points of the coned line whose neighbor-frame base parameter is `c`.
    pub fn coned_line(&self, c: i64) -> Vec<VertexId> {
        self.points
            .iter()
            .filter(|(&p, _)| self.to_neighbor.apply(p).0 == c)
            .map(|(_, &v)| v)
            .collect()
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }
}

#[derive(Clone, Debug)]
pub struct ThickFiberLine {
    pub owner: usize,
    pub graph: Arc<WeightedGraph>,
    pub w: i64,
    binding: Vec<VertexId>,
    pub planes: Vec<PlaneWindow>,
}

impl ThickFiberLine {
    pub fn binding_vertex(&self, f: i64) -> Option<VertexId> {
        if f.abs() > self.w {
            return None;
        }
        Some(self.binding[(f + self.w) as usize])
    }

    pub fn plane(&self, edge: usize) -> Option<&PlaneWindow> {
        self.planes.iter().find(|p| p.edge == edge)
    }

    pub fn to_dot(&self, name: &str) -> String {
        self.graph.to_dot(name)
    }
}

/// Carrier of the thick fiber line of window vertex `v`. Each plane window is
/// the union of the `|h| ≤ W, |f| ≤ W` boxes of both frames, with the unit
/// grids of both frames.
pub fn build_fiber_line(win: &CkaWindow, v: usize) -> Result<ThickFiberLine, CkaError> {
    if v >= win.vertices.len() {
        return Err(CkaError::WindowExceeded(format!("vertex {v}")));
    }
    let w = win.params.w;
    let mut g = WeightedGraph::new();
    let mut binding = Vec::with_capacity(2 * w as usize + 1);
    for f in -w..=w {
        let b = g.add_named_vertex(&format!("b{f}"))?;
        if let Some(&prev) = binding.last() {
            g.add_unit_edge(prev, b)?;
        }
        binding.push(b);
    }
    let mut planes = Vec::new();
    for &e in &win.vertices[v].edges {
        let neighbor = win.across(e, v);
        let a = win.frame_map(e, v);
        let inv = a.inverse();
        let mut keys = Vec::new();
        for h in -w..=w {
            for f in -w..=w {
                keys.push((h, f));
                keys.push(inv.apply((h, f)));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let mut points = BTreeMap::new();
        for &(h, f) in &keys {
            points.insert((h, f), g.add_named_vertex(&format!("p{e}:{h},{f}"))?);
        }
        for (&(h, f), &u) in &points {
            let (hn, fn_) = a.apply((h, f));
            let steps = [(h + 1, f), (h, f + 1), inv.apply((hn + 1, fn_)), inv.apply((hn, fn_ + 1))];
            for s in steps {
                if let Some(&t) = points.get(&s) {
                    if !g.has_edge(u, t) {
                        g.add_unit_edge(u, t)?;
                    }
                }
            }
        }
        let mut apexes = BTreeMap::new();
        for (&p, &u) in &points {
            let c = a.apply(p).0;
            let apex = match apexes.get(&c) {
                Some(&x) => x,
                None => {
                    let x = g.add_named_vertex(&format!("c{e}:{c}"))?;
                    apexes.insert(c, x);
                    x
                }
            };
            g.add_edge(u, apex, q(CONE_RADIUS))?;
        }
        for f in -w..=w {
            g.add_unit_edge(binding[(f + w) as usize], points[&(0, f)])?;
        }
        planes.push(PlaneWindow { edge: e, neighbor, to_neighbor: a, points, apexes });
    }
    Ok(ThickFiberLine { owner: v, graph: Arc::new(g), w, binding, planes })
}

/// First edge `e₁` of `[v, source]` and the parameter, on `ℓ_{e₁}` in the
/// chart of the next vertex, of its closest point to the following line.
pub fn projection_line(win: &CkaWindow, v: usize, source: usize) -> Result<(usize, i64), CkaError> {
    let path = win.bs_geodesic(v, source);
    if path.len() < 3 {
        return Err(CkaError::ConfigInvalid(format!(
            "fiber lines of {} and {} are not projectable",
            win.vertices[v].label, win.vertices[source].label
        )));
    }
    let mid = path[1];
    let e1 = win.edge_between(v, mid).expect("geodesic step");
    let e2 = win.edge_between(mid, path[2]).expect("geodesic step");
    let (c, _) = closest_params(win.line(e1, mid), win.line(e2, mid))?;
    Ok((e1, c))
}

/// The fiber-line family of one class over the window.
#[derive(Clone, Debug)]
pub struct FiberFamily {
    pub class: u8,
    /// Window vertex of each member.
    pub vertices: Vec<usize>,
    member_of: HashMap<usize, usize>,
    pub lines: Vec<Arc<ThickFiberLine>>,
    pub family: Arc<ProjectionFamily>,
}

impl FiberFamily {
    pub fn member(&self, v: usize) -> Option<usize> {
        self.member_of.get(&v).copied()
    }

    pub fn line(&self, v: usize) -> Option<&ThickFiberLine> {
        self.member(v).map(|m| self.lines[m].as_ref())
    }

    fn member_or_err(&self, v: usize) -> Result<usize, CkaError> {
        self.member(v).ok_or_else(|| CkaError::ConfigInvalid(format!("vertex {v} is not in the class-{} family", self.class)))
    }
}

/// `π_{fl(v)}(fl(source))`: the coned line over the closest point.
pub fn project_fiber_line(win: &CkaWindow, fam: &FiberFamily, v: usize, source: usize) -> Result<Vec<VertexId>, CkaError> {
    fam.member_or_err(v)?;
    fam.member_or_err(source)?;
    projection_set(win, &fam.lines, &fam.member_of, v, source)
}

fn projection_set(win: &CkaWindow, lines: &[Arc<ThickFiberLine>], member_of: &HashMap<usize, usize>, v: usize, source: usize) -> Result<Vec<VertexId>, CkaError> {
    let (e1, c) = projection_line(win, v, source)?;
    let line = &lines[member_of[&v]];
    let plane = line.plane(e1).expect("first edge is incident");
    let set = plane.coned_line(c);
    if set.is_empty() {
        return Err(CkaError::WindowExceeded(format!("coned line {c} of plane {e1} at {}", win.vertices[v].label)));
    }
    Ok(set)
}

pub fn build_fiber_family(win: &CkaWindow, class: u8) -> Result<FiberFamily, CkaError> {
    let vertices = win.class_vertices(class);
    let member_of: HashMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let lines = vertices
        .par_iter()
        .map(|&v| build_fiber_line(win, v).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = BTreeMap::new();
    for (t, &v) in vertices.iter().enumerate() {
        for (s, &u) in vertices.iter().enumerate() {
            if s != t {
                table.insert((t, s), projection_set(win, &lines, &member_of, v, u)?);
            }
        }
    }
    let members = lines
        .iter()
        .zip(&vertices)
        .map(|(l, &v)| Member { name: win.vertices[v].label.clone(), graph: l.graph.clone() })
        .collect();
    let family = Arc::new(ProjectionFamily::new(members, table)?);
    Ok(FiberFamily { class, vertices, member_of, lines, family })
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberAxiomReport {
    pub class: u8,
    pub axioms: AxiomReport,
    #[serde(with = "serde_q")]
    pub max_projection_diameter: Q,
    #[serde(with = "serde_q")]
    pub diameter_bound: Q,
    /// Triples `(w, u, v)` with `d_T(w, [u, v]) ≥ 2`.
    pub common_projection_cases: usize,
    pub common_projection_failures: Vec<[usize; 3]>,
    pub pass: bool,
}

/// Projection axioms at `xi`, the projection diameter bound, and equality
/// of projections from vertices seen through a common far edge.
pub fn verify_fiber_axioms(win: &CkaWindow, fam: &FiberFamily, xi: Q) -> Result<FiberAxiomReport, CkaError> {
    let f = &fam.family;
    let axioms = verify_axioms(f, xi, usize::MAX)?;
    let n = f.len();
    let mut max_diam = q(0);
    for t in 0..n {
        for s in (0..n).filter(|&s| s != t) {
            max_diam = max_diam.max(f.projection_diameter(t, s)?);
        }
    }
    let mut cases = 0;
    let mut failures = Vec::new();
    for t in 0..n {
        let wv = fam.vertices[t];
        for a in (0..n).filter(|&a| a != t) {
            for b in (a + 1..n).filter(|&b| b != t) {
                let (u, v) = (fam.vertices[a], fam.vertices[b]);
                let twice = win.bs_distance(wv, u) + win.bs_distance(wv, v) - win.bs_distance(u, v);
                if twice >= 4 {
                    cases += 1;
                    if f.project(t, a) != f.project(t, b) {
                        failures.push([wv, u, v]);
                    }
                }
            }
        }
    }
    let bound = projection_diameter_bound();
    let pass = axioms.verdict == Verdict::Pass && max_diam <= bound && failures.is_empty();
    Ok(FiberAxiomReport {
        class: fam.class,
        axioms,
        max_projection_diameter: max_diam,
        diameter_bound: bound,
        common_projection_cases: cases,
        common_projection_failures: failures,
        pass,
    })
}

/// Binding-line point at the fiber coordinate of `x`.
pub fn pi1(fam: &FiberFamily, x: &PiecePoint) -> Result<FamilyPoint, CkaError> {
    let m = fam.member_or_err(x.vertex)?;
    let b = fam.lines[m]
        .binding_vertex(x.fiber)
        .ok_or_else(|| CkaError::WindowExceeded(format!("fiber {} beyond the binding line", x.fiber)))?;
    Ok(FamilyPoint::Vertex(m, b))
}

/// Point of `x`, pushed along its strip onto the plane of the least incident
/// edge `e₀ = [w₀, v₀]`, inside the coned plane of the fiber line of `w₀`.
/// Returns the point and `e₀`.
pub fn pi2(win: &CkaWindow, fam: &FiberFamily, x: &PiecePoint) -> Result<(FamilyPoint, usize), CkaError> {
    let v0 = x.vertex;
    let e0 = win.base_edge(v0);
    let w0 = win.across(e0, v0);
    let m = fam.member_or_err(w0)?;
    let (h, _) = win.line(e0, v0).project_vertex(&x.base);
    let key = win.frame_map(e0, v0).apply((h, x.fiber));
    let plane = fam.lines[m].plane(e0).expect("base edge is incident to both ends");
    let p = plane
        .point(key.0, key.1)
        .ok_or_else(|| CkaError::WindowExceeded(format!("plane point {key:?} of edge {e0}")))?;
    Ok((FamilyPoint::Vertex(m, p), e0))
}

/// Both maps of a pair, with its special path.
#[derive(Clone, Debug)]
pub struct PairImages {
    pub path: SpecialPath,
    pub pi1: [FamilyPoint; 2],
    pub pi2: [FamilyPoint; 2],
    /// `e₀` for `x` and for `y`.
    pub base_edges: [usize; 2],
}

pub fn pair_images(win: &CkaWindow, f1: &FiberFamily, f2: &FiberFamily, x: &PiecePoint, y: &PiecePoint) -> Result<PairImages, CkaError> {
    let path = special_path(win, x, y)?;
    let (ax, ex) = pi2(win, f2, x)?;
    let (ay, ey) = pi2(win, f2, y)?;
    Ok(PairImages { path, pi1: [pi1(f1, x)?, pi1(f1, y)?], pi2: [ax, ay], base_edges: [ex, ey] })
}

fn family_term(fam: &FiberFamily, v: usize, pts: [FamilyPoint; 2]) -> Result<Q, CkaError> {
    let m = fam.member_or_err(v)?;
    Ok(fam.family.extended_distance(m, pts[0], pts[1])?)
}

/// `d_{fl(v)}(Π_j x, Π_j y)` with `j` the class of `v`.
pub fn vertical_term(win: &CkaWindow, f1: &FiberFamily, f2: &FiberFamily, img: &PairImages, v: usize) -> Result<Q, CkaError> {
    if win.vertices[v].class == 1 {
        family_term(f1, v, img.pi1)
    } else {
        family_term(f2, v, img.pi2)
    }
}

/// Diameter on `target` of the union of the projections of two lines; zero for identical lines.
fn line_projection_distance(target: &Axis, a: &Axis, b: &Axis) -> Result<i64, CkaError> {
    if a.canonical() == b.canonical() {
        return Ok(0);
    }
    let pa = project_axis_onto_axis(target, a)?;
    let pb = project_axis_onto_axis(target, b)?;
    let lo = pa[0].min(pb[0]);
    let hi = pa[pa.len() - 1].max(pb[pb.len() - 1]);
    Ok(hi - lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// Link vertex of an interior class-2 vertex against the lines met there.
    LinkHorizontal,
    /// Class-1 vertex of the path against the vertical length of its segment.
    PieceVertical,
    /// Link vertex of a class-1 vertex of the extended path against its lines.
    LinkHorizontalPlane,
    /// Class-2 vertex of the path against the vertical length of its segment.
    PlaneVertical,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateRow {
    pub pair: usize,
    pub estimate: Estimate,
    pub index: usize,
    pub vertex: usize,
    #[serde(with = "serde_q")]
    pub lhs: Q,
    #[serde(with = "serde_q")]
    pub rhs: Q,
    pub inside: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateSummary {
    pub estimate: Estimate,
    pub rows: usize,
    /// Least `λ ≥ 1` with `lhs ≤ λ·rhs + λ` and `rhs ≤ λ·lhs + λ` on every row.
    pub fitted: f64,
    #[serde(with = "serde_q")]
    pub max_defect: Q,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    #[serde(with = "serde_q")]
    pub envelope_ratio: Q,
    #[serde(with = "serde_q")]
    pub envelope_additive: Q,
    pub pairs: usize,
    pub skipped: usize,
    pub summaries: Vec<EstimateSummary>,
    pub rows: Vec<EstimateRow>,
    pub pass: bool,
}

fn envelope() -> (Q, Q) {
    (q(2), q(4 * CONE_RADIUS + 4))
}

fn pair_estimates(win: &CkaWindow, f1: &FiberFamily, f2: &FiberFamily, pair: usize, x: &PiecePoint, y: &PiecePoint) -> Result<Vec<EstimateRow>, CkaError> {
    let img = pair_images(win, f1, f2, x, y)?;
    let alpha = &img.path.geodesic;
    let m = alpha.len() - 1;
    let (ratio, add) = envelope();
    let mut rows = Vec::new();
    let mut push = |estimate, index, vertex, lhs: Q, rhs: Q| {
        let inside = lhs <= ratio * rhs + add && rhs <= ratio * lhs + add;
        rows.push(EstimateRow { pair, estimate, index, vertex, lhs, rhs, inside });
    };
    let edge = |a: usize, b: usize| win.edge_between(a, b).expect("geodesic step");
    for (i, &v) in alpha.iter().enumerate() {
        let rhs = q(img.path.segments[i].r);
        let lhs = vertical_term(win, f1, f2, &img, v)?;
        let kind = if win.vertices[v].class == 1 { Estimate::PieceVertical } else { Estimate::PlaneVertical };
        push(kind, i, v, lhs, rhs);
    }
    // Interior class-2 vertices against the fiber lines of their other neighbors.
    let (src, dst) = (f1.member_or_err(alpha[0])?, f1.member_or_err(alpha[m])?);
    for i in 1..m {
        let vi = alpha[i];
        if win.vertices[vi].class != 2 {
            continue;
        }
        let (l_in, l_out) = (win.line(edge(alpha[i - 1], vi), vi), win.line(edge(vi, alpha[i + 1]), vi));
        for &e in &win.vertices[vi].edges {
            let v = win.across(e, vi);
            if alpha.contains(&v) {
                continue;
            }
            let lhs = f1.family.projection_distance(f1.member_or_err(v)?, src, dst)?;
            let rhs = q(line_projection_distance(win.line(e, vi), l_in, l_out)?);
            push(Estimate::LinkHorizontal, i, v, lhs, rhs);
        }
    }
    // Class-1 vertices of the extended path against class-2 neighbors off it.
    let [ex, ey] = img.base_edges;
    let (w0, w1) = (win.across(ex, alpha[0]), win.across(ey, alpha[m]));
    for i in 0..=m {
        let vi = alpha[i];
        if win.vertices[vi].class != 1 {
            continue;
        }
        let l_in = if i == 0 { win.line(ex, vi) } else { win.line(edge(alpha[i - 1], vi), vi) };
        let l_out = if i == m { win.line(ey, vi) } else { win.line(edge(vi, alpha[i + 1]), vi) };
        for &e in &win.vertices[vi].edges {
            let v = win.across(e, vi);
            if alpha.contains(&v) || v == w0 || v == w1 {
                continue;
            }
            let lhs = family_term(f2, v, img.pi2)?;
            let rhs = q(line_projection_distance(win.line(e, vi), l_in, l_out)?);
            push(Estimate::LinkHorizontalPlane, i, v, lhs, rhs);
        }
    }
    Ok(rows)
}

fn fit_pair(lhs: Q, rhs: Q) -> f64 {
    let (a, b) = (to_f64(&lhs), to_f64(&rhs));
    (a / (b + 1.0)).max(b / (a + 1.0)).max(1.0)
}

/// Both sides of the four piece and plane estimates on every applicable index
/// of every pair. Pairs whose paths leave the window are skipped and counted.
pub fn check_section6_estimates(win: &CkaWindow, f1: &FiberFamily, f2: &FiberFamily, samples: &[(PiecePoint, PiecePoint)]) -> LemmaReport {
    let results: Vec<Result<Vec<EstimateRow>, CkaError>> =
        samples.par_iter().enumerate().map(|(i, (x, y))| pair_estimates(win, f1, f2, i, x, y)).collect();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(rs) => rows.extend(rs),
            Err(_) => skipped += 1,
        }
    }
    let mut summaries = Vec::new();
    for estimate in [Estimate::LinkHorizontal, Estimate::PieceVertical, Estimate::LinkHorizontalPlane, Estimate::PlaneVertical] {
        let sel: Vec<&EstimateRow> = rows.iter().filter(|r| r.estimate == estimate).collect();
        summaries.push(EstimateSummary {
            estimate,
            rows: sel.len(),
            fitted: sel.iter().map(|r| fit_pair(r.lhs, r.rhs)).fold(1.0, f64::max),
            max_defect: sel.iter().map(|r| (r.lhs - r.rhs).abs()).max().unwrap_or(q(0)),
            pass: sel.iter().all(|r| r.inside),
        });
    }
    let (envelope_ratio, envelope_additive) = envelope();
    let pass = summaries.iter().all(|s| s.pass);
    LemmaReport { envelope_ratio, envelope_additive, pairs: samples.len(), skipped, summaries, rows, pass }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerticalRow {
    pub pair: usize,
    pub d_v: i64,
    #[serde(with = "serde_q")]
    pub fiber_sum: Q,
    pub d_t: usize,
    #[serde(with = "serde_q")]
    pub rhs: Q,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerticalReport {
    pub pairs: usize,
    pub skipped: usize,
    /// Least `C` with `d^v ≤ C·rhs + C` on every row.
    pub fitted_c: f64,
    /// Largest `rhs / (d^v + 1)`, for the reverse comparison.
    pub reverse_ratio: f64,
    pub violations: usize,
    pub rows: Vec<VerticalRow>,
}

impl VerticalReport {
    /// Relative change of the fitted constant against another run.
    pub fn drift(&self, other: &VerticalReport) -> f64 {
        (other.fitted_c - self.fitted_c).abs() / self.fitted_c
    }
}

/// Vertical length of the special path against the fiber-line sum along the
/// Bass-Serre geodesic plus its length.
pub fn vertical_formula_report(win: &CkaWindow, f1: &FiberFamily, f2: &FiberFamily, samples: &[(PiecePoint, PiecePoint)]) -> VerticalReport {
    let results: Vec<Result<VerticalRow, CkaError>> = samples
        .par_iter()
        .enumerate()
        .map(|(pair, (x, y))| {
            let img = pair_images(win, f1, f2, x, y)?;
            let mut fiber_sum = q(0);
            for &v in &img.path.geodesic {
                fiber_sum += vertical_term(win, f1, f2, &img, v)?;
            }
            let d_t = img.path.geodesic.len() - 1;
            Ok(VerticalRow { pair, d_v: img.path.d_v(), fiber_sum, d_t, rhs: fiber_sum + q(d_t as i64) })
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(_) => skipped += 1,
        }
    }
    let fitted_c = rows.iter().map(|r| r.d_v as f64 / (to_f64(&r.rhs) + 1.0)).fold(1.0, f64::max);
    let reverse_ratio = rows.iter().map(|r| to_f64(&r.rhs) / (r.d_v as f64 + 1.0)).fold(0.0, f64::max);
    let violations = rows.iter().filter(|r| r.d_v as f64 > fitted_c * (to_f64(&r.rhs) + 1.0) + 1e-9).count();
    VerticalReport { pairs: samples.len(), skipped, fitted_c, reverse_ratio, violations, rows }
}
