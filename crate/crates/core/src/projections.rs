//! Projection families, the projection-axiom checker, cutoffs, and
//! pushforward of a family along Lipschitz maps.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric_core::{Axis, FreeTree, MetricError, VertexId, WeightedGraph, Word};
use crate::rational::{fmt_q, q, serde_q, Q};

#[derive(Debug, Error, Clone)]
pub enum ProjectionError {
    #[error("index clash: member {0} appears as target and source")]
    IndexClash(usize),
    #[error("projection π_{target}({from}) is empty or leaves the member")]
    BadProjection { target: usize, from: usize },
    #[error("missing projection π_{0}({1})")]
    MissingProjection(usize, usize),
    #[error("pair budget exceeded after {} triples", .0.checked_triples)]
    BudgetExceeded(Box<AxiomReport>),
    #[error("map for member {member} is not {lipschitz}-Lipschitz on edge ({u}, {v})")]
    LipschitzViolation { member: usize, u: String, v: String, lipschitz: String },
    #[error("family has no members")]
    EmptyFamily,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("family parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Debug)]
pub struct Member {
    pub name: String,
    pub graph: Arc<WeightedGraph>,
}

/// Per-target cache: distinct projection sets and their pairwise union diameters.
#[derive(Clone, Debug, Default)]
struct TargetMetric {
    set_of_source: Vec<usize>,
    union_diam: Vec<Vec<Q>>,
}

/// A finite family of member graphs with extensional projections `π_Y(X)`.
#[derive(Clone, Debug)]
pub struct ProjectionFamily {
    members: Vec<Member>,
    proj: Vec<Vec<Vec<VertexId>>>,
    metric: Vec<TargetMetric>,
}

/// A point in the family: a whole member, or one vertex of a member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyPoint {
    Member(usize),
    Vertex(usize, VertexId),
}

impl FamilyPoint {
    pub fn member(&self) -> usize {
        match *self {
            FamilyPoint::Member(m) | FamilyPoint::Vertex(m, _) => m,
        }
    }
}

impl ProjectionFamily {
    /// `projections[(target, source)]` must be given for every ordered pair of distinct members.
    pub fn new(members: Vec<Member>, mut projections: BTreeMap<(usize, usize), Vec<VertexId>>) -> Result<Self, ProjectionError> {
        let n = members.len();
        let mut proj = vec![vec![Vec::new(); n]; n];
        for (t, row) in proj.iter_mut().enumerate() {
            for (s, slot) in row.iter_mut().enumerate() {
                if t == s {
                    continue;
                }
                let mut set = projections.remove(&(t, s)).ok_or(ProjectionError::MissingProjection(t, s))?;
                set.sort_unstable();
                set.dedup();
                if set.is_empty() || set.iter().any(|&v| v >= members[t].graph.vertex_count()) {
                    return Err(ProjectionError::BadProjection { target: t, from: s });
                }
                *slot = set;
            }
        }
        if let Some(&(t, s)) = projections.keys().next() {
            return Err(if t == s { ProjectionError::IndexClash(t) } else { ProjectionError::BadProjection { target: t, from: s } });
        }
        let metric = (0..n)
            .into_par_iter()
            .map(|t| build_target_metric(&members[t].graph, &proj[t], t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { members, proj, metric })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Member {
        &self.members[i]
    }

    /// `π_target(source)`; empty when `target == source`.
    pub fn project(&self, target: usize, source: usize) -> &[VertexId] {
        &self.proj[target][source]
    }

    /// Copy with one projection set replaced.
    pub fn with_projection(&self, target: usize, source: usize, set: Vec<VertexId>) -> Result<Self, ProjectionError> {
        let mut table = self.projection_table();
        table.insert((target, source), set);
        Self::new(self.members.clone(), table)
    }

    pub fn projection_table(&self) -> BTreeMap<(usize, usize), Vec<VertexId>> {
        let mut table = BTreeMap::new();
        for t in 0..self.len() {
            for s in 0..self.len() {
                if t != s {
                    table.insert((t, s), self.proj[t][s].clone());
                }
            }
        }
        table
    }

    /// `d_Y(X, Z) = diam(π_Y(X) ∪ π_Y(Z))`.
    pub fn projection_distance(&self, y: usize, x: usize, z: usize) -> Result<Q, ProjectionError> {
        if y == x || y == z {
            return Err(ProjectionError::IndexClash(y));
        }
        let m = &self.metric[y];
        Ok(m.union_diam[m.set_of_source[x]][m.set_of_source[z]])
    }

    /// `diam π_Y(X)`.
    pub fn projection_diameter(&self, y: usize, x: usize) -> Result<Q, ProjectionError> {
        self.projection_distance(y, x, x)
    }

    /// The extension of `d_Y` to points of members.
    pub fn extended_distance(&self, y: usize, x: FamilyPoint, z: FamilyPoint) -> Result<Q, ProjectionError> {
        match (x, z) {
            (FamilyPoint::Vertex(mx, a), FamilyPoint::Vertex(mz, b)) if mx == y && mz == y => {
                Ok(self.members[y].graph.shortest_distance(a, b)?)
            }
            (FamilyPoint::Member(m), _) | (_, FamilyPoint::Member(m)) if m == y => Err(ProjectionError::IndexClash(y)),
            (FamilyPoint::Vertex(mx, a), other) if mx == y => self.point_to_set(y, a, other.member()),
            (other, FamilyPoint::Vertex(mz, b)) if mz == y => self.point_to_set(y, b, other.member()),
            (a, b) => self.projection_distance(y, a.member(), b.member()),
        }
    }

    fn point_to_set(&self, y: usize, a: VertexId, source: usize) -> Result<Q, ProjectionError> {
        let g = &self.members[y].graph;
        let row = g.distances_from(a);
        let set = &self.proj[y][source];
        let mut best = self.projection_diameter(y, source)?;
        for &b in set {
            let d = row[b].ok_or_else(|| MetricError::DisconnectedPair(g.name(a), g.name(b)))?;
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }

    /// Distinct values taken by `d_Y(X, Z)` over all admissible triples, sorted.
    pub fn observed_values(&self) -> Vec<Q> {
        let mut vals: Vec<Q> = self.metric.iter().flat_map(|m| m.union_diam.iter().flatten().copied()).collect();
        vals.push(q(0));
        vals.sort();
        vals.dedup();
        vals
    }

    pub fn to_json(&self) -> FamilyJson {
        FamilyJson {
            members: self.members.iter().map(|m| MemberJson { name: m.name.clone(), graph: m.graph.to_text() }).collect(),
            projections: self
                .projection_table()
                .into_iter()
                .map(|((t, s), set)| ProjectionJson {
                    target: t,
                    source: s,
                    vertices: set.iter().map(|&v| self.members[t].graph.name(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(j: &FamilyJson) -> Result<Self, ProjectionError> {
        let members = j
            .members
            .iter()
            .map(|m| Ok(Member { name: m.name.clone(), graph: Arc::new(WeightedGraph::from_text(&m.graph)?) }))
            .collect::<Result<Vec<_>, ProjectionError>>()?;
        let mut table = BTreeMap::new();
        for p in &j.projections {
            let g = &members.get(p.target).ok_or_else(|| ProjectionError::Parse(format!("no member {}", p.target)))?.graph;
            let set = p
                .vertices
                .iter()
                .map(|name| g.vertex_by_name(name).ok_or_else(|| ProjectionError::Parse(format!("unknown vertex {name}"))))
                .collect::<Result<Vec<_>, _>>()?;
            table.insert((p.target, p.source), set);
        }
        Self::new(members, table)
    }
}

fn build_target_metric(g: &WeightedGraph, row: &[Vec<VertexId>], target: usize) -> Result<TargetMetric, ProjectionError> {
    let mut sets: Vec<Vec<VertexId>> = Vec::new();
    let mut lookup: HashMap<&[VertexId], usize> = HashMap::new();
    let mut set_of_source = vec![usize::MAX; row.len()];
    for (s, set) in row.iter().enumerate() {
        if s == target {
            continue;
        }
        let id = *lookup.entry(set.as_slice()).or_insert_with(|| {
            sets.push(set.clone());
            sets.len() - 1
        });
        set_of_source[s] = id;
    }
    let k = sets.len();
    let mut cross = vec![vec![q(0); k]; k];
    for i in 0..k {
        for &a in &sets[i] {
            let d = g.distances_from(a);
            for j in 0..k {
                for &b in &sets[j] {
                    let dab = d[b].ok_or_else(|| MetricError::DisconnectedPair(g.name(a), g.name(b)))?;
                    if dab > cross[i][j] {
                        cross[i][j] = dab;
                    }
                }
            }
        }
    }
    let mut union_diam = vec![vec![q(0); k]; k];
    for i in 0..k {
        for j in 0..k {
            let v = [cross[i][i], cross[j][j], cross[i][j], cross[j][i]].into_iter().max().unwrap();
            union_diam[i][j] = v;
        }
    }
    Ok(TargetMetric { set_of_source, union_diam })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MemberJson {
    pub name: String,
    pub graph: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProjectionJson {
    pub target: usize,
    pub source: usize,
    pub vertices: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FamilyJson {
    pub members: Vec<MemberJson>,
    pub projections: Vec<ProjectionJson>,
}

/// `[t]_K`: `t` if `t ≥ K`, else 0.
pub fn cutoff(t: Q, k: Q) -> Q {
    if t >= k {
        t
    } else {
        q(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub axiom: u8,
    pub triple: [usize; 3],
    #[serde(with = "serde_q")]
    pub value: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub verdict: Verdict,
    #[serde(with = "serde_q")]
    pub xi: Q,
    #[serde(with = "serde_q")]
    pub xi_witnessed: Q,
    pub strong: bool,
    pub members: usize,
    pub checked_triples: usize,
    pub complete: bool,
    /// Number of `(X, Z)` pairs having a given count of `Y` with `d_Y(X, Z) > ξ`.
    pub axiom3_profile: BTreeMap<usize, usize>,
    pub axiom3_max: usize,
    pub violations: Vec<Violation>,
}

/// Checks axioms (1) and (2) at `xi`, and profiles axiom (3).
pub fn verify_axioms(f: &ProjectionFamily, xi: Q, pair_budget: usize) -> Result<AxiomReport, ProjectionError> {
    check(f, xi, pair_budget, false)
}

/// As [`verify_axioms`], also requiring `d_Y(X,Z) > ξ ⇒ π_X(Y) = π_X(Z)`.
pub fn check_strong_axioms(f: &ProjectionFamily, xi: Q) -> Result<AxiomReport, ProjectionError> {
    check(f, xi, usize::MAX, true)
}

struct XRow {
    violations: Vec<Violation>,
    critical: Q,
    checked: usize,
}

fn check(f: &ProjectionFamily, xi: Q, budget: usize, strong: bool) -> Result<AxiomReport, ProjectionError> {
    let n = f.len();
    let per_x = n.saturating_sub(1) * n.saturating_sub(2);
    let total = n * per_x;
    let complete = total <= budget;
    let rows_allowed = if complete { n } else { budget / per_x.max(1) };
    let mut axiom1_critical = q(0);
    let mut violations = Vec::new();
    for y in 0..n {
        for x in 0..n {
            if x != y {
                let d = f.projection_diameter(y, x)?;
                if d > axiom1_critical {
                    axiom1_critical = d;
                }
                if d > xi {
                    violations.push(Violation { axiom: 1, triple: [y, x, x], value: d });
                }
            }
        }
    }
    let rows: Vec<XRow> = (0..rows_allowed)
        .into_par_iter()
        .map(|x| {
            let mut row = XRow { violations: Vec::new(), critical: q(0), checked: 0 };
            for y in (0..n).filter(|&y| y != x) {
                for z in (0..n).filter(|&z| z != x && z != y) {
                    row.checked += 1;
                    let dy = f.projection_distance(y, x, z).expect("distinct indices");
                    let dx = f.projection_distance(x, y, z).expect("distinct indices");
                    let crit = dy.min(dx);
                    if crit > row.critical {
                        row.critical = crit;
                    }
                    if dy > xi && dx > xi {
                        row.violations.push(Violation { axiom: 2, triple: [x, y, z], value: dx });
                    }
                    if strong && f.project(x, y) != f.project(x, z) {
                        if dy > row.critical {
                            row.critical = dy;
                        }
                        if dy > xi {
                            row.violations.push(Violation { axiom: 4, triple: [x, y, z], value: dy });
                        }
                    }
                }
            }
            row
        })
        .collect();
    let mut critical = axiom1_critical;
    let mut checked = 0;
    for row in rows {
        violations.extend(row.violations);
        critical = critical.max(row.critical);
        checked += row.checked;
    }
    let xi_witnessed = least_passing(&f.observed_values(), critical);
    let mut profile = BTreeMap::new();
    let mut axiom3_max = 0;
    for x in 0..n {
        for z in x + 1..n {
            let count = (0..n).filter(|&y| y != x && y != z && f.projection_distance(y, x, z).unwrap() > xi).count();
            *profile.entry(count).or_insert(0) += 1;
            axiom3_max = axiom3_max.max(count);
        }
    }
    violations.sort();
    let report = AxiomReport {
        verdict: if violations.is_empty() { Verdict::Pass } else { Verdict::Fail },
        xi,
        xi_witnessed,
        strong,
        members: n,
        checked_triples: checked,
        complete,
        axiom3_profile: profile,
        axiom3_max,
        violations,
    };
    if complete {
        Ok(report)
    } else {
        Err(ProjectionError::BudgetExceeded(Box::new(report)))
    }
}

/// Binary search over the sorted observed values for the least one that is
/// at least the largest per-constraint critical value.
fn least_passing(sorted: &[Q], critical: Q) -> Q {
    let idx = sorted.partition_point(|v| *v < critical);
    sorted.get(idx).copied().unwrap_or(critical)
}

/// A vertex map from one member into a target graph.
#[derive(Clone, Debug)]
pub struct MemberMap {
    pub name: String,
    pub target: Arc<WeightedGraph>,
    pub map: Vec<VertexId>,
}

/// New family over the target graphs with `π'_{fY}(fX) = f(π_Y(X))`.
pub fn pushforward_family(base: &ProjectionFamily, maps: &[MemberMap], lipschitz: Q) -> Result<ProjectionFamily, ProjectionError> {
    if maps.len() != base.len() {
        return Err(ProjectionError::Parse(format!("expected {} maps, got {}", base.len(), maps.len())));
    }
    for (i, (member, m)) in base.members().iter().zip(maps).enumerate() {
        let g = &member.graph;
        if m.map.len() != g.vertex_count() || m.map.iter().any(|&v| v >= m.target.vertex_count()) {
            return Err(ProjectionError::Parse(format!("map {i} does not cover member {}", member.name)));
        }
        let mut rows: HashMap<VertexId, Vec<Option<Q>>> = HashMap::new();
        for (u, v, len) in g.edges() {
            let row = rows.entry(m.map[u]).or_insert_with(|| m.target.distances_from(m.map[u]));
            let d = row[m.map[v]];
            if d.map_or(true, |d| d > lipschitz * len) {
                return Err(ProjectionError::LipschitzViolation { member: i, u: g.name(u), v: g.name(v), lipschitz: fmt_q(&lipschitz) });
            }
        }
    }
    let members = maps.iter().map(|m| Member { name: m.name.clone(), graph: m.target.clone() }).collect();
    let table = base
        .projection_table()
        .into_iter()
        .map(|((t, s), set)| ((t, s), set.iter().map(|&v| maps[t].map[v]).collect()))
        .collect();
    ProjectionFamily::new(members, table)
}

/// Translates of free-group axes, truncated to a tree ball, with
/// nearest-point projections between the truncated segments.
#[derive(Clone, Debug)]
pub struct AxesFamily {
    pub tree: FreeTree,
    pub axes: Vec<Axis>,
    /// Parameter range of each axis inside the ball.
    pub segments: Vec<(i64, i64)>,
    pub family: Arc<ProjectionFamily>,
}

impl AxesFamily {
    pub fn vertex_word(&self, member: usize, v: VertexId) -> Word {
        self.axes[member].vertex(self.segments[member].0 + v as i64)
    }
}

/// Distinct translates of the axes of `words` through the ball of radius
/// `core`, each cut to the ball of radius `radius`; at most `max_members`.
pub fn axes_family(rank: u8, radius: usize, words: &[Word], core: usize, max_members: usize) -> Result<AxesFamily, ProjectionError> {
    let tree = FreeTree::new(rank, radius)?;
    let mut set = std::collections::BTreeSet::new();
    for w in words {
        for g in tree.ball(core.min(radius)) {
            for i in 0..w.len() {
                set.insert(Axis::new(w.clone(), g.mul(&w.prefix(i).inverse()))?.canonical());
            }
        }
    }
    let mut axes = Vec::new();
    let mut segments = Vec::new();
    for axis in set {
        if let Some((lo, hi)) = axis.params_in_ball(radius) {
            if hi > lo {
                axes.push(axis);
                segments.push((lo, hi));
            }
        }
    }
    if axes.is_empty() {
        return Err(ProjectionError::EmptyFamily);
    }
    if axes.len() > max_members {
        return Err(ProjectionError::Parse(format!("{} members exceed the limit of {max_members}", axes.len())));
    }
    let members = axes
        .iter()
        .zip(&segments)
        .map(|(a, &(lo, hi))| {
            let mut g = WeightedGraph::with_vertices((hi - lo + 1) as usize);
            for i in 1..g.vertex_count() {
                g.add_unit_edge(i - 1, i).expect("path edge");
            }
            Member { name: format!("{}·<{}>", a.conj, a.word), graph: Arc::new(g) }
        })
        .collect();
    // Nearest point on a finite segment of a line is the clamped projection.
    let seg_distance = |s: usize, x: &Word| -> usize {
        let (lo, hi) = segments[s];
        let j = axes[s].project_vertex(x).0.clamp(lo, hi);
        tree.distance(x, &axes[s].vertex(j))
    };
    let n = axes.len();
    let rows: Vec<Vec<((usize, usize), Vec<VertexId>)>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let (lo, hi) = segments[t];
            let verts: Vec<Word> = (lo..=hi).map(|j| axes[t].vertex(j)).collect();
            (0..n)
                .filter(|&s| s != t)
                .map(|s| {
                    let d: Vec<usize> = verts.iter().map(|x| seg_distance(s, x)).collect();
                    let best = *d.iter().min().unwrap();
                    ((t, s), (0..d.len()).filter(|&i| d[i] == best).collect())
                })
                .collect()
        })
        .collect();
    let family = ProjectionFamily::new(members, rows.into_iter().flatten().collect())?;
    Ok(AxesFamily { tree, axes, segments, family: Arc::new(family) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Arc<WeightedGraph> {
        let mut g = WeightedGraph::with_vertices(n);
        for i in 0..n - 1 {
            g.add_unit_edge(i, i + 1).unwrap();
        }
        Arc::new(g)
    }

    fn three_lines() -> ProjectionFamily {
        let members = (0..3).map(|i| Member { name: format!("L{i}"), graph: path(7) }).collect();
        let mut t = BTreeMap::new();
        t.insert((0, 1), vec![1]);
        t.insert((0, 2), vec![5]);
        t.insert((1, 0), vec![3]);
        t.insert((1, 2), vec![3]);
        t.insert((2, 0), vec![3]);
        t.insert((2, 1), vec![3]);
        ProjectionFamily::new(members, t).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff(q(5), q(3)), q(5));
        assert_eq!(cutoff(q(2), q(3)), q(0));
        assert_eq!(cutoff(q(3), q(3)), q(3));
    }

    #[test]
    fn distances_and_clash() {
        let f = three_lines();
        assert_eq!(f.projection_distance(0, 1, 2).unwrap(), q(4));
        assert_eq!(f.projection_distance(0, 2, 1).unwrap(), q(4));
        assert_eq!(f.projection_distance(0, 1, 1).unwrap(), q(0));
        assert!(matches!(f.projection_distance(0, 0, 1), Err(ProjectionError::IndexClash(0))));
    }

    #[test]
    fn extended_cases() {
        let f = three_lines();
        let v = FamilyPoint::Vertex;
        assert_eq!(f.extended_distance(0, v(0, 0), v(0, 6)).unwrap(), q(6));
        assert_eq!(f.extended_distance(0, v(0, 0), FamilyPoint::Member(2)).unwrap(), q(5));
        assert_eq!(f.extended_distance(0, v(1, 0), FamilyPoint::Member(2)).unwrap(), q(4));
        assert_eq!(f.extended_distance(0, v(1, 0), v(2, 6)).unwrap(), q(4));
    }

    #[test]
    fn single_member_passes() {
        let f = ProjectionFamily::new(vec![Member { name: "only".into(), graph: path(3) }], BTreeMap::new()).unwrap();
        let r = verify_axioms(&f, q(0), 10).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.xi_witnessed, q(0));
        assert_eq!(check_strong_axioms(&f, q(0)).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn planted_axiom1_violation() {
        let f = three_lines().with_projection(1, 0, vec![0, 2]).unwrap();
        let r = verify_axioms(&f, q(1), usize::MAX).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.violations[0], Violation { axiom: 1, triple: [1, 0, 0], value: q(2) });
    }

    #[test]
    fn witnessed_xi_is_least_passing() {
        let f = three_lines();
        let r = verify_axioms(&f, q(0), usize::MAX).unwrap();
        let xi = r.xi_witnessed;
        assert_eq!(verify_axioms(&f, xi, usize::MAX).unwrap().verdict, Verdict::Pass);
        if xi > q(0) {
            let below = f.observed_values().into_iter().filter(|v| *v < xi).max().unwrap();
            assert_eq!(verify_axioms(&f, below, usize::MAX).unwrap().verdict, Verdict::Fail);
        }
    }

    #[test]
    fn budget_is_reported() {
        let f = three_lines();
        match verify_axioms(&f, q(0), 1) {
            Err(ProjectionError::BudgetExceeded(r)) => assert!(!r.complete),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn planted_strong_violation() {
        let f = three_lines();
        // d_0(1, 2) = 4 > 1 yet π_1(0) ≠ π_1(2) after corruption
        let f = f.with_projection(1, 2, vec![4]).unwrap();
        let r = check_strong_axioms(&f, q(1)).unwrap();
        assert!(r.violations.iter().any(|v| v.axiom == 4));
    }

    #[test]
    fn pushforward_scaling() {
        let f = three_lines();
        let mut doubled = WeightedGraph::with_vertices(7);
        for i in 0..6 {
            doubled.add_edge(i, i + 1, q(2)).unwrap();
        }
        let doubled = Arc::new(doubled);
        let maps: Vec<MemberMap> = (0..3).map(|i| MemberMap { name: format!("D{i}"), target: doubled.clone(), map: (0..7).collect() }).collect();
        assert!(matches!(pushforward_family(&f, &maps, q(1)), Err(ProjectionError::LipschitzViolation { .. })));
        let g = pushforward_family(&f, &maps, q(2)).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                for z in 0..3 {
                    if y != x && y != z {
                        assert_eq!(g.projection_distance(y, x, z).unwrap(), q(2) * f.projection_distance(y, x, z).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let f = three_lines();
        let j = f.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back = ProjectionFamily::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.projection_table(), f.projection_table());
    }
}
