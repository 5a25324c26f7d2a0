//! Cyclic-subgroup distortion in explicit matrix groups, measured on exact
//! word balls.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{fmt_q, parse_q, q, Q};

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("word ball exceeds the cap of {cap} elements at radius {radius}")]
    BallCapExceeded { cap: usize, radius: usize },
    #[error("powers of {element} stay in the ball only up to n = {reached}, need {needed}")]
    InsufficientRange { element: String, reached: u64, needed: u64 },
    #[error("invalid presentation: {0}")]
    Invalid(String),
}

/// Default cap on word-ball size, overridden by `QTLAB_CAP`.
pub const DEFAULT_CAP: usize = 3_000_000;

pub fn ball_cap() -> usize {
    std::env::var("QTLAB_CAP").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_CAP)
}

/// Square matrix over `Q`, row-major; its entries are the element key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Matrix {
    n: usize,
    entries: Box<[Q]>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<Q>]) -> Result<Self, DistortionError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(DistortionError::Invalid("matrix is not square".into()));
        }
        Ok(Self { n, entries: rows.concat().into_boxed_slice() })
    }

    pub fn from_ints(rows: &[&[i64]]) -> Self {
        let rows: Vec<Vec<Q>> = rows.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect();
        Self::from_rows(&rows).expect("square integer matrix")
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![q(0); n * n];
        for i in 0..n {
            entries[i * n + i] = q(1);
        }
        Self { n, entries: entries.into_boxed_slice() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Q {
        self.entries[i * self.n + j]
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut entries = vec![q(0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == q(0) {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        Matrix { n, entries: entries.into_boxed_slice() }
    }

    /// Gauss-Jordan inverse.
    pub fn inverse(&self) -> Option<Matrix> {
        let n = self.n;
        let mut a: Vec<Vec<Q>> = (0..n).map(|i| self.entries[i * n..(i + 1) * n].to_vec()).collect();
        let mut inv: Vec<Vec<Q>> = (0..n).map(|i| (0..n).map(|j| q((i == j) as i64)).collect()).collect();
        for col in 0..n {
            let pivot = (col..n).find(|&r| a[r][col] != q(0))?;
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col];
            for j in 0..n {
                a[col][j] /= p;
                inv[col][j] /= p;
            }
            for r in (0..n).filter(|&r| r != col) {
                let f = a[r][col];
                if f != q(0) {
                    for j in 0..n {
                        let (ac, ic) = (a[col][j], inv[col][j]);
                        a[r][j] -= f * ac;
                        inv[r][j] -= f * ic;
                    }
                }
            }
        }
        Matrix::from_rows(&inv).ok()
    }

    pub fn pow(&self, n: u64) -> Matrix {
        let mut out = Matrix::identity(self.n);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        out
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = (0..self.n)
            .map(|i| {
                let r: Vec<String> = (0..self.n).map(|j| fmt_q(&self.get(i, j))).collect();
                format!("[{}]", r.join(","))
            })
            .collect();
        write!(f, "[{}]", rows.join(","))
    }
}

/// Labelled generators; inverses are appended with labels in upper case.
#[derive(Clone, Debug)]
pub struct MatrixGroupPresentation {
    pub name: String,
    pub labels: Vec<String>,
    pub generators: Vec<Matrix>,
}

impl MatrixGroupPresentation {
    pub fn new(name: &str, gens: Vec<(String, Matrix)>) -> Result<Self, DistortionError> {
        let Some(dim) = gens.first().map(|(_, m)| m.dim()) else {
            return Err(DistortionError::Invalid("no generators".into()));
        };
        let id = Matrix::identity(dim);
        let mut labels = Vec::new();
        let mut generators: Vec<Matrix> = Vec::new();
        for (label, m) in gens {
            if m.dim() != dim {
                return Err(DistortionError::Invalid(format!("generator {label} has the wrong size")));
            }
            if m == id {
                return Err(DistortionError::Invalid(format!("generator {label} is the identity")));
            }
            let inv = m.inverse().ok_or_else(|| DistortionError::Invalid(format!("generator {label} is singular")))?;
            let inv_label = if label.chars().all(|c| c.is_lowercase()) { label.to_uppercase() } else { format!("{label}^-1") };
            for (l, g) in [(label, m), (inv_label, inv)] {
                if !generators.contains(&g) {
                    labels.push(l);
                    generators.push(g);
                }
            }
        }
        Ok(Self { name: name.to_string(), labels, generators })
    }

    pub fn identity(&self) -> Matrix {
        Matrix::identity(self.generators[0].dim())
    }

    pub fn generator(&self, label: &str) -> Option<&Matrix> {
        self.labels.iter().position(|l| l == label).map(|i| &self.generators[i])
    }

    /// Evaluates a word in generator labels, separated by whitespace.
    pub fn eval(&self, word: &str) -> Result<Matrix, DistortionError> {
        word.split_whitespace().try_fold(self.identity(), |acc, l| {
            let g = self.generator(l).ok_or_else(|| DistortionError::Invalid(format!("unknown generator {l}")))?;
            Ok(acc.mul(g))
        })
    }

    /// Parses the `generators` table of a `[lattice.<name>]` section; entries are integers or `p/q` strings.
    pub fn from_toml(name: &str, table: &LatticeSpec) -> Result<Self, DistortionError> {
        let mut gens = Vec::new();
        for (label, rows) in &table.generators {
            let rows = rows
                .iter()
                .map(|r| r.iter().map(|e| e.to_q()).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(DistortionError::Invalid)?;
            gens.push((label.clone(), Matrix::from_rows(&rows)?));
        }
        Self::new(name, gens)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Int(i64),
    Text(String),
}

impl Entry {
    fn to_q(&self) -> Result<Q, String> {
        match self {
            Entry::Int(n) => Ok(q(*n)),
            Entry::Text(s) => parse_q(s),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub generators: BTreeMap<String, Vec<Vec<Entry>>>,
    /// Element to profile, as a word in generator labels.
    pub element: String,
    pub radius: usize,
    #[serde(default)]
    pub exponent_min: Option<f64>,
    #[serde(default)]
    pub exponent_max: Option<f64>,
    /// Profile `|g^(bᵏ)|` instead of `|gⁿ|`.
    #[serde(default)]
    pub power_base: Option<u64>,
    /// `(α, β)` with `|g^(bᵏ)| ≤ α·k + β` required for every reachable `k`.
    #[serde(default)]
    pub log_bound: Option<[u32; 2]>,
}

pub fn heisenberg() -> MatrixGroupPresentation {
    MatrixGroupPresentation::new(
        "heisenberg",
        vec![
            ("x".into(), Matrix::from_ints(&[&[1, 1, 0], &[0, 1, 0], &[0, 0, 1]])),
            ("y".into(), Matrix::from_ints(&[&[1, 0, 0], &[0, 1, 1], &[0, 0, 1]])),
        ],
    )
    .expect("valid presentation")
}

/// `ℤ² ⋊ ℤ` with the monodromy `[[2,1],[1,1]]`, as integer affine maps of the plane.
pub fn sol() -> MatrixGroupPresentation {
    MatrixGroupPresentation::new(
        "sol",
        vec![
            ("a".into(), Matrix::from_ints(&[&[1, 0, 1], &[0, 1, 0], &[0, 0, 1]])),
            ("b".into(), Matrix::from_ints(&[&[1, 0, 0], &[0, 1, 1], &[0, 0, 1]])),
            ("t".into(), Matrix::from_ints(&[&[2, 1, 0], &[1, 1, 0], &[0, 0, 1]])),
        ],
    )
    .expect("valid presentation")
}

/// `BS(1, n)` as the affine maps `x ↦ nx` and `x ↦ x + 1`.
pub fn baumslag_solitar(n: i64) -> MatrixGroupPresentation {
    MatrixGroupPresentation::new(
        &format!("bs1{n}"),
        vec![
            ("t".into(), Matrix::from_ints(&[&[n, 0], &[0, 1]])),
            ("a".into(), Matrix::from_ints(&[&[1, 1], &[0, 1]])),
        ],
    )
    .expect("valid presentation")
}

pub fn z2() -> MatrixGroupPresentation {
    MatrixGroupPresentation::new(
        "z2",
        vec![
            ("a".into(), Matrix::from_ints(&[&[1, 0, 1], &[0, 1, 0], &[0, 0, 1]])),
            ("b".into(), Matrix::from_ints(&[&[1, 0, 0], &[0, 1, 1], &[0, 0, 1]])),
        ],
    )
    .expect("valid presentation")
}

/// Exact word lengths of every element of length at most `radius`.
#[derive(Clone, Debug)]
pub struct WordBall {
    pub radius: usize,
    pub table: HashMap<Matrix, u32>,
    /// Number of elements of each length.
    pub sizes: Vec<usize>,
    /// Inverses of the elements of length exactly `radius`.
    sphere_inverses: Vec<Matrix>,
}

impl WordBall {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn length(&self, g: &Matrix) -> Option<u32> {
        self.table.get(g).copied()
    }

    /// Exact word length up to `2·radius`: a geodesic longer than the radius
    /// passes through the sphere, so `|g| = radius + min |h⁻¹g|` over `h` there.
    pub fn extended_length(&self, g: &Matrix) -> Option<u32> {
        if let Some(l) = self.length(g) {
            return Some(l);
        }
        self.sphere_inverses.par_iter().filter_map(|hi| self.length(&hi.mul(g))).min().map(|l| l + self.radius as u32)
    }
}

pub fn word_ball(p: &MatrixGroupPresentation, radius: usize, cap: usize) -> Result<WordBall, DistortionError> {
    let id = p.identity();
    let mut table = HashMap::from([(id.clone(), 0u32)]);
    let mut frontier = vec![id];
    let mut sizes = vec![1];
    if cap == 0 {
        return Err(DistortionError::BallCapExceeded { cap, radius: 0 });
    }
    for r in 1..=radius {
        let products: Vec<Vec<Matrix>> =
            frontier.par_iter().map(|g| p.generators.iter().map(|s| g.mul(s)).collect()).collect();
        let mut layer = Vec::new();
        for h in products.into_iter().flatten() {
            if !table.contains_key(&h) {
                table.insert(h.clone(), r as u32);
                layer.push(h);
            }
        }
        if table.len() > cap {
            return Err(DistortionError::BallCapExceeded { cap, radius: r });
        }
        sizes.push(layer.len());
        frontier = layer;
    }
    let sphere_inverses = frontier.iter().map(|h| h.inverse().expect("group element")).collect();
    Ok(WordBall { radius, table, sizes, sphere_inverses })
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionRow {
    pub n: u64,
    pub length: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionProfile {
    pub group: String,
    pub element: String,
    pub rows: Vec<DistortionRow>,
    /// Least-squares slope of `log |gⁿ|` against `log n` over `fit_range`.
    pub exponent: f64,
    pub residual: f64,
    pub fit_range: (u64, u64),
}

impl DistortionProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,length\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.n, r.length));
        }
        out
    }
}

/// `|gⁿ|` for `n = 1..N`, with `N` the last power of length at most twice
/// the radius before the first longer one, fitted over the decade `[N/10, N]`.
pub fn distortion_profile(p: &MatrixGroupPresentation, label: &str, g: &Matrix, ball: &WordBall) -> Result<DistortionProfile, DistortionError> {
    let mut rows = Vec::new();
    let mut power = g.clone();
    let mut n = 1u64;
    while let Some(length) = ball.extended_length(&power) {
        rows.push(DistortionRow { n, length });
        power = power.mul(g);
        n += 1;
    }
    let reached = rows.last().map_or(0, |r| r.n);
    if reached < 10 {
        return Err(DistortionError::InsufficientRange { element: label.to_string(), reached, needed: 10 });
    }
    let lo = reached.div_ceil(10);
    let fit: Vec<&DistortionRow> = rows.iter().filter(|r| r.n >= lo).collect();
    let linear = rows.iter().all(|r| r.length as u64 * rows[0].n == rows[0].length as u64 * r.n);
    let (exponent, residual) = if linear {
        (1.0, 0.0)
    } else {
        let pts: Vec<(f64, f64)> = fit.iter().map(|r| ((r.n as f64).ln(), (r.length as f64).ln())).collect();
        least_squares(&pts)
    };
    Ok(DistortionProfile { group: p.name.clone(), element: label.to_string(), rows, exponent, residual, fit_range: (lo, reached) })
}

/// Slope and root-mean-square residual of the least-squares line.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
    (slope, rms)
}

/// Pairs `(g, h)` of the ball of radius `radius/2` with `|gh| > |g| + |h|`.
pub fn subadditivity_violations(ball: &WordBall) -> usize {
    let mut half: Vec<&Matrix> = ball.table.iter().filter(|(_, &l)| l as usize <= ball.radius / 2).map(|(g, _)| g).collect();
    half.sort();
    half.par_iter()
        .map(|g| {
            let lg = ball.table[*g];
            half.iter()
                .filter(|h| ball.length(&g.mul(h)).is_some_and(|l| l > lg + ball.table[**h]))
                .count()
        })
        .sum()
}

/// `(k, |g^(bᵏ)|)` while the length is within reach of the ball.
pub fn geometric_power_lengths(g: &Matrix, base: u64, ball: &WordBall) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut power = g.clone();
    for k in 0.. {
        let Some(l) = ball.extended_length(&power) else { break };
        out.push((k, l));
        power = power.pow(base);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_zero_is_the_identity() {
        let p = heisenberg();
        let b = word_ball(&p, 0, 10).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.length(&p.identity()), Some(0));
    }

    #[test]
    fn abelian_lengths_are_l1() {
        let p = z2();
        let b = word_ball(&p, 5, 1000).unwrap();
        for (g, &l) in &b.table {
            let (m, n) = (g.get(0, 2), g.get(1, 2));
            assert_eq!(q(l as i64), num_traits::Signed::abs(&m) + num_traits::Signed::abs(&n));
        }
        let prof = distortion_profile(&p, "a", p.generator("a").unwrap(), &word_ball(&p, 12, 10_000).unwrap()).unwrap();
        assert_eq!(prof.exponent, 1.0);
    }

    #[test]
    fn heisenberg_commutator_has_length_four() {
        let p = heisenberg();
        let b = word_ball(&p, 6, 100_000).unwrap();
        let z = p.eval("x y X Y").unwrap();
        assert_eq!(z, Matrix::from_ints(&[&[1, 0, 1], &[0, 1, 0], &[0, 0, 1]]));
        assert_eq!(b.length(&z), Some(4));
        assert_eq!(subadditivity_violations(&word_ball(&p, 4, 100_000).unwrap()), 0);
    }

    #[test]
    fn cap_is_enforced_and_inverses_exact() {
        assert!(matches!(word_ball(&sol(), 10, 100), Err(DistortionError::BallCapExceeded { cap: 100, .. })));
        let bs = baumslag_solitar(2);
        let t = bs.generator("t").unwrap();
        assert_eq!(bs.generator("T").unwrap().get(0, 0), crate::rational::qr(1, 2));
        assert_eq!(t.mul(bs.generator("T").unwrap()), bs.identity());
    }

    #[test]
    fn short_range_is_rejected() {
        let p = z2();
        let b = word_ball(&p, 3, 1000).unwrap();
        assert!(matches!(distortion_profile(&p, "a", p.generator("a").unwrap(), &b), Err(DistortionError::InsufficientRange { .. })));
    }
}
