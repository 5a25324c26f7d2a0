use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MetricError;

/// A freely reduced word. Letter `k > 0` is the k-th generator, `-k` its inverse.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<i8>);

fn letter_key(x: i8) -> i16 {
    if x > 0 {
        2 * (x as i16 - 1)
    } else {
        2 * (-x as i16 - 1) + 1
    }
}

impl Ord for Word {
    /// Shortlex with letter order a < A < b < B < ...
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.iter().map(|&x| letter_key(x)).cmp(other.0.iter().map(|&x| letter_key(x))))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letter(x: i8) -> Self {
        Word(vec![x])
    }

    /// Builds a word from raw letters, reducing as it goes.
    pub fn from_letters(letters: &[i8]) -> Self {
        let mut w = Vec::with_capacity(letters.len());
        for &x in letters {
            push_reduce(&mut w, x);
        }
        Word(w)
    }

    pub fn letters(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_generator(&self) -> u8 {
        self.0.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn inverse(&self) -> Self {
        Word(self.0.iter().rev().map(|&x| -x).collect())
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut w = self.0.clone();
        for &x in &other.0 {
            push_reduce(&mut w, x);
        }
        Word(w)
    }

    pub fn pow(&self, k: i64) -> Word {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut out = Word::identity();
        for _ in 0..k.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n].to_vec())
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        match (self.0.first(), self.0.last()) {
            (Some(&a), Some(&b)) => self.0.len() == 1 || a != -b,
            _ => true,
        }
    }

    /// True if the word equals `u^k` for some `k ≥ 2`.
    pub fn is_proper_power(&self) -> bool {
        let n = self.0.len();
        (1..n).any(|p| n % p == 0 && (p..n).all(|i| self.0[i] == self.0[i - p]))
    }

    /// Cyclically reduced words are conjugate iff they are cyclic rotations.
    pub fn is_conjugate_to(&self, other: &Word) -> bool {
        if self.len() != other.len() {
            return false;
        }
        if self.is_empty() {
            return true;
        }
        let n = self.len();
        (0..n).any(|r| (0..n).all(|i| self.0[(i + r) % n] == other.0[i]))
    }

    pub fn parse(s: &str) -> Result<Word, MetricError> {
        let s = s.trim();
        if s.is_empty() || s == "1" || s == "e" {
            return Ok(Word::identity());
        }
        let mut letters = Vec::new();
        for c in s.chars() {
            let x = match c {
                'a'..='z' => (c as u8 - b'a' + 1) as i8,
                'A'..='Z' => -((c as u8 - b'A' + 1) as i8),
                _ => return Err(MetricError::Parse(format!("bad word `{s}`"))),
            };
            letters.push(x);
        }
        Ok(Word::from_letters(&letters))
    }
}

fn push_reduce(w: &mut Vec<i8>, x: i8) {
    if w.last() == Some(&-x) {
        w.pop();
    } else {
        w.push(x);
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for &x in &self.0 {
            let c = if x > 0 { (b'a' + x as u8 - 1) as char } else { (b'A' + (-x) as u8 - 1) as char };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Word::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Cayley tree of the free group of the given rank, expanded lazily to `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreeTree {
    pub rank: u8,
    pub radius: usize,
}

impl FreeTree {
    pub fn new(rank: u8, radius: usize) -> Result<Self, MetricError> {
        if !(2..=26).contains(&rank) {
            return Err(MetricError::Parse(format!("free rank {rank} outside 2..=26")));
        }
        Ok(Self { rank, radius })
    }

    pub fn generators(&self) -> Vec<i8> {
        (1..=self.rank as i8).flat_map(|k| [k, -k]).collect()
    }

    pub fn contains(&self, w: &Word) -> bool {
        w.len() <= self.radius && w.max_generator() <= self.rank
    }

    pub fn check(&self, w: &Word) -> Result<(), MetricError> {
        if w.max_generator() > self.rank {
            return Err(MetricError::Parse(format!("word {w} uses a generator beyond rank {}", self.rank)));
        }
        if w.len() > self.radius {
            return Err(MetricError::RadiusExceeded(format!("{w} beyond radius {}", self.radius)));
        }
        Ok(())
    }

    pub fn distance(&self, u: &Word, v: &Word) -> usize {
        u.inverse().mul(v).len()
    }

    pub fn neighbors(&self, w: &Word) -> Vec<Word> {
        self.generators().into_iter().map(|x| w.mul(&Word::letter(x))).collect()
    }

    /// All vertices of the ball of radius `r`, in shortlex order.
    pub fn ball(&self, r: usize) -> Vec<Word> {
        let mut out = vec![Word::identity()];
        let mut layer = vec![Word::identity()];
        for _ in 0..r {
            let mut next = Vec::new();
            for w in &layer {
                for x in self.generators() {
                    if w.0.last() != Some(&-x) {
                        let mut v = w.0.clone();
                        v.push(x);
                        next.push(Word(v));
                    }
                }
            }
            next.sort();
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }

    /// Vertices of the geodesic from `u` to `v`, both included.
    pub fn geodesic(&self, u: &Word, v: &Word) -> Vec<Word> {
        let step = u.inverse().mul(v);
        (0..=step.len()).map(|i| u.mul(&step.prefix(i))).collect()
    }
}

/// The axis `{g·w^k·u : u prefix of w}` of a cyclically reduced word `w`,
/// parameterized by `j = k·|w| + |u|`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Axis {
    pub word: Word,
    pub conj: Word,
}

impl Axis {
    pub fn new(word: Word, conj: Word) -> Result<Self, MetricError> {
        if word.is_empty() {
            return Err(MetricError::BadAxis("trivial axis word".into()));
        }
        if !word.is_cyclically_reduced() {
            return Err(MetricError::BadAxis(format!("{word} is not cyclically reduced")));
        }
        Ok(Self { word, conj })
    }

    pub fn through_identity(word: Word) -> Result<Self, MetricError> {
        Self::new(word, Word::identity())
    }

    pub fn period(&self) -> i64 {
        self.word.len() as i64
    }

    pub fn vertex(&self, j: i64) -> Word {
        let p = self.period();
        let k = j.div_euclid(p);
        let i = j.rem_euclid(p) as usize;
        self.conj.mul(&self.word.pow(k)).mul(&self.word.prefix(i))
    }

    /// Parameter and vertex of the nearest point of the axis to `x`.
    pub fn project_vertex(&self, x: &Word) -> (i64, Word) {
        let y = self.conj.inverse().mul(x);
        let n = self.word.len();
        let fwd = |i: usize| self.word.0[i % n];
        let bwd = |i: usize| -self.word.0[n - 1 - (i % n)];
        let lf = y.0.iter().enumerate().take_while(|&(i, &c)| c == fwd(i)).count();
        let lb = y.0.iter().enumerate().take_while(|&(i, &c)| c == bwd(i)).count();
        let j = if lf > 0 { lf as i64 } else { -(lb as i64) };
        (j, self.vertex(j))
    }

    pub fn distance_to(&self, x: &Word) -> usize {
        let (_, p) = self.project_vertex(x);
        p.inverse().mul(x).len()
    }

    pub fn param_of(&self, x: &Word) -> Option<i64> {
        let (j, p) = self.project_vertex(x);
        (p == *x).then_some(j)
    }

    /// Same line, conjugator chosen so the identity projects into `[0, |w|)`.
    pub fn canonical(&self) -> Axis {
        let (j, _) = self.project_vertex(&Word::identity());
        let k = j.div_euclid(self.period());
        Axis { word: self.word.clone(), conj: self.conj.mul(&self.word.pow(k)) }
    }

    /// Parameter range of the axis inside the ball of radius `r`, if nonempty.
    pub fn params_in_ball(&self, r: usize) -> Option<(i64, i64)> {
        let (j0, p) = self.project_vertex(&Word::identity());
        if p.len() > r {
            return None;
        }
        let mut lo = j0;
        while self.vertex(lo - 1).len() <= r {
            lo -= 1;
        }
        let mut hi = j0;
        while self.vertex(hi + 1).len() <= r {
            hi += 1;
        }
        Some((lo, hi))
    }

    /// Left translate `h·axis`.
    pub fn translate(&self, h: &Word) -> Axis {
        Axis { word: self.word.clone(), conj: h.mul(&self.conj) }
    }
}

/// Source of a tree projection.
#[derive(Clone, Debug)]
pub enum TreeSource {
    Vertex(Word),
    Axis(Axis),
}

/// Projection of a line onto an axis: parameters of the target at minimal distance.
/// Errors if the lines share an unbounded ray (commensurable axes).
pub fn project_axis_onto_axis(target: &Axis, source: &Axis) -> Result<Vec<i64>, MetricError> {
    let slack = target.period() + source.period();
    let d0 = target.distance_to(&source.vertex(0)) as i64;
    let reach = d0 + 2 * slack + 2;
    let mut params = BTreeSet::new();
    for j in -reach..=reach {
        params.insert(target.project_vertex(&source.vertex(j)).0);
    }
    let lo = *params.iter().next().unwrap();
    let hi = *params.iter().next_back().unwrap();
    let edge_lo = target.project_vertex(&source.vertex(-reach)).0;
    let edge_hi = target.project_vertex(&source.vertex(reach)).0;
    let stable = edge_lo == target.project_vertex(&source.vertex(-reach + 1)).0
        && edge_hi == target.project_vertex(&source.vertex(reach - 1)).0;
    if !stable || hi - lo >= slack {
        return Err(MetricError::RadiusExceeded(format!(
            "axes {} and {} share an unbounded segment",
            target.conj.mul(&target.word),
            source.conj.mul(&source.word)
        )));
    }
    Ok((lo..=hi).collect())
}

/// Vertices of the target axis at minimal distance from the source, sorted by parameter.
pub fn tree_projection(t: &FreeTree, target: &Axis, source: &TreeSource) -> Result<Vec<Word>, MetricError> {
    let params = match source {
        TreeSource::Vertex(x) => {
            t.check(x)?;
            vec![target.project_vertex(x).0]
        }
        TreeSource::Axis(a) => project_axis_onto_axis(target, a)?,
    };
    let out: Vec<Word> = params.iter().map(|&j| target.vertex(j)).collect();
    for w in &out {
        t.check(w)?;
    }
    Ok(out)
}

/// Closest pair between two axes: parameters on each. Intersecting axes
/// give the intersection vertex of least parameter on `a`, which commutes
/// with left translation.
pub fn closest_params(a: &Axis, b: &Axis) -> Result<(i64, i64), MetricError> {
    let on_a = project_axis_onto_axis(a, b)?;
    let on_b = project_axis_onto_axis(b, a)?;
    if on_a.len() > 1 || a.distance_to(&b.vertex(on_b[0])) == 0 {
        let ja = on_a[0];
        let jb = b.param_of(&a.vertex(ja)).expect("intersection vertex lies on both axes");
        return Ok((ja, jb));
    }
    Ok((on_a[0], on_b[0]))
}
