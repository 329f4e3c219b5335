//! Lattice geometry: points of `Z^2`, finite domains with absorbing
//! boundaries, and unrooted oriented nearest-neighbour loops.
//!
//! Conventions used throughout the crate:
//!
//! * all distances and annuli are measured in the sup norm `‖v‖∞ = max(|x|,|y|)`;
//! * a *domain* is a finite vertex set together with a designated absorbing
//!   (killed) subset; lattice points outside the vertex set act as implicit
//!   killing, so every random walk started inside eventually dies;
//! * a *loop* is an equivalence class of closed nearest-neighbour walks under
//!   rotation of the starting point.  Orientation is part of the data: a loop
//!   and its time reversal are distinct unless some rotation maps one to the
//!   other.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Index of a vertex inside a [`Domain`] (position in the lex-sorted vertex list).
pub type VertexId = u32;

/// Index of an edge inside a [`Domain`].
pub type EdgeId = u32;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("invalid domain parameters: {0}")]
    InvalidDomain(String),
    #[error("not a loop: {0}")]
    NotALoop(String),
    #[error("custom domains have no plain-text descriptor")]
    CustomDescriptor,
    #[error("cannot parse domain descriptor `{0}`")]
    BadDescriptor(String),
}

/// A point of the square lattice `Z^2`.
///
/// The derived `Ord` (x first, then y) is the lexicographic order used for
/// vertex enumeration and loop canonicalization everywhere in this crate.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x: i32,
    pub y: i32,
}

/// Shorthand constructor for a lattice point.
pub fn pt(x: i32, y: i32) -> LatticePoint {
    LatticePoint { x, y }
}

impl LatticePoint {
    /// Sup norm `max(|x|, |y|)`.
    pub fn norm_inf(self) -> i32 {
        self.x.abs().max(self.y.abs())
    }

    /// Sup-norm distance to another point.
    pub fn dist_inf(self, other: LatticePoint) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// The four lattice neighbours, in the fixed order `+x, -x, +y, -y`.
    pub fn neighbors(self) -> [LatticePoint; 4] {
        [
            pt(self.x + 1, self.y),
            pt(self.x - 1, self.y),
            pt(self.x, self.y + 1),
            pt(self.x, self.y - 1),
        ]
    }

    /// True if the two points are nearest neighbours.
    pub fn is_adjacent(self, other: LatticePoint) -> bool {
        (self.x - other.x).abs() + (self.y - other.y).abs() == 1
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl FromStr for LatticePoint {
    type Err = LatticeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut it = s.split(',');
        let bad = || LatticeError::BadDescriptor(s.to_string());
        let x = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let y = it.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(pt(x, y))
    }
}

/// The shape of a domain.
///
/// * `Box(n)`: all `v` with `‖v‖∞ ≤ n`; killed set is the sphere `‖v‖∞ = n`.
/// * `HalfPlaneBox(n)`: all `v` in `Box(n)` with `y ≥ 0`; killed set is the
///   row `y = 0` together with the outer square sites with `y ≥ 1`.
/// * `Annulus(k, n)`: all `v` with `k ≤ ‖v‖∞ ≤ n`; killed set is both spheres.
/// * `Custom`: explicit vertex and killed sets.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum DomainLabel {
    Box { n: i32 },
    HalfPlaneBox { n: i32 },
    Annulus { k: i32, n: i32 },
    Custom,
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainLabel::Box { n } => write!(f, "box {n}"),
            DomainLabel::HalfPlaneBox { n } => write!(f, "halfplane {n}"),
            DomainLabel::Annulus { k, n } => write!(f, "annulus {k} {n}"),
            DomainLabel::Custom => write!(f, "custom"),
        }
    }
}

impl FromStr for DomainLabel {
    type Err = LatticeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let bad = || LatticeError::BadDescriptor(s.to_string());
        let num = |t: &str| t.parse::<i32>().map_err(|_| bad());
        match toks.as_slice() {
            ["box", n] => Ok(DomainLabel::Box { n: num(n)? }),
            ["halfplane", n] => Ok(DomainLabel::HalfPlaneBox { n: num(n)? }),
            ["annulus", k, n] => Ok(DomainLabel::Annulus { k: num(k)?, n: num(n)? }),
            _ => Err(bad()),
        }
    }
}

/// Dense rectangle-backed index of lattice points.
struct Grid {
    x0: i32,
    y0: i32,
    w: i32,
    h: i32,
    cells: Vec<i32>, // -1 = absent, otherwise VertexId
}

impl Grid {
    fn get(&self, p: LatticePoint) -> Option<VertexId> {
        if p.x < self.x0 || p.y < self.y0 || p.x >= self.x0 + self.w || p.y >= self.y0 + self.h {
            return None;
        }
        let idx = (p.y - self.y0) as usize * self.w as usize + (p.x - self.x0) as usize;
        let v = self.cells[idx];
        (v >= 0).then_some(v as VertexId)
    }
}

/// A finite domain: lex-sorted vertices, a killed (absorbing) subset, and the
/// unit edges with both endpoints in the vertex set.
///
/// Interior vertices are the non-killed ones.  Points outside the vertex set
/// behave as killing with value 0; for the labelled domain shapes every
/// interior vertex has all four neighbours inside the vertex set, so no walk
/// ever "leaks" past the designated boundary.
pub struct Domain {
    label: DomainLabel,
    points: Vec<LatticePoint>,
    killed: Vec<bool>,
    edges: Vec<(VertexId, VertexId)>,
    interior: Vec<VertexId>,
    boundary: Vec<VertexId>,
    grid: Grid,
}

impl Domain {
    /// Build one of the labelled domain shapes.
    pub fn build(label: DomainLabel) -> Result<Domain, LatticeError> {
        match label {
            DomainLabel::Box { n } => {
                if n < 0 {
                    return Err(LatticeError::InvalidDomain(format!("box radius {n} < 0")));
                }
                let mut pts = Vec::new();
                for x in -n..=n {
                    for y in -n..=n {
                        pts.push(pt(x, y));
                    }
                }
                Self::assemble(label, pts, |p| p.norm_inf() == n)
            }
            DomainLabel::HalfPlaneBox { n } => {
                if n < 0 {
                    return Err(LatticeError::InvalidDomain(format!(
                        "half-plane box radius {n} < 0"
                    )));
                }
                let mut pts = Vec::new();
                for x in -n..=n {
                    for y in 0..=n {
                        pts.push(pt(x, y));
                    }
                }
                Self::assemble(label, pts, |p| p.y == 0 || p.norm_inf() == n)
            }
            DomainLabel::Annulus { k, n } => {
                if k < 1 || k >= n {
                    return Err(LatticeError::InvalidDomain(format!(
                        "annulus needs 1 <= k < n, got k={k} n={n}"
                    )));
                }
                let mut pts = Vec::new();
                for x in -n..=n {
                    for y in -n..=n {
                        let r = pt(x, y).norm_inf();
                        if r >= k {
                            pts.push(pt(x, y));
                        }
                    }
                }
                Self::assemble(label, pts, |p| {
                    let r = p.norm_inf();
                    r == k || r == n
                })
            }
            DomainLabel::Custom => Err(LatticeError::InvalidDomain(
                "custom domains are built with Domain::custom".into(),
            )),
        }
    }

    /// Build a custom domain from explicit vertex and killed sets.
    ///
    /// The killed set must be a subset of the vertices.  Missing lattice
    /// neighbours of interior vertices act as implicit killing.
    pub fn custom(
        vertices: Vec<LatticePoint>,
        killed: &[LatticePoint],
    ) -> Result<Domain, LatticeError> {
        let mut pts = vertices;
        pts.sort_unstable();
        pts.dedup();
        if pts.is_empty() {
            return Err(LatticeError::InvalidDomain("empty vertex set".into()));
        }
        let dom = Self::assemble(DomainLabel::Custom, pts, |_| false)?;
        let mut killed_mask = vec![false; dom.points.len()];
        for p in killed {
            let id = dom.grid.get(*p).ok_or_else(|| {
                LatticeError::InvalidDomain(format!("killed point {p} is not a vertex"))
            })?;
            killed_mask[id as usize] = true;
        }
        Self::finish(dom.label, dom.points, killed_mask)
    }

    fn assemble(
        label: DomainLabel,
        mut pts: Vec<LatticePoint>,
        is_killed: impl Fn(LatticePoint) -> bool,
    ) -> Result<Domain, LatticeError> {
        pts.sort_unstable();
        pts.dedup();
        let killed = pts.iter().map(|&p| is_killed(p)).collect();
        Self::finish(label, pts, killed)
    }

    fn finish(
        label: DomainLabel,
        points: Vec<LatticePoint>,
        killed: Vec<bool>,
    ) -> Result<Domain, LatticeError> {
        let x0 = points.iter().map(|p| p.x).min().unwrap();
        let x1 = points.iter().map(|p| p.x).max().unwrap();
        let y0 = points.iter().map(|p| p.y).min().unwrap();
        let y1 = points.iter().map(|p| p.y).max().unwrap();
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut cells = vec![-1i32; w as usize * h as usize];
        for (i, p) in points.iter().enumerate() {
            cells[(p.y - y0) as usize * w as usize + (p.x - x0) as usize] = i as i32;
        }
        let grid = Grid { x0, y0, w, h, cells };

        // Unit edges with both endpoints present, each listed once (u < v in
        // vertex order ⇔ the +x / +y neighbour).
        let mut edges = Vec::new();
        for (i, p) in points.iter().enumerate() {
            for q in [pt(p.x + 1, p.y), pt(p.x, p.y + 1)] {
                if let Some(j) = grid.get(q) {
                    edges.push((i as VertexId, j));
                }
            }
        }

        let interior = (0..points.len() as VertexId)
            .filter(|&v| !killed[v as usize])
            .collect();
        let boundary = (0..points.len() as VertexId)
            .filter(|&v| killed[v as usize])
            .collect();
        Ok(Domain { label, points, killed, edges, interior, boundary, grid })
    }

    pub fn label(&self) -> DomainLabel {
        self.label
    }

    /// Plain-text descriptor (`box 3`, `halfplane 8`, `annulus 2 8`).
    /// Custom domains have none.
    pub fn descriptor(&self) -> Result<String, LatticeError> {
        match self.label {
            DomainLabel::Custom => Err(LatticeError::CustomDescriptor),
            l => Ok(l.to_string()),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// All vertices, lex-sorted; `VertexId` indexes into this slice.
    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn point(&self, v: VertexId) -> LatticePoint {
        self.points[v as usize]
    }

    /// Vertex id of a lattice point, if it belongs to the domain.
    pub fn id_of(&self, p: LatticePoint) -> Option<VertexId> {
        self.grid.get(p)
    }

    pub fn is_killed(&self, v: VertexId) -> bool {
        self.killed[v as usize]
    }

    /// Killed (absorbing) vertices, lex-sorted.
    pub fn boundary_ids(&self) -> &[VertexId] {
        &self.boundary
    }

    /// Non-killed vertices, lex-sorted.
    pub fn interior_ids(&self) -> &[VertexId] {
        &self.interior
    }

    /// Edge list; endpoints satisfy `point(u) < point(v)`.
    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    /// The up-to-four domain neighbours of `v`, in the order `+x, -x, +y, -y`.
    /// `None` marks a neighbour outside the vertex set (implicit killing).
    pub fn neighbors_of(&self, v: VertexId) -> [Option<VertexId>; 4] {
        let p = self.point(v);
        p.neighbors().map(|q| self.grid.get(q))
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Domain({}, {} vertices, {} edges, {} killed)",
            self.label,
            self.vertex_count(),
            self.edge_count(),
            self.boundary.len()
        )
    }
}

/// An unrooted oriented loop in canonical form: the lexicographically least
/// rotation of its site sequence, together with its multiplicity.
///
/// The multiplicity `m` is the number of rotations fixing the loop, i.e.
/// `|γ| / (number of distinct rotations)`; it enters the loop measure as
/// `ν(γ) = 4^{-|γ|} / m`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Loop {
    sites: Vec<LatticePoint>,
    multiplicity: u32,
}

impl Loop {
    /// Number of steps (= number of sites in the cyclic representation).
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a valid loop has at least 2 sites
    }

    /// Canonical site sequence.
    pub fn sites(&self) -> &[LatticePoint] {
        &self.sites
    }

    pub fn multiplicity(&self) -> u32 {
        self.multiplicity
    }

    /// Loop measure `ν(γ) = 4^{-|γ|} / m(γ)` (loops of length ≥ 2 only; the
    /// length-0 trivial loops carry no mass here).
    pub fn nu_mass(&self) -> f64 {
        f64::exp2(-2.0 * self.len() as f64) / self.multiplicity as f64
    }
}

impl fmt::Display for Loop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sites.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for Loop {
    type Err = LatticeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sites: Result<Vec<LatticePoint>, _> =
            s.split_whitespace().map(LatticePoint::from_str).collect();
        canonicalize_loop(&sites?)
    }
}

/// Bring a closed walk into canonical loop form.
///
/// Accepts either the cyclic site sequence (`a b` for the two-step loop
/// `a → b → a`) or the explicitly closed walk (`a b a`); a trailing repeat of
/// the first site is dropped.  Rejects open walks, repeated-point input that
/// is not a walk, and anything shorter than one full excursion.
pub fn canonicalize_loop(sites: &[LatticePoint]) -> Result<Loop, LatticeError> {
    let mut seq: &[LatticePoint] = sites;
    if seq.len() >= 3 && seq.first() == seq.last() {
        seq = &seq[..seq.len() - 1];
    }
    if seq.len() < 2 {
        return Err(LatticeError::NotALoop(format!(
            "{} site(s) after closing; need at least 2",
            seq.len()
        )));
    }
    for i in 0..seq.len() {
        let a = seq[i];
        let b = seq[(i + 1) % seq.len()];
        if !a.is_adjacent(b) {
            return Err(LatticeError::NotALoop(format!(
                "consecutive sites {a} and {b} are not lattice neighbours"
            )));
        }
    }
    let k = least_rotation(seq);
    let mut canon = Vec::with_capacity(seq.len());
    canon.extend_from_slice(&seq[k..]);
    canon.extend_from_slice(&seq[..k]);
    let period = smallest_period(&canon);
    let multiplicity = (canon.len() / period) as u32;
    Ok(Loop { sites: canon, multiplicity })
}

/// Loop measure `ν(γ) = 4^{-|γ|} / m(γ)` of a canonical loop.
pub fn loop_nu_mass(l: &Loop) -> f64 {
    l.nu_mass()
}

/// Booth's least-rotation algorithm: index of the lexicographically smallest
/// rotation of `s`, in O(|s|).
fn least_rotation<T: Ord>(s: &[T]) -> usize {
    let n = s.len();
    let at = |i: usize| &s[i % n];
    let mut f = vec![-1i64; 2 * n];
    let mut k = 0usize;
    for j in 1..2 * n {
        let sj = at(j);
        let mut i = f[j - k - 1];
        while i != -1 && sj != at(k + i as usize + 1) {
            if sj < at(k + i as usize + 1) {
                k = j - i as usize - 1;
            }
            i = f[i as usize];
        }
        if i == -1 && sj != at(k) {
            if sj < at(k) {
                k = j;
            }
            f[j - k] = -1;
        } else {
            f[j - k] = i + 1;
        }
    }
    k
}

/// Smallest period of a sequence (KMP prefix function); the number of
/// distinct rotations equals this period.
fn smallest_period<T: Eq>(s: &[T]) -> usize {
    let n = s.len();
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut j = pi[i - 1];
        while j > 0 && s[i] != s[j] {
            j = pi[j - 1];
        }
        if s[i] == s[j] {
            j += 1;
        }
        pi[i] = j;
    }
    let p = n - pi[n - 1];
    if n % p == 0 {
        p
    } else {
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn box_counts_match_closed_forms() {
        for n in 0..=16 {
            let d = Domain::build(DomainLabel::Box { n }).unwrap();
            let n_us = n as usize;
            assert_eq!(d.vertex_count(), (2 * n_us + 1) * (2 * n_us + 1));
            assert_eq!(d.edge_count(), 4 * n_us * (2 * n_us + 1));
            let expected_boundary = if n == 0 { 1 } else { 8 * n_us };
            assert_eq!(d.boundary_ids().len(), expected_boundary);
        }
    }

    #[test]
    fn box_0_and_box_2_examples() {
        let d0 = Domain::build(DomainLabel::Box { n: 0 }).unwrap();
        assert_eq!((d0.vertex_count(), d0.edge_count()), (1, 0));
        let d2 = Domain::build(DomainLabel::Box { n: 2 }).unwrap();
        assert_eq!(
            (d2.vertex_count(), d2.edge_count(), d2.boundary_ids().len()),
            (25, 40, 16)
        );
    }

    #[test]
    fn halfplane_3_example() {
        let d = Domain::build(DomainLabel::HalfPlaneBox { n: 3 }).unwrap();
        assert_eq!(d.vertex_count(), 28);
        // boundary = row y=0 plus outer square sites with y >= 1
        for &b in d.boundary_ids() {
            let p = d.point(b);
            assert!(p.y == 0 || p.norm_inf() == 3);
        }
        for &i in d.interior_ids() {
            let p = d.point(i);
            assert!(p.y >= 1 && p.norm_inf() <= 2);
        }
        assert_eq!(d.interior_ids().len(), 10);
    }

    #[test]
    fn labelled_interiors_have_full_degree() {
        for label in [
            DomainLabel::Box { n: 5 },
            DomainLabel::HalfPlaneBox { n: 5 },
            DomainLabel::Annulus { k: 2, n: 6 },
        ] {
            let d = Domain::build(label).unwrap();
            for &v in d.interior_ids() {
                assert!(
                    d.neighbors_of(v).iter().all(|o| o.is_some()),
                    "interior vertex {} of {label} is missing a neighbour",
                    d.point(v)
                );
            }
        }
    }

    #[test]
    fn degenerate_domains_rejected() {
        assert!(Domain::build(DomainLabel::Box { n: -1 }).is_err());
        assert!(Domain::build(DomainLabel::HalfPlaneBox { n: -2 }).is_err());
        assert!(Domain::build(DomainLabel::Annulus { k: 3, n: 3 }).is_err());
        assert!(Domain::build(DomainLabel::Annulus { k: 0, n: 3 }).is_err());
        assert!(Domain::custom(vec![], &[]).is_err());
        assert!(Domain::custom(vec![pt(0, 0)], &[pt(1, 1)]).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        for label in [
            DomainLabel::Box { n: 7 },
            DomainLabel::HalfPlaneBox { n: 3 },
            DomainLabel::Annulus { k: 2, n: 9 },
        ] {
            let d = Domain::build(label).unwrap();
            let s = d.descriptor().unwrap();
            let back: DomainLabel = s.parse().unwrap();
            assert_eq!(back, label);
        }
        let c = Domain::custom(vec![pt(0, 0), pt(1, 0)], &[]).unwrap();
        assert!(c.descriptor().is_err());
    }

    #[test]
    fn edge_loop_mass() {
        let l = canonicalize_loop(&[pt(0, 0), pt(1, 0)]).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.multiplicity(), 1);
        assert_eq!(l.nu_mass(), 1.0 / 16.0);
    }

    #[test]
    fn alternating_length_4_mass() {
        // (1,0) (0,0) (1,0) (0,0) read cyclically: double traversal of an edge.
        let l = canonicalize_loop(&[pt(1, 0), pt(0, 0), pt(1, 0), pt(0, 0)]).unwrap();
        assert_eq!(l.len(), 4);
        assert_eq!(l.multiplicity(), 2);
        assert_eq!(l.nu_mass(), 1.0 / 512.0);
        // canonical form starts at the lex-least site
        assert_eq!(l.sites()[0], pt(0, 0));
    }

    #[test]
    fn plaquette_mass_and_closure_marker() {
        // Explicitly closed input: trailing repeat of the first site is dropped.
        let l = canonicalize_loop(&[pt(0, 0), pt(1, 0), pt(1, 1), pt(0, 1), pt(0, 0)]).unwrap();
        assert_eq!(l.len(), 4);
        assert_eq!(l.multiplicity(), 1);
        assert_eq!(l.nu_mass(), 1.0 / 256.0);
    }

    #[test]
    fn orientation_is_preserved() {
        let cw = canonicalize_loop(&[pt(0, 0), pt(0, 1), pt(1, 1), pt(1, 0)]).unwrap();
        let ccw = canonicalize_loop(&[pt(0, 0), pt(1, 0), pt(1, 1), pt(0, 1)]).unwrap();
        assert_ne!(cw, ccw, "a plaquette and its reversal are distinct loops");
    }

    #[test]
    fn rejects_non_loops() {
        assert!(canonicalize_loop(&[pt(0, 0)]).is_err());
        assert!(canonicalize_loop(&[pt(0, 0), pt(2, 0)]).is_err());
        // open walk: endpoints not adjacent, wrap-around fails
        assert!(canonicalize_loop(&[pt(0, 0), pt(1, 0), pt(2, 0)]).is_err());
    }

    #[test]
    fn loop_text_round_trip() {
        let l = canonicalize_loop(&[pt(0, 0), pt(1, 0), pt(1, 1), pt(0, 1)]).unwrap();
        let s = l.to_string();
        let back: Loop = s.parse().unwrap();
        assert_eq!(back, l);
    }

    /// Naive reference: minimum over all rotations, compared element-wise.
    fn naive_canonical(sites: &[LatticePoint]) -> Vec<LatticePoint> {
        let n = sites.len();
        (0..n)
            .map(|k| {
                let mut r = Vec::with_capacity(n);
                r.extend_from_slice(&sites[k..]);
                r.extend_from_slice(&sites[..k]);
                r
            })
            .min()
            .unwrap()
    }

    fn naive_distinct_rotations(sites: &[LatticePoint]) -> usize {
        let n = sites.len();
        (0..n)
            .map(|k| {
                let mut r = Vec::with_capacity(n);
                r.extend_from_slice(&sites[k..]);
                r.extend_from_slice(&sites[..k]);
                r
            })
            .collect::<std::collections::HashSet<_>>()
            .len()
    }

    /// Strategy: a closed walk built by shuffling a balanced step multiset.
    fn closed_walk() -> impl Strategy<Value = Vec<LatticePoint>> {
        (1usize..=5, 0usize..=5, any::<u64>()).prop_map(|(east, north, shuffle_seed)| {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut steps = Vec::new();
            for _ in 0..east {
                steps.push((1, 0));
                steps.push((-1, 0));
            }
            for _ in 0..north {
                steps.push((0, 1));
                steps.push((0, -1));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed);
            steps.shuffle(&mut rng);
            let mut sites = vec![pt(0, 0)];
            for (dx, dy) in steps.iter().take(steps.len() - 1) {
                let last = *sites.last().unwrap();
                sites.push(pt(last.x + dx, last.y + dy));
            }
            sites
        })
    }

    proptest! {
        #[test]
        fn canonical_is_rotation_invariant(sites in closed_walk(), k in 0usize..20) {
            let n = sites.len();
            let k = k % n;
            let mut rotated = Vec::with_capacity(n);
            rotated.extend_from_slice(&sites[k..]);
            rotated.extend_from_slice(&sites[..k]);
            let a = canonicalize_loop(&sites).unwrap();
            let b = canonicalize_loop(&rotated).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn canonical_matches_naive_minimum(sites in closed_walk()) {
            let l = canonicalize_loop(&sites).unwrap();
            let naive = naive_canonical(&sites);
            prop_assert_eq!(l.sites(), naive.as_slice());
        }

        #[test]
        fn multiplicity_times_rotations_is_length(sites in closed_walk()) {
            let l = canonicalize_loop(&sites).unwrap();
            let distinct = naive_distinct_rotations(l.sites());
            prop_assert_eq!(l.multiplicity() as usize * distinct, l.len());
        }
    }
}
