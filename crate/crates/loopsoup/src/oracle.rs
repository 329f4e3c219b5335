//! Independent brute-force references used by the test suites.
//!
//! Everything here is deliberately naive: exhaustive depth-first loop
//! enumeration, dense transition-matrix power iteration, and direct Monte
//! Carlo on a discretized Brownian bridge.  None of it shares code with the
//! production paths it checks.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::lattice::{canonicalize_loop, Domain, LatticePoint, Loop, VertexId};

fn l1(a: LatticePoint, b: LatticePoint) -> usize {
    ((a.x - b.x).abs() + (a.y - b.y).abs()) as usize
}

/// Depth-first enumeration of closed walks from `s` through interior
/// vertices.  `constrained` restricts the walk to vertices ≥ `s` in lattice
/// order (so each unrooted loop is seen from its minimal vertex only).
fn closed_walks_from(
    domain: &Domain,
    s: LatticePoint,
    max_len: usize,
    constrained: bool,
    out: &mut impl FnMut(&[LatticePoint]),
) {
    fn extend(
        domain: &Domain,
        s: LatticePoint,
        path: &mut Vec<LatticePoint>,
        max_len: usize,
        constrained: bool,
        out: &mut impl FnMut(&[LatticePoint]),
    ) {
        let cur = *path.last().unwrap();
        for p in cur.neighbors() {
            if p == s && path.len() >= 2 {
                out(path);
            }
            if path.len() < max_len {
                if let Some(id) = domain.id_of(p) {
                    if !domain.is_killed(id)
                        && (!constrained || p >= s)
                        && l1(p, s) <= max_len - path.len()
                    {
                        path.push(p);
                        extend(domain, s, path, max_len, constrained, out);
                        path.pop();
                    }
                }
            }
        }
    }
    let mut path = vec![s];
    extend(domain, s, &mut path, max_len, constrained, out);
}

/// All loops of length ≤ `max_len` supported on the interior of `domain`,
/// with their exact loop-measure masses ν(γ) = 4^{−|γ|}/m.
pub fn enumerate_loops(domain: &Domain, max_len: usize) -> BTreeMap<Loop, f64> {
    let mut loops = BTreeMap::new();
    for &v in domain.interior_ids() {
        let s = domain.point(v);
        closed_walks_from(domain, s, max_len, true, &mut |path| {
            let l = canonicalize_loop(path).unwrap();
            let mass = l.nu_mass();
            loops.insert(l, mass);
        });
    }
    loops
}

/// Second, independent route to the same masses: sum the rooted measure
/// 4^{−L}/L over every rooted closed walk from every interior start.  Each
/// unrooted loop has |γ|/m distinct rooted representatives, so the sums
/// reproduce ν(γ) exactly.
pub fn enumerate_rooted_nu(domain: &Domain, max_len: usize) -> BTreeMap<Loop, f64> {
    let mut loops: BTreeMap<Loop, f64> = BTreeMap::new();
    for &v in domain.interior_ids() {
        let s = domain.point(v);
        closed_walks_from(domain, s, max_len, false, &mut |path| {
            let l = canonicalize_loop(path).unwrap();
            let len = path.len() as f64;
            *loops.entry(l).or_insert(0.0) += f64::exp2(-2.0 * len) / len;
        });
    }
    loops
}

/// Result of power-iterating the absorbed random walk.
pub struct Absorption {
    /// Mass absorbed at each vertex (only absorbing vertices are nonzero).
    pub at: Vec<f64>,
    /// Mass that stepped to a lattice neighbor outside the domain.
    pub outside: f64,
    /// Residual unabsorbed mass after the last step.
    pub alive: f64,
}

fn power_iterate(
    domain: &Domain,
    mut cur: Vec<f64>,
    extra_absorbing: &[VertexId],
    steps: usize,
) -> Absorption {
    let n = domain.vertex_count();
    let mut absorbing = vec![false; n];
    for &v in domain.boundary_ids() {
        absorbing[v as usize] = true;
    }
    for &v in extra_absorbing {
        absorbing[v as usize] = true;
    }
    let mut at = vec![0.0; n];
    let mut outside = 0.0;
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        let mut moved = false;
        for v in 0..n {
            let mass = cur[v];
            if mass == 0.0 {
                continue;
            }
            if absorbing[v] {
                at[v] += mass;
                continue;
            }
            moved = true;
            let q = mass / 4.0;
            for u in domain.neighbors_of(v as VertexId) {
                match u {
                    Some(u) => next[u as usize] += q,
                    None => outside += q,
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        next.iter_mut().for_each(|x| *x = 0.0);
        if !moved {
            break;
        }
    }
    // sweep any mass already sitting on absorbing vertices
    let mut alive = 0.0;
    for v in 0..n {
        if absorbing[v] {
            at[v] += cur[v];
        } else {
            alive += cur[v];
        }
    }
    Absorption { at, outside, alive }
}

/// Power-iteration harmonic measure: distribution of the absorption vertex
/// for the walk started at `u`, absorbed on the designated boundary.
pub fn harmonic_measure_oracle(domain: &Domain, u: VertexId, steps: usize) -> Absorption {
    assert!(!domain.is_killed(u), "start must not be absorbed");
    let mut cur = vec![0.0; domain.vertex_count()];
    cur[u as usize] = 1.0;
    power_iterate(domain, cur, &[], steps)
}

/// Probability that the walk from `x` never returns to `x` before being
/// absorbed (designated boundary or stepping outside the domain).
pub fn no_return_probability(domain: &Domain, x: VertexId, steps: usize) -> f64 {
    assert!(!domain.is_killed(x), "start must not be absorbed");
    let mut cur = vec![0.0; domain.vertex_count()];
    for u in domain.neighbors_of(x).into_iter().flatten() {
        cur[u as usize] += 0.25;
    }
    // Mass stepping straight outside never enters `cur`; it counts as
    // "no return" automatically through 1 − returned.
    let a = power_iterate(domain, cur, &[x], steps);
    assert!(
        a.alive < 1e-12,
        "power iteration not converged (alive = {:.3e}); increase steps",
        a.alive
    );
    1.0 - a.at[x as usize]
}

/// Monte Carlo estimate (mean, standard error) of the probability that a
/// Brownian bridge from `a` to `b` over unit time, observed only at `m`
/// equally spaced points, ever lies at or below zero.
///
/// This discretization only *undercounts* the true zero-hit probability
/// (it misses excursions between grid points), which the calling tests
/// exploit: estimates increase monotonically in `m` toward the closed form.
pub fn bridge_hit_prob_mc(a: f64, b: f64, m: usize, replicas: u64, seed: u64) -> (f64, f64) {
    assert!(m >= 1 && replicas > 0);
    if a <= 0.0 || b <= 0.0 {
        return (1.0, 0.0);
    }
    const CHUNK: u64 = 1 << 14;
    let chunks = (replicas + CHUNK - 1) / CHUNK;
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(replicas);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c));
            let mut hits = 0u64;
            for _ in lo..hi {
                let mut x = a;
                let mut hit = false;
                for i in 0..m - 1 {
                    let left = (m - i) as f64;
                    let mean = x + (b - x) / left;
                    let var = (left - 1.0) / (m as f64 * left);
                    let z: f64 = rng.sample(StandardNormal);
                    x = mean + var.sqrt() * z;
                    if x <= 0.0 {
                        hit = true;
                        break;
                    }
                }
                if hit {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = hits as f64 / replicas as f64;
    (p, (p * (1.0 - p) / replicas as f64).sqrt())
}
