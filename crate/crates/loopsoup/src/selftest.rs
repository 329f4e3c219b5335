//! Fast end-to-end self-checks behind the command line's `selftest`.
//!
//! Each check is deterministic (fixed seeds), runs in seconds, and compares
//! the production fast path against an independent slow route — loop
//! enumeration, power iteration, a discretized Brownian bridge, or a closed
//! form.  The comparisons are deliberately sensitive to constant-factor
//! corruption: halving the loop measure or dropping the factor 2 in the
//! edge-closure exponent shifts the compared quantities by dozens of
//! standard errors, so a silent regression in the core formulas turns into
//! a loud nonzero exit.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gff::{bridge_zero_hit_prob, GffSampler};
use crate::lattice::{canonicalize_loop, pt, Domain, DomainLabel, Loop, VertexId};
use crate::oracle;
use crate::potential::PotentialSolver;
use crate::rwls::{build_vertex_laws, sample_rwls, VertexOrder};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{status} {} — {}", self.name, self.detail)
    }
}

/// Run the whole suite.  A failing check does not stop the later ones, so
/// one run reports every broken invariant at once.
pub fn run_selftest() -> Vec<CheckOutcome> {
    fn outcome(name: &'static str, result: Result<String, String>) -> CheckOutcome {
        match result {
            Ok(detail) => CheckOutcome { name, passed: true, detail },
            Err(detail) => CheckOutcome { name, passed: false, detail },
        }
    }
    vec![
        outcome("canonical-loops", canonical_loop_check()),
        outcome("loop-measure", loop_measure_check(&Loop::nu_mass)),
        outcome("loop-count", loop_count_check((16.0f64 / 15.0).ln())),
        outcome("single-vertex-variance", single_vertex_check()),
        outcome("gff-variance", gff_variance_check()),
        outcome("harmonic-measure", harmonic_measure_check()),
        outcome("green-resistance", green_resistance_check()),
        outcome("bridge-formula", bridge_check(&bridge_zero_hit_prob)),
    ]
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

fn two_vertex() -> Arc<Domain> {
    Arc::new(Domain::custom(vec![pt(0, 0), pt(0, 1)], &[]).unwrap())
}

fn canonical_loop_check() -> Result<String, String> {
    let square = [pt(0, 0), pt(1, 0), pt(1, 1), pt(0, 1)];
    let base = canonicalize_loop(&square).map_err(|e| e.to_string())?;
    for r in 1..4 {
        let rot: Vec<_> = (0..4).map(|i| square[(i + r) % 4]).collect();
        let c = canonicalize_loop(&rot).map_err(|e| e.to_string())?;
        if c != base {
            return Err(format!("rotation by {r} changed the canonical form"));
        }
    }
    if base.multiplicity() != 1 || base.len() != 4 {
        return Err("plaquette should be aperiodic of length 4".into());
    }

    let doubled: Vec<_> = square.iter().chain(&square).copied().collect();
    let twice = canonicalize_loop(&doubled).map_err(|e| e.to_string())?;
    if twice.multiplicity() != 2 || twice.len() != 8 {
        return Err("doubled plaquette should have multiplicity 2".into());
    }

    let uv3: Vec<_> = [pt(0, 0), pt(0, 1)].repeat(3);
    let pendulum = canonicalize_loop(&uv3).map_err(|e| e.to_string())?;
    let expect = 16.0f64.powi(-3) / 3.0;
    if pendulum.multiplicity() != 3 || (pendulum.nu_mass() - expect).abs() > 1e-18 {
        return Err(format!(
            "triple back-and-forth: multiplicity {} mass {:.3e}, want 3 and {expect:.3e}",
            pendulum.multiplicity(),
            pendulum.nu_mass()
        ));
    }

    let text = base.to_string();
    let back: Loop = text.parse().map_err(|e: crate::lattice::LatticeError| e.to_string())?;
    if back != base {
        return Err("text round trip changed the loop".into());
    }
    Ok("rotations, multiplicities and text round trips are consistent".into())
}

/// Enumerate every loop on two adjacent free vertices and compare the total
/// measure against the closed form ln(16/15) = −ln det(I − Q).
///
/// Parameterized over the mass function so the unit tests can demonstrate
/// that a corrupted measure (for instance halving 4^{−|γ|}) is caught.
fn loop_measure_check(mass_of: &dyn Fn(&Loop) -> f64) -> Result<String, String> {
    let d = two_vertex();
    let loops = oracle::enumerate_loops(&d, 24);
    let total: f64 = loops.keys().map(mass_of).sum();
    let closed = (16.0f64 / 15.0).ln();
    // The length-24 cutoff truncates the series below 1e-16.
    if (total - closed).abs() > 1e-9 {
        return Err(format!(
            "enumerated loop measure {total:.12} vs closed form ln(16/15) = {closed:.12}"
        ));
    }
    Ok(format!("Σν over {} enumerated loops matches ln(16/15) to 1e-9", loops.len()))
}

/// The soup's loop count on the two-vertex domain is Poisson with the
/// closed-form parameter α·ln(16/15); compare the empirical mean at 4 SE.
fn loop_count_check(expected_mass: f64) -> Result<String, String> {
    let d = two_vertex();
    let laws = build_vertex_laws(&d, VertexOrder::Lex).map_err(|e| e.to_string())?;
    let closed = (16.0f64 / 15.0).ln();
    if (laws.total_mass() - closed).abs() > 1e-12 {
        return Err(format!(
            "excursion-law total mass {:.15} vs ln(16/15) = {closed:.15}",
            laws.total_mass()
        ));
    }
    let alpha = 0.5;
    let reps: u64 = 200_000;
    let total_loops: u64 =
        (0..reps).map(|i| sample_rwls(&laws, alpha, 41_000_000 + i).loops().len() as u64).sum();
    let lambda = alpha * expected_mass;
    let mean = total_loops as f64 / reps as f64;
    let se = (alpha * closed / reps as f64).sqrt();
    if (mean - lambda).abs() > 4.0 * se {
        return Err(format!(
            "mean loop count {mean:.5} vs Poisson parameter {lambda:.5} (> 4 SE = {:.5})",
            4.0 * se
        ));
    }
    Ok(format!("mean loop count {mean:.5} within 4 SE of α·ln(16/15) = {lambda:.5}"))
}

/// One free vertex: its Green value is exactly 1/4 (four escape routes of
/// unit conductance), and the sampled field variance agrees.
fn single_vertex_check() -> Result<String, String> {
    let d = Arc::new(Domain::custom(vec![pt(0, 0)], &[]).map_err(|e| e.to_string())?);
    let solver = Arc::new(PotentialSolver::new(&d).map_err(|e| e.to_string())?);
    let id = d.id_of(pt(0, 0)).unwrap();
    let g = solver.green(id, id).map_err(|e| e.to_string())?;
    if (g - 0.25).abs() > 1e-14 {
        return Err(format!("single-vertex Green value {g:.17} is not exactly 1/4"));
    }
    let sampler =
        GffSampler::new(Arc::clone(&solver), &solver.zero_boundary()).map_err(|e| e.to_string())?;
    let reps: u64 = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(90_210);
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let v = sampler.sample(&mut rng).value(id);
        sum_sq += v * v;
    }
    let var = sum_sq / reps as f64;
    let se = 0.25 * (2.0 / reps as f64).sqrt();
    if (var - 0.25).abs() > 4.0 * se {
        return Err(format!("sampled variance {var:.5} vs 1/4 (> 4 SE = {:.5})", 4.0 * se));
    }
    Ok(format!("Green value exactly 1/4; sampled variance {var:.5}"))
}

/// Sampled field variance equals the Green diagonal on a small box.
fn gff_variance_check() -> Result<String, String> {
    let d = Arc::new(Domain::build(DomainLabel::Box { n: 3 }).map_err(|e| e.to_string())?);
    let solver = Arc::new(PotentialSolver::new(&d).map_err(|e| e.to_string())?);
    let center = d.id_of(pt(0, 0)).unwrap();
    let g = solver.green(center, center).map_err(|e| e.to_string())?;
    let sampler =
        GffSampler::new(Arc::clone(&solver), &solver.zero_boundary()).map_err(|e| e.to_string())?;
    let reps: u64 = 60_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4_040);
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let v = sampler.sample(&mut rng).value(center);
        sum_sq += v * v;
    }
    let var = sum_sq / reps as f64;
    let se = g * (2.0 / reps as f64).sqrt();
    if (var - g).abs() > 4.0 * se {
        return Err(format!("sampled variance {var:.5} vs G(x,x) = {g:.5} (> 4 SE)"));
    }
    Ok(format!("sampled variance {var:.5} matches G(x,x) = {g:.5}"))
}

/// Solver harmonic measure vs the power-iteration oracle, on a box and on
/// an annulus (two boundary components), to 1e-9.
fn harmonic_measure_check() -> Result<String, String> {
    let domains = [
        Domain::build(DomainLabel::Box { n: 3 }).map_err(|e| e.to_string())?,
        Domain::build(DomainLabel::Annulus { k: 1, n: 3 }).map_err(|e| e.to_string())?,
    ];
    let mut worst: f64 = 0.0;
    for d in domains {
        let d = Arc::new(d);
        let solver = PotentialSolver::new(&d).map_err(|e| e.to_string())?;
        let u = *d.interior_ids().first().expect("interior vertex");
        let row = solver.harmonic_measure_row(u).map_err(|e| e.to_string())?;
        let orc = oracle::harmonic_measure_oracle(&d, u, 4_000);
        if orc.alive > 1e-12 {
            return Err(format!("power iteration not converged (alive {:.2e})", orc.alive));
        }
        for (&v, &hm) in solver.killed_ids().iter().zip(&row) {
            worst = worst.max((hm - orc.at[v as usize]).abs());
        }
    }
    if worst > 1e-9 {
        return Err(format!("harmonic measure deviates from power iteration by {worst:.2e}"));
    }
    Ok(format!("harmonic measure matches power iteration (worst deviation {worst:.2e})"))
}

/// Green–resistance consistency: G(x,x)·4·P[no return] = 1.
fn green_resistance_check() -> Result<String, String> {
    let d = Arc::new(Domain::build(DomainLabel::Box { n: 3 }).map_err(|e| e.to_string())?);
    let solver = PotentialSolver::new(&d).map_err(|e| e.to_string())?;
    let probes: Vec<VertexId> =
        [pt(0, 0), pt(2, 1), pt(-2, 2)].iter().map(|&p| d.id_of(p).unwrap()).collect();
    let mut worst: f64 = 0.0;
    for x in probes {
        let g = solver.effective_resistance(x).map_err(|e| e.to_string())?;
        let no_ret = oracle::no_return_probability(&d, x, 4_000);
        worst = worst.max((4.0 * g * no_ret - 1.0).abs());
    }
    if worst > 1e-8 {
        return Err(format!("4·G(x,x)·P[no return] deviates from 1 by {worst:.2e}"));
    }
    Ok(format!("effective resistance consistent with escape probability ({worst:.2e})"))
}

/// Closed-form edge closure probability vs the discretized-bridge Monte
/// Carlo, Richardson-extrapolated in the grid resolution.
///
/// The discretized bridge only undercounts (it misses sub-grid excursions)
/// with an O(m^{−1/2}) bias, so extrapolating from m = 256 and m = 1024
/// cancels the leading error; the residual is bounded by half the last
/// refinement step.  Parameterized over the formula so the unit tests can
/// plant the exp(−ab) corruption and watch it get caught.
fn bridge_check(formula: &dyn Fn(f64, f64) -> f64) -> Result<String, String> {
    let (a, b) = (0.5, 0.5);
    let closed = formula(a, b);
    let reps: u64 = 300_000;
    let (p256, se256) = oracle::bridge_hit_prob_mc(a, b, 256, reps, 61);
    let (p1024, se1024) = oracle::bridge_hit_prob_mc(a, b, 1024, reps, 62);
    let extrap = 2.0 * p1024 - p256;
    let se = (4.0 * se1024 * se1024 + se256 * se256).sqrt();
    let tol = 3.0 * se + 0.5 * (p1024 - p256).abs();
    if (closed - extrap).abs() > tol {
        return Err(format!(
            "closure formula {closed:.5} vs extrapolated bridge oracle {extrap:.5} (tol {tol:.5})"
        ));
    }
    Ok(format!("formula {closed:.5} within {tol:.5} of the extrapolated oracle {extrap:.5}"))
}
