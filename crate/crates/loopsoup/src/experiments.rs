//! Monte Carlo experiment drivers: arm-probability estimation, exponent
//! fits, quasi-multiplicativity ratios, the boundary statistic `N(Λ)`, and
//! the resistance-drop check for the metric-graph coupling.
//!
//! Every driver is deterministic: replica `i` runs on its own
//! `ChaCha8Rng::seed_from_u64(seed + i)` stream and aggregation is a
//! commutative reduction (hit counts, sums), so results depend only on the
//! arguments, never on thread count or scheduling.  Domains, matrix
//! factorizations and excursion-law tables are built once per driver call
//! and shared by all replicas; the per-replica work is one sample plus one
//! cluster decomposition.
//!
//! Drivers that need several estimates internally (quasi-multiplicativity,
//! fits over a radius grid) give each sub-estimate its own seed block,
//! offset by multiples of 2⁴⁰ — far beyond any realistic replica count, so
//! the per-replica streams of different sub-estimates never collide.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusters::{
    decompose_discrete, decompose_metric, ArmEventKind, ArmKind, ClusterDecomposition, Setting,
};
use crate::gff::{extend_to_metric, GffSampler};
use crate::lattice::{pt, Domain, DomainLabel, LatticeError, LatticePoint, VertexId};
use crate::potential::{PotentialError, PotentialSolver};
use crate::rwls::{build_vertex_laws, sample_rwls, RwlsError, VertexLoopLaws, VertexOrder};
use crate::stats::{fit_line_weighted, normal_cdf, proportion_with_se};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid arm event {0:?}: radii must satisfy 1 ≤ k ≤ n/2")]
    InvalidKind(ArmKind),
    #[error("replicas must be positive")]
    ZeroReplicas,
    #[error("{0}")]
    BadParam(String),
    #[error("need at least {need} usable points, have {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("`{label}`: zero hits in {replicas} replicas; cannot take logs or ratios")]
    ZeroEstimate { label: String, replicas: u64 },
    #[error("auto budget exhausted for `{label}`: 0 hits after {replicas} replicas")]
    BudgetExhausted { label: String, replicas: u64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Rwls(#[from] RwlsError),
}

/// A Monte Carlo estimate with everything needed to reproduce and weigh it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: u64,
    pub seed: u64,
    pub label: String,
}

impl Estimate {
    /// Bernoulli estimate `hits/replicas` with the binomial standard error
    /// `sqrt(mean·(1−mean)/replicas)`.
    pub fn proportion(hits: u64, replicas: u64, seed: u64, label: impl Into<String>) -> Estimate {
        assert!(hits <= replicas, "more hits than replicas");
        let (mean, std_error) = proportion_with_se(hits, replicas);
        Estimate { mean, std_error, replicas, seed, label: label.into() }
    }

    /// Sample-mean estimate for real-valued per-replica outputs (the `N(Λ)`
    /// counts); the standard error is the sample one, zero for one replica.
    pub fn from_samples(values: &[f64], seed: u64, label: impl Into<String>) -> Estimate {
        assert!(!values.is_empty(), "empty sample");
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / m).sqrt(),
            replicas: values.len() as u64,
            seed,
            label: label.into(),
        }
    }

    /// `std_error / mean`; infinite for a zero estimate.
    pub fn relative_se(&self) -> f64 {
        if self.mean == 0.0 {
            f64::INFINITY
        } else {
            self.std_error / self.mean
        }
    }
}

/// Shared per-driver state: whichever sampler the setting needs (a factored
/// Gaussian sampler, or the soup's excursion laws at intensity `alpha`).
enum SampleEngine {
    Metric(GffSampler),
    Discrete { laws: VertexLoopLaws, alpha: f64 },
}

impl SampleEngine {
    fn build(
        domain: &Arc<Domain>,
        setting: Setting,
        alpha: f64,
    ) -> Result<SampleEngine, ExperimentError> {
        match setting {
            Setting::Metric => {
                let solver = Arc::new(PotentialSolver::new(domain)?);
                let zero = solver.zero_boundary();
                Ok(SampleEngine::Metric(GffSampler::new(solver, &zero)?))
            }
            Setting::Discrete => Ok(SampleEngine::Discrete {
                laws: build_vertex_laws(domain, VertexOrder::Lex)?,
                alpha,
            }),
        }
    }

    /// One replica: draw a sample on this replica's own RNG stream and
    /// decompose it into clusters.
    fn decompose(&self, replica_seed: u64) -> ClusterDecomposition {
        match self {
            SampleEngine::Metric(sampler) => {
                let mut rng = ChaCha8Rng::seed_from_u64(replica_seed);
                let field = sampler.sample(&mut rng);
                decompose_metric(&extend_to_metric(field, &mut rng))
            }
            SampleEngine::Discrete { laws, alpha } => {
                decompose_discrete(&sample_rwls(laws, *alpha, replica_seed))
            }
        }
    }
}

fn arm_label(kind: ArmEventKind) -> String {
    let (k, n) = kind.kind.radii();
    let family = match kind.kind {
        ArmKind::FourArmLocal { .. } => "four-arm",
        ArmKind::TwoArmHalfPlaneLocal { .. } => "two-arm-hp",
    };
    let setting = match kind.setting {
        Setting::Metric => "metric",
        Setting::Discrete => "discrete",
    };
    format!("{family} {setting} k={k} n={n}")
}

/// A validated batch of arm events sharing one domain and one sample family.
struct ArmRun {
    kinds: Vec<ArmEventKind>,
    engine: SampleEngine,
}

impl ArmRun {
    fn new(kinds: &[ArmEventKind], alpha: f64) -> Result<ArmRun, ExperimentError> {
        let first = *kinds
            .first()
            .ok_or_else(|| ExperimentError::BadParam("empty arm-event list".into()))?;
        for kind in kinds {
            if !kind.kind.is_valid() {
                return Err(ExperimentError::InvalidKind(kind.kind));
            }
            if kind.setting != first.setting
                || kind.kind.domain_label() != first.kind.domain_label()
            {
                return Err(ExperimentError::BadParam(
                    "batched arm events must share one domain and one setting".into(),
                ));
            }
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(ExperimentError::BadParam(format!(
                "intensity must lie in (0, 1/2], got {alpha}"
            )));
        }
        if first.setting == Setting::Metric && alpha != 0.5 {
            return Err(ExperimentError::BadParam(
                "the metric route is a critical-intensity construction; alpha is fixed at 1/2"
                    .into(),
            ));
        }
        let domain = Arc::new(Domain::build(first.kind.domain_label())?);
        let engine = SampleEngine::build(&domain, first.setting, alpha)?;
        Ok(ArmRun { kinds: kinds.to_vec(), engine })
    }

    /// Hit counts over replicas `lo..lo+count`, replica `i` seeded `seed+i`.
    fn count_hits(&self, seed: u64, lo: u64, count: u64) -> Vec<u64> {
        let zero = || vec![0u64; self.kinds.len()];
        (lo..lo + count)
            .into_par_iter()
            .fold(zero, |mut acc, i| {
                let decomp = self.engine.decompose(seed.wrapping_add(i));
                for (slot, kind) in acc.iter_mut().zip(&self.kinds) {
                    *slot += u64::from(kind.kind.holds(&decomp));
                }
                acc
            })
            .reduce(zero, |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            })
    }
}

/// Straight Bernoulli Monte Carlo for one arm event at critical intensity.
pub fn estimate_arm(
    kind: ArmEventKind,
    replicas: u64,
    seed: u64,
) -> Result<Estimate, ExperimentError> {
    Ok(estimate_arm_batch(&[kind], replicas, seed, 0.5)?.pop().expect("one kind in, one out"))
}

/// Estimate several arm events **on shared samples**: the events must live
/// on the same domain and setting, and every replica's decomposition is
/// tested against each of them.  Marginal estimates match [`estimate_arm`]
/// bit for bit (same seeds, same sampling path); only their correlation
/// differs, which is harmless for band and slope tests and saves a factor of
/// `kinds.len()` in sampling work.  `alpha` is the soup intensity for the
/// discrete setting and must equal `1/2` in the metric one.
pub fn estimate_arm_batch(
    kinds: &[ArmEventKind],
    replicas: u64,
    seed: u64,
    alpha: f64,
) -> Result<Vec<Estimate>, ExperimentError> {
    if replicas == 0 {
        return Err(ExperimentError::ZeroReplicas);
    }
    let run = ArmRun::new(kinds, alpha)?;
    let hits = run.count_hits(seed, 0, replicas);
    Ok(hits
        .into_iter()
        .zip(kinds)
        .map(|(h, &kind)| Estimate::proportion(h, replicas, seed, arm_label(kind)))
        .collect())
}

/// Replica budgets: a fixed count, or an adaptive schedule that keeps
/// doubling the sample until the event has at least `min_hits` hits (capped
/// at `max_replicas`).
#[derive(Clone, Copy, Debug)]
pub enum Budget {
    Fixed(u64),
    Auto { min_hits: u64, max_replicas: u64 },
}

/// [`estimate_arm`] under a [`Budget`], at soup intensity `alpha` (ignored
/// in the metric setting, which is pinned to 1/2).
///
/// The auto schedule is deterministic: replica `i` is always seeded
/// `seed + i` and batch boundaries depend only on the (deterministic) hit
/// sequence.  Hitting `max_replicas` with a nonzero count returns the
/// estimate with a loud warning; zero hits is an error, since the sample
/// then says nothing about the order of magnitude of the probability.
pub fn estimate_arm_budgeted(
    kind: ArmEventKind,
    budget: Budget,
    seed: u64,
    alpha: f64,
) -> Result<Estimate, ExperimentError> {
    let (min_hits, max_replicas) = match budget {
        Budget::Fixed(replicas) => {
            let mut out = estimate_arm_batch(&[kind], replicas, seed, alpha)?;
            return Ok(out.pop().expect("one kind in, one out"));
        }
        Budget::Auto { min_hits, max_replicas } => (min_hits.max(1), max_replicas),
    };
    if max_replicas == 0 {
        return Err(ExperimentError::ZeroReplicas);
    }
    let run = ArmRun::new(&[kind], alpha)?;
    let mut done = 0u64;
    let mut hits = 0u64;
    let mut batch = 1024.min(max_replicas);
    loop {
        hits += run.count_hits(seed, done, batch)[0];
        done += batch;
        if hits >= min_hits || done >= max_replicas {
            break;
        }
        batch = done.min(max_replicas - done);
    }
    let label = arm_label(kind);
    if hits == 0 {
        return Err(ExperimentError::BudgetExhausted { label, replicas: done });
    }
    if hits < min_hits {
        eprintln!(
            "warning: `{label}` stopped at the {max_replicas}-replica cap with only \
             {hits}/{min_hits} hits"
        );
    }
    Ok(Estimate::proportion(hits, done, seed, label))
}

/// Which abscissa a log–log regression runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// `log(mean)` against `log(k/n)`: inner radius varies, outer fixed.
    VaryK,
    /// `log(mean)` against `log(n)`: outer radius varies.
    VaryN,
}

/// One point of a log–log fit: abscissa, ordinate and inverse-variance
/// weight, all already on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub log_x: f64,
    pub log_y: f64,
    pub weight: f64,
}

/// Weighted log–log regression result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: Vec<FitPoint>,
}

/// Fit `log(mean)` against the mode's abscissa by weighted least squares
/// with weights `1/(relative SE)²` — the delta-method variance of a log.
///
/// Zero or exactly-saturated estimates have no finite log weight; they are
/// dropped with a warning, and fewer than three surviving points is an
/// error.
pub fn fit_exponent(
    points: &[((i32, i32), Estimate)],
    mode: FitMode,
) -> Result<ExponentFit, ExperimentError> {
    let mut kept = Vec::with_capacity(points.len());
    for ((k, n), est) in points {
        let rel = est.relative_se();
        if est.mean <= 0.0 || !rel.is_finite() || rel <= 0.0 {
            eprintln!(
                "warning: dropping degenerate fit point k={k} n={n} \
                 (mean {}, SE {})",
                est.mean, est.std_error
            );
            continue;
        }
        let log_x = match mode {
            FitMode::VaryK => (*k as f64 / *n as f64).ln(),
            FitMode::VaryN => (*n as f64).ln(),
        };
        kept.push(FitPoint { log_x, log_y: est.mean.ln(), weight: 1.0 / (rel * rel) });
    }
    if kept.len() < 3 {
        return Err(ExperimentError::TooFewPoints { need: 3, got: kept.len() });
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.log_x).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.log_y).collect();
    let ws: Vec<f64> = kept.iter().map(|p| p.weight).collect();
    let line = fit_line_weighted(&xs, &ys, &ws);
    Ok(ExponentFit {
        slope: line.slope,
        intercept: line.intercept,
        slope_stderr: line.slope_se,
        points: kept,
    })
}

/// The three four-arm estimates entering a quasi-multiplicativity check and
/// the combined ratio `π̂₄(n) / (π̂₄(k) · π̂₄(k,n))`, where `π̂₄(m)`
/// abbreviates `π̂₄(1, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiMultReport {
    pub pi_n: Estimate,
    pub pi_k: Estimate,
    pub pi_kn: Estimate,
    pub ratio: f64,
    /// Delta-method standard error: relative variances of the three
    /// (independent) factors add.
    pub ratio_se: f64,
}

/// Quasi-multiplicativity ratio for four-arm events.
///
/// Needs `2 ≤ k ≤ n/2` (the inner probability `π₄(1, k)` requires its own
/// scale separation).  The three estimates run on disjoint seed blocks and
/// the caller chooses `replicas` large enough that the rarest of them —
/// `π₄(1, n)`, of order `n⁻²` — is expected to collect on the order of a
/// hundred hits.
pub fn quasi_mult_ratio(
    n: i32,
    k: i32,
    replicas: u64,
    seed: u64,
    setting: Setting,
) -> Result<QuasiMultReport, ExperimentError> {
    if !(k >= 2 && 2 * k <= n) {
        return Err(ExperimentError::BadParam(format!(
            "quasi-multiplicativity needs 2 ≤ k ≤ n/2, got k={k} n={n}"
        )));
    }
    let four = |kk, nn| ArmEventKind { kind: ArmKind::FourArmLocal { k: kk, n: nn }, setting };
    let pi_n = estimate_arm(four(1, n), replicas, seed)?;
    let pi_k = estimate_arm(four(1, k), replicas, seed.wrapping_add(1 << 40))?;
    let pi_kn = estimate_arm(four(k, n), replicas, seed.wrapping_add(2 << 40))?;
    for est in [&pi_n, &pi_k, &pi_kn] {
        if est.mean == 0.0 {
            return Err(ExperimentError::ZeroEstimate {
                label: est.label.clone(),
                replicas: est.replicas,
            });
        }
    }
    let ratio = pi_n.mean / (pi_k.mean * pi_kn.mean);
    let rel = [&pi_n, &pi_k, &pi_kn]
        .iter()
        .map(|e| e.relative_se() * e.relative_se())
        .sum::<f64>()
        .sqrt();
    Ok(QuasiMultReport { pi_n, pi_k, pi_kn, ratio, ratio_se: ratio * rel })
}

/// Sample family for the `N(Λ)` statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NLambdaSetting {
    /// Metric sign clusters; counts single surviving-contact points.
    Metric,
    /// Loop-soup clusters; counts points whose `k`-box makes contact, and
    /// reports the count divided by `k²`.
    DiscreteK(i32),
}

/// Mean number of contour points around the central hull Λ = `B_{n/8}` that
/// the loop soup *outside* Λ connects to distance `n/2`.
///
/// The boundedness statement holds uniformly over hulls sandwiched between
/// `B_{n/8}` and `B_{n/4}`, so the estimator commits to the minimal,
/// always-admissible choice Λ = `B_{n/8}`: by the restriction property the
/// loops avoiding Λ are exactly a fresh soup on the annulus `B_n ∖ B_{n/8}`
/// (for the field: a fresh zero-boundary field, since the sign clusters end
/// on zeros), so each replica samples that annulus directly and counts
/// contour points whose cluster reaches norm `n/2`.  The alternative of
/// growing Λ out of the sample itself would need rejection on the sandwich
/// condition, which at these sizes fails in nearly every replica — the
/// central clusters routinely escape `B_{n/4}` — and without the rejection
/// the count degenerates to a boundary-length statistic that grows like `n`
/// instead of staying Θ(1).
///
/// Metric setting: Γ is the contour sphere of radius `n/8 + 3` (the outer
/// boundary of the 2-fattening of Λ) and a point counts when its own sign
/// cluster reaches norm `n/2`.  Discrete setting: Γ is the shell of width
/// `k` just outside `B_{n/8}`, a point counts when a cluster reaching norm
/// `n/2` touches its `(2k+1)²` contact box, and the reported value is the
/// count divided by `k²`.
pub fn estimate_n_lambda(
    n: i32,
    replicas: u64,
    seed: u64,
    setting: NLambdaSetting,
) -> Result<Estimate, ExperimentError> {
    if n < 32 {
        return Err(ExperimentError::BadParam(format!(
            "the Λ/Γ construction needs n ≥ 32 (so that n/8 ≥ 4), got {n}"
        )));
    }
    if replicas == 0 {
        return Err(ExperimentError::ZeroReplicas);
    }
    let (family, window, label) = match setting {
        NLambdaSetting::Metric => (Setting::Metric, 0, format!("n-lambda metric n={n}")),
        NLambdaSetting::DiscreteK(k) => {
            if !(k >= 1 && 8 * k <= n) {
                return Err(ExperimentError::BadParam(format!(
                    "the discrete contact box needs 1 ≤ k ≤ n/8, got k={k} n={n}"
                )));
            }
            (Setting::Discrete, k, format!("n-lambda discrete k={k} n={n}"))
        }
    };
    let inner = n / 8;
    let half = n / 2;
    let domain = Arc::new(Domain::build(DomainLabel::Annulus { k: inner, n })?);
    let engine = SampleEngine::build(&domain, family, 0.5)?;
    // Contour points: the sphere at n/8 + 3 for the metric count, the shell
    // of width k outside the ball for the discrete one.
    let gamma: Vec<LatticePoint> = match setting {
        NLambdaSetting::Metric => sphere_points(inner + 3),
        NLambdaSetting::DiscreteK(k) => {
            (inner + 1..=inner + k).flat_map(sphere_points).collect()
        }
    };
    let values: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let decomp = engine.decompose(seed.wrapping_add(i));
            let mut live = vec![false; domain.vertex_count()];
            for c in decomp.clusters() {
                if c.max_norm() >= half {
                    for &v in c.vertices() {
                        live[v as usize] = true;
                    }
                }
            }
            let count = gamma
                .iter()
                .filter(|&&u| {
                    (u.x - window..=u.x + window).any(|x| {
                        (u.y - window..=u.y + window).any(|y| {
                            domain.id_of(pt(x, y)).map_or(false, |id| live[id as usize])
                        })
                    })
                })
                .count();
            count as f64 / (window.max(1) as f64 * window.max(1) as f64)
        })
        .collect();
    Ok(Estimate::from_samples(&values, seed, label))
}

/// All lattice points at l∞ norm exactly `r`.
fn sphere_points(r: i32) -> Vec<LatticePoint> {
    let mut out = Vec::with_capacity((8 * r).max(1) as usize);
    for x in -r..=r {
        out.push(pt(x, r));
        if r > 0 {
            out.push(pt(x, -r));
        }
    }
    for y in (-r + 1)..r {
        out.push(pt(r, y));
        out.push(pt(-r, y));
    }
    out
}

/// `P[max_{[0,c]} W < m]` for a standard Brownian motion from 0, by the
/// reflection principle: `2Φ(m/√c) − 1` (zero for `m ≤ 0`).
pub fn brownian_stays_below(m: f64, c: f64) -> f64 {
    assert!(c > 0.0, "need a positive time horizon");
    if m <= 0.0 {
        return 0.0;
    }
    2.0 * normal_cdf(m / c.sqrt()) - 1.0
}

/// Shared setup for the two segment-seeded half-plane experiments: the
/// domain `HalfPlaneBox(2n)`, a Gaussian sampler with boundary data 1 on the
/// bottom segment `l = {(x,0) : |x| ≤ ⌊3k/2⌋}` and 0 elsewhere, the segment
/// vertex ids, and the observation point `x₀` nearest `(0, 3n/2)`.
struct SegmentField {
    domain: Arc<Domain>,
    solver: Arc<PotentialSolver>,
    sampler: GffSampler,
    segment: Vec<VertexId>,
    x0: VertexId,
}

fn segment_field(n: i32, k: i32) -> Result<SegmentField, ExperimentError> {
    let half_len = 3 * k / 2;
    if k < 1 || half_len > 2 * n {
        return Err(ExperimentError::BadParam(format!(
            "segment half-length ⌊3k/2⌋ = {half_len} must fit in the half-plane box of radius {}",
            2 * n
        )));
    }
    let domain = Arc::new(Domain::build(DomainLabel::HalfPlaneBox { n: 2 * n })?);
    let solver = Arc::new(PotentialSolver::new(&domain)?);
    let data = solver.boundary_from_fn(|p| f64::from(p.y == 0 && p.x.abs() <= half_len));
    let sampler = GffSampler::new(Arc::clone(&solver), &data)?;
    let segment: Vec<VertexId> =
        (-half_len..=half_len).map(|x| domain.id_of(pt(x, 0)).expect("bottom row")).collect();
    let x0 = domain.id_of(pt(0, 3 * n / 2)).expect("observation point inside the box");
    Ok(SegmentField { domain, solver, sampler, segment, x0 })
}

/// Positive clusters touching the seed segment in one metric sample.
fn segment_cluster_ids(decomp: &ClusterDecomposition, segment: &[VertexId]) -> Vec<u32> {
    let mut ids: Vec<u32> = segment.iter().filter_map(|&v| decomp.cluster_of(v)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.retain(|&cid| decomp.cluster(cid).sign() > 0);
    ids
}

/// Monte Carlo check of the coupling between the segment-seeded field and a
/// Brownian motion: estimates `P[R^eff(x₀,∂D) − R^eff(x₀,∂D ∪ Λ̃₀) > c]`,
/// where `Λ̃₀` is the union of positive clusters meeting the seed segment,
/// and returns it alongside the reflection-principle value
/// `P[max_{[0,c]} W < m]` with `m` the field's mean at `x₀`.
///
/// An empty `Λ̃₀` contributes a zero drop (a valid replica); a `Λ̃₀` that
/// swallows `x₀` contributes the full base resistance.  The drop uses the
/// vertex skeleton of `Λ̃₀` as extra killing, which slightly under-counts
/// the continuum drop — one of the reasons the agreement band is loose.
pub fn verify_resistance_drop(
    n: i32,
    k: i32,
    c_threshold: f64,
    replicas: u64,
    seed: u64,
) -> Result<(Estimate, f64), ExperimentError> {
    if !(c_threshold > 0.0 && c_threshold.is_finite()) {
        return Err(ExperimentError::BadParam(format!(
            "threshold must be positive and finite, got {c_threshold}"
        )));
    }
    if replicas == 0 {
        return Err(ExperimentError::ZeroReplicas);
    }
    let sf = segment_field(n, k)?;
    let base = sf.solver.effective_resistance(sf.x0)?;
    let hits: u64 = (0..replicas)
        .into_par_iter()
        .map(|i| -> Result<u64, ExperimentError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let field = sf.sampler.sample(&mut rng);
            let decomp = decompose_metric(&extend_to_metric(field, &mut rng));
            let ids = segment_cluster_ids(&decomp, &sf.segment);
            let drop = if ids.is_empty() {
                0.0
            } else if decomp.cluster_of(sf.x0).map_or(false, |c| ids.binary_search(&c).is_ok()) {
                base
            } else {
                let mut extra = Vec::new();
                for &cid in &ids {
                    extra.extend_from_slice(decomp.cluster(cid).vertices());
                }
                let killed = PotentialSolver::with_extra_killing(&sf.domain, &extra)?;
                base - killed.effective_resistance(sf.x0)?
            };
            Ok(u64::from(drop > c_threshold))
        })
        .sum::<Result<u64, _>>()?;
    let label = format!("resistance-drop n={n} k={k} c={c_threshold}");
    let estimate = Estimate::proportion(hits, replicas, seed, label);
    let analytic = brownian_stays_below(sf.sampler.mean()[sf.x0 as usize], c_threshold);
    Ok((estimate, analytic))
}

/// Probability that a positive cluster of the segment-seeded metric field
/// connects the seed segment `l = {(x,0) : |x| ≤ ⌊3k/2⌋}` to a vertex of
/// norm ≥ `n` inside `HalfPlaneBox(2n)`.
pub fn estimate_gff_segment_connection(
    n: i32,
    k: i32,
    replicas: u64,
    seed: u64,
) -> Result<Estimate, ExperimentError> {
    if !(k >= 1 && 2 * k <= n) {
        return Err(ExperimentError::BadParam(format!(
            "segment connection needs 1 ≤ k ≤ n/2, got k={k} n={n}"
        )));
    }
    if replicas == 0 {
        return Err(ExperimentError::ZeroReplicas);
    }
    let sf = segment_field(n, k)?;
    let hits: u64 = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let field = sf.sampler.sample(&mut rng);
            let decomp = decompose_metric(&extend_to_metric(field, &mut rng));
            let hit = sf
                .segment
                .iter()
                .filter_map(|&v| decomp.cluster_of(v))
                .any(|cid| {
                    let c = decomp.cluster(cid);
                    c.sign() > 0 && c.max_norm() >= n
                });
            u64::from(hit)
        })
        .sum();
    let label = format!("segment-connection n={n} k={k}");
    Ok(Estimate::proportion(hits, replicas, seed, label))
}

/// One emitted result row: everything needed to reproduce and compare runs.
///
/// `wall_time_s` is measurement metadata, not data — comparisons between
/// runs go through [`ExperimentRecord::data_eq`], which ignores it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub label: String,
    /// Numeric experiment parameters (radii, thresholds, intensity, …) in
    /// sorted key order, so serialization is canonical.
    pub params: BTreeMap<String, f64>,
    pub mean: f64,
    pub std_error: f64,
    pub replicas: u64,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl ExperimentRecord {
    pub fn from_estimate(
        est: &Estimate,
        params: &[(&str, f64)],
        wall_time_s: f64,
    ) -> ExperimentRecord {
        ExperimentRecord {
            label: est.label.clone(),
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            mean: est.mean,
            std_error: est.std_error,
            replicas: est.replicas,
            seed: est.seed,
            wall_time_s,
        }
    }

    /// Equality on the data fields only (everything except the wall time).
    pub fn data_eq(&self, other: &ExperimentRecord) -> bool {
        self.label == other.label
            && self.params == other.params
            && self.mean == other.mean
            && self.std_error == other.std_error
            && self.replicas == other.replicas
            && self.seed == other.seed
    }

    /// One JSON object per line.
    pub fn write_jsonl(records: &[ExperimentRecord], w: &mut impl Write) -> std::io::Result<()> {
        for r in records {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> std::io::Result<Vec<ExperimentRecord>> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line)?);
        }
        Ok(out)
    }

    /// Flat CSV, one row per record; the radii columns come from `params`
    /// and are left blank for records without them.
    pub fn write_csv(records: &[ExperimentRecord], w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "label,k,n,mean,std_error,replicas,seed")?;
        for r in records {
            let int = |key: &str| {
                r.params.get(key).map(|&v| format!("{}", v as i64)).unwrap_or_default()
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.label,
                int("k"),
                int("n"),
                r.mean,
                r.std_error,
                r.replicas,
                r.seed
            )?;
        }
        Ok(())
    }
}
