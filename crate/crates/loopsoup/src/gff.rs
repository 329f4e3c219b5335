//! Discrete Gaussian free field with boundary conditions, and its extension
//! to the metric graph by Brownian-bridge zero marks on edges.
//!
//! The field density is ∝ exp(−½ Σ_edges (φ_x − φ_y)²) with the boundary
//! rows pinned, so the centered field has covariance exactly the Green
//! function of [`PotentialSolver`] (resistance normalization) and the bridge
//! over an edge with endpoint values `a`, `b` hits zero with probability
//! `exp(−2ab)` for `ab > 0`.  Sampling is exact: mean = harmonic extension,
//! fluctuation = transposed-factor solve of an i.i.d. standard normal vector.
//! No MCMC anywhere.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::lattice::{Domain, VertexId};
use crate::potential::{BoundaryData, PotentialError, PotentialSolver};

/// A real field on every vertex of a domain; boundary vertices carry their
/// boundary condition exactly.
#[derive(Clone, Debug)]
pub struct ScalarField {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl ScalarField {
    /// Wrap explicit per-vertex values (indexed by vertex id).
    pub fn from_values(domain: Arc<Domain>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), domain.vertex_count());
        ScalarField { domain, values }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn value(&self, v: VertexId) -> f64 {
        self.values[v as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV dump, one `x,y,value` row per vertex.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "x,y,value")?;
        for (v, val) in self.values.iter().enumerate() {
            let p = self.domain.point(v as VertexId);
            writeln!(w, "{},{},{val}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Reusable sampler: caches the harmonic mean of the boundary data and a
/// single-precision copy of the Cholesky factor.  Sampling then costs one
/// triangular solve per replica.
pub struct GffSampler {
    solver: Arc<PotentialSolver>,
    mean: Vec<f64>,
}

impl GffSampler {
    pub fn new(
        solver: Arc<PotentialSolver>,
        boundary_data: &BoundaryData,
    ) -> Result<Self, PotentialError> {
        solver.factor_f32()?; // fail early on CG backends, warm the cache
        let mean = solver.harmonic_extension(boundary_data)?.values().to_vec();
        Ok(GffSampler { solver, mean })
    }

    pub fn solver(&self) -> &Arc<PotentialSolver> {
        &self.solver
    }

    /// Mean field (the harmonic extension of the boundary data), indexed by
    /// vertex id.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Draw one field: mean + R^{-T} ξ with ξ i.i.d. standard normal.
    pub fn sample(&self, rng: &mut impl Rng) -> ScalarField {
        let m = self.solver.interior_count();
        let factor = self.solver.factor_f32().expect("checked at construction");
        let mut z: Vec<f32> = (0..m).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        factor.backward(&mut z);
        let mut values = self.mean.clone();
        for (t, &zt) in z.iter().enumerate() {
            values[self.solver.vertex_at_factor_index(t) as usize] += zt as f64;
        }
        ScalarField { domain: Arc::clone(self.solver.domain()), values }
    }
}

/// One-shot convenience wrapper around [`GffSampler`].
pub fn sample_gff(
    solver: &Arc<PotentialSolver>,
    boundary_data: &BoundaryData,
    rng: &mut impl Rng,
) -> Result<ScalarField, PotentialError> {
    Ok(GffSampler::new(Arc::clone(solver), boundary_data)?.sample(rng))
}

/// Probability that the unit-duration Brownian bridge between `a` and `b`
/// (edge-length variance 1) touches zero: 1 when the endpoints straddle or
/// touch zero, `exp(−2ab)` otherwise.
pub fn bridge_zero_hit_prob(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        1.0
    } else {
        (-2.0 * a * b).exp()
    }
}

/// A field together with its metric-graph edge marks: `edge_open[e]` says
/// whether the bridge over edge `e` stayed away from zero, in which case the
/// two endpoints are wired together inside the metric graph.
#[derive(Clone, Debug)]
pub struct MetricSignSample {
    field: ScalarField,
    edge_open: Vec<bool>,
}

impl MetricSignSample {
    /// Wrap an explicit (field, marks) pair; `edge_open` must parallel
    /// `domain.edges()`.  Mostly useful for hand-built configurations.
    pub fn from_parts(field: ScalarField, edge_open: Vec<bool>) -> Self {
        assert_eq!(edge_open.len(), field.domain().edges().len());
        MetricSignSample { field, edge_open }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.field.domain()
    }

    /// Open marks parallel to `domain.edges()`.
    pub fn edge_open(&self) -> &[bool] {
        &self.edge_open
    }

    /// CSV dump of the marks, one `x1,y1,x2,y2,open` row per edge.
    pub fn write_edges_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "x1,y1,x2,y2,open")?;
        let domain = self.domain();
        for (e, &(u, v)) in domain.edges().iter().enumerate() {
            let (p, q) = (domain.point(u), domain.point(v));
            writeln!(
                w,
                "{},{},{},{},{}",
                p.x,
                p.y,
                q.x,
                q.y,
                if self.edge_open[e] { 1 } else { 0 }
            )?;
        }
        Ok(())
    }
}

/// Mark every edge of the field's domain open or closed: closed with the
/// bridge-zero probability [`bridge_zero_hit_prob`], independently across
/// edges given the field.  Edges whose endpoint product is ≤ 0 close
/// deterministically.
///
/// The caller must have sampled the field with nonnegative boundary data
/// (the sign-cluster coupling is stated for `u ≥ 0` boundaries); this is
/// asserted on the boundary rows.
pub fn extend_to_metric(field: ScalarField, rng: &mut impl Rng) -> MetricSignSample {
    let domain = Arc::clone(field.domain());
    for &v in domain.boundary_ids() {
        assert!(
            field.value(v) >= 0.0,
            "metric extension requires nonnegative boundary values (got {} at {})",
            field.value(v),
            domain.point(v)
        );
    }
    let edge_open = domain
        .edges()
        .iter()
        .map(|&(u, v)| {
            let p_close = bridge_zero_hit_prob(field.value(u), field.value(v));
            // avoid burning randomness on deterministic closures
            p_close < 1.0 && rng.gen::<f64>() >= p_close
        })
        .collect();
    MetricSignSample { field, edge_open }
}
