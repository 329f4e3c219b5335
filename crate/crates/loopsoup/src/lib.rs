//! Random-walk loop soups and metric-graph Gaussian free fields on `Z^2`.
//!
//! The crate provides, bottom to top:
//!
//! * [`lattice`] — finite domains of `Z^2` with absorbing boundaries, and
//!   unrooted oriented loops with their measure `ν(γ) = 4^{-|γ|}/m(γ)`;
//! * [`potential`] — killed-Laplacian potential theory: Green function,
//!   effective resistance, harmonic measure and harmonic extension, backed by
//!   a sparse Cholesky factorization;
//! * [`gff`] — exact sampling of the discrete Gaussian free field and its
//!   extension to the metric graph (independent Brownian-bridge zero marks on
//!   edges);
//! * [`rwls`] — an exact sampler for the random-walk loop soup via the
//!   minimal-vertex excursion decomposition of the loop measure;
//! * [`clusters`] — cluster decompositions of both kinds of sample, filled
//!   hulls, and the four-arm / half-plane two-arm events;
//! * [`experiments`] — Monte Carlo drivers: arm-probability estimates,
//!   exponent fits, quasi-multiplicativity ratios, the boundary-count
//!   statistic `N(Λ)`, and resistance-drop verification;
//! * [`selftest`] — the fast end-to-end check suite used by the CLI.
//!
//! The [`oracle`] module holds independent brute-force reference
//! implementations (loop enumeration, Markov-chain power iteration, a
//! discretized Brownian bridge) used to validate the fast paths.

pub mod clusters;
pub mod experiments;
pub mod gff;
pub mod guide;
pub mod lattice;
pub mod oracle;
pub mod potential;
pub mod rwls;
pub mod selftest;
pub mod skyline;
pub mod stats;

pub use clusters::{ArmEventKind, ArmKind, ClusterDecomposition, Setting};
pub use experiments::{
    estimate_arm, estimate_arm_batch, estimate_arm_budgeted, estimate_gff_segment_connection,
    estimate_n_lambda, fit_exponent, quasi_mult_ratio, verify_resistance_drop, Budget, Estimate,
    ExperimentError, ExperimentRecord, ExponentFit, FitMode, NLambdaSetting, QuasiMultReport,
};
pub use gff::{bridge_zero_hit_prob, GffSampler, ScalarField};
pub use lattice::{pt, Domain, DomainLabel, LatticePoint, Loop, VertexId};
pub use potential::{BoundaryData, HarmonicData, PotentialSolver};
pub use rwls::{build_vertex_laws, sample_rwls, LoopSoupSample, VertexLoopLaws, VertexOrder};
pub use selftest::{all_passed, run_selftest, CheckOutcome};
