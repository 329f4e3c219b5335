//! Envelope ("skyline") Cholesky factorization for symmetric positive
//! definite matrices whose nonzeros sit near the diagonal — which is what the
//! killed lattice Laplacian looks like once vertices are sorted in lattice
//! order.
//!
//! The factor `R` (lower triangular, `A = R Rᵀ`) is stored by rows: row `i`
//! keeps the contiguous segment of columns `start[i] ..= i`.  For a grid
//! domain sorted by `(x, y)` the envelope width is about the column height of
//! the domain, and Cholesky fill never escapes the envelope.
//!
//! Two extras beyond plain solves are used elsewhere in the crate:
//!
//! * [`SkylineFactor::leading_block_green_column`] solves against the leading
//!   principal block `A[0..=t, 0..=t]` only.  Because the Cholesky factor of
//!   a leading block (in elimination order) is the corresponding block of the
//!   full factor, one factorization serves every nested subdomain at once —
//!   this is what makes the per-vertex loop-soup laws affordable.
//! * [`SkylineFactor::to_f32`] produces a single-precision copy for bulk
//!   Gaussian sampling, where per-sample accuracy far beyond Monte Carlo
//!   resolution is wasted; all potential-theory solves stay in `f64`.

#[derive(Debug, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

pub struct SkylineFactor {
    start: Vec<u32>,
    offs: Vec<usize>,
    vals: Vec<f64>,
}

impl SkylineFactor {
    /// Factor the SPD matrix with diagonal `diag` and strictly-lower entries
    /// `lower[i] = [(j, a_ij), ...]` (each sorted by `j`).
    pub fn factor(
        diag: &[f64],
        lower: &[Vec<(u32, f64)>],
    ) -> Result<SkylineFactor, NotPositiveDefinite> {
        let m = diag.len();
        assert_eq!(lower.len(), m);
        let mut start = vec![0u32; m];
        let mut offs = vec![0usize; m + 1];
        for i in 0..m {
            start[i] = lower[i].first().map_or(i as u32, |&(j, _)| j);
            offs[i + 1] = offs[i] + (i - start[i] as usize + 1);
        }
        let mut vals = vec![0.0f64; offs[m]];

        // Scatter the input rows into the envelope.
        for i in 0..m {
            let si = start[i] as usize;
            for &(j, a) in &lower[i] {
                vals[offs[i] + (j as usize - si)] = a;
            }
            vals[offs[i] + (i - si)] = diag[i];
        }

        // Row-active factorization: row i is finished using rows j < i.
        for i in 0..m {
            let si = start[i] as usize;
            let (done, cur) = vals.split_at_mut(offs[i]);
            let row_i = &mut cur[..i - si + 1];
            for j in si..i {
                let sj = start[j] as usize;
                let row_j = &done[offs[j]..offs[j + 1]];
                let lo = si.max(sj);
                let s: f64 = row_i[lo - si..j - si]
                    .iter()
                    .zip(&row_j[lo - sj..j - sj])
                    .map(|(a, b)| a * b)
                    .sum();
                row_i[j - si] = (row_i[j - si] - s) / row_j[j - sj];
            }
            let sq: f64 = row_i[..i - si].iter().map(|v| v * v).sum();
            let d = row_i[i - si] - sq;
            if d <= 0.0 || !d.is_finite() {
                return Err(NotPositiveDefinite { row: i, pivot: d });
            }
            row_i[i - si] = d.sqrt();
        }
        Ok(SkylineFactor { start, offs, vals })
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// Diagonal entry `R[i,i]` of the factor (the `i`-th pivot square root).
    pub fn pivot(&self, i: usize) -> f64 {
        self.vals[self.offs[i] + (i - self.start[i] as usize)]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.offs[i]..self.offs[i + 1]]
    }

    /// Solve `R y = x` in place.
    pub fn forward(&self, x: &mut [f64]) {
        for i in 0..self.dim() {
            let si = self.start[i] as usize;
            let row = self.row(i);
            let s: f64 = row[..i - si].iter().zip(&x[si..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i - si];
        }
    }

    /// Solve `Rᵀ z = x` in place.
    pub fn backward(&self, x: &mut [f64]) {
        for i in (0..self.dim()).rev() {
            let si = self.start[i] as usize;
            let row = self.row(i);
            let xi = x[i] / row[i - si];
            x[i] = xi;
            if xi != 0.0 {
                for (k, r) in row[..i - si].iter().enumerate() {
                    x[si + k] -= r * xi;
                }
            }
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        self.forward(x);
        self.backward(x);
    }

    /// Column `t` of the inverse of the leading principal block
    /// `A[0..=t, 0..=t]`, i.e. `(A_block)^{-1} e_t`, written into `out`
    /// (resized to `t + 1`).
    ///
    /// Uses the identity `Chol(A)[0..=t, 0..=t] = Chol(A[0..=t, 0..=t])`: the
    /// forward solve against `e_t` is trivial (`z = e_t / R[t,t]`), so only
    /// one backward sweep over the block is needed.  In particular
    /// `out[t] = 1 / R[t,t]^2` is the `(t,t)` entry of the block inverse.
    pub fn leading_block_green_column(&self, t: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(t + 1, 0.0);
        out[t] = 1.0 / self.pivot(t);
        for i in (0..=t).rev() {
            if out[i] == 0.0 {
                continue;
            }
            let si = self.start[i] as usize;
            let row = self.row(i);
            let xi = out[i] / row[i - si];
            out[i] = xi;
            for (k, r) in row[..i - si].iter().enumerate() {
                out[si + k] -= r * xi;
            }
        }
    }

    /// Single-precision copy of the factor for bulk sampling.
    pub fn to_f32(&self) -> SkylineFactorF32 {
        SkylineFactorF32 {
            start: self.start.clone(),
            offs: self.offs.clone(),
            vals: self.vals.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Single-precision skyline factor; only the transpose solve is provided
/// (that is all Gaussian sampling needs: `z = R^{-T} ξ`).
pub struct SkylineFactorF32 {
    start: Vec<u32>,
    offs: Vec<usize>,
    vals: Vec<f32>,
}

impl SkylineFactorF32 {
    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// Solve `Rᵀ z = x` in place.
    pub fn backward(&self, x: &mut [f32]) {
        for i in (0..self.dim()).rev() {
            let si = self.start[i] as usize;
            let row = &self.vals[self.offs[i]..self.offs[i + 1]];
            let xi = x[i] / row[i - si];
            x[i] = xi;
            if xi != 0.0 {
                for (k, r) in row[..i - si].iter().enumerate() {
                    x[si + k] -= r * xi;
                }
            }
        }
    }
}
