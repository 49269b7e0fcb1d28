//! Working geometry of an SDP instance: cleaned equality system plus
//! per-block range-space restrictions discovered by facial reduction.
//!
//! The moment variables are never reparametrized; restrictions act on the
//! matrix blocks only, and forced-kernel directions turn into extra linear
//! rows `F_b(y)·v = 0` so the restricted instance keeps the original feasible
//! set.

use super::linalg::{independent_rows, least_squares_min_norm};
use crate::relaxation::{EqRow, SdpProblem};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct GeoBlock {
    /// Index into `SdpProblem::blocks`.
    pub block_idx: usize,
    /// Restricted size.
    pub r: usize,
    /// Moment variables with a nonzero slice in this block.
    pub vars: Vec<usize>,
    /// Dense restricted slices `Pᵀ (∂F/∂y_k) P`, aligned with `vars`.
    pub slices: Vec<DMatrix<f64>>,
}

impl GeoBlock {
    pub fn assemble(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.r, self.r);
        for (slice, &k) in self.slices.iter().zip(&self.vars) {
            let yk = y[k];
            if yk != 0.0 {
                x.iter_mut().zip(slice.iter()).for_each(|(a, &b)| *a += yk * b);
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    /// Number of scalar variables (moment variables, plus one when a
    /// phase-1 slack has been appended).
    pub m: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Cleaned rows matching `a`, for dual bookkeeping.
    pub rows: Vec<EqRow>,
    pub blocks: Vec<GeoBlock>,
}

impl Geometry {
    /// Builds the geometry for `prob` with the given block restrictions and
    /// extra pinning rows. Returns `None` when the equality system is
    /// inconsistent.
    pub fn build(
        prob: &SdpProblem,
        proj: &[Option<DMatrix<f64>>],
        pin_rows: &[EqRow],
    ) -> Option<(Geometry, DVector<f64>)> {
        let m = prob.num_moment_vars();
        let mut all_rows: Vec<EqRow> = prob.eq_rows.clone();
        all_rows.extend(pin_rows.iter().cloned());
        let p = all_rows.len();
        let mut a = DMatrix::zeros(p, m);
        let mut b = DVector::zeros(p);
        for (i, row) in all_rows.iter().enumerate() {
            for &(k, c) in &row.coeffs {
                a[(i, k)] += c;
            }
            b[i] = row.rhs;
        }
        // Input rows dedup at the strict tolerance; derived pin rows carry
        // numerical noise from the kernel vectors and dedup coarsely.
        let n_input = prob.eq_rows.len();
        let (keep, y0) = independent_rows(&a, &b, |i| if i < n_input { 1e-10 } else { 1e-4 })?;
        let rows: Vec<EqRow> = keep.iter().map(|&i| all_rows[i].clone()).collect();
        let (a, b) = if keep.is_empty() {
            (DMatrix::zeros(0, m), DVector::zeros(0))
        } else {
            (
                DMatrix::from_rows(&keep.iter().map(|&i| a.row(i).into_owned()).collect::<Vec<_>>()),
                DVector::from_iterator(keep.len(), keep.iter().map(|&i| b[i])),
            )
        };

        let mut blocks = Vec::new();
        for (bi, spec) in prob.blocks.iter().enumerate() {
            let s = spec.size();
            let pmat = &proj[bi];
            let r = pmat.as_ref().map_or(s, |p| p.ncols());
            if r == 0 {
                continue;
            }
            let mut vars = Vec::new();
            let mut slices = Vec::new();
            // Gather per-variable sparse triplets once.
            let mut touched: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); m];
            for i in 0..s {
                for j in i..s {
                    for &(k, c) in spec.entry(i, j) {
                        touched[k].push((i, j, c));
                    }
                }
            }
            for (k, trips) in touched.iter().enumerate() {
                if trips.is_empty() {
                    continue;
                }
                let mut full = DMatrix::zeros(s, s);
                for &(i, j, c) in trips {
                    full[(i, j)] += c;
                    if i != j {
                        full[(j, i)] += c;
                    }
                }
                let slice = match pmat {
                    None => full,
                    Some(p) => p.transpose() * full * p,
                };
                vars.push(k);
                slices.push(slice);
            }
            blocks.push(GeoBlock {
                block_idx: bi,
                r,
                vars,
                slices,
            });
        }
        Some((
            Geometry {
                m,
                a,
                b,
                rows,
                blocks,
            },
            y0,
        ))
    }

    /// Appends a slack variable entering every block as the identity — the
    /// phase-1 formulation `F_b(y) + t·I ⪰ 0`.
    pub fn with_slack_var(&self) -> Geometry {
        let mut g = self.clone();
        let t_var = self.m;
        g.m += 1;
        g.a = {
            let mut a = DMatrix::zeros(self.a.nrows(), g.m);
            a.view_mut((0, 0), (self.a.nrows(), self.m)).copy_from(&self.a);
            a
        };
        for blk in &mut g.blocks {
            blk.vars.push(t_var);
            blk.slices.push(DMatrix::identity(blk.r, blk.r));
        }
        g
    }

    /// ν = Σ block sizes, the barrier parameter of the product cone.
    pub fn nu(&self) -> usize {
        self.blocks.iter().map(|b| b.r).sum()
    }

    /// A feasible point of the equality system (minimum norm).
    pub fn feasible_affine_point(&self) -> DVector<f64> {
        least_squares_min_norm(&self.a, &self.b)
    }

    /// Coefficients of `Σ_b tr X̃_b(y)` as a linear form in y.
    pub fn trace_coefficients(&self) -> DVector<f64> {
        let mut tc = DVector::zeros(self.m);
        for blk in &self.blocks {
            for (slice, &k) in blk.slices.iter().zip(&blk.vars) {
                tc[k] += slice.diagonal().sum();
            }
        }
        tc
    }

    /// ⟨F̃_i, S⟩ accumulated into `out` for one block.
    pub fn accumulate_pairings(&self, blk: &GeoBlock, s: &DMatrix<f64>, out: &mut DVector<f64>) {
        for (slice, &k) in blk.slices.iter().zip(&blk.vars) {
            out[k] += slice.iter().zip(s.iter()).map(|(x, y)| x * y).sum::<f64>();
        }
    }

    /// The restricted linear map applied to a direction: `F̃_b(dy)`.
    pub fn apply_direction(&self, blk: &GeoBlock, dy: &DVector<f64>) -> DMatrix<f64> {
        blk.assemble(dy)
    }
}

/// Rows pinning a kernel direction of one block: `(F_b(y)·v)_i = rhs_i`.
///
/// With `anchor = None` the rows are homogeneous (the exact kernel
/// condition); with an anchor point the rows are translated through it so a
/// numerically approximate direction can never make the system inconsistent.
pub(crate) fn kernel_rows(
    prob: &SdpProblem,
    block_idx: usize,
    v: &DVector<f64>,
    anchor: Option<&DVector<f64>>,
) -> Vec<EqRow> {
    let spec = &prob.blocks[block_idx];
    let s = spec.size();
    let m = prob.num_moment_vars();
    let mut coeffs: Vec<Vec<f64>> = vec![vec![0.0; m]; s];
    for i in 0..s {
        for j in i..s {
            for &(k, c) in spec.entry(i, j) {
                coeffs[i][k] += c * v[j];
                if i != j {
                    coeffs[j][k] += c * v[i];
                }
            }
        }
    }
    coeffs
        .into_iter()
        .map(|row| {
            let rhs = anchor.map_or(0.0, |y| {
                row.iter().enumerate().map(|(k, &c)| c * y[k]).sum()
            });
            EqRow {
                coeffs: row
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.abs() > 1e-14)
                    .map(|(k, &c)| (k, c))
                    .collect(),
                rhs,
            }
        })
        .filter(|r| !r.coeffs.is_empty())
        .collect()
}
