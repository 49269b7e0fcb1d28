//! Primal-dual path-following core with Nesterov-Todd scaling.
//!
//! The primal iterate stays exactly feasible: it starts at a strictly
//! feasible point of `{F(y) ≻ 0, Ay = b}` and every Newton direction
//! satisfies `A·Δy = 0`. The dual `(Z, u)` starts infeasible and the dual
//! residual is driven to zero along the path. Termination uses relative
//! measures, which also resolves weakly-unbounded instances at the value
//! reached by bounded iterates instead of diving along an improving valley.

use super::geometry::Geometry;
use super::linalg::{
    frob_dot, max_psd_step, min_eigenvalue, solve_kkt, svec_into, svec_len, sym_apply, sym_eig,
};
use super::SolverOptions;
use nalgebra::{DMatrix, DVector};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PdStatus {
    Converged,
    IterationLimit,
    Stalled,
}

/// Wide-neighborhood parameter: every eigenvalue of the complementarity
/// product must stay above `γ·μ` once the iterate has centered.
const NBHD_GAMMA: f64 = 1e-3;

/// Smallest eigenvalue of `X·Z` for s.p.d. `X`, via `LᵀZL` with `X = LLᵀ`.
fn pair_min_eig(x: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    match x.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            let m = l.transpose() * z * l;
            min_eigenvalue(&m)
        }
        None => f64::NEG_INFINITY,
    }
}

fn in_neighborhood(blocks: &[BlockState], mu: f64, gamma: f64) -> bool {
    mu > 0.0
        && blocks
            .iter()
            .all(|st| pair_min_eig(&st.x, &st.z) >= gamma * mu)
}

#[derive(Debug)]
pub(crate) struct PdOutcome {
    pub status: PdStatus,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    /// Restricted dual blocks, aligned with `Geometry::blocks`.
    pub z: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub dual_resid_rel: f64,
    pub iterations: usize,
}

pub(crate) struct PdConfig<'a> {
    pub opts: &'a SolverOptions,
    /// Variable watched by `primal_target` (the phase-1 slack); the raw
    /// objective includes regularization tilts and is not a clean signal.
    pub slack_var: Option<usize>,
    /// Stop as soon as the watched variable drops below this value
    /// (phase-1 early exit once strict feasibility is certain).
    pub primal_target: Option<f64>,
    /// Stop as soon as the certified dual bound exceeds this value
    /// (phase-1 infeasibility certificate).
    pub dual_target: Option<f64>,
    pub iter_budget: usize,
}

struct BlockState {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

/// Runs the path-following loop for `min c·y` over the geometry.
///
/// `y0` must satisfy the equalities with every block strictly positive.
pub(crate) fn run<W: Write + ?Sized>(
    geo: &Geometry,
    c: &DVector<f64>,
    y0: &DVector<f64>,
    cfg: &PdConfig,
    mut log: Option<&mut W>,
) -> PdOutcome {
    let m = geo.m;
    let nu = geo.nu().max(1) as f64;
    let mut y = y0.clone();
    let mut u = DVector::zeros(geo.a.nrows());
    let z_scale = 1.0 + c.amax();
    let mut blocks: Vec<BlockState> = geo
        .blocks
        .iter()
        .map(|blk| BlockState {
            x: blk.assemble(&y),
            z: DMatrix::identity(blk.r, blk.r) * z_scale,
        })
        .collect();

    let gap_tol = cfg.opts.gap_tol;
    let rd_tol = (100.0 * gap_tol).max(1e-7);
    let mut prev_alpha = 1.0f64;
    let mut stall_count = 0usize;
    let mut entered_nbhd = false;
    let mut best = snapshot(geo, c, &y, &u, &blocks, PdStatus::IterationLimit, 0);

    for iter in 0..cfg.iter_budget {
        // Residuals and merit quantities.
        let comp: f64 = geo
            .blocks
            .iter()
            .zip(&blocks)
            .map(|(_, st)| frob_dot(&st.x, &st.z))
            .sum();
        let mu = comp / nu;
        let p_obj = c.dot(&y);
        let d_obj = geo.b.dot(&u);
        let mut r_d = c.clone();
        for (blk, st) in geo.blocks.iter().zip(&blocks) {
            let mut acc = DVector::zeros(m);
            geo.accumulate_pairings(blk, &st.z, &mut acc);
            r_d -= acc;
        }
        r_d -= geo.a.transpose() * &u;
        let z_norm = blocks.iter().map(|st| st.z.amax()).fold(0.0, f64::max);
        let rd_rel = r_d.amax() / (1.0 + c.amax() + z_norm + u.amax());
        let rel_gap = comp / (1.0 + p_obj.abs() + d_obj.abs());
        let min_eig = blocks
            .iter()
            .map(|st| min_eigenvalue(&st.x))
            .fold(f64::INFINITY, f64::min);

        if let Some(w) = log.as_mut() {
            let eq_res = (geo.a.clone() * &y - &geo.b).amax();
            let _ = writeln!(
                w,
                "{iter:4} {mu:12.4e} {p_obj:14.6e} {d_obj:14.6e} {min_eig:11.3e} {eq_res:10.2e}"
            );
        }

        let current = || snapshot(geo, c, &y, &u, &blocks, PdStatus::Converged, iter);
        if let (Some(t), Some(sv)) = (cfg.primal_target, cfg.slack_var) {
            if y[sv] < t {
                return current();
            }
        }
        if let Some(t) = cfg.dual_target {
            if d_obj > t && rd_rel <= rd_tol {
                return current();
            }
        }
        if rel_gap <= gap_tol && rd_rel <= rd_tol {
            return current();
        }

        // Centering weight: aggressive only when the last step was long.
        let sigma = if iter == 0 {
            0.8
        } else if prev_alpha >= 0.5 {
            cfg.opts.barrier_decrease
        } else if prev_alpha >= 0.2 {
            0.5
        } else {
            0.9
        };
        let in_nbhd_now = in_neighborhood(&blocks, mu, NBHD_GAMMA);
        entered_nbhd |= in_nbhd_now;

        // Newton system with NT scaling.
        let mut h = DMatrix::zeros(m, m);
        let mut q = DVector::zeros(m);
        let mut scalings: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::with_capacity(blocks.len());
        let mut singular = false;
        for (blk, st) in geo.blocks.iter().zip(&blocks) {
            let (x_vals, x_vecs) = sym_eig(&st.x);
            if x_vals[0] <= 0.0 {
                singular = true;
                break;
            }
            let x_h = {
                let d = DMatrix::from_diagonal(&x_vals.map(f64::sqrt));
                &x_vecs * d * x_vecs.transpose()
            };
            let x_hi = {
                let d = DMatrix::from_diagonal(&x_vals.map(|v| 1.0 / v.sqrt()));
                &x_vecs * d * x_vecs.transpose()
            };
            let bmat = &x_h * &st.z * &x_h;
            let (b_vals, b_vecs) = sym_eig(&bmat);
            if b_vals[0] <= 0.0 {
                singular = true;
                break;
            }
            let b_sqrt = {
                let d = DMatrix::from_diagonal(&b_vals.map(f64::sqrt));
                &b_vecs * d * b_vecs.transpose()
            };
            // W⁻¹ for the NT scaling point W with W Z W = X.
            let wi = &x_hi * &b_sqrt * &x_hi;
            let r_half = sym_apply(&wi, f64::sqrt);

            // R_c = σμ Z⁻¹ − X; the target of the NT-linearized centering.
            let z_inv = sym_apply(&st.z, |v| 1.0 / v);
            let r_c = &z_inv * (sigma * mu) - &st.x;
            let t = &wi * &r_c * &wi;
            geo.accumulate_pairings(blk, &t, &mut q);

            // Schur contribution via scaled svec columns.
            let sl = svec_len(blk.r);
            let mut j = DMatrix::zeros(sl, blk.vars.len());
            let mut col = vec![0.0; sl];
            for (ci, slice) in blk.slices.iter().enumerate() {
                let s = &r_half * slice * &r_half;
                svec_into(&s, &mut col);
                for (ri, &v) in col.iter().enumerate() {
                    j[(ri, ci)] = v;
                }
            }
            let ht = j.transpose() * j;
            for (ri, &vi) in blk.vars.iter().enumerate() {
                for (ci, &vj) in blk.vars.iter().enumerate() {
                    h[(vi, vj)] += ht[(ri, ci)];
                }
            }
            scalings.push((wi, r_c));
        }
        if singular {
            let mut out = best;
            out.status = PdStatus::Stalled;
            return out;
        }
        q -= &r_d;

        let zero = DVector::zeros(geo.a.nrows());
        let Some((dy, w_mult)) = solve_kkt(&h, &geo.a, &q, &zero) else {
            let mut out = best;
            out.status = PdStatus::Stalled;
            return out;
        };
        let du = -w_mult;

        // Directions and step lengths.
        let mut alpha_p: f64 = 1.0;
        let mut alpha_d: f64 = 1.0;
        let mut dxs = Vec::with_capacity(blocks.len());
        let mut dzs = Vec::with_capacity(blocks.len());
        for ((blk, st), (wi, r_c)) in geo.blocks.iter().zip(&blocks).zip(&scalings) {
            let dx = geo.apply_direction(blk, &dy);
            let dz_raw = wi * (r_c - &dx) * wi;
            let dz = (&dz_raw + dz_raw.transpose()) * 0.5;
            alpha_p = alpha_p.min(max_psd_step(&st.x, &dx, 1.0));
            alpha_d = alpha_d.min(max_psd_step(&st.z, &dz, 1.0));
            dxs.push(dx);
            dzs.push(dz);
        }
        alpha_p = (0.98 * alpha_p).min(1.0);
        alpha_d = (0.98 * alpha_d).min(1.0);

        // Once centered, stay in a wide neighborhood of the central path.
        // This blocks drift into off-center corners of weakly unbounded
        // instances; progress then happens on the dual side until the
        // relative measures terminate the run.
        if entered_nbhd {
            for _ in 0..24 {
                let ok = {
                    let trial: Vec<(DMatrix<f64>, DMatrix<f64>)> = blocks
                        .iter()
                        .zip(dxs.iter().zip(&dzs))
                        .map(|(st, (dx, dz))| (&st.x + dx * alpha_p, &st.z + dz * alpha_d))
                        .collect();
                    let comp_t: f64 = trial.iter().map(|(x, z)| frob_dot(x, z)).sum();
                    let mu_t = comp_t / nu;
                    mu_t > 0.0
                        && trial
                            .iter()
                            .all(|(x, z)| pair_min_eig(x, z) >= NBHD_GAMMA * mu_t)
                };
                if ok {
                    break;
                }
                alpha_p *= 0.7;
                alpha_d *= 0.7;
            }
        }

        y += &dy * alpha_p;
        u += &du * alpha_d;
        for ((blk, st), (dx, dz)) in geo
            .blocks
            .iter()
            .zip(&mut blocks)
            .zip(dxs.iter().zip(&dzs))
        {
            st.x = blk.assemble(&y);
            // Floor the primal block away from the boundary when the step
            // overshoots numerically.
            if min_eigenvalue(&st.x) <= 0.0 {
                st.x += DMatrix::identity(blk.r, blk.r) * 1e-14;
            }
            st.z += dz * alpha_d;
            st.z = (&st.z + st.z.transpose()) * 0.5;
            let _ = dx;
        }

        prev_alpha = alpha_p.min(alpha_d);
        if prev_alpha < 1e-4 {
            stall_count += 1;
            if stall_count >= 5 {
                let mut out = snapshot(geo, c, &y, &u, &blocks, PdStatus::Stalled, iter + 1);
                out.status = PdStatus::Stalled;
                return out;
            }
        } else {
            stall_count = 0;
        }
        best = snapshot(geo, c, &y, &u, &blocks, PdStatus::IterationLimit, iter + 1);
    }
    best
}

fn snapshot(
    geo: &Geometry,
    c: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
    blocks: &[BlockState],
    status: PdStatus,
    iterations: usize,
) -> PdOutcome {
    let mut r_d = c.clone();
    for (blk, st) in geo.blocks.iter().zip(blocks) {
        let mut acc = DVector::zeros(geo.m);
        geo.accumulate_pairings(blk, &st.z, &mut acc);
        r_d -= acc;
    }
    r_d -= geo.a.transpose() * u;
    let z_norm = blocks.iter().map(|st| st.z.amax()).fold(0.0, f64::max);
    PdOutcome {
        status,
        y: y.clone(),
        u: u.clone(),
        z: blocks.iter().map(|st| st.z.clone()).collect(),
        primal_obj: c.dot(y),
        dual_obj: geo.b.dot(u),
        dual_resid_rel: r_d.amax() / (1.0 + c.amax() + z_norm + u.amax()),
        iterations,
    }
}
