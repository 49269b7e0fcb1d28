//! Strict-feasibility search: phase-1 plus iterative facial reduction.
//!
//! Level-constrained feasible sets are flat — some blocks are singular on the
//! whole set. Forced directions certified by the phase-1 dual restrict the
//! blocks to their numerical range spaces, and the kernel coupling enters as
//! linear rows translated through the ambiguous center (numerically
//! approximate directions then cannot make the system inconsistent). The loop
//! repeats until the restricted instance has a strictly feasible point or a
//! certified infeasibility; the exact kernel coupling is reimposed in least
//! squares when a moment vector is materialized (`Reduction::polish`).

use super::geometry::{kernel_rows, Geometry};
use super::linalg::{min_eigenvalue, solve_kkt, sym_eig};
use super::pd::{run, PdConfig, PdOutcome, PdStatus};
use super::{SdpError, SolverOptions};
use crate::relaxation::{EqRow, SdpProblem};
use nalgebra::{DMatrix, DVector};
use std::io::Write;

pub(crate) struct Reduction {
    pub geo: Geometry,
    /// Strictly feasible start for the restricted instance.
    pub y0: DVector<f64>,
    /// Per-block restriction, aligned with `SdpProblem::blocks`.
    pub proj: Vec<Option<DMatrix<f64>>>,
    /// Forced kernel directions found along the way: (block index, direction
    /// in original block coordinates).
    pub pinned: Vec<(usize, DVector<f64>)>,
    pub phase1_iterations: usize,
}

impl Reduction {
    /// Re-imposes the dropped kernel-coupling structure in least squares:
    /// moves `y` to the minimizer of `Σ‖F_b(y)v‖² + ε‖y − y_ref‖²` over the
    /// equality manifold. Pin directions are numerical, so the coupling is
    /// soft rather than a hard constraint.
    pub fn polish(&self, prob: &SdpProblem, y_ref: &DVector<f64>) -> DVector<f64> {
        if self.pinned.is_empty() {
            return y_ref.clone();
        }
        let m = self.geo.m;
        let mut rows: Vec<EqRow> = Vec::new();
        for (bi, dir) in &self.pinned {
            rows.extend(kernel_rows(prob, *bi, dir, None));
        }
        let mut h = DMatrix::zeros(m, m);
        for row in &rows {
            for &(i, ci) in &row.coeffs {
                for &(j, cj) in &row.coeffs {
                    h[(i, j)] += ci * cj;
                }
            }
        }
        let eps = 1e-8 * (1.0 + h.diagonal().amax());
        for i in 0..m {
            h[(i, i)] += eps;
        }
        let q = y_ref * eps;
        match solve_kkt(&h, &self.geo.a, &q, &self.geo.b) {
            Some((y, _)) => y,
            None => y_ref.clone(),
        }
    }
}

pub(crate) enum Phase1Verdict {
    Strict { y: DVector<f64>, t: f64, iterations: usize },
    Infeasible { t_bound: f64 },
    /// Slack pinned near zero: flat feasible set. The dual blocks certify the
    /// forced kernel — for every feasible y, `⟨F(y), Z⟩ ≈ −t* ≈ 0` forces
    /// `range(Z) ⊆ ker F(y)`.
    Ambiguous {
        y: DVector<f64>,
        t: f64,
        z: Vec<DMatrix<f64>>,
        clean: bool,
    },
    Failed,
}

/// One phase-1 run on the given geometry: `min t : F(y) + tI ⪰ 0, Ay = b`.
pub(crate) fn phase1_on<W: Write + ?Sized>(
    geo: &Geometry,
    opts: &SolverOptions,
    log: Option<&mut W>,
) -> Phase1Verdict {
    let margin = opts.infeasibility_margin;
    if geo.blocks.is_empty() {
        // Nothing left to make positive; the affine point is as strict as it gets.
        return Phase1Verdict::Strict {
            y: geo.feasible_affine_point(),
            t: -1.0,
            iterations: 0,
        };
    }
    let ext = geo.with_slack_var();
    let t_var = geo.m;
    let y_aff = geo.feasible_affine_point();
    let min_eig = geo
        .blocks
        .iter()
        .map(|blk| min_eigenvalue(&blk.assemble(&y_aff)))
        .fold(f64::INFINITY, f64::min);
    let mut z0 = DVector::zeros(ext.m);
    z0.rows_mut(0, geo.m).copy_from(&y_aff);
    z0[t_var] = -min_eig + (0.1 * min_eig.abs()).max(1.0);

    // A tiny trace tilt bounds the slack subproblems on instances whose
    // feasible set is unbounded along barrier-favored junk directions; its
    // bias on the slack value sits below the certification tolerances.
    let tilt = 1e-8;
    let mut c = ext.trace_coefficients() * tilt;
    c[t_var] += 1.0;
    let cfg = PdConfig {
        opts,
        slack_var: Some(t_var),
        primal_target: Some(-0.6 * margin),
        dual_target: Some(margin),
        iter_budget: opts.max_newton_iters,
    };
    let out: PdOutcome = run(&ext, &c, &z0, &cfg, log);
    let t = out.y[t_var];
    let y = out.y.rows(0, geo.m).into_owned();
    match out.status {
        PdStatus::Converged => {
            if t < -0.5 * margin {
                Phase1Verdict::Strict {
                    y,
                    t,
                    iterations: out.iterations,
                }
            } else if out.dual_obj > margin {
                Phase1Verdict::Infeasible {
                    t_bound: out.dual_obj,
                }
            } else {
                Phase1Verdict::Ambiguous {
                    y,
                    t,
                    z: out.z,
                    clean: true,
                }
            }
        }
        PdStatus::IterationLimit | PdStatus::Stalled => {
            if t < -0.5 * margin {
                Phase1Verdict::Strict {
                    y,
                    t,
                    iterations: out.iterations,
                }
            } else if out.dual_obj > margin && out.dual_resid_rel < 1e-6 {
                Phase1Verdict::Infeasible {
                    t_bound: out.dual_obj,
                }
            } else if t.abs() <= 1e3 * margin.max(1e-7) {
                Phase1Verdict::Ambiguous {
                    y,
                    t,
                    z: out.z,
                    clean: false,
                }
            } else {
                Phase1Verdict::Failed
            }
        }
    }
}

/// Facial reduction loop with one strict retry: pins taken at loose cuts can
/// over-restrict the face; a failure after pinning is retried with tighter
/// cuts before giving up.
pub(crate) fn reduce<W: Write + ?Sized>(
    prob: &SdpProblem,
    opts: &SolverOptions,
    mut log: Option<&mut W>,
) -> Result<Reduction, SdpError> {
    match reduce_once(prob, opts, log.as_deref_mut(), 1.0) {
        Ok(r) => Ok(r),
        Err(SdpError::Infeasible { detail }) => Err(SdpError::Infeasible { detail }),
        Err(first) => match reduce_once(prob, opts, log, 0.02) {
            Ok(r) => Ok(r),
            Err(SdpError::Infeasible { detail }) => Err(SdpError::Infeasible { detail }),
            Err(_) => Err(first),
        },
    }
}

fn reduce_once<W: Write + ?Sized>(
    prob: &SdpProblem,
    opts: &SolverOptions,
    mut log: Option<&mut W>,
    cut_scale: f64,
) -> Result<Reduction, SdpError> {
    let mut proj: Vec<Option<DMatrix<f64>>> = vec![None; prob.blocks.len()];
    let mut pinned: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut pin_rows: Vec<EqRow> = Vec::new();
    let mut total_iters = 0usize;
    // The most recent ambiguous center: already feasible to tolerance and
    // near-maximal rank, it stands in for the strict point when further
    // restriction only degrades numerically.
    let mut best_interior: Option<Reduction> = None;

    for round in 0..40 {
        let Some((geo, _y_ls)) = Geometry::build(prob, &proj, &pin_rows) else {
            if round == 0 {
                return Err(SdpError::Infeasible {
                    detail: "inconsistent equality rows".to_string(),
                });
            }
            if let Some(r) = best_interior {
                return Ok(r);
            }
            return Err(SdpError::NumericalFailure {
                detail: "pinned kernel rows became inconsistent".to_string(),
            });
        };
        match phase1_on(&geo, opts, log.as_deref_mut()) {
            Phase1Verdict::Strict { y, t, iterations } => {
                if std::env::var("MOMOPT_DEBUG_FR").is_ok() {
                    eprintln!("FR round {round}: strict t = {t:.3e}");
                }
                return Ok(Reduction {
                    geo,
                    y0: y,
                    proj,
                    pinned,
                    phase1_iterations: total_iters + iterations,
                });
            }
            Phase1Verdict::Infeasible { t_bound } => {
                if std::env::var("MOMOPT_DEBUG_FR").is_ok() {
                    eprintln!("FR round {round}: infeasible bound {t_bound:.3e}");
                }
                // Translated pin rows cut through the ambiguous point, so an
                // infeasibility discovered after pinning reflects the pins,
                // not the original instance.
                if !pin_rows.is_empty() {
                    if let Some(r) = best_interior {
                        return Ok(r);
                    }
                    return Err(SdpError::NumericalFailure {
                        detail: format!(
                            "infeasible only after restriction (bound {t_bound:.3e})"
                        ),
                    });
                }
                return Err(SdpError::Infeasible {
                    detail: format!("phase-1 slack bounded below by {t_bound:.3e}"),
                });
            }
            Phase1Verdict::Failed => {
                if std::env::var("MOMOPT_DEBUG_FR").is_ok() {
                    eprintln!("FR round {round}: phase-1 failed");
                }
                if let Some(r) = best_interior {
                    return Ok(r);
                }
                return Err(SdpError::NumericalFailure {
                    detail: format!("phase-1 did not resolve feasibility (round {round})"),
                });
            }
            Phase1Verdict::Ambiguous { y, t, z, clean } => {
                total_iters += opts.max_newton_iters;
                best_interior = Some(Reduction {
                    geo: geo.clone(),
                    y0: y.clone(),
                    proj: proj.clone(),
                    pinned: pinned.clone(),
                    phase1_iterations: total_iters,
                });
                let dbg = std::env::var("MOMOPT_DEBUG_FR").is_ok();
                if dbg {
                    eprintln!("FR round {round}: ambiguous t = {t:.3e} clean = {clean}");
                    for (bi, (blk, zb)) in geo.blocks.iter().zip(&z).enumerate() {
                        let (zv, _) = sym_eig(zb);
                        let x = blk.assemble(&y);
                        let (xv, _) = sym_eig(&x);
                        eprintln!(
                            "  blk {bi} r={} zeig=[{:.2e}..{:.2e}] xeig=[{:.2e}..{:.2e}]",
                            blk.r, zv[0], zv[zv.len()-1], xv[0], xv[xv.len()-1]
                        );
                        let zs: Vec<String> = zv.iter().map(|v| format!("{v:.1e}")).collect();
                        let xs: Vec<String> = xv.iter().map(|v| format!("{v:.1e}")).collect();
                        eprintln!("    z: {}", zs.join(" "));
                        eprintln!("    x: {}", xs.join(" "));
                    }
                }
                // The dual certificate counts the forced directions per block
                // (⟨F(y), Z⟩ ≈ 0 on the whole feasible set forces range(Z)
                // into the common kernel); the pin vectors themselves are read
                // off the primal at the centered point, where the small
                // eigenvectors match the forced kernel.
                let z_max = z
                    .iter()
                    .flat_map(|m| m.iter())
                    .fold(0.0f64, |a, &v| a.max(v.abs()))
                    .max(1e-300);
                // A dual eigenvalue λ certifies its eigendirection only up to
                // vᵀF(y)v ≤ |t*|/λ on the feasible set; directions below the
                // required force are left for later rounds.
                let z_floor = (1e-3 * z_max).max((t.abs() + 1e-10) / 1e-7);
                let mut pinned_any = false;
                for (blk, zb) in geo.blocks.iter().zip(&z) {
                    let (z_vals, _) = sym_eig(zb);
                    let count = z_vals.iter().filter(|&&v| v >= z_floor).count();
                    if count == 0 {
                        continue;
                    }
                    let x = blk.assemble(&y);
                    let (x_vals, x_vecs) = sym_eig(&x);
                    let x_scale = x_vals[x_vals.len() - 1].abs().max(1.0);
                    // Only directions that are numerically singular may be
                    // pinned; anything larger would poison the kernel rows.
                    let x_cut = cut_scale * (1e3 * t.abs()).max(1e-7 * x_scale);
                    let local_pins: Vec<DVector<f64>> = (0..count.min(blk.r))
                        .filter(|&i| x_vals[i] <= x_cut)
                        .map(|i| x_vecs.column(i).into_owned())
                        .collect();
                    if std::env::var("MOMOPT_DEBUG_FR").is_ok() {
                        eprintln!(
                            "  pin blk {}: z_max {z_max:.3e} count {count} x_cut {x_cut:.3e} pins {}",
                            blk.block_idx,
                            local_pins.len()
                        );
                    }
                    if local_pins.is_empty() {
                        continue;
                    }
                    pinned_any = true;
                    let spec_size = prob.blocks[blk.block_idx].size();
                    let cur = proj[blk.block_idx]
                        .clone()
                        .unwrap_or_else(|| DMatrix::identity(spec_size, spec_size));
                    // Lift every pin through the basis of this round, then
                    // shrink the basis in one batch.
                    let lifted: Vec<DVector<f64>> =
                        local_pins.iter().map(|d| &cur * d).collect();
                    for dir_orig in &lifted {
                        pinned.push((blk.block_idx, dir_orig.clone()));
                        pin_rows.extend(kernel_rows(prob, blk.block_idx, dir_orig, Some(&y)));
                    }
                    let shrunk = remove_directions(&cur, &lifted);
                    if std::env::var("MOMOPT_DEBUG_FR").is_ok() {
                        eprintln!(
                            "    pinned {} dirs: basis {} -> {}",
                            lifted.len(),
                            cur.ncols(),
                            shrunk.ncols()
                        );
                    }
                    proj[blk.block_idx] = Some(shrunk);
                }
                if !pinned_any {
                    // The dual certifies nothing: pin the weakest primal
                    // eigendirection speculatively and retry.
                    let mut smallest: Option<(usize, DVector<f64>, f64)> = None;
                    for blk in &geo.blocks {
                        let x = blk.assemble(&y);
                        let (vals, vecs) = sym_eig(&x);
                        let dir = vecs.column(0).into_owned();
                        let dir_orig = match &proj[blk.block_idx] {
                            None => dir,
                            Some(p) => p * dir,
                        };
                        if smallest.as_ref().is_none_or(|s| vals[0] < s.2) {
                            smallest = Some((blk.block_idx, dir_orig, vals[0]));
                        }
                    }
                    if let Some((bi, dir, _)) = smallest {
                        pinned.push((bi, dir.clone()));
                        pin_rows.extend(kernel_rows(prob, bi, &dir, Some(&y)));
                        let spec_size = prob.blocks[bi].size();
                        let cur = proj[bi]
                            .clone()
                            .unwrap_or_else(|| DMatrix::identity(spec_size, spec_size));
                        proj[bi] = Some(remove_directions(&cur, std::slice::from_ref(&dir)));
                    } else {
                        return Err(SdpError::NumericalFailure {
                            detail: format!(
                                "ambiguous phase-1 slack {t:.3e} with nothing to pin"
                            ),
                        });
                    }
                }
            }
        }
    }
    if let Some(r) = best_interior {
        return Ok(r);
    }
    Err(SdpError::NumericalFailure {
        detail: "facial reduction did not terminate".to_string(),
    })
}

/// Orthonormal basis of `range(basis)` with the given directions projected
/// out, via one SVD of the projected basis.
fn remove_directions(basis: &DMatrix<f64>, dirs: &[DVector<f64>]) -> DMatrix<f64> {
    let mut projected = basis.clone();
    for d in dirs {
        let n = d.norm();
        if n == 0.0 {
            continue;
        }
        let dn = d / n;
        let coeffs = dn.transpose() * &projected;
        projected -= &dn * coeffs;
    }
    let svd = projected.svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-8 * smax.max(1.0))
        .count();
    if rank == 0 {
        return DMatrix::zeros(basis.nrows(), 0);
    }
    svd.u.expect("requested U").columns(0, rank).into_owned()
}
