//! Embedded dense SDP solver for the moment relaxations.
//!
//! Four entry points: `solve` (optimization), `phase1` (strict feasibility /
//! infeasibility detection), `generic_point` (analytic center, the maximal
//! Hankel-rank element used for extraction) and `sos_certificate` (dual
//! factorization into explicit sums of squares).

mod center;
mod geometry;
mod linalg;
mod pd;
mod reduce;

use crate::moments::MomentVector;
use crate::polyring::Polynomial;
use crate::relaxation::SdpProblem;
use geometry::Geometry;
use nalgebra::{DMatrix, DVector};
use pd::{PdConfig, PdStatus};
use reduce::{phase1_on, reduce, Phase1Verdict};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum SdpError {
    #[error("infeasible: {detail}")]
    Infeasible { detail: String },
    #[error("iteration limit reached")]
    MaxIterations,
    #[error("numerical failure: {detail}")]
    NumericalFailure { detail: String },
    #[error("SoS certificate residual {residual:.3e} too large")]
    CertificateResidualTooLarge { residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

/// Interior-point options. Defaults target ~1e-6 objective accuracy on the
/// desk-scale fixtures.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    /// Feasibility tolerance on returned points.
    pub feas_tol: f64,
    /// Total Newton-iteration budget per solve.
    pub max_newton_iters: usize,
    /// Centering parameter σ when steps are long (path-following rate).
    pub barrier_decrease: f64,
    /// Phase-1 band: slack below −margin/2 is strictly feasible, a certified
    /// slack above +margin is infeasible, in between is ambiguous.
    pub infeasibility_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-9,
            max_newton_iters: 200,
            barrier_decrease: 0.2,
            infeasibility_margin: 1e-6,
        }
    }
}

/// Solution of one SDP solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Moment-variable assignment (relabel with `SdpProblem::moment_vector`).
    pub y: Vec<f64>,
    /// Primal objective `c·y` (`f*_MoM` when minimizing `⟨σ, f⟩`).
    pub objective: f64,
    /// Dual objective `b·u` (the SoS certificate value).
    pub dual_objective: f64,
    /// Dual PSD blocks, lifted to full block size.
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub gap: f64,
    pub iterations: usize,
    /// Multipliers of the cleaned equality rows, paired with the row
    /// polynomials they weight in the dual identity.
    pub row_multipliers: Vec<(Polynomial, f64, f64)>,
}

impl SolveResult {
    fn failed(status: SolveStatus, blocks: usize) -> Self {
        SolveResult {
            status,
            y: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            dual_blocks: vec![DMatrix::zeros(0, 0); blocks],
            gap: f64::NAN,
            iterations: 0,
            row_multipliers: Vec::new(),
        }
    }
}

/// Solves `min ⟨σ, f⟩` over the relaxation, with an iteration log.
///
/// Strict feasibility is established first (facial reduction where the
/// feasible set is flat), then a primal-dual Nesterov-Todd path following
/// loop closes the gap. Duals come from the same iteration.
pub fn solve_logged(
    problem: &SdpProblem,
    opts: &SolverOptions,
    mut log: Option<&mut dyn Write>,
) -> SolveResult {
    let nblocks = problem.blocks.len();
    let red = match reduce(problem, opts, log.as_deref_mut()) {
        Ok(r) => r,
        Err(SdpError::Infeasible { .. }) => {
            return SolveResult::failed(SolveStatus::Infeasible, nblocks)
        }
        Err(_) => return SolveResult::failed(SolveStatus::NumericalFailure, nblocks),
    };
    let c = DVector::from_column_slice(&problem.objective);
    let cfg = PdConfig {
        opts,
        slack_var: None,
        primal_target: None,
        dual_target: None,
        iter_budget: opts.max_newton_iters,
    };
    let out = pd::run(&red.geo, &c, &red.y0, &cfg, log);
    let status = match out.status {
        PdStatus::Converged => SolveStatus::Optimal,
        PdStatus::IterationLimit => SolveStatus::MaxIterations,
        PdStatus::Stalled => SolveStatus::NumericalFailure,
    };

    // Lift restricted duals back to full block size.
    let mut dual_blocks = Vec::with_capacity(nblocks);
    let mut by_index: Vec<Option<&DMatrix<f64>>> = vec![None; nblocks];
    for (gb, z) in red.geo.blocks.iter().zip(&out.z) {
        by_index[gb.block_idx] = Some(z);
    }
    for (bi, spec) in problem.blocks.iter().enumerate() {
        let s = spec.size();
        let z = match by_index[bi] {
            None => DMatrix::zeros(s, s),
            Some(z) => match &red.proj[bi] {
                None => z.clone(),
                Some(p) => p * z * p.transpose(),
            },
        };
        dual_blocks.push(z);
    }

    let row_multipliers = red
        .geo
        .rows
        .iter()
        .zip(out.u.iter())
        .map(|(row, &u)| (problem.row_polynomial(row), row.rhs, u))
        .collect();

    SolveResult {
        status,
        y: out.y.as_slice().to_vec(),
        objective: out.primal_obj,
        dual_objective: out.dual_obj,
        dual_blocks,
        gap: (out.primal_obj - out.dual_obj).abs(),
        iterations: red.phase1_iterations + out.iterations,
        row_multipliers,
    }
}

pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> SolveResult {
    solve_logged(problem, opts, None)
}

/// Strictly feasible point with its margin, from one phase-1 run on the raw
/// (unrestricted) instance.
#[derive(Debug, Clone)]
pub struct Phase1Point {
    pub y: Vec<f64>,
    /// Negative slack value: every block satisfies `F(y) ⪰ −margin·I` with
    /// `margin < 0` meaning strictly feasible by `|margin|`.
    pub margin: f64,
}

/// `min t : F(y) + tI ⪰ 0, Ay = b`, classified against the infeasibility
/// margin. Ambiguous slacks surface as `NumericalFailure` carrying the value.
pub fn phase1(problem: &SdpProblem, opts: &SolverOptions) -> Result<Phase1Point, SdpError> {
    let proj = vec![None; problem.blocks.len()];
    let Some((geo, _)) = Geometry::build(problem, &proj, &[]) else {
        return Err(SdpError::Infeasible {
            detail: "inconsistent equality rows".to_string(),
        });
    };
    match phase1_on::<std::io::Sink>(&geo, opts, None) {
        Phase1Verdict::Strict { y, t, .. } => Ok(Phase1Point {
            y: y.as_slice().to_vec(),
            margin: t,
        }),
        Phase1Verdict::Infeasible { t_bound } => Err(SdpError::Infeasible {
            detail: format!("phase-1 slack bounded below by {t_bound:.3e}"),
        }),
        Phase1Verdict::Ambiguous { t, .. } => Err(SdpError::NumericalFailure {
            detail: format!("ambiguous phase-1 slack t = {t:.3e}"),
        }),
        Phase1Verdict::Failed => Err(SdpError::NumericalFailure {
            detail: "phase-1 did not converge".to_string(),
        }),
    }
}

/// Analytic center of the feasible set restricted to its affine hull — the
/// operational "generic element": it attains maximal rank on every block up
/// to the working tolerance. The objective vector of `problem` is ignored.
pub fn generic_point(problem: &SdpProblem, opts: &SolverOptions) -> Result<MomentVector, SdpError> {
    let red = reduce::<std::io::Sink>(problem, opts, None)?;
    let y = center::analytic_center(&red.geo, &red.y0);
    let y = red.polish(problem, &y);
    Ok(problem.moment_vector(y.as_slice()))
}

/// A strictly feasible point of the instance (after facial reduction), or the
/// classified failure. Cheaper than `generic_point`: no final centering.
pub fn feasible_point(problem: &SdpProblem, opts: &SolverOptions) -> Result<MomentVector, SdpError> {
    let red = reduce::<std::io::Sink>(problem, opts, None)?;
    let y = red.polish(problem, &red.y0);
    Ok(problem.moment_vector(y.as_slice()))
}

/// Explicit SoS decomposition recovered from the dual blocks.
#[derive(Debug, Clone)]
pub struct SosCertificate {
    /// Certified lower bound λ: `f − λ ∈ Q_{2d}(g) + ideal rows`.
    pub lambda: f64,
    /// Per block: the shift polynomial `g_b` and the squared polynomials.
    pub squares: Vec<(Polynomial, Vec<Polynomial>)>,
    /// Multipliers of the equality-row polynomials entering the identity.
    pub ideal_part: Vec<(Polynomial, f64)>,
    /// Max-abs coefficient of `f − λ − Σ g·Σq² − Σ u·(p_row − rhs)`.
    pub residual: f64,
}

/// Factors the dual into squares and checks the polynomial identity.
pub fn sos_certificate(
    result: &SolveResult,
    problem: &SdpProblem,
) -> Result<SosCertificate, SdpError> {
    if result.status != SolveStatus::Optimal {
        return Err(SdpError::NumericalFailure {
            detail: "certificate requires an optimal solve".to_string(),
        });
    }
    let n = problem.n;
    let feas_tol = 1e-9;
    let mut squares = Vec::new();
    // Residual polynomial: start from f, subtract every certificate term.
    let f = Polynomial::from_terms(
        n,
        problem
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, &c)| (problem.monomials[k].clone(), c))
            .collect(),
    );
    let mut residual_poly = f;

    for (spec, z) in problem.blocks.iter().zip(&result.dual_blocks) {
        let (vals, vecs) = linalg::sym_eig(z);
        let mut qs = Vec::new();
        let mut gram_poly = Polynomial::zero(n);
        for (i, &lam) in vals.iter().enumerate() {
            // Negative-eigenvalue clipping; the identity check below judges
            // whatever error this introduces.
            let lam = lam.max(0.0);
            if lam <= feas_tol * (1.0 + vals[vals.len() - 1].abs()) {
                continue;
            }
            let col = vecs.column(i);
            let q = Polynomial::from_terms(
                n,
                spec.basis
                    .iter()
                    .enumerate()
                    .map(|(j, m)| (m.clone(), lam.sqrt() * col[j]))
                    .collect(),
            );
            gram_poly = gram_poly.add(&q.mul(&q));
            qs.push(q);
        }
        residual_poly = residual_poly.sub(&spec.shift.mul(&gram_poly));
        squares.push((spec.shift.clone(), qs));
    }

    // At zero dual residual f = Σ_b g_b·SoS_b + Σ_r u_r·p_r with
    // λ = Σ_r u_r·rhs_r, so the whole difference must vanish.
    let mut ideal_part = Vec::new();
    for (p_row, _rhs, u) in &result.row_multipliers {
        residual_poly = residual_poly.sub(&p_row.scale(*u));
        ideal_part.push((p_row.clone(), *u));
    }
    let lambda = result.dual_objective;
    let residual = residual_poly.max_abs_coefficient();
    let scale = 1.0 + problem.objective.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let cert = SosCertificate {
        lambda,
        squares,
        ideal_part,
        residual,
    };
    if residual > 1e-5 * scale {
        return Err(SdpError::CertificateResidualTooLarge { residual });
    }
    Ok(cert)
}
