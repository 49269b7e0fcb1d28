//! Atomic-measure recovery from a truncated pseudo-moment sequence.
//!
//! The flat truncation `rank H^t = rank H^{t−1}` certifies that the quotient
//! structure is captured; multiplication operators on a pivoted column basis
//! are then jointly diagonalized through a seeded random combination, and the
//! weights come from moment matching. The reconstruction residual is always
//! recomputed from the returned measure, never estimated.

use crate::moments::{hankel_matrix, MomentVector};
use crate::polyring::{monomials_up_to, Monomial};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct ExtractOpts {
    /// Relative singular-value threshold for numerical rank.
    pub rank_tol: f64,
    /// Acceptance threshold on the reconstruction residual, and the weight
    /// pruning level.
    pub residual_tol: f64,
    /// Seed of the random combination of multiplication operators.
    pub seed: u64,
}

impl Default for ExtractOpts {
    fn default() -> Self {
        ExtractOpts {
            rank_tol: 1e-6,
            residual_tol: 1e-2,
            seed: 42,
        }
    }
}

/// Weighted point set `Σ ω_i e_{ξ_i}` with its reconstruction residual.
#[derive(Debug, Clone)]
pub struct ExtractedMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `max_{|α| ≤ 2t} |σ_α − Σ ω_i ξ_i^α|`, recomputed.
    pub residual: f64,
    /// Truncation degree actually used.
    pub degree_used: u32,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    NoFlatness,
    ComplexPoints,
    ResidualTooLarge,
}

#[derive(Debug, Clone, Error)]
#[error("extraction failed ({reason:?}); residual {residual:.3e}")]
pub struct ExtractionFailure {
    pub reason: FailureReason,
    pub singular_values: Vec<f64>,
    pub residual: f64,
}

/// Recomputes `max_{|α| ≤ deg} |σ_α − Σ ω_i ξ_i^α|` over the common degree.
pub fn verify_measure(sigma: &MomentVector, m: &ExtractedMeasure) -> f64 {
    let deg = sigma.max_degree().min(2 * m.degree_used);
    measure_residual(sigma, &m.points, &m.weights, deg)
}

fn measure_residual(
    sigma: &MomentVector,
    points: &[Vec<f64>],
    weights: &[f64],
    deg: u32,
) -> f64 {
    let mut worst = 0.0f64;
    for alpha in monomials_up_to(sigma.num_vars(), deg) {
        let model: f64 = points
            .iter()
            .zip(weights)
            .map(|(p, &w)| w * alpha.eval(p))
            .sum();
        worst = worst.max((sigma.get(&alpha).expect("degree bounded") - model).abs());
    }
    worst
}

/// Numerical ranks of `H^t` for t = 0..k, at the relative tolerance.
fn hankel_ranks(sigma: &MomentVector, k: u32, rank_tol: f64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut ranks = Vec::with_capacity(k as usize + 1);
    let mut svals = Vec::with_capacity(k as usize + 1);
    for t in 0..=k {
        let h = hankel_matrix(sigma, t).expect("t ≤ k");
        let sv = h.matrix().clone().svd(false, false).singular_values;
        let smax = sv.max();
        let rank = if smax <= 0.0 {
            0
        } else {
            sv.iter().filter(|&&v| v > rank_tol * smax).count()
        };
        ranks.push(rank);
        svals.push(sv.iter().copied().collect());
    }
    (ranks, svals)
}

/// Recovers the atomic measure behind `σ`.
///
/// Procedure: pick the largest flat degree (`rank H^t = rank H^{t−1}`), or
/// proceed tentatively at `t = k`; select a pivot monomial basis of degree
/// ≤ t−1 from the dominant singular vectors; build multiplication operators
/// through the pseudo-inverse; eigendecompose a seeded random combination;
/// read coordinates as Rayleigh quotients; drop complex points; solve for
/// weights; prune; recompute the residual and accept iff it clears
/// `residual_tol`.
pub fn extract_measure(
    sigma: &MomentVector,
    opts: &ExtractOpts,
) -> Result<ExtractedMeasure, ExtractionFailure> {
    let k = sigma.max_degree() / 2;
    assert!(k >= 1, "need moments of degree at least 2");

    // Rank-threshold ladder: solver output carries structured noise whose
    // level is not known a priori, so failed extractions retry with coarser
    // cuts. Every attempt is gated by the recomputed residual, which keeps
    // the loosening honest.
    let mut last_reason = FailureReason::NoFlatness;
    let mut last_residual = f64::INFINITY;
    let mut any_flat = false;
    let mut base_svals: Option<Vec<f64>> = None;
    let mut tol = opts.rank_tol;
    for _ in 0..4 {
        if tol >= 1.0 {
            break;
        }
        let (ranks, svals) = hankel_ranks(sigma, k, tol);
        if base_svals.is_none() {
            base_svals = svals.last().cloned();
        }
        // Candidate truncations: flat degrees from the largest down, then
        // the full degree tentatively.
        let mut candidates: Vec<u32> = (1..=k as usize)
            .rev()
            .filter(|&t| ranks[t] == ranks[t - 1])
            .map(|t| t as u32)
            .collect();
        any_flat |= !candidates.is_empty();
        if !candidates.contains(&k) {
            candidates.push(k);
        }
        for t in candidates {
            match extract_at(sigma, t, ranks[t as usize], opts) {
                Ok(m) => return Ok(m),
                Err((reason, residual)) => {
                    if residual < last_residual {
                        last_reason = reason;
                        last_residual = residual;
                    }
                }
            }
        }
        tol *= 5.0;
    }
    if !any_flat {
        last_reason = FailureReason::NoFlatness;
    }
    Err(ExtractionFailure {
        reason: last_reason,
        singular_values: base_svals.unwrap_or_default(),
        residual: last_residual,
    })
}

fn extract_at(
    sigma: &MomentVector,
    t: u32,
    r: usize,
    opts: &ExtractOpts,
) -> Result<ExtractedMeasure, (FailureReason, f64)> {
    let n = sigma.num_vars();
    let fail = |reason, residual| (reason, residual);
    if r == 0 {
        // The zero functional: the empty measure reconstructs it exactly.
        let residual = measure_residual(sigma, &[], &[], 2 * t);
        return Ok(ExtractedMeasure {
            points: vec![],
            weights: vec![],
            residual,
            degree_used: t,
            rank: 0,
        });
    }

    let h = hankel_matrix(sigma, t).expect("t ≤ k");
    let svd = h.matrix().clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");

    // Pivot basis: r monomials of degree ≤ t−1 chosen by column-pivoted QR
    // of the dominant singular-vector block.
    let low_basis = monomials_up_to(n, t.saturating_sub(1));
    if low_basis.len() < r {
        return Err(fail(FailureReason::NoFlatness, f64::INFINITY));
    }
    let dominant = u.columns(0, r).into_owned();
    let low_block = dominant.rows(0, low_basis.len()).into_owned();
    let pivots = pivoted_rows(&low_block, r);
    if pivots.len() < r {
        return Err(fail(FailureReason::NoFlatness, f64::INFINITY));
    }
    let basis_b: Vec<Monomial> = pivots.iter().map(|&i| low_basis[i].clone()).collect();

    // Multiplication operators M_i = pinv(H[:, B]) · H[:, X_i·B].
    let full_basis = h.basis().to_vec();
    let col_of = |m: &Monomial| -> usize {
        full_basis
            .iter()
            .position(|b| b == m)
            .expect("monomial of degree ≤ t")
    };
    let hb = select_columns(h.matrix(), &basis_b.iter().map(&col_of).collect::<Vec<_>>());
    // The pivoted column block has full rank by construction; only
    // machine-level modes are cut here, independent of the rank threshold.
    let hb_pinv = pseudo_inverse(&hb, 1e-12);
    let mut mult_ops = Vec::with_capacity(n);
    for var in 0..n {
        let cols: Vec<usize> = basis_b.iter().map(|m| col_of(&m.mul_var(var))).collect();
        let hxb = select_columns(h.matrix(), &cols);
        mult_ops.push(&hb_pinv * hxb);
    }

    // Seeded random convex combination; a second draw if the spectrum clusters.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points_c: Vec<Vec<Complex<f64>>> = Vec::new();
    for _attempt in 0..2 {
        let mut lambda: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        let mut m_comb = DMatrix::zeros(r, r);
        for (op, &l) in mult_ops.iter().zip(&lambda) {
            m_comb += op * l;
        }
        let eigvals = m_comb.complex_eigenvalues();
        let scale = eigvals.iter().map(|e| e.norm()).fold(1.0, f64::max);
        let clustered = (0..r).any(|i| {
            (0..i).any(|j| (eigvals[i] - eigvals[j]).norm() < 1e-8 * scale)
        });
        let vectors = eigenvectors_by_inverse_iteration(&m_comb, &eigvals);
        points_c = vectors
            .iter()
            .map(|v| {
                mult_ops
                    .iter()
                    .map(|op| complex_rayleigh(op, v))
                    .collect::<Vec<_>>()
            })
            .collect();
        if !clustered {
            break;
        }
    }

    // Keep points with negligible imaginary part.
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut dropped_complex = false;
    for pc in &points_c {
        let ok = pc
            .iter()
            .all(|c| c.im.abs() <= 1e-6 * (1.0 + c.re.abs()));
        if ok {
            points.push(pc.iter().map(|c| c.re).collect());
        } else {
            dropped_complex = true;
        }
    }
    if points.is_empty() {
        return Err(fail(FailureReason::ComplexPoints, f64::INFINITY));
    }

    // Weights by moment matching on low-degree monomials, extended until the
    // system is overdetermined.
    let weights = solve_weights(sigma, &points, t);
    let (mut points, mut weights) = prune(points, weights, opts.residual_tol);
    if points.is_empty() {
        return Err(fail(FailureReason::ResidualTooLarge, f64::INFINITY));
    }
    // Re-fit once after pruning spurious atoms.
    if points.len() < points_c.len() {
        weights = solve_weights(sigma, &points, t);
        let refit = prune(points, weights, opts.residual_tol);
        points = refit.0;
        weights = refit.1;
        if points.is_empty() {
            return Err(fail(FailureReason::ResidualTooLarge, f64::INFINITY));
        }
    }

    sort_measure(&mut points, &mut weights);
    let residual = measure_residual(sigma, &points, &weights, 2 * t);
    if residual <= opts.residual_tol {
        Ok(ExtractedMeasure {
            rank: points.len(),
            points,
            weights,
            residual,
            degree_used: t,
        })
    } else if dropped_complex {
        Err(fail(FailureReason::ComplexPoints, residual))
    } else {
        Err(fail(FailureReason::ResidualTooLarge, residual))
    }
}

fn solve_weights(sigma: &MomentVector, points: &[Vec<f64>], t: u32) -> Vec<f64> {
    let n = sigma.num_vars();
    let r = points.len();
    let mut deg = 2u32.min(t);
    loop {
        let count = monomials_up_to(n, deg).len();
        if count > r || deg >= 2 * t {
            break;
        }
        deg += 1;
    }
    let basis = monomials_up_to(n, deg.min(2 * t));
    let mut a = DMatrix::zeros(basis.len(), r);
    let mut b = DVector::zeros(basis.len());
    for (row, alpha) in basis.iter().enumerate() {
        for (col, p) in points.iter().enumerate() {
            a[(row, col)] = alpha.eval(p);
        }
        b[row] = sigma.get(alpha).expect("degree bounded");
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12)
        .expect("least squares")
        .iter()
        .copied()
        .collect()
}

fn prune(points: Vec<Vec<f64>>, weights: Vec<f64>, tol: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    points
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > tol)
        .unzip()
}

fn sort_measure(points: &mut Vec<Vec<f64>>, weights: &mut Vec<f64>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    *points = order.iter().map(|&i| points[i].clone()).collect();
    *weights = order.iter().map(|&i| weights[i]).collect();
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_columns(&cols.iter().map(|&c| m.column(c).into_owned()).collect::<Vec<_>>())
}

fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = rel_tol * smax;
    let u = svd.u.expect("u");
    let v_t = svd.v_t.expect("v_t");
    let mut d = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            d[(i, i)] = 1.0 / s;
        }
    }
    v_t.transpose() * d * u.transpose()
}

/// Greedy column-pivoted row selection: `count` rows of `m` with maximal
/// residual norms under successive orthogonalization.
fn pivoted_rows(m: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let rows = m.nrows();
    let mut residual: Vec<DVector<f64>> = (0..rows).map(|i| m.row(i).transpose()).collect();
    let mut picked = Vec::with_capacity(count);
    let mut used = vec![false; rows];
    for _ in 0..count {
        let mut best = None;
        let mut best_norm = 0.0;
        for (i, v) in residual.iter().enumerate() {
            if !used[i] && v.norm() > best_norm {
                best_norm = v.norm();
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        if best_norm < 1e-12 {
            break;
        }
        used[i] = true;
        picked.push(i);
        let q = residual[i].clone() / best_norm;
        for (j, v) in residual.iter_mut().enumerate() {
            if !used[j] {
                let p = q.dot(v);
                v.axpy(-p, &q, 1.0);
            }
        }
    }
    picked.sort_unstable();
    picked
}

/// Eigenvectors of a real matrix by complex inverse iteration at each
/// Schur eigenvalue.
fn eigenvectors_by_inverse_iteration(
    m: &DMatrix<f64>,
    eigvals: &DVector<Complex<f64>>,
) -> Vec<DVector<Complex<f64>>> {
    let r = m.nrows();
    let mc = m.map(|v| Complex::new(v, 0.0));
    let scale = eigvals.iter().map(|e| e.norm()).fold(1.0, f64::max);
    let mut out = Vec::with_capacity(r);
    for (idx, lam) in eigvals.iter().enumerate() {
        // Deterministic complex shift keeps the shifted matrix invertible.
        let shift = lam + Complex::new(1e-10 * scale, 1e-10 * scale);
        let mut a = mc.clone();
        for i in 0..r {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut v = DVector::from_fn(r, |i, _| {
            Complex::new(
                1.0 + ((i + idx) % 3) as f64 * 0.25,
                ((i * 7 + idx * 3) % 5) as f64 * 0.1,
            )
        });
        v /= Complex::new(v.norm(), 0.0);
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) => {
                    let norm = w.norm();
                    if !norm.is_finite() || norm == 0.0 {
                        break;
                    }
                    v = w / Complex::new(norm, 0.0);
                }
                None => break,
            }
        }
        out.push(v);
    }
    out
}

fn complex_rayleigh(op: &DMatrix<f64>, v: &DVector<Complex<f64>>) -> Complex<f64> {
    let opc = op.map(|x| Complex::new(x, 0.0));
    let num = v.dotc(&(&opc * v));
    let den = v.dotc(v);
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::moments_of_points;

    fn opts() -> ExtractOpts {
        ExtractOpts {
            rank_tol: 1e-8,
            residual_tol: 1e-6,
            seed: 42,
        }
    }

    #[test]
    fn four_corner_measure_roundtrip() {
        let pts = vec![
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ];
        let w = vec![0.25; 4];
        let sigma = moments_of_points(&pts, &w, 8).unwrap();
        let m = extract_measure(&sigma, &opts()).unwrap();
        assert_eq!(m.rank, 4);
        assert!(m.residual <= 1e-10);
        for p in &pts {
            let found = m
                .points
                .iter()
                .zip(&m.weights)
                .find(|(q, _)| {
                    q.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-8)
                });
            let (_, &w_found) = found.expect("point recovered");
            assert!((w_found - 0.25).abs() < 1e-8);
        }
    }

    #[test]
    fn single_point_at_origin_three_vars() {
        let sigma = moments_of_points(&[vec![0.0, 0.0, 0.0]], &[1.0], 8).unwrap();
        let m = extract_measure(&sigma, &opts()).unwrap();
        assert_eq!(m.rank, 1);
        assert!(m.points[0].iter().all(|&c| c.abs() < 1e-9));
        assert!((m.weights[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn verify_measure_examples() {
        let sigma = moments_of_points(&[vec![0.0]], &[1.0], 4).unwrap();
        let m = ExtractedMeasure {
            points: vec![vec![0.0]],
            weights: vec![1.0],
            residual: 0.0,
            degree_used: 2,
            rank: 1,
        };
        assert_eq!(verify_measure(&sigma, &m), 0.0);

        let sigma = moments_of_points(&[vec![1.0], vec![-1.0]], &[0.5, 0.5], 4).unwrap();
        let m = ExtractedMeasure {
            points: vec![vec![1.0], vec![-1.0]],
            weights: vec![0.5, 0.5],
            residual: 0.0,
            degree_used: 2,
            rank: 2,
        };
        assert!(verify_measure(&sigma, &m) <= 1e-15);

        let sigma = moments_of_points(&[vec![1.0]], &[1.0], 2).unwrap();
        let m = ExtractedMeasure {
            points: vec![vec![1.1]],
            weights: vec![1.0],
            residual: 0.0,
            degree_used: 1,
            rank: 1,
        };
        assert!(verify_measure(&sigma, &m) >= 0.09);
    }

    #[test]
    fn rank_matches_point_count_and_order_is_canonical() {
        let pts = vec![vec![0.4, -0.2], vec![-0.6, 0.8], vec![0.1, 0.5]];
        let w = vec![0.5, 0.3, 0.2];
        let sigma = moments_of_points(&pts, &w, 8).unwrap();
        let m = extract_measure(&sigma, &opts()).unwrap();
        assert_eq!(m.rank, m.points.len());
        assert_eq!(m.rank, 3);
        let mut sorted = m.points.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, m.points);
    }

    #[test]
    fn permutation_invariance() {
        let pts1 = vec![vec![0.7], vec![-0.3], vec![0.1]];
        let pts2 = vec![vec![0.1], vec![0.7], vec![-0.3]];
        let w1 = vec![0.2, 0.5, 0.3];
        let w2 = vec![0.3, 0.2, 0.5];
        let m1 = extract_measure(&moments_of_points(&pts1, &w1, 6).unwrap(), &opts()).unwrap();
        let m2 = extract_measure(&moments_of_points(&pts2, &w2, 6).unwrap(), &opts()).unwrap();
        for (p, q) in m1.points.iter().zip(&m2.points) {
            assert!((p[0] - q[0]).abs() < 1e-9);
        }
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_determinism() {
        let pts = vec![vec![0.25, 0.5], vec![-0.75, 0.1]];
        let w = vec![0.6, 0.4];
        let sigma = moments_of_points(&pts, &w, 6).unwrap();
        let m1 = extract_measure(&sigma, &opts()).unwrap();
        let m2 = extract_measure(&sigma, &opts()).unwrap();
        assert_eq!(m1.points, m2.points);
        assert_eq!(m1.weights, m2.weights);
    }

    #[test]
    fn master_roundtrip_sample() {
        // Compact version of the acceptance round-trip (full one in the
        // acceptance suite).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..20 {
            let n = 1 + (case % 3);
            let r = 1 + (case % 4);
            let mut pts: Vec<Vec<f64>> = Vec::new();
            while pts.len() < r {
                let cand: Vec<f64> =
                    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                if pts
                    .iter()
                    .all(|p| p.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= 0.2)
                {
                    pts.push(cand);
                }
            }
            let ws: Vec<f64> = (0..r).map(|_| 0.1 + 0.9 * rng.random::<f64>()).collect();
            let t = (r as u32).max(2);
            let sigma = moments_of_points(&pts, &ws, 2 * t).unwrap();
            let m = extract_measure(&sigma, &opts()).unwrap();
            assert_eq!(m.rank, r, "case {case}");
            assert!(m.residual <= 1e-9, "case {case} residual {}", m.residual);
            for (p, w) in pts.iter().zip(&ws) {
                let hit = m
                    .points
                    .iter()
                    .zip(&m.weights)
                    .find(|(q, _)| {
                        q.iter()
                            .zip(p)
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>()
                            .sqrt()
                            < 1e-7
                    });
                let (_, &wf) = hit.expect("point recovered");
                assert!((wf - w).abs() < 1e-7, "case {case}");
            }
        }
    }
}
