//! Truncated pseudo-moment sequences and their Hankel operators.
//!
//! A `MomentVector` stores the values of a linear functional on all monomials
//! of degree at most `2d`, indexed in graded-lex order. Hankel and localizing
//! matrices are dense; numerical kernels come from singular value
//! thresholding.

use crate::polyring::{monomials_up_to, Monomial, Polynomial};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MomentError {
    #[error("degree {needed} exceeds the stored moment degree {max}")]
    DegreeTooHigh { needed: u32, max: u32 },
    #[error("points and weights differ in length ({points} vs {weights})")]
    LengthMismatch { points: usize, weights: usize },
}

/// Pseudo-moment sequence truncated at `max_degree`, dense in graded-lex order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    n: usize,
    max_degree: u32,
    values: Vec<f64>,
    index: BTreeMap<Monomial, usize>,
}

impl MomentVector {
    pub fn zero(n: usize, max_degree: u32) -> Self {
        let basis = monomials_up_to(n, max_degree);
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MomentVector {
            n,
            max_degree,
            values: vec![0.0; basis.len()],
            index,
        }
    }

    pub fn from_values(n: usize, max_degree: u32, values: Vec<f64>) -> Self {
        let mut mv = MomentVector::zero(n, max_degree);
        assert_eq!(values.len(), mv.values.len(), "moment vector length");
        mv.values = values;
        mv
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, m: &Monomial) -> Option<f64> {
        self.index.get(m).map(|&i| self.values[i])
    }

    pub fn set(&mut self, m: &Monomial, v: f64) {
        let i = self.index[m];
        self.values[i] = v;
    }

    /// `⟨σ, p⟩ = Σ_α p_α σ_α`.
    pub fn apply(&self, p: &Polynomial) -> Result<f64, MomentError> {
        if p.degree() > self.max_degree as i64 {
            return Err(MomentError::DegreeTooHigh {
                needed: p.degree().max(0) as u32,
                max: self.max_degree,
            });
        }
        Ok(p.terms()
            .map(|(m, c)| c * self.get(m).expect("indexed monomial"))
            .sum())
    }

    /// Convolution `g ⋆ σ`: `(g⋆σ)_α = Σ_γ g_γ σ_{α+γ}`, truncated at
    /// `max_degree − deg g`.
    pub fn convolve(&self, g: &Polynomial) -> Result<MomentVector, MomentError> {
        let dg = g.degree().max(0) as u32;
        if g.degree() >= 0 && dg > self.max_degree {
            return Err(MomentError::DegreeTooHigh {
                needed: dg,
                max: self.max_degree,
            });
        }
        let out_degree = self.max_degree - dg;
        let mut out = MomentVector::zero(self.n, out_degree);
        let basis = monomials_up_to(self.n, out_degree);
        for alpha in &basis {
            let mut acc = 0.0;
            for (gamma, c) in g.terms() {
                acc += c * self.get(&alpha.mul(gamma)).expect("degree bounded");
            }
            out.set(alpha, acc);
        }
        Ok(out)
    }
}

/// Moments of the weighted point mass `Σ_i ω_i e_{ξ_i}` up to `max_degree`.
pub fn moments_of_points(
    points: &[Vec<f64>],
    weights: &[f64],
    max_degree: u32,
) -> Result<MomentVector, MomentError> {
    if points.len() != weights.len() {
        return Err(MomentError::LengthMismatch {
            points: points.len(),
            weights: weights.len(),
        });
    }
    let n = points.first().map_or(1, |p| p.len());
    let mut mv = MomentVector::zero(n, max_degree);
    let basis = monomials_up_to(n, max_degree);
    for (i, alpha) in basis.iter().enumerate() {
        mv.values[i] = points
            .iter()
            .zip(weights)
            .map(|(p, &w)| w * alpha.eval(p))
            .sum();
    }
    Ok(mv)
}

/// Symmetric matrix `(⟨σ, X^α X^β g⟩)_{α,β}` over monomials of degree ≤ t.
#[derive(Debug, Clone)]
pub struct HankelMatrix {
    basis: Vec<Monomial>,
    matrix: DMatrix<f64>,
}

impl HankelMatrix {
    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }
}

/// Moment matrix `H_σ^t` with entries `σ_{α+β}`.
pub fn hankel_matrix(sigma: &MomentVector, t: u32) -> Result<HankelMatrix, MomentError> {
    if 2 * t > sigma.max_degree() {
        return Err(MomentError::DegreeTooHigh {
            needed: 2 * t,
            max: sigma.max_degree(),
        });
    }
    let basis = monomials_up_to(sigma.num_vars(), t);
    let s = basis.len();
    let mut matrix = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let v = sigma.get(&basis[i].mul(&basis[j])).expect("degree bounded");
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(HankelMatrix { basis, matrix })
}

/// Localizing matrix: `M[α,β] = Σ_γ g_γ σ_{α+β+γ}`, i.e. `H_{g⋆σ}^t`.
pub fn localizing_matrix(
    sigma: &MomentVector,
    g: &Polynomial,
    t: u32,
) -> Result<HankelMatrix, MomentError> {
    let dg = g.degree().max(0) as u32;
    if 2 * t + dg > sigma.max_degree() {
        return Err(MomentError::DegreeTooHigh {
            needed: 2 * t + dg,
            max: sigma.max_degree(),
        });
    }
    let basis = monomials_up_to(sigma.num_vars(), t);
    let s = basis.len();
    let mut matrix = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let prod = basis[i].mul(&basis[j]);
            let mut acc = 0.0;
            for (gamma, c) in g.terms() {
                acc += c * sigma.get(&prod.mul(gamma)).expect("degree bounded");
            }
            matrix[(i, j)] = acc;
            matrix[(j, i)] = acc;
        }
    }
    Ok(HankelMatrix { basis, matrix })
}

/// Orthonormal numerical kernel of a Hankel matrix, reported as polynomials.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub polynomials: Vec<Polynomial>,
    pub tolerance: f64,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

/// Kernel polynomials from singular value thresholding.
///
/// Numerical rank counts singular values above `rank_tol · σ_max`; the kernel
/// is spanned by the corresponding trailing right singular vectors, which are
/// orthonormal in coefficient space. The span is the contract — individual
/// vectors are basis-ambiguous.
pub fn kernel_basis(h: &HankelMatrix, rank_tol: f64) -> KernelBasis {
    let s = h.size();
    let n = h.basis.first().map_or(1, |m| m.num_vars());
    let svd = h.matrix.clone().svd(false, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.resize(s, 0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = if smax <= 0.0 {
        0
    } else {
        sv.iter().filter(|&&v| v > rank_tol * smax).count()
    };
    let v_t = svd.v_t.expect("requested V^T");
    let mut polynomials = Vec::with_capacity(s - rank);
    for k in rank..s {
        let row = v_t.row(k);
        let terms = h
            .basis
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), row[i]))
            .collect();
        polynomials.push(Polynomial::from_terms(n, terms));
    }
    KernelBasis {
        polynomials,
        tolerance: rank_tol,
        singular_values: sv,
        rank,
    }
}

/// Default relative rank tolerance for a matrix of the given dimension.
pub fn default_rank_tol(dim: usize) -> f64 {
    dim.max(1) as f64 * 1e-8
}

/// Coefficient vector of `p` over the monomial list `basis`.
pub fn coefficient_vector(p: &Polynomial, basis: &[Monomial]) -> DVector<f64> {
    let mut v = DVector::zeros(basis.len());
    for (i, m) in basis.iter().enumerate() {
        v[i] = p.coefficient(m);
    }
    v
}

#[cfg(test)]
pub(crate) fn moment_basis_len(n: usize, d: u32) -> usize {
    crate::polyring::binomial(n as u64 + d as u64, n as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::poly;

    fn e(point: &[f64], deg: u32) -> MomentVector {
        moments_of_points(&[point.to_vec()], &[1.0], deg).unwrap()
    }

    #[test]
    fn hankel_of_point_evaluation_is_rank_one() {
        let sigma = e(&[1.0, 1.0], 2);
        let h = hankel_matrix(&sigma, 1).unwrap();
        assert_eq!(h.size(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h.matrix()[(i, j)], 1.0);
            }
        }
        let kb = kernel_basis(&h, default_rank_tol(3));
        assert_eq!(kb.rank, 1);
    }

    #[test]
    fn hankel_of_two_point_mixture() {
        // Oracle: σ_α = ½(1^α) + ½((−1)^α) computed by hand.
        let sigma = moments_of_points(
            &[vec![1.0, 1.0], vec![-1.0, -1.0]],
            &[0.5, 0.5],
            2,
        )
        .unwrap();
        let h = hankel_matrix(&sigma, 1).unwrap();
        let expect = [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        for (i, row) in expect.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert_eq!(h.matrix()[(i, j)], *want);
            }
        }
    }

    #[test]
    fn hankel_of_zero_vector_is_zero() {
        let sigma = MomentVector::zero(2, 4);
        let h = hankel_matrix(&sigma, 2).unwrap();
        assert_eq!(h.matrix().amax(), 0.0);
    }

    #[test]
    fn hankel_rejects_excess_degree() {
        let sigma = MomentVector::zero(2, 2);
        assert!(matches!(
            hankel_matrix(&sigma, 2),
            Err(MomentError::DegreeTooHigh { .. })
        ));
    }

    #[test]
    fn hankel_cells_depend_only_on_exponent_sum() {
        let sigma = moments_of_points(&[vec![0.3, -0.7], vec![0.9, 0.2]], &[0.4, 0.6], 4).unwrap();
        let h = hankel_matrix(&sigma, 2).unwrap();
        let basis = h.basis().to_vec();
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                for k in 0..basis.len() {
                    for l in 0..basis.len() {
                        if basis[i].mul(&basis[j]) == basis[k].mul(&basis[l]) {
                            assert_eq!(h.matrix()[(i, j)].to_bits(), h.matrix()[(k, l)].to_bits());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn localizing_with_unit_shift_equals_hankel() {
        let sigma = moments_of_points(&[vec![0.5, 0.25]], &[2.0], 4).unwrap();
        let one = Polynomial::constant(2, 1.0);
        let lm = localizing_matrix(&sigma, &one, 2).unwrap();
        let hm = hankel_matrix(&sigma, 2).unwrap();
        assert_eq!(lm.matrix(), hm.matrix());
    }

    #[test]
    fn localizing_scalar_examples() {
        let ball = poly(
            2,
            &[(&[0, 0], 1.0), (&[2, 0], -1.0), (&[0, 2], -1.0)],
        );
        let sigma = e(&[0.5, 0.0], 2);
        let lm = localizing_matrix(&sigma, &ball, 0).unwrap();
        assert!((lm.matrix()[(0, 0)] - 0.75).abs() < 1e-15);

        let g = poly(2, &[(&[3, 0], 1.0), (&[0, 2], -1.0)]);
        let sigma = e(&[1.0, 1.0], 3);
        let lm = localizing_matrix(&sigma, &g, 0).unwrap();
        assert!(lm.matrix()[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn localizing_matches_convolution() {
        let g = poly(2, &[(&[1, 0], 1.0), (&[0, 1], -2.0), (&[0, 0], 0.5)]);
        let sigma = moments_of_points(
            &[vec![0.2, 0.9], vec![-0.5, 0.1], vec![0.7, -0.3]],
            &[0.2, 0.3, 0.5],
            5,
        )
        .unwrap();
        let direct = localizing_matrix(&sigma, &g, 2).unwrap();
        let via_conv = hankel_matrix(&sigma.convolve(&g).unwrap(), 2).unwrap();
        let diff = direct.matrix() - via_conv.matrix();
        assert!(diff.amax() < 1e-14);
    }

    #[test]
    fn kernel_of_point_evaluation_spans_vanishing_ideal() {
        let sigma = e(&[1.0, 1.0], 2);
        let h = hankel_matrix(&sigma, 1).unwrap();
        let kb = kernel_basis(&h, default_rank_tol(3));
        assert_eq!(kb.polynomials.len(), 2);
        // Span comparison through orthogonal projectors.
        let basis = h.basis();
        let target = [
            poly(2, &[(&[1, 0], 1.0), (&[0, 0], -1.0)]),
            poly(2, &[(&[0, 1], 1.0), (&[0, 0], -1.0)]),
        ];
        let proj = |polys: &[Polynomial]| -> DMatrix<f64> {
            let cols: Vec<DVector<f64>> =
                polys.iter().map(|p| coefficient_vector(p, basis)).collect();
            let a = DMatrix::from_columns(&cols);
            let qr = a.qr();
            let q = qr.q();
            &q * q.transpose()
        };
        let d = proj(&kb.polynomials) - proj(&target);
        assert!(d.amax() < 1e-9, "projector mismatch {}", d.amax());
    }

    #[test]
    fn kernel_of_identity_is_empty_and_zero_full() {
        let basis = monomials_up_to(2, 1);
        let id = HankelMatrix {
            basis: basis.clone(),
            matrix: DMatrix::identity(3, 3),
        };
        assert!(kernel_basis(&id, 1e-8).polynomials.is_empty());
        let z = HankelMatrix {
            basis,
            matrix: DMatrix::zeros(3, 3),
        };
        let kb = kernel_basis(&z, 1e-8);
        assert_eq!(kb.polynomials.len(), 3);
        assert_eq!(kb.rank, 0);
    }

    #[test]
    fn kernel_vectors_are_orthonormal() {
        let sigma = moments_of_points(&[vec![1.0, 1.0], vec![-0.3, 0.4]], &[0.5, 0.5], 4).unwrap();
        let h = hankel_matrix(&sigma, 2).unwrap();
        let kb = kernel_basis(&h, default_rank_tol(h.size()));
        assert_eq!(kb.rank, 2);
        let basis = h.basis();
        for (i, p) in kb.polynomials.iter().enumerate() {
            let vi = coefficient_vector(p, basis);
            // Kernel residual bound from the basis invariant.
            let res = (h.matrix() * &vi).norm();
            let hnorm = h.matrix().norm();
            assert!(res <= kb.tolerance * hnorm * vi.norm() + 1e-12);
            for (j, q) in kb.polynomials.iter().enumerate() {
                let vj = coefficient_vector(q, basis);
                let dot = vi.dot(&vj);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn moments_of_single_point_at_one() {
        let mv = e(&[1.0, 1.0], 4);
        assert!(mv.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn moments_of_symmetric_pair_have_even_support() {
        let mv = moments_of_points(&[vec![1.0, 1.0], vec![-1.0, -1.0]], &[0.5, 0.5], 2).unwrap();
        for m in monomials_up_to(2, 2) {
            let want = if m.degree() % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(mv.get(&m).unwrap(), want);
        }
    }

    #[test]
    fn moments_of_origin() {
        let mv = e(&[0.0, 0.0], 4);
        assert_eq!(mv.get(&Monomial::one(2)).unwrap(), 1.0);
        assert_eq!(mv.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn moments_length_mismatch() {
        assert!(matches!(
            moments_of_points(&[vec![0.0]], &[1.0, 2.0], 2),
            Err(MomentError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn apply_is_evaluation_for_point_masses() {
        let p = poly(2, &[(&[2, 1], 3.0), (&[0, 1], -1.0), (&[0, 0], 4.0)]);
        let xi = [0.3, -0.8];
        let sigma = e(&xi, 3);
        let lhs = sigma.apply(&p).unwrap();
        assert!((lhs - p.evaluate(&xi)).abs() < 1e-14);
    }

    #[test]
    fn apply_constant_reads_sigma_zero() {
        let sigma = moments_of_points(&[vec![2.0], vec![3.0]], &[0.25, 0.5], 2).unwrap();
        let one = Polynomial::constant(1, 1.0);
        assert_eq!(sigma.apply(&one).unwrap(), 0.75);
    }

    #[test]
    fn apply_xy_on_two_point_mixture() {
        let sigma = moments_of_points(&[vec![1.0, 1.0], vec![-1.0, -1.0]], &[0.5, 0.5], 2).unwrap();
        let xy = poly(2, &[(&[1, 1], 1.0)]);
        assert_eq!(sigma.apply(&xy).unwrap(), 1.0);
    }

    #[test]
    fn apply_rejects_excess_degree() {
        let sigma = MomentVector::zero(1, 2);
        let p = poly(1, &[(&[3], 1.0)]);
        assert!(matches!(
            sigma.apply(&p),
            Err(MomentError::DegreeTooHigh { .. })
        ));
    }

    #[test]
    fn interpolation_duality_recovers_weights() {
        // Interpolators at ±1 in one variable: u₁ = (1+x)/2, u₂ = (1−x)/2;
        // ⟨σ, u_i²⟩ recovers the weight at each point.
        let w = [0.3, 0.7];
        let sigma = moments_of_points(&[vec![1.0], vec![-1.0]], &w, 2).unwrap();
        let u1 = poly(1, &[(&[1], 0.5), (&[0], 0.5)]);
        let u2 = poly(1, &[(&[1], -0.5), (&[0], 0.5)]);
        assert!((sigma.apply(&u1.mul(&u1)).unwrap() - w[0]).abs() < 1e-14);
        assert!((sigma.apply(&u2.mul(&u2)).unwrap() - w[1]).abs() < 1e-14);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_points(n: usize, r: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
            (
                proptest::collection::vec(
                    proptest::collection::vec(-1.0f64..1.0, n),
                    1..=r,
                ),
                proptest::collection::vec(0.05f64..1.0, r),
            )
                .prop_map(|(pts, ws)| {
                    let k = pts.len();
                    (pts, ws[..k].to_vec())
                })
        }

        proptest! {
            #[test]
            fn measure_moment_matrices_are_psd((pts, ws) in arb_points(2, 4)) {
                let sigma = moments_of_points(&pts, &ws, 4).unwrap();
                let h = hankel_matrix(&sigma, 2).unwrap();
                let eig = h.matrix().clone().symmetric_eigenvalues();
                prop_assert!(eig.min() >= -1e-10);
                let kb = kernel_basis(&h, 1e-8);
                prop_assert!(kb.rank <= pts.len());
            }

            #[test]
            fn vanishing_polynomials_lie_in_kernel((pts, ws) in arb_points(2, 3)) {
                prop_assume!(pts.len() == 2);
                prop_assume!((pts[0][0] - pts[1][0]).abs() > 0.1);
                let sigma = moments_of_points(&pts, &ws, 4).unwrap();
                let h = hankel_matrix(&sigma, 2).unwrap();
                // A degree-1 polynomial vanishing on both points.
                let (a, b) = (pts[0][0], pts[1][0]);
                let (c, d) = (pts[0][1], pts[1][1]);
                let line = poly(2, &[
                    (&[1, 0], d - c),
                    (&[0, 1], a - b),
                    (&[0, 0], b * c - a * d),
                ]);
                let v = coefficient_vector(&line, h.basis());
                let res = (h.matrix() * &v).norm();
                prop_assert!(res <= 1e-9 * h.matrix().norm() * v.norm() + 1e-12);
            }

            #[test]
            fn apply_is_linear(
                (pts, ws) in arb_points(2, 3),
                a in -2.0f64..2.0,
                b in -2.0f64..2.0,
            ) {
                let sigma = moments_of_points(&pts, &ws, 4).unwrap();
                let p = poly(2, &[(&[2, 0], 1.0), (&[1, 1], -0.5)]);
                let q = poly(2, &[(&[0, 2], 2.0), (&[0, 0], 1.0)]);
                let lhs = sigma.apply(&p.scale(a).add(&q.scale(b))).unwrap();
                let rhs = a * sigma.apply(&p).unwrap() + b * sigma.apply(&q).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
