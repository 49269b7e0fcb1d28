//! Dense symmetric helpers shared by the interior-point kernels.

use nalgebra::{DMatrix, DVector};

/// Symmetric eigendecomposition returning (eigenvalues ascending, vectors).
pub fn sym_eig(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| se.eigenvalues[i]));
    let vecs = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| se.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

/// `f(M)` for symmetric `M` through its eigendecomposition.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eig(m);
    let d = DMatrix::from_diagonal(&vals.map(f));
    &vecs * d * vecs.transpose()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Scaled vectorization of the upper triangle: off-diagonal entries carry
/// √2 so that `svec(A)·svec(B) = ⟨A, B⟩` for symmetric A, B.
pub fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let s = m.nrows();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..s {
        out[k] = m[(i, i)];
        k += 1;
        for j in (i + 1)..s {
            out[k] = sqrt2 * m[(i, j)];
            k += 1;
        }
    }
}

pub fn svec_len(s: usize) -> usize {
    s * (s + 1) / 2
}

/// Frobenius inner product of symmetric matrices.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest step `α ∈ (0, cap]` with `X + α ΔX ≻ 0`, given `X ≻ 0`.
pub fn max_psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>, cap: f64) -> f64 {
    let chol = match x.clone().cholesky() {
        Some(c) => c,
        None => return 0.0,
    };
    // X + αΔX ≻ 0  ⟺  I + α L⁻¹ ΔX L⁻ᵀ ≻ 0.
    let l_inv = chol.l().solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))
        .expect("triangular solve");
    let m = &l_inv * dx * l_inv.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    let lmin = min_eigenvalue(&sym);
    if lmin >= -1e-14 {
        cap
    } else {
        (-1.0 / lmin).min(cap)
    }
}

/// Solves the saddle system `[[H + reg·I, Aᵀ],[A, 0]]·[dy; w] = [q; r]`.
///
/// Retries with escalating Tikhonov regularization when the factorization
/// fails; `None` after the retries are exhausted.
pub fn solve_kkt(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DVector<f64>,
    r: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = h.nrows();
    let p = a.nrows();
    let dim = m + p;
    let scale = 1.0 + h.diagonal().amax();
    let mut reg = 0.0;
    for attempt in 0..4 {
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (m, m)).copy_from(h);
        for i in 0..m {
            kkt[(i, i)] += reg;
        }
        kkt.view_mut((m, 0), (p, m)).copy_from(a);
        kkt.view_mut((0, m), (m, p)).copy_from(&a.transpose());
        for i in 0..p {
            kkt[(m + i, m + i)] = -reg;
        }
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, m).copy_from(q);
        rhs.rows_mut(m, p).copy_from(r);
        if let Some(sol) = kkt.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return Some((sol.rows(0, m).into_owned(), sol.rows(m, p).into_owned()));
            }
        }
        reg = if attempt == 0 { 1e-12 * scale } else { reg * 100.0 };
    }
    None
}

/// Dependent-row removal for an equality system, first-come order preserving.
///
/// Modified Gram-Schmidt with per-row relative tolerances: a row is kept when
/// its component orthogonal to the rows already kept exceeds its tolerance
/// times its own norm. Returns the kept indices and a point satisfying the
/// full system, or `None` when the dropped rows are inconsistent with the
/// kept ones.
pub fn independent_rows(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol_of: impl Fn(usize) -> f64,
) -> Option<(Vec<usize>, DVector<f64>)> {
    let p = a.nrows();
    let m = a.ncols();
    if p == 0 {
        return Some((Vec::new(), DVector::zeros(m)));
    }
    let mut keep: Vec<usize> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..p {
        let mut v = a.row(i).transpose().into_owned();
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        // One re-orthogonalization pass for stability.
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm1 = v.norm();
        if norm1 > tol_of(i) * norm0 {
            keep.push(i);
            basis.push(v / norm1);
        }
    }

    // Consistency: the least-squares solution of the kept rows must satisfy
    // every original row. Row thresholds are scale-aware — pinned kernel rows
    // carry numerical noise proportional to their norms.
    let y = if keep.is_empty() {
        DVector::zeros(m)
    } else {
        let ak = DMatrix::from_rows(
            &keep
                .iter()
                .map(|&i| a.row(i).into_owned())
                .collect::<Vec<_>>(),
        );
        let bk = DVector::from_iterator(keep.len(), keep.iter().map(|&i| b[i]));
        least_squares_min_norm(&ak, &bk)
    };
    let resid = a * &y - b;
    let ynorm = y.norm();
    for i in 0..p {
        let row_scale = 1.0 + b[i].abs() + a.row(i).norm() * ynorm;
        if resid[i].abs() > 1e-4 * row_scale {
            if std::env::var("MOMOPT_DEBUG_ROWS").is_ok() {
                eprintln!(
                    "DBG row {i}/{p} resid {:.2e} scale {:.2e} ynorm {:.2e}",
                    resid[i].abs(), row_scale, ynorm
                );
            }
            return None;
        }
    }
    Some((keep, y))
}

/// Minimum-norm solution of a consistent underdetermined system.
pub fn least_squares_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    // y = Aᵀ (A Aᵀ)⁻¹ b with SVD-backed pseudo-inverse for rank safety.
    let svd = a.clone().svd(true, true);
    
    svd.solve(b, 1e-12).expect("svd solve")
}
