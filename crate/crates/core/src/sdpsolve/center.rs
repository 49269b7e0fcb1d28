//! Analytic centering: damped Newton maximization of Σ log det over the
//! affine section of the restricted cone.

use super::geometry::Geometry;
use super::linalg::{max_psd_step, solve_kkt, svec_into, svec_len, sym_eig};
use nalgebra::{DMatrix, DVector};

fn barrier_value(geo: &Geometry, y: &DVector<f64>, ridge: f64) -> f64 {
    let mut phi = ridge * y.norm_squared();
    for blk in &geo.blocks {
        let x = blk.assemble(y);
        match x.cholesky() {
            Some(ch) => {
                for i in 0..blk.r {
                    phi -= 2.0 * ch.l()[(i, i)].ln();
                }
            }
            None => return f64::INFINITY,
        }
    }
    phi
}

/// Moves `y0` (strictly feasible) to the analytic center of
/// `{ y : Ay = b, F̃_b(y) ≻ 0 }`. Pure primal damped Newton on
/// `−Σ_b log det F̃_b(y)`, ridge-regularized so the center exists even when
/// the section is unbounded along directions the barrier rewards.
pub(crate) fn analytic_center(geo: &Geometry, y0: &DVector<f64>) -> DVector<f64> {
    let m = geo.m;
    let mut y = y0.clone();
    if geo.blocks.is_empty() {
        return y;
    }
    // The ridge scale references the equality system's own solution scale;
    // the strictly feasible start may already carry drift the ridge must
    // pull back.
    let y_ls = geo.feasible_affine_point();
    let ridge = 3e-3 * geo.nu() as f64 / (1.0 + y_ls.norm_squared());

    for _iter in 0..60 {
        let mut g = &y * (2.0 * ridge);
        let mut h = DMatrix::identity(m, m) * (2.0 * ridge);
        for blk in &geo.blocks {
            let x = blk.assemble(&y);
            let (vals, vecs) = sym_eig(&x);
            if vals[0] <= 0.0 {
                return y;
            }
            let x_inv = {
                let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v));
                &vecs * d * vecs.transpose()
            };
            let mut acc = DVector::zeros(m);
            geo.accumulate_pairings(blk, &x_inv, &mut acc);
            g -= acc;

            let r_half = {
                let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
                &vecs * d * vecs.transpose()
            };
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
        }

        let minus_g = -&g;
        let zero = DVector::zeros(geo.a.nrows());
        let Some((dy, _w)) = solve_kkt(&h, &geo.a, &minus_g, &zero) else {
            return y;
        };
        let decrement = dy.dot(&(&h * &dy));
        if !decrement.is_finite() {
            return y;
        }
        if decrement * 0.5 <= 1e-10 {
            return y;
        }

        // Step capped at the cone boundary, then Armijo backtracking.
        let mut alpha: f64 = 1.0;
        for blk in &geo.blocks {
            let x = blk.assemble(&y);
            let dx = blk.assemble(&dy);
            alpha = alpha.min(0.99 * max_psd_step(&x, &dx, 1.0 / 0.99));
        }
        let phi0 = barrier_value(geo, &y, ridge);
        let slope = g.dot(&dy);
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &y + &dy * alpha;
            let phi1 = barrier_value(geo, &trial, ridge);
            if phi1 <= phi0 + 0.25 * alpha * slope {
                y = trial;
                accepted = true;
                break;
            }
            alpha *= 0.6;
        }
        if !accepted {
            return y;
        }
    }
    y
}
