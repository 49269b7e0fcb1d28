//! Shared fixture problems for unit tests.

use crate::polyring::{Monomial, Polynomial};

pub fn poly(n: usize, terms: &[(&[u32], f64)]) -> Polynomial {
    Polynomial::from_terms(
        n,
        terms
            .iter()
            .map(|(e, c)| (Monomial::new(e.to_vec()), *c))
            .collect(),
    )
}

/// x^4 y^2 + x^2 y^4 - 3 x^2 y^2 + 1, minimum 0 at (±1, ±1).
pub fn motzkin() -> Polynomial {
    poly(
        2,
        &[(&[4, 2], 1.0), (&[2, 4], 1.0), (&[2, 2], -3.0), (&[0, 0], 1.0)],
    )
}

/// Robinson form in three variables, minimum 0 on the unit sphere.
pub fn robinson() -> Polynomial {
    poly(
        3,
        &[
            (&[6, 0, 0], 1.0),
            (&[0, 6, 0], 1.0),
            (&[0, 0, 6], 1.0),
            (&[2, 2, 2], 3.0),
            (&[4, 2, 0], -1.0),
            (&[4, 0, 2], -1.0),
            (&[2, 4, 0], -1.0),
            (&[0, 4, 2], -1.0),
            (&[2, 0, 4], -1.0),
            (&[0, 2, 4], -1.0),
        ],
    )
}

/// x^2 + y^2 + z^2 - 1.
pub fn unit_sphere() -> Polynomial {
    poly(
        3,
        &[
            (&[2, 0, 0], 1.0),
            (&[0, 2, 0], 1.0),
            (&[0, 0, 2], 1.0),
            (&[0, 0, 0], -1.0),
        ],
    )
}
