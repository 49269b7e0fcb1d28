//! Sparse multivariate polynomial arithmetic over `f64` coefficients.
//!
//! Monomials are exponent vectors ordered graded-lexicographically: lower
//! total degree first, and within a degree the variable earliest in the table
//! dominates (so for two variables the order is `1, x, y, x^2, xy, y^2`).
//! Every matrix indexing downstream inherits this one order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

/// Exponent vector of a single monomial. Length equals the variable count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    /// The constant monomial `1` in `n` variables.
    pub fn one(n: usize) -> Self {
        Monomial { exps: vec![0; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.exps[var]
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Multiplication by the single variable `var`.
    pub fn mul_var(&self, var: usize) -> Monomial {
        let mut exps = self.exps.clone();
        exps[var] += 1;
        Monomial { exps }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.exps.len(), x.len());
        self.exps
            .iter()
            .zip(x)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }

    /// Pads the exponent vector with zeros up to `n` variables.
    pub fn extend_vars(&self, n: usize) -> Monomial {
        let mut exps = self.exps.clone();
        exps.resize(n, 0);
        Monomial { exps }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // Within a degree the variable listed first dominates: x before y,
            // x^2 before xy before y^2. Larger leading exponents sort earlier.
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `n` variables of degree at most `d`, in graded-lex order.
///
/// The count is `C(n+d, n)` and the first element is the constant monomial.
pub fn monomials_up_to(n: usize, d: u32) -> Vec<Monomial> {
    assert!(n >= 1, "variable count must be at least 1");
    let mut out = Vec::with_capacity(binomial(n as u64 + d as u64, n as u64) as usize);
    let mut current = vec![0u32; n];
    for deg in 0..=d {
        fill_degree(&mut out, &mut current, 0, deg);
    }
    out
}

fn fill_degree(out: &mut Vec<Monomial>, current: &mut Vec<u32>, var: usize, remaining: u32) {
    if var + 1 == current.len() {
        current[var] = remaining;
        out.push(Monomial::new(current.clone()));
        return;
    }
    // Descending leading exponent keeps the graded-lex order.
    for e in (0..=remaining).rev() {
        current[var] = e;
        fill_degree(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Sparse polynomial: a term map keyed by monomials, zero coefficients pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
    degree: i64,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
            degree: -1,
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n);
        if c != 0.0 {
            p.terms.insert(Monomial::one(n), c);
            p.degree = 0;
        }
        p
    }

    /// The polynomial `X_var`.
    pub fn variable(n: usize, var: usize) -> Self {
        assert!(var < n);
        let mut exps = vec![0; n];
        exps[var] = 1;
        Polynomial::from_terms(n, vec![(Monomial::new(exps), 1.0)])
    }

    pub fn from_terms(n: usize, terms: Vec<(Monomial, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            debug_assert_eq!(m.num_vars(), n);
            let entry = map.entry(m).or_insert(0.0);
            *entry += c;
        }
        map.retain(|_, c| *c != 0.0);
        let degree = map.keys().last().map_or(-1, |m| m.degree() as i64);
        Polynomial { n, terms: map, degree }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    /// Total degree; `-1` for the zero polynomial.
    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Degree-ascending iteration over (monomial, coefficient) pairs.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Coefficient of the constant monomial.
    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one(self.n))
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n, "variable count mismatch");
        let mut terms: Vec<(Monomial, f64)> =
            self.terms.iter().map(|(m, &c)| (m.clone(), c)).collect();
        terms.extend(other.terms.iter().map(|(m, &c)| (m.clone(), c)));
        Polynomial::from_terms(self.n, terms)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        if c == 0.0 {
            return Polynomial::zero(self.n);
        }
        let terms = self.terms.iter().map(|(m, &a)| (m.clone(), a * c)).collect();
        Polynomial::from_terms(self.n, terms)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n, "variable count mismatch");
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                terms.push((ma.mul(mb), ca * cb));
            }
        }
        Polynomial::from_terms(self.n, terms)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.n, 1.0);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Partial derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Polynomial {
        assert!(var < self.n);
        let mut terms = Vec::new();
        for (m, &c) in &self.terms {
            let e = m.exponent(var);
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[var] -= 1;
            terms.push((Monomial::new(exps), c * e as f64));
        }
        Polynomial::from_terms(self.n, terms)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "point dimension mismatch");
        self.terms.iter().map(|(m, &c)| c * m.eval(x)).sum()
    }

    /// Reinterprets the polynomial in a larger variable space, with the
    /// original variables occupying the leading positions.
    pub fn extend_vars(&self, n: usize) -> Polynomial {
        assert!(n >= self.n);
        let terms = self
            .terms
            .iter()
            .map(|(m, &c)| (m.extend_vars(n), c))
            .collect();
        Polynomial::from_terms(n, terms)
    }

    /// Largest absolute coefficient; 0 for the zero polynomial.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }
}
