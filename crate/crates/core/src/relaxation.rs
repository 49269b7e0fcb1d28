//! Moment relaxation construction: a polynomial optimization problem plus an
//! order becomes a block-PSD instance over one scalar variable per monomial of
//! degree ≤ 2d.
//!
//! Shared moment variables across all blocks encode the Hankel structure as a
//! hard constraint. Equalities `h = 0` enter as linear rows
//! `⟨σ, X^γ h⟩ = 0` rather than as paired localizing blocks.

use crate::polyparse::VariableTable;
use crate::polyring::{monomials_up_to, Monomial, Polynomial};
use crate::moments::MomentVector;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RelaxError {
    #[error("relaxation order {order} is below the half-degree {needed} of the input")]
    OrderTooSmall { order: u32, needed: u32 },
    #[error("localizing block for a generator of degree {degree} is empty at order {order}")]
    EmptyGeneratorDegree { degree: u32, order: u32 },
    #[error("preordering expansion supports at most {max} generators, got {got}")]
    TooManyGenerators { max: usize, got: usize },
    #[error("polynomial degree {degree} exceeds the relaxation degree {max}")]
    DegreeTooHigh { degree: u32, max: u32 },
}

/// `inf { f(x) : g_i(x) ≥ 0, h_j(x) = 0 }`.
#[derive(Debug, Clone)]
pub struct PopInstance {
    pub objective: Polynomial,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
    pub vars: VariableTable,
}

impl PopInstance {
    pub fn new(
        objective: Polynomial,
        inequalities: Vec<Polynomial>,
        equalities: Vec<Polynomial>,
        vars: VariableTable,
    ) -> Self {
        let n = vars.len();
        assert_eq!(objective.num_vars(), n, "objective variable count");
        for p in inequalities.iter().chain(&equalities) {
            assert_eq!(p.num_vars(), n, "constraint variable count");
        }
        PopInstance {
            objective,
            inequalities,
            equalities,
            vars,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Largest degree over the objective and all constraints (≥ 0).
    pub fn max_degree(&self) -> u32 {
        let mut d = self.objective.degree().max(0);
        for p in self.inequalities.iter().chain(&self.equalities) {
            d = d.max(p.degree());
        }
        d.max(0) as u32
    }

    /// Smallest admissible relaxation order `⌈deg/2⌉`.
    pub fn min_order(&self) -> u32 {
        self.max_degree().div_ceil(2).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationMode {
    QuadraticModule,
    Preordering,
}

/// One PSD block: an affine map from the moment variables to symmetric
/// matrices, `F(y)[i,j] = Σ coeff·y_k` over the stored sparse entries.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    /// Shift polynomial `g` (the constant 1 for the moment block itself).
    pub shift: Polynomial,
    /// Row/column monomials, degree ≤ d − ⌈deg g / 2⌉.
    pub basis: Vec<Monomial>,
    /// Upper-triangle entries, row-major: `(i,j)` with `i ≤ j`.
    entries: Vec<Vec<(usize, f64)>>,
}

impl BlockSpec {
    pub fn size(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    fn tri_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        i * self.basis.len() - i * (i + 1) / 2 + j
    }

    /// Sparse terms of entry `(i, j)` (`i ≤ j`) as (variable, coefficient).
    pub fn entry(&self, i: usize, j: usize) -> &[(usize, f64)] {
        &self.entries[self.tri_index(i.min(j), i.max(j))]
    }

    /// Evaluates the block at a moment-variable assignment.
    pub fn assemble(&self, y: &[f64]) -> DMatrix<f64> {
        let s = self.size();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let v: f64 = self
                    .entry(i, j)
                    .iter()
                    .map(|&(k, c)| c * y[k])
                    .sum();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// The slice matrix `∂F/∂y_k` scattered densely.
    pub fn slice(&self, var: usize) -> DMatrix<f64> {
        let s = self.size();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                for &(k, c) in self.entry(i, j) {
                    if k == var {
                        m[(i, j)] += c;
                        if i != j {
                            m[(j, i)] += c;
                        }
                    }
                }
            }
        }
        m
    }
}

/// Sparse equality row `Σ coeffs·y = rhs` over the moment variables.
#[derive(Debug, Clone)]
pub struct EqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Block-PSD instance over the pseudo-moment variables.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    /// Polynomial variable count of the source problem.
    pub n: usize,
    pub order: u32,
    pub mode: RelaxationMode,
    /// Moment variable `k` stands for `σ_{monomials[k]}`; degree ≤ 2·order.
    pub monomials: Vec<Monomial>,
    index: BTreeMap<Monomial, usize>,
    pub blocks: Vec<BlockSpec>,
    pub eq_rows: Vec<EqRow>,
    /// Objective vector `c`: minimize `c·y = ⟨σ, f⟩`.
    pub objective: Vec<f64>,
}

impl SdpProblem {
    pub fn num_moment_vars(&self) -> usize {
        self.monomials.len()
    }

    pub fn monomial_index(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Relabels a solution vector as a pseudo-moment sequence.
    pub fn moment_vector(&self, y: &[f64]) -> MomentVector {
        MomentVector::from_values(self.n, 2 * self.order, y.to_vec())
    }

    /// Max-norm equality residual `‖Ay − b‖_∞`.
    pub fn eq_residual(&self, y: &[f64]) -> f64 {
        self.eq_rows
            .iter()
            .map(|row| {
                let lhs: f64 = row.coeffs.iter().map(|&(k, c)| c * y[k]).sum();
                (lhs - row.rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Reconstructs the polynomial whose pairing with σ a row represents.
    pub fn row_polynomial(&self, row: &EqRow) -> Polynomial {
        Polynomial::from_terms(
            self.n,
            row.coeffs
                .iter()
                .map(|&(k, c)| (self.monomials[k].clone(), c))
                .collect(),
        )
    }

    fn push_pairing_rows(&mut self, h: &Polynomial) {
        let dh = h.degree().max(0) as u32;
        let budget = 2 * self.order - dh;
        for gamma in monomials_up_to(self.n, budget) {
            let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(h.num_terms());
            for (m, c) in h.terms() {
                let k = self.index[&gamma.mul(m)];
                coeffs.push((k, c));
            }
            coeffs.sort_by_key(|&(k, _)| k);
            self.eq_rows.push(EqRow { coeffs, rhs: 0.0 });
        }
    }
}

/// All products of nonempty subsets of the generators, deduplicated; the
/// empty product is excluded since the plain SoS block covers it.
pub fn expand_preordering(gens: &[Polynomial]) -> Result<Vec<Polynomial>, RelaxError> {
    const MAX: usize = 6;
    if gens.len() > MAX {
        return Err(RelaxError::TooManyGenerators {
            max: MAX,
            got: gens.len(),
        });
    }
    let mut out: Vec<Polynomial> = Vec::new();
    for mask in 1u32..(1 << gens.len()) {
        let mut prod: Option<Polynomial> = None;
        for (i, g) in gens.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod = Some(match prod {
                    None => g.clone(),
                    Some(p) => p.mul(g),
                });
            }
        }
        let prod = prod.expect("nonempty subset");
        if !out.contains(&prod) {
            out.push(prod);
        }
    }
    Ok(out)
}

fn localizing_block(
    n: usize,
    d: u32,
    g: &Polynomial,
    index: &BTreeMap<Monomial, usize>,
) -> Result<BlockSpec, RelaxError> {
    let dg = g.degree().max(0) as u32;
    let half = dg.div_ceil(2);
    if half > d {
        return Err(RelaxError::EmptyGeneratorDegree {
            degree: dg,
            order: d,
        });
    }
    let basis = monomials_up_to(n, d - half);
    let s = basis.len();
    let mut entries = Vec::with_capacity(s * (s + 1) / 2);
    for i in 0..s {
        for j in i..s {
            let prod = basis[i].mul(&basis[j]);
            let mut terms: Vec<(usize, f64)> = g
                .terms()
                .map(|(m, c)| (index[&prod.mul(m)], c))
                .collect();
            terms.sort_by_key(|&(k, _)| k);
            entries.push(terms);
        }
    }
    Ok(BlockSpec {
        shift: g.clone(),
        basis,
        entries,
    })
}

/// Builds the moment relaxation of order `d`.
///
/// Variables are all moments of degree ≤ 2d. The moment matrix and one
/// localizing block per (mode-expanded) inequality are required PSD;
/// `σ_0 = 1` and the pairings of every equality with monomials up to the
/// degree budget are linear rows; the objective is `⟨σ, f⟩`.
pub fn build_mom_relaxation(
    pop: &PopInstance,
    d: u32,
    mode: RelaxationMode,
) -> Result<SdpProblem, RelaxError> {
    let needed = pop.min_order();
    if d < needed {
        return Err(RelaxError::OrderTooSmall {
            order: d,
            needed,
        });
    }
    let n = pop.num_vars();
    let monomials = monomials_up_to(n, 2 * d);
    let index: BTreeMap<Monomial, usize> = monomials
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();

    let mut objective = vec![0.0; monomials.len()];
    for (m, c) in pop.objective.terms() {
        objective[index[m]] = c;
    }

    let generators = match mode {
        RelaxationMode::QuadraticModule => pop.inequalities.clone(),
        RelaxationMode::Preordering => expand_preordering(&pop.inequalities)?,
    };

    let one = Polynomial::constant(n, 1.0);
    let mut blocks = vec![localizing_block(n, d, &one, &index)?];
    for g in &generators {
        blocks.push(localizing_block(n, d, g, &index)?);
    }

    let mut problem = SdpProblem {
        n,
        order: d,
        mode,
        monomials,
        index,
        blocks,
        eq_rows: Vec::new(),
        objective,
    };

    // Normalization ⟨σ, 1⟩ = 1, exactly once.
    problem.eq_rows.push(EqRow {
        coeffs: vec![(0, 1.0)],
        rhs: 1.0,
    });
    for h in &pop.equalities {
        if h.is_zero() {
            continue;
        }
        problem.push_pairing_rows(h);
    }
    Ok(problem)
}

/// Appends the level equalities `⟨σ, X^γ (f − v)⟩ = 0` and clears the
/// objective; the resulting instance is meant for generic-point computation.
pub fn add_level_constraint(
    problem: &SdpProblem,
    f: &Polynomial,
    v: f64,
) -> Result<SdpProblem, RelaxError> {
    let df = f.degree().max(0) as u32;
    if df > 2 * problem.order {
        return Err(RelaxError::DegreeTooHigh {
            degree: df,
            max: 2 * problem.order,
        });
    }
    let mut out = problem.clone();
    let level = f.sub(&Polynomial::constant(problem.n, v));
    if !level.is_zero() {
        out.push_pairing_rows(&level);
    }
    for c in &mut out.objective {
        *c = 0.0;
    }
    Ok(out)
}
