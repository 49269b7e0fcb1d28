//! Equality devices for exactness: KKT systems in extended variables and
//! polar-ideal generators built from active-constraint Jacobian minors.
//!
//! Every minimizer of the source problem lies in the real variety of the
//! polar ideal, including singular minimizers where the KKT conditions fail.

use crate::polyparse::VariableTable;
use crate::polyring::{binomial, Polynomial};
use crate::relaxation::PopInstance;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolarError {
    #[error("polar generator count {count} exceeds the cap {cap}")]
    CapExceeded { count: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarMode {
    Kkt,
    PolarProduct,
    PolarBranch,
}

#[derive(Debug, Clone)]
pub struct PolarCaps {
    /// PolarProduct supports at most this many inequalities (2^r factors).
    pub max_ineq: usize,
    /// Cross-product generator cap.
    pub max_gens: usize,
}

impl Default for PolarCaps {
    fn default() -> Self {
        PolarCaps {
            max_ineq: 3,
            max_gens: 5000,
        }
    }
}

/// One branch of the subset decomposition: the equalities to impose for the
/// given active set.
#[derive(Debug, Clone)]
pub struct PolarBranchSystem {
    pub active: Vec<usize>,
    pub generators: Vec<Polynomial>,
}

/// Generator system produced by `kkt_system` or `polar_generators`.
#[derive(Debug, Clone)]
pub struct PolarSystem {
    pub mode: PolarMode,
    /// Variable table of the generators (extended by multipliers for KKT).
    pub vars: VariableTable,
    /// Equality generators (KKT and PolarProduct modes).
    pub generators: Vec<Polynomial>,
    /// Per-subset systems (PolarBranch mode).
    pub branches: Vec<PolarBranchSystem>,
    /// Inequalities lifted to the (possibly extended) variable table.
    pub inequalities: Vec<Polynomial>,
}

/// KKT system in extended variables: stationarity with the multipliers for
/// inequalities entering squared, complementarity `Λ_k g_k`, and the
/// equalities themselves.
pub fn kkt_system(pop: &PopInstance) -> PolarSystem {
    let n = pop.num_vars();
    let r = pop.inequalities.len();
    let s = pop.equalities.len();
    let total = n + r + s;

    let suffixes: Vec<String> = (1..=r)
        .map(|k| format!("lam{k}"))
        .chain((1..=s).map(|j| format!("gam{j}")))
        .collect();
    let vars = pop.vars.extended(&suffixes);

    let lam = |k: usize| Polynomial::variable(total, n + k);
    let gam = |j: usize| Polynomial::variable(total, n + r + j);
    let lift = |p: &Polynomial| p.extend_vars(total);

    let mut generators = Vec::new();
    for i in 0..n {
        let mut stat = lift(&pop.objective.differentiate(i));
        for (k, g) in pop.inequalities.iter().enumerate() {
            let term = lam(k).pow(2).mul(&lift(&g.differentiate(i)));
            stat = stat.sub(&term);
        }
        for (j, h) in pop.equalities.iter().enumerate() {
            let term = gam(j).mul(&lift(&h.differentiate(i)));
            stat = stat.sub(&term);
        }
        if !stat.is_zero() {
            generators.push(stat);
        }
    }
    for (k, g) in pop.inequalities.iter().enumerate() {
        generators.push(lam(k).mul(&lift(g)));
    }
    for h in &pop.equalities {
        generators.push(lift(h));
    }

    PolarSystem {
        mode: PolarMode::Kkt,
        vars,
        generators,
        branches: Vec::new(),
        inequalities: pop.inequalities.iter().map(lift).collect(),
    }
}

/// All `l×l` minors of the Jacobian of the given polynomials.
///
/// The Jacobian has one row per polynomial and one column per variable;
/// the minor count is `C(rows, l)·C(cols, l)`.
pub fn jacobian_minors(polys: &[Polynomial], n: usize, l: usize) -> Vec<Polynomial> {
    let rows = polys.len();
    if l == 0 || l > rows || l > n {
        return Vec::new();
    }
    let jac: Vec<Vec<Polynomial>> = polys
        .iter()
        .map(|p| (0..n).map(|i| p.differentiate(i)).collect())
        .collect();
    let row_sets = subsets_of_size(rows, l);
    let col_sets = subsets_of_size(n, l);
    let mut out = Vec::with_capacity(row_sets.len() * col_sets.len());
    for rs in &row_sets {
        for cs in &col_sets {
            out.push(poly_det(&jac, rs, cs, n));
        }
    }
    out
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n as u64, k as u64) as usize);
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Laplace expansion along the first row; minor sizes stay tiny.
fn poly_det(jac: &[Vec<Polynomial>], rows: &[usize], cols: &[usize], n: usize) -> Polynomial {
    if rows.len() == 1 {
        return jac[rows[0]][cols[0]].clone();
    }
    let mut det = Polynomial::zero(n);
    for (j, &c) in cols.iter().enumerate() {
        let sub_rows = &rows[1..];
        let sub_cols: Vec<usize> = cols
            .iter()
            .enumerate()
            .filter(|(jj, _)| *jj != j)
            .map(|(_, &cc)| cc)
            .collect();
        let minor = poly_det(jac, sub_rows, &sub_cols, n);
        let term = jac[rows[0]][c].mul(&minor);
        det = if j % 2 == 0 {
            det.add(&term)
        } else {
            det.sub(&term)
        };
    }
    det
}

/// Ideal factor for one active subset: active constraints plus the rank
/// minors, or `None` when the factor contains a nonzero constant (the whole
/// ring — the subset cannot host a minimizer).
enum Factor {
    Whole,
    Zero,
    Gens(Vec<Polynomial>),
}

fn subset_factor(pop: &PopInstance, active: &[usize]) -> Factor {
    let n = pop.num_vars();
    let s = pop.equalities.len();
    let k = active.len();
    let mut gens: Vec<Polynomial> = active
        .iter()
        .map(|&a| pop.inequalities[a].clone())
        .collect();
    let l = s + k + 1;
    if l <= n {
        let mut stacked = vec![pop.objective.clone()];
        stacked.extend(pop.equalities.iter().cloned());
        stacked.extend(active.iter().map(|&a| pop.inequalities[a].clone()));
        gens.extend(jacobian_minors(&stacked, n, l));
    }
    // Rank condition vacuous and no active constraints: the zero ideal.
    if gens.is_empty() {
        return Factor::Zero;
    }
    if gens
        .iter()
        .any(|g| g.degree() == 0 && g.constant_term() != 0.0)
    {
        return Factor::Whole;
    }
    gens.retain(|g| !g.is_zero());
    if gens.is_empty() {
        return Factor::Zero;
    }
    Factor::Gens(gens)
}

/// Polar-ideal generators per the subset decomposition.
///
/// `PolarProduct`: `{h} ∪ {Π_A p_A}` over one generator from each surviving
/// factor. `PolarBranch`: one system per subset, to be solved independently
/// with the minima combined by `min`.
pub fn polar_generators(
    pop: &PopInstance,
    mode: PolarMode,
    caps: &PolarCaps,
) -> Result<PolarSystem, PolarError> {
    assert!(
        matches!(mode, PolarMode::PolarProduct | PolarMode::PolarBranch),
        "use kkt_system for KKT mode"
    );
    let r = pop.inequalities.len();

    if mode == PolarMode::PolarBranch {
        let mut branches = Vec::new();
        for mask in 0u32..(1 << r) {
            let active: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
            match subset_factor(pop, &active) {
                Factor::Whole => continue,
                Factor::Zero => branches.push(PolarBranchSystem {
                    active,
                    generators: pop.equalities.clone(),
                }),
                Factor::Gens(gens) => {
                    let mut generators = pop.equalities.clone();
                    generators.extend(gens);
                    branches.push(PolarBranchSystem { active, generators });
                }
            }
        }
        return Ok(PolarSystem {
            mode,
            vars: pop.vars.clone(),
            generators: Vec::new(),
            branches,
            inequalities: pop.inequalities.clone(),
        });
    }

    if r > caps.max_ineq {
        return Err(PolarError::CapExceeded {
            count: 1 << r,
            cap: 1 << caps.max_ineq,
        });
    }
    let mut factors: Vec<Vec<Polynomial>> = Vec::new();
    let mut zero_ideal = false;
    for mask in 0u32..(1 << r) {
        let active: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
        match subset_factor(pop, &active) {
            Factor::Whole => continue,
            Factor::Zero => {
                zero_ideal = true;
                break;
            }
            Factor::Gens(gens) => factors.push(gens),
        }
    }

    let mut generators = pop.equalities.clone();
    if !zero_ideal {
        let count: usize = factors.iter().map(|f| f.len()).product();
        if count > caps.max_gens {
            return Err(PolarError::CapExceeded {
                count,
                cap: caps.max_gens,
            });
        }
        let mut products = vec![Polynomial::constant(pop.num_vars(), 1.0)];
        for factor in &factors {
            let mut next = Vec::with_capacity(products.len() * factor.len());
            for p in &products {
                for g in factor {
                    next.push(p.mul(g));
                }
            }
            products = next;
        }
        for p in products {
            if p.degree() > 0 && !generators.contains(&p) {
                generators.push(p);
            }
        }
    }
    Ok(PolarSystem {
        mode,
        vars: pop.vars.clone(),
        generators,
        branches: Vec::new(),
        inequalities: pop.inequalities.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::poly;

    fn pop(
        f: Polynomial,
        g: Vec<Polynomial>,
        h: Vec<Polynomial>,
        names: &[&str],
    ) -> PopInstance {
        PopInstance::new(f, g, h, VariableTable::new(names).unwrap())
    }

    #[test]
    fn kkt_of_linear_objective_is_unsatisfiable() {
        let p = pop(poly(1, &[(&[1], 1.0)]), vec![], vec![], &["x"]);
        let sys = kkt_system(&p);
        // Stationarity reads 1 = 0.
        assert_eq!(sys.generators.len(), 1);
        assert_eq!(sys.generators[0], Polynomial::constant(1, 1.0));
    }

    #[test]
    fn kkt_of_quadratic_is_gradient() {
        let p = pop(poly(1, &[(&[2], 1.0)]), vec![], vec![], &["x"]);
        let sys = kkt_system(&p);
        assert_eq!(sys.generators, vec![poly(1, &[(&[1], 2.0)])]);
        assert_eq!(sys.vars.names(), &["x".to_string()]);
    }

    #[test]
    fn kkt_with_cubic_inequality_misses_singular_minimizer() {
        // f = x, g = x³: stationarity 1 − 3Λ²x², complementarity Λx³.
        let p = pop(
            poly(1, &[(&[1], 1.0)]),
            vec![poly(1, &[(&[3], 1.0)])],
            vec![],
            &["x"],
        );
        let sys = kkt_system(&p);
        assert_eq!(sys.vars.names(), &["x".to_string(), "lam1".to_string()]);
        let stat = poly(2, &[(&[0, 0], 1.0), (&[2, 2], -3.0)]);
        let comp = poly(2, &[(&[3, 1], 1.0)]);
        assert_eq!(sys.generators, vec![stat.clone(), comp.clone()]);
        // x* = 0 solves neither equation system jointly with any Λ:
        // stationarity at x=0 reads 1 = 0.
        assert_eq!(stat.evaluate(&[0.0, 5.0]), 1.0);
    }

    #[test]
    fn polar_product_of_singular_example() {
        // f = x on S(x³−y², 1−x²−y²): Example with a singular minimizer at 0.
        let g1 = poly(2, &[(&[3, 0], 1.0), (&[0, 2], -1.0)]);
        let g2 = poly(2, &[(&[0, 0], 1.0), (&[2, 0], -1.0), (&[0, 2], -1.0)]);
        let p = pop(
            poly(2, &[(&[1, 0], 1.0)]),
            vec![g1.clone(), g2.clone()],
            vec![],
            &["x", "y"],
        );
        let sys = polar_generators(&p, PolarMode::PolarProduct, &PolarCaps::default()).unwrap();
        // Factors: {1} → {g1, −2y}; {2} → {g2, −2y}; {1,2} → {g1, g2};
        // subset ∅ dropped (contains the constant 1). Cross product: 8
        // triples, 7 distinct after deduplication.
        assert_eq!(sys.generators.len(), 7);
        for gen in &sys.generators {
            assert!(
                gen.evaluate(&[0.0, 0.0]).abs() <= 1e-12,
                "origin must vanish on {gen:?}"
            );
        }

        let branch = polar_generators(&p, PolarMode::PolarBranch, &PolarCaps::default()).unwrap();
        assert_eq!(branch.branches.len(), 3);
    }

    #[test]
    fn polar_product_unconstrained_is_gradient_ideal() {
        let f = poly(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]);
        let p = pop(f, vec![], vec![], &["x", "y"]);
        let sys = polar_generators(&p, PolarMode::PolarProduct, &PolarCaps::default()).unwrap();
        assert_eq!(sys.generators.len(), 2);
        assert!(sys.generators.contains(&poly(2, &[(&[1, 0], 2.0)])));
        assert!(sys.generators.contains(&poly(2, &[(&[0, 1], 2.0)])));
    }

    #[test]
    fn polar_product_univariate_with_one_inequality() {
        let f = poly(1, &[(&[4], 1.0), (&[1], -1.0)]);
        let g1 = poly(1, &[(&[2], 1.0), (&[0], -0.25)]);
        let p = pop(f.clone(), vec![g1.clone()], vec![], &["x"]);
        let sys = polar_generators(&p, PolarMode::PolarProduct, &PolarCaps::default()).unwrap();
        // Factors: ∅ → {f'}; {1} → {g1} (rank condition vacuous, n = 1).
        assert_eq!(sys.generators.len(), 1);
        let expect = f.differentiate(0).mul(&g1);
        assert_eq!(sys.generators[0], expect);
        // V(f'·g1) = V(f') ∪ V(g1) on samples.
        for x in [-0.5, -0.21, 0.0, 0.5, 0.64, 0.629_960_524_947_436_6] {
            let lhs = sys.generators[0].evaluate(&[x]).abs() < 1e-6;
            let rhs = f.differentiate(0).evaluate(&[x]).abs() < 1e-6
                || g1.evaluate(&[x]).abs() < 1e-6;
            assert_eq!(lhs, rhs, "x = {x}");
        }
    }

    #[test]
    fn gradient_variety_objective_gives_pure_equalities() {
        // s + 1 > n: the empty-subset factor is the zero ideal, so only the
        // equalities remain.
        let h = vec![
            poly(2, &[(&[1, 0], 1.0)]),
            poly(2, &[(&[0, 1], 1.0)]),
            poly(2, &[(&[1, 1], 1.0)]),
        ];
        let p = pop(poly(2, &[(&[2, 0], 1.0)]), vec![], h.clone(), &["x", "y"]);
        let sys = polar_generators(&p, PolarMode::PolarProduct, &PolarCaps::default()).unwrap();
        assert_eq!(sys.generators, h);
    }

    #[test]
    fn minor_count_matches_formula() {
        let polys = vec![
            poly(3, &[(&[2, 0, 0], 1.0)]),
            poly(3, &[(&[0, 2, 0], 1.0)]),
            poly(3, &[(&[1, 1, 1], 1.0)]),
        ];
        for l in 1..=3usize {
            let minors = jacobian_minors(&polys, 3, l);
            let expect = binomial(3, l as u64) * binomial(3, l as u64);
            assert_eq!(minors.len(), expect as usize, "l = {l}");
        }
        assert!(jacobian_minors(&polys, 3, 4).is_empty());
    }

    #[test]
    fn product_cap_is_enforced() {
        let gens: Vec<Polynomial> = (0..4)
            .map(|i| poly(2, &[(&[1, 0], 1.0), (&[0, 0], i as f64 + 1.0)]))
            .collect();
        let p = pop(poly(2, &[(&[1, 0], 1.0)]), gens, vec![], &["x", "y"]);
        assert!(matches!(
            polar_generators(&p, PolarMode::PolarProduct, &PolarCaps::default()),
            Err(PolarError::CapExceeded { .. })
        ));
    }

    #[test]
    fn branch_systems_cover_product_variety() {
        // Union-of-varieties equivalence on a grid.
        let g1 = poly(2, &[(&[2, 0], 1.0), (&[0, 1], -1.0)]);
        let g2 = poly(2, &[(&[0, 0], 1.0), (&[1, 0], -1.0), (&[0, 1], -1.0)]);
        let f = poly(2, &[(&[1, 0], 1.0), (&[0, 2], 3.0)]);
        let p = pop(f, vec![g1, g2], vec![], &["x", "y"]);
        let product = polar_generators(&p, PolarMode::PolarProduct, &PolarCaps::default()).unwrap();
        let branch = polar_generators(&p, PolarMode::PolarBranch, &PolarCaps::default()).unwrap();
        let mut checked = 0;
        for i in 0..=40 {
            for j in 0..=40 {
                let x = -1.0 + 0.05 * i as f64;
                let y = -1.0 + 0.05 * j as f64;
                let in_product = product
                    .generators
                    .iter()
                    .all(|g| g.evaluate(&[x, y]).abs() <= 1e-6);
                let in_branch = branch.branches.iter().any(|br| {
                    br.generators
                        .iter()
                        .all(|g| g.evaluate(&[x, y]).abs() <= 1e-6)
                });
                assert_eq!(in_product, in_branch, "at ({x}, {y})");
                checked += 1;
            }
        }
        assert_eq!(checked, 41 * 41);
    }
}
