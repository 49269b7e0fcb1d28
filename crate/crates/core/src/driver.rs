//! Orchestration: single-order minimization, the finite-minimizers loop
//! (minimize, level-constrain, center, extract, deepen), polar-augmented
//! runs, the problem-file format and the report JSON.

use crate::extract::{extract_measure, ExtractOpts, ExtractedMeasure};
use crate::moments::MomentVector;
use crate::polar::{kkt_system, polar_generators, PolarCaps, PolarMode, PolarSystem};
use crate::polyparse::{parse_polynomial, ParseError, VariableTable};
use crate::polyring::Polynomial;
use crate::relaxation::{
    add_level_constraint, build_mom_relaxation, PopInstance, RelaxError, RelaxationMode,
};
use crate::sdpsolve::{generic_point, solve_logged, SdpError, SolveStatus, SolverOptions};
use serde::Deserialize;
use std::fmt::Write as _;
use std::io::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Polar(#[from] crate::polar::PolarError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("problem file: {0}")]
    ProblemFile(String),
}

/// Run configuration for the hierarchy loop.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// First relaxation order; `None` uses the half-degree default.
    pub initial_order: Option<u32>,
    /// Last order tried; `None` uses initial + 4.
    pub max_order: Option<u32>,
    pub mode: RelaxationMode,
    pub solver: SolverOptions,
    /// Extraction acceptance threshold.
    pub residual_tol: f64,
    /// Numerical-rank threshold for extraction.
    pub rank_tol: f64,
    pub seed: u64,
    /// Mirror the solver iteration log to stderr.
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            initial_order: None,
            max_order: None,
            mode: RelaxationMode::QuadraticModule,
            solver: SolverOptions::default(),
            residual_tol: 1e-2,
            // Pseudo-moment output of the embedded solver carries junk well
            // above machine precision; the rank cut must clear it while
            // staying under the weight scale.
            rank_tol: 1e-3,
            seed: 42,
            trace: false,
        }
    }
}

impl RunConfig {
    fn extract_opts(&self) -> ExtractOpts {
        ExtractOpts {
            rank_tol: self.rank_tol,
            residual_tol: self.residual_tol,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Exact,
    MaxOrderReached,
    Infeasible,
}

/// One hierarchy level of the trace.
#[derive(Debug, Clone)]
pub struct OrderTrace {
    pub order: u32,
    pub v_mom: Option<f64>,
    pub v_sos: Option<f64>,
    pub gap: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: RunStatus,
    pub f_star: Option<f64>,
    pub minimizers: Option<ExtractedMeasure>,
    pub residual: Option<f64>,
    pub trace: Vec<OrderTrace>,
    pub timings_ms: u128,
    /// Variable table the minimizer coordinates refer to.
    pub vars: VariableTable,
}

/// Result of a single-order relaxation solve.
#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub v: f64,
    pub sigma: MomentVector,
    pub v_sos: f64,
    pub gap: f64,
    pub status: SolveStatus,
    /// When the value came from the level-feasibility search, the generic
    /// point and extraction found along the way (a by-product the deepening
    /// loop can reuse directly).
    pub level_hint: Option<(MomentVector, ExtractedMeasure)>,
}

/// Solves the order-`d` relaxation and reports `f*_MoM,d`, the optimal σ and
/// the dual (SoS) value.
///
/// When the objective admits no SoS certificate at this degree, the
/// relaxation is unbounded below over pseudo-moments even though every
/// measure bounds it, and interior-point iterates drift along an improving
/// valley instead of converging. When the plain solve fails to converge, the
/// value is recovered as the feasibility threshold of the level system
/// `⟨σ, X^γ(f − v)⟩ = 0` over v, which is what the deepening loop consumes.
pub fn minimize(
    pop: &PopInstance,
    order: u32,
    cfg: &RunConfig,
) -> Result<MinimizeOutcome, DriverError> {
    let problem = build_mom_relaxation(pop, order, cfg.mode)?;
    let mut stderr = std::io::stderr();
    let result = solve_logged(
        &problem,
        &cfg.solver,
        cfg.trace.then_some(&mut stderr as &mut dyn std::io::Write),
    );
    match result.status {
        SolveStatus::Infeasible => Err(SdpError::Infeasible {
            detail: format!("relaxation of order {order} is infeasible"),
        }
        .into()),
        SolveStatus::Optimal => Ok(MinimizeOutcome {
            v: result.objective,
            sigma: problem.moment_vector(&result.y),
            v_sos: result.dual_objective,
            gap: result.gap,
            status: result.status,
            level_hint: None,
        }),
        SolveStatus::MaxIterations | SolveStatus::NumericalFailure => {
            if let Some(found) = level_value_search(pop, &problem, cfg) {
                let v = found.v;
                let v_sos = if result.dual_objective.is_finite() {
                    result.dual_objective.min(v)
                } else {
                    v
                };
                return Ok(MinimizeOutcome {
                    v,
                    sigma: found.sigma,
                    v_sos,
                    gap: v - v_sos,
                    status: result.status,
                    level_hint: found.extraction,
                });
            }
            if result.status == SolveStatus::NumericalFailure {
                return Err(SdpError::NumericalFailure {
                    detail: format!("solver failed at order {order}"),
                }
                .into());
            }
            Ok(MinimizeOutcome {
                v: result.objective,
                sigma: problem.moment_vector(&result.y),
                v_sos: result.dual_objective,
                gap: result.gap,
                status: result.status,
                level_hint: None,
            })
        }
    }
}

struct LevelSearchResult {
    v: f64,
    sigma: MomentVector,
    extraction: Option<(MomentVector, ExtractedMeasure)>,
}

enum LevelProbe {
    Feasible(MomentVector),
    Infeasible,
    Unknown,
}

/// Infimum of levels v whose full level system stays feasible, by expanding
/// search plus bisection against the phase-1 oracle, followed by an
/// extraction-aware sweep from the infeasible edge upward.
fn level_value_search(
    pop: &PopInstance,
    problem: &crate::relaxation::SdpProblem,
    cfg: &RunConfig,
) -> Option<LevelSearchResult> {
    let probe = |v: f64| -> LevelProbe {
        let Ok(leveled) = add_level_constraint(problem, &pop.objective, v) else {
            return LevelProbe::Unknown;
        };
        match crate::sdpsolve::feasible_point(&leveled, &cfg.solver) {
            Ok(sigma) => LevelProbe::Feasible(sigma),
            Err(SdpError::Infeasible { .. }) => LevelProbe::Infeasible,
            Err(_) => LevelProbe::Unknown,
        }
    };

    // Upper anchor: the objective value of any feasible point of the plain
    // relaxation (facial reduction handles flat sets); expand upward when its
    // level system rejects.
    let anchor = crate::sdpsolve::feasible_point(problem, &cfg.solver)
        .ok()
        .and_then(|sigma| sigma.apply(&pop.objective).ok())?;
    let mut hi = anchor;
    let mut hi_sigma = None;
    let mut step = 1.0 + anchor.abs();
    for _ in 0..12 {
        match probe(hi) {
            LevelProbe::Feasible(s) => {
                hi_sigma = Some(s);
                break;
            }
            _ => hi += step,
        }
        step *= 2.0;
    }
    let mut hi_sigma = hi_sigma?;

    // Lower bracket: certified infeasibility.
    let mut lo = hi - (1.0 + hi.abs());
    let mut step = 1.0 + hi.abs();
    let mut bracketed = false;
    for _ in 0..12 {
        match probe(lo) {
            LevelProbe::Infeasible => {
                bracketed = true;
                break;
            }
            LevelProbe::Feasible(s) => {
                hi = lo;
                hi_sigma = s;
                lo -= step;
            }
            LevelProbe::Unknown => lo -= step,
        }
        step *= 2.0;
    }
    if !bracketed {
        return None;
    }

    // Bisect on certified feasibility, remembering the highest level whose
    // infeasibility was actually certified — verdicts between the certified
    // edge and `hi` are noise.
    let mut lo_cert = lo;
    for _ in 0..48 {
        if hi - lo <= 1e-9 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match probe(mid) {
            LevelProbe::Feasible(s) => {
                hi = mid;
                hi_sigma = s;
            }
            LevelProbe::Infeasible => {
                lo = mid;
                lo_cert = lo_cert.max(mid);
            }
            LevelProbe::Unknown => lo = mid,
        }
    }

    // Extraction-aware sweep from the infeasible edge upward: the first level
    // whose generic element decomposes into an atomic measure is the value
    // the deepening loop can actually use. Verdicts near the transition are
    // noisy, so several interpolation points are tried.
    let opts = cfg.extract_opts();
    let mut fallback: Option<(f64, MomentVector)> = None;
    for t in [0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0] {
        let v_c = lo_cert + t * (hi - lo_cert);
        let Ok(leveled) = add_level_constraint(problem, &pop.objective, v_c) else {
            continue;
        };
        let Ok(sigma) = generic_point(&leveled, &cfg.solver) else {
            continue;
        };
        match extract_measure(&sigma, &opts) {
            Ok(m) => {
                return Some(LevelSearchResult {
                    v: v_c,
                    sigma: sigma.clone(),
                    extraction: Some((sigma, m)),
                });
            }
            Err(_) => {
                if fallback.as_ref().is_none_or(|(fv, _)| v_c < *fv) {
                    fallback = Some((v_c, sigma));
                }
            }
        }
    }
    match fallback {
        Some((v, sigma)) if v <= hi => Some(LevelSearchResult {
            v,
            sigma,
            extraction: None,
        }),
        _ => Some(LevelSearchResult {
            v: hi,
            sigma: hi_sigma,
            extraction: None,
        }),
    }
}

/// Generic element of the level-constrained relaxation and its extraction.
pub fn level_extract(
    pop: &PopInstance,
    order: u32,
    v: f64,
    cfg: &RunConfig,
) -> Result<(MomentVector, Result<ExtractedMeasure, crate::extract::ExtractionFailure>), DriverError>
{
    let problem = build_mom_relaxation(pop, order, cfg.mode)?;
    let leveled = add_level_constraint(&problem, &pop.objective, v)?;
    let sigma = generic_point(&leveled, &cfg.solver)?;
    let extraction = extract_measure(&sigma, &cfg.extract_opts());
    Ok((sigma, extraction))
}

/// The finite-minimizers loop: deepen the order until the level-constrained
/// generic element decomposes into an atomic measure.
pub fn finite_minimizers(pop: &PopInstance, cfg: &RunConfig) -> RunReport {
    let start = Instant::now();
    let k0 = cfg.initial_order.unwrap_or_else(|| pop.min_order()).max(pop.min_order());
    let kmax = cfg.max_order.unwrap_or(k0 + 4).max(k0);
    let mut trace = Vec::new();
    let mut any_feasible = false;

    for k in k0..=kmax {
        let mut entry = OrderTrace {
            order: k,
            v_mom: None,
            v_sos: None,
            gap: None,
            note: String::new(),
        };
        let outcome = match minimize(pop, k, cfg) {
            Ok(o) => o,
            Err(e) => {
                entry.note = format!("minimize failed: {e}");
                trace.push(entry);
                continue;
            }
        };
        any_feasible = true;
        entry.v_mom = Some(outcome.v);
        entry.v_sos = Some(outcome.v_sos);
        entry.gap = Some(outcome.gap);

        // The level search may already have produced the generic element and
        // its decomposition; otherwise run the level step at v_k.
        let level = match outcome.level_hint {
            Some((sigma, measure)) => Ok((sigma, Ok(measure))),
            None => level_extract(pop, k, outcome.v, cfg),
        };
        match level {
            Ok((sigma, Ok(measure))) => {
                entry.note = format!("extracted {} atoms", measure.rank);
                trace.push(entry);
                let f_star = sigma.apply(&pop.objective).ok();
                return RunReport {
                    status: RunStatus::Exact,
                    f_star,
                    residual: Some(measure.residual),
                    minimizers: Some(measure),
                    trace,
                    timings_ms: start.elapsed().as_millis(),
                    vars: pop.vars.clone(),
                };
            }
            Ok((_, Err(fail))) => {
                entry.note = format!("extraction failed: {fail}");
            }
            Err(e) => {
                entry.note = format!("generic point failed: {e}");
            }
        }
        trace.push(entry);
    }

    RunReport {
        status: if any_feasible {
            RunStatus::MaxOrderReached
        } else {
            RunStatus::Infeasible
        },
        f_star: None,
        minimizers: None,
        residual: None,
        trace,
        timings_ms: start.elapsed().as_millis(),
        vars: pop.vars.clone(),
    }
}

/// Runs `finite_minimizers` on the polar-augmented problem.
///
/// `PolarProduct` and `Kkt` augment the equalities (KKT also extends the
/// variable space; reported minimizers are projected back). `PolarBranch`
/// solves one subproblem per active subset and keeps the best exact branch.
pub fn polar_minimize(
    pop: &PopInstance,
    mode: PolarMode,
    caps: &PolarCaps,
    cfg: &RunConfig,
) -> Result<RunReport, DriverError> {
    match mode {
        PolarMode::Kkt => {
            let sys = kkt_system(pop);
            let augmented = augmented_pop(pop, &sys);
            let mut report = finite_minimizers(&augmented, cfg);
            project_report(&mut report, pop);
            Ok(report)
        }
        PolarMode::PolarProduct => {
            let sys = polar_generators(pop, mode, caps)?;
            let augmented = augmented_pop(pop, &sys);
            Ok(finite_minimizers(&augmented, cfg))
        }
        PolarMode::PolarBranch => {
            let sys = polar_generators(pop, mode, caps)?;
            let start = Instant::now();
            let mut best: Option<RunReport> = None;
            let mut merged_trace = Vec::new();
            let mut any_feasible = false;
            for branch in &sys.branches {
                let mut eqs = pop.equalities.clone();
                eqs.extend(branch.generators.iter().cloned());
                let sub = PopInstance::new(
                    pop.objective.clone(),
                    pop.inequalities.clone(),
                    eqs,
                    pop.vars.clone(),
                );
                let report = finite_minimizers(&sub, cfg);
                if report.status != RunStatus::Infeasible {
                    any_feasible = true;
                }
                merged_trace.extend(report.trace.iter().cloned());
                if report.status == RunStatus::Exact
                    && best
                        .as_ref()
                        .is_none_or(|b| report.f_star < b.f_star)
                {
                    best = Some(report);
                }
            }
            let mut out = best.unwrap_or(RunReport {
                status: if any_feasible {
                    RunStatus::MaxOrderReached
                } else {
                    RunStatus::Infeasible
                },
                f_star: None,
                minimizers: None,
                residual: None,
                trace: Vec::new(),
                timings_ms: 0,
                vars: pop.vars.clone(),
            });
            out.trace = merged_trace;
            out.timings_ms = start.elapsed().as_millis();
            Ok(out)
        }
    }
}

fn augmented_pop(pop: &PopInstance, sys: &PolarSystem) -> PopInstance {
    let n = sys.vars.len();
    let mut eqs: Vec<Polynomial> = pop.equalities.iter().map(|h| h.extend_vars(n)).collect();
    eqs.extend(sys.generators.iter().cloned());
    PopInstance::new(
        pop.objective.extend_vars(n),
        sys.inequalities.clone(),
        eqs,
        sys.vars.clone(),
    )
}

/// Projects extended-variable minimizers back onto the original variables.
fn project_report(report: &mut RunReport, pop: &PopInstance) {
    let n = pop.num_vars();
    if let Some(m) = &mut report.minimizers {
        for p in &mut m.points {
            p.truncate(n);
        }
    }
    report.vars = pop.vars.clone();
}

/// Problem file: `{vars, objective, inequalities, equalities}` with the
/// expression grammar of `polyparse`.
#[derive(Debug, Deserialize)]
struct ProblemFile {
    vars: Vec<String>,
    objective: String,
    #[serde(default)]
    inequalities: Vec<String>,
    #[serde(default)]
    equalities: Vec<String>,
}

pub fn parse_problem_file(text: &str) -> Result<PopInstance, DriverError> {
    let pf: ProblemFile =
        serde_json::from_str(text).map_err(|e| DriverError::ProblemFile(e.to_string()))?;
    let vars = VariableTable::new(&pf.vars)?;
    let objective = parse_polynomial(&pf.objective, &vars)?;
    let inequalities = pf
        .inequalities
        .iter()
        .map(|s| parse_polynomial(s, &vars))
        .collect::<Result<Vec<_>, _>>()?;
    let equalities = pf
        .equalities
        .iter()
        .map(|s| parse_polynomial(s, &vars))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PopInstance::new(objective, inequalities, equalities, vars))
}

fn push_real(out: &mut String, v: f64) {
    if v.is_finite() {
        // 17 significant digits round-trip any f64.
        write!(out, "{v:.16e}").unwrap();
    } else {
        out.push_str("null");
    }
}

/// Report JSON: status, f_star, per-order values, minimizers and residual.
pub fn report_json(report: &RunReport) -> String {
    let mut s = String::new();
    s.push_str("{\n  \"status\": ");
    let status = match report.status {
        RunStatus::Exact => "\"Exact\"",
        RunStatus::MaxOrderReached => "\"MaxOrderReached\"",
        RunStatus::Infeasible => "\"Infeasible\"",
    };
    s.push_str(status);
    s.push_str(",\n  \"f_star\": ");
    match report.f_star {
        Some(v) => push_real(&mut s, v),
        None => s.push_str("null"),
    }
    s.push_str(",\n  \"v_by_order\": [");
    for (i, t) in report.trace.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str("\n    {\"order\": ");
        write!(s, "{}", t.order).unwrap();
        s.push_str(", \"v_mom\": ");
        match t.v_mom {
            Some(v) => push_real(&mut s, v),
            None => s.push_str("null"),
        }
        s.push_str(", \"v_sos\": ");
        match t.v_sos {
            Some(v) => push_real(&mut s, v),
            None => s.push_str("null"),
        }
        s.push_str(", \"gap\": ");
        match t.gap {
            Some(v) => push_real(&mut s, v),
            None => s.push_str("null"),
        }
        s.push_str(", \"note\": ");
        write!(s, "{}", json_string(&t.note)).unwrap();
        s.push('}');
    }
    s.push_str("\n  ],\n  \"minimizers\": [");
    if let Some(m) = &report.minimizers {
        for (i, (p, w)) in m.points.iter().zip(&m.weights).enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str("\n    {\"point\": [");
            for (j, c) in p.iter().enumerate() {
                if j > 0 {
                    s.push_str(", ");
                }
                push_real(&mut s, *c);
            }
            s.push_str("], \"weight\": ");
            push_real(&mut s, *w);
            s.push('}');
        }
    }
    s.push_str("\n  ],\n  \"residual\": ");
    match report.residual {
        Some(v) => push_real(&mut s, v),
        None => s.push_str("null"),
    }
    s.push_str(",\n  \"timings_ms\": ");
    write!(s, "{}", report.timings_ms).unwrap();
    s.push_str("\n}\n");
    s
}

fn json_string(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => {
                write!(out, "\\u{:04x}", c as u32).unwrap();
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Writes the report to the given path, or stdout for `-`.
pub fn write_report(report: &RunReport, path: Option<&str>) -> std::io::Result<()> {
    let text = report_json(report);
    match path {
        None | Some("-") => std::io::stdout().write_all(text.as_bytes()),
        Some(p) => std::fs::write(p, text),
    }
}
