use serde::Serialize;

use csma_core::chain::{chain_diagnostics, ChainDiagnostics};
use csma_core::congestion::{
    default_beta, solve_dual_optimum, solve_utility_optimum, utility_gap_certificate, DualOptimum, UtilityFunction,
    UtilityOptimum,
};
use csma_core::gibbs::{service_rates, solve_r_star, DEFAULT_TOL};
use csma_core::sim::PerNode;
use csma_core::{enumerate_independent_sets, is_strictly_admissible, Admissibility, Error, IndependentSetFamily, RateVector, Result};

use crate::{load_graph, AnalyzeArgs};

/// Dense kernels above this many states are not built.
const MAX_KERNEL_STATES: usize = 4096;

#[derive(Debug, Serialize)]
pub struct Report {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub independent_sets: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheduling: Option<SchedulingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub congestion: Option<CongestionReport>,
    pub chain: Option<ChainDiagnostics>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SchedulingReport {
    pub lambda: Vec<f64>,
    pub margin: f64,
    pub infeasible: bool,
    pub admissibility: Admissibility,
    /// Masked nodes (zero arrival rate) are reported as null.
    pub r_star: Option<Vec<f64>>,
    pub service_rates: Option<Vec<f64>>,
    pub norm_bound: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct CongestionReport {
    pub beta: f64,
    pub utilities: Vec<UtilityFunction>,
    pub utility_optimum: UtilityOptimum,
    pub dual: DualOptimum,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn parse_utilities(text: &str, n: usize) -> Result<Vec<UtilityFunction>> {
    let t = text.trim();
    if t.starts_with('{') || t.starts_with('[') {
        let p: PerNode<UtilityFunction> = serde_json::from_str(t).map_err(|e| Error::Config(format!("utilities: {e}")))?;
        return p.expand(n, "utilities");
    }
    match t {
        "log-shifted" | "log" => Ok(vec![UtilityFunction::default(); n]),
        other => Err(Error::Config(format!("unknown utility family {other:?}; pass JSON for parameters"))),
    }
}

fn scheduling(family: &IndependentSetFamily, lambda: Vec<f64>, margin: f64, notes: &mut Vec<String>) -> Result<(SchedulingReport, Option<Vec<f64>>)> {
    let rates = RateVector::new(lambda.clone())?;
    let adm = is_strictly_admissible(&rates, family, margin)?;
    let mut rep = SchedulingReport {
        lambda,
        margin,
        infeasible: adm.max_slack <= 0.0,
        admissibility: adm,
        r_star: None,
        service_rates: None,
        norm_bound: None,
        residual: None,
    };
    let mut r_for_chain = None;
    if !rep.infeasible {
        match solve_r_star(family, &rates, DEFAULT_TOL) {
            Ok(rs) => {
                let r = rs.r.into_vec();
                rep.service_rates = Some(service_rates(family, &r));
                rep.norm_bound = Some(rs.norm_bound);
                rep.residual = Some(rs.residual);
                if r.iter().all(|x| x.is_finite()) {
                    r_for_chain = Some(r.clone());
                } else {
                    notes.push("chain diagnostics skipped: masked nodes have r = -inf".into());
                }
                rep.r_star = Some(r);
            }
            Err(e @ Error::Infeasible { .. }) => {
                rep.infeasible = true;
                notes.push(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((rep, r_for_chain))
}

fn congestion(family: &IndependentSetFamily, utilities: Vec<UtilityFunction>, beta: f64) -> Result<CongestionReport> {
    let dual = solve_dual_optimum(family, &utilities, beta, 1e-9)?;
    let utility_optimum = solve_utility_optimum(family, &utilities, 1e-8)?;
    let cert = utility_gap_certificate(family, &utilities, beta, &dual.lambda_bar, 1e-8)?;
    Ok(CongestionReport { beta, utilities, utility_optimum, dual, gap: cert.gap, bound: cert.bound, holds: cert.holds })
}

pub fn build_report(args: &AnalyzeArgs) -> Result<Report> {
    let graph = load_graph(&args.graph).map_err(|e| Error::Config(format!("graph {:?}: {e}", args.graph)))?;
    let n = graph.n();
    let family = enumerate_independent_sets(&graph)?;
    let mut notes = Vec::new();
    let mut report = Report {
        nodes: n,
        edges: graph.edges().to_vec(),
        independent_sets: family.len(),
        scheduling: None,
        congestion: None,
        chain: None,
        notes: Vec::new(),
    };
    let mut r_for_chain = None;
    if let Some(lam) = &args.lambda {
        let lambda = match lam.as_slice() {
            [x] => vec![*x; n],
            v if v.len() == n => v.to_vec(),
            v => return Err(Error::Config(format!("--lambda has {} values for {n} nodes", v.len()))),
        };
        let margin = args.epsilon.unwrap_or(0.0);
        let (rep, r) = scheduling(&family, lambda, margin, &mut notes)?;
        report.scheduling = Some(rep);
        r_for_chain = r;
    }
    if let Some(text) = &args.utilities {
        let utilities = parse_utilities(text, n)?;
        let beta = match (args.beta, args.epsilon) {
            (Some(b), _) => b,
            (None, Some(e)) => default_beta(n, e),
            (None, None) => return Err(Error::Config("--utilities needs --beta or --epsilon".into())),
        };
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        let rep = congestion(&family, utilities, beta)?;
        r_for_chain = r_for_chain.or_else(|| Some(rep.dual.r_star.clone()));
        report.congestion = Some(rep);
    }
    if let Some(r) = r_for_chain {
        if family.len() <= MAX_KERNEL_STATES {
            report.chain = Some(chain_diagnostics(&family, &r, args.delta, args.c)?);
        } else {
            notes.push(format!("chain diagnostics skipped: {} states", family.len()));
        }
    }
    report.notes = notes;
    Ok(report)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let report = build_report(args)?;
    crate::emit(&serde_json::to_string_pretty(&report)?)
}
