//! Bisection on the noise intensities and table sweeps over the observer size.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use super::design::{solve_design, DesignData, DesignMode, SynthesisError};
use super::sdp::SdpOptions;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaQuery {
    /// Largest `σ_g` in the stability inequalities at fixed `σ_f`.
    SigmaG { sigma_f: f64 },
    /// Largest `σ_f` in the stability inequalities at fixed `σ_g`.
    SigmaF { sigma_g: f64 },
    /// Largest `σ_f` in the noise-to-state inequalities.
    SigmaFNss,
}

impl SigmaQuery {
    pub fn mode(&self, sigma: f64) -> DesignMode {
        match *self {
            SigmaQuery::SigmaG { sigma_f } => DesignMode::Stability { sigma_f, sigma_g: sigma },
            SigmaQuery::SigmaF { sigma_g } => DesignMode::Stability { sigma_f: sigma, sigma_g },
            SigmaQuery::SigmaFNss => DesignMode::Nss { sigma_f: sigma },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SigmaQuery::SigmaG { .. } => "sigma_g_max",
            SigmaQuery::SigmaF { .. } => "sigma_f_max",
            SigmaQuery::SigmaFNss => "sigma_f_max_nss",
        }
    }

    pub fn fixed(&self) -> Option<f64> {
        match *self {
            SigmaQuery::SigmaG { sigma_f } => Some(sigma_f),
            SigmaQuery::SigmaF { sigma_g } => Some(sigma_g),
            SigmaQuery::SigmaFNss => None,
        }
    }
}

/// The three columns of the two-dimensional table.
pub fn table1_queries() -> Vec<SigmaQuery> {
    vec![
        SigmaQuery::SigmaG { sigma_f: 0.1 },
        SigmaQuery::SigmaF { sigma_g: 0.05 },
        SigmaQuery::SigmaFNss,
    ]
}

/// The single column of the three-dimensional table.
pub fn table2_queries() -> Vec<SigmaQuery> {
    vec![SigmaQuery::SigmaG { sigma_f: 0.1 }]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self {
            lo: 1e-4,
            hi: 2.0,
            tol: 5e-3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid bracket [{lo}, {hi}] with tolerance {tol}")]
    Bracket { lo: f64, hi: f64, tol: f64 },
    #[error("non-monotone feasibility: infeasible at {infeasible} but feasible at {feasible}")]
    NonMonotone { infeasible: f64, feasible: f64 },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub sigma: f64,
    /// The solver reached the required margin and the witness re-validated.
    pub feasible: bool,
    /// The solver reached the margin but the independent check disagreed.
    pub witness_rejected: bool,
    pub margin: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Largest feasible probe; the boundary lies within `tol` above it.
    Max(f64),
    /// Feasible at the top of the bracket.
    Saturated(f64),
    /// Infeasible at the bottom of the bracket.
    Infeasible,
}

impl Outcome {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Outcome::Max(v) | Outcome::Saturated(v) => Some(v),
            Outcome::Infeasible => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Max(v) => write!(f, "{v:.4}"),
            Outcome::Saturated(v) => write!(f, ">={v:.4}"),
            Outcome::Infeasible => write!(f, "--"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMax {
    pub n: usize,
    pub query: SigmaQuery,
    pub outcome: Outcome,
    pub probes: Vec<Probe>,
}

impl SigmaMax {
    pub fn witness_rejections(&self) -> usize {
        self.probes.iter().filter(|p| p.witness_rejected).count()
    }

    pub fn feasible_probes(&self) -> usize {
        self.probes.iter().filter(|p| p.feasible).count()
    }
}

pub fn probe(data: &DesignData, query: SigmaQuery, sigma: f64, opts: &SdpOptions) -> Result<Probe, SynthesisError> {
    let r = solve_design(data, query.mode(sigma), opts)?;
    Ok(Probe {
        sigma,
        feasible: r.feasible && r.witness_valid,
        witness_rejected: r.feasible && !r.witness_valid,
        margin: r.diagnostics.margin,
        iterations: r.diagnostics.iterations,
    })
}

/// Bisection for the largest feasible intensity, assuming the feasible set is
/// an interval starting at the bottom of the bracket.
pub fn max_sigma(data: &DesignData, query: SigmaQuery, bracket: Bracket, opts: &SdpOptions) -> Result<SigmaMax, SweepError> {
    let Bracket { lo, hi, tol } = bracket;
    if !(lo.is_finite() && hi.is_finite() && tol > 0.0 && lo >= 0.0 && lo < hi) {
        return Err(SweepError::Bracket { lo, hi, tol });
    }
    let mut probes = Vec::new();
    let run = |s: f64, probes: &mut Vec<Probe>| -> Result<bool, SweepError> {
        let p = probe(data, query, s, opts)?;
        let ok = p.feasible;
        probes.push(p);
        Ok(ok)
    };
    let done = |outcome, probes| SigmaMax {
        n: data.n,
        query,
        outcome,
        probes,
    };
    if !run(lo, &mut probes)? {
        if run(hi, &mut probes)? {
            return Err(SweepError::NonMonotone {
                infeasible: lo,
                feasible: hi,
            });
        }
        return Ok(done(Outcome::Infeasible, probes));
    }
    if run(hi, &mut probes)? {
        return Ok(done(Outcome::Saturated(hi), probes));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if run(m, &mut probes)? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(done(Outcome::Max(a), probes))
}

#[derive(Debug, Clone)]
pub struct TableCell {
    pub n: usize,
    pub query: SigmaQuery,
    pub result: Result<SigmaMax, SweepError>,
}

/// Every `(data, query)` cell, bisected independently and in parallel.
/// Output order follows input order.
pub fn sweep_table(data: &[DesignData], queries: &[SigmaQuery], bracket: Bracket, opts: &SdpOptions) -> Vec<TableCell> {
    let cells: Vec<(&DesignData, SigmaQuery)> = data.iter().flat_map(|d| queries.iter().map(move |&q| (d, q))).collect();
    cells
        .into_par_iter()
        .map(|(d, q)| TableCell {
            n: d.n,
            query: q,
            result: max_sigma(d, q, bracket, opts),
        })
        .collect()
}

pub const CSV_HEADER: &str = "N,query,fixed,sigma_max,status,probes,feasible_probes,witness_rejections";

impl TableCell {
    pub fn csv_row(&self) -> String {
        let fixed = self.query.fixed().map(|v| v.to_string()).unwrap_or_default();
        match &self.result {
            Ok(r) => {
                let (value, status) = match r.outcome {
                    Outcome::Max(v) => (format!("{v:.4}"), "bisected"),
                    Outcome::Saturated(v) => (format!("{v:.4}"), "saturated"),
                    Outcome::Infeasible => ("--".to_string(), "infeasible"),
                };
                format!(
                    "{},{},{},{},{},{},{},{}",
                    self.n,
                    self.query.label(),
                    fixed,
                    value,
                    status,
                    r.probes.len(),
                    r.feasible_probes(),
                    r.witness_rejections()
                )
            }
            Err(e) => {
                let status = match e {
                    SweepError::NonMonotone { .. } => "non-monotone",
                    _ => "error",
                };
                format!("{},{},{},--,{},0,0,0", self.n, self.query.label(), fixed, status)
            }
        }
    }
}

/// One row per `N` and one column per query.
/// `cells` must come from [`sweep_table`] with the same `queries`.
pub fn wide_table(cells: &[TableCell], queries: &[SigmaQuery]) -> String {
    let mut s = String::from("N");
    for q in queries {
        s.push(',');
        s.push_str(&column_name(q));
    }
    s.push('\n');
    for row in cells.chunks(queries.len().max(1)) {
        s.push_str(&row[0].n.to_string());
        for cell in row {
            s.push(',');
            s.push_str(&cell.value());
        }
        s.push('\n');
    }
    s
}

fn column_name(q: &SigmaQuery) -> String {
    match *q {
        SigmaQuery::SigmaG { sigma_f } => format!("sigma_g_max(sigma_f={sigma_f})"),
        SigmaQuery::SigmaF { sigma_g } => format!("sigma_f_max(sigma_g={sigma_g})"),
        SigmaQuery::SigmaFNss => "sigma_f_max_nss".into(),
    }
}

impl TableCell {
    /// The bisected value, `>=v` when saturated, `--` otherwise.
    pub fn value(&self) -> String {
        match &self.result {
            Ok(r) => r.outcome.to_string(),
            Err(_) => "--".into(),
        }
    }
}
