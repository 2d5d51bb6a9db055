//! Human-readable and JSON renderings of analysis results.

use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{Engine, RunConfig, StateConfig};
use crate::runner::{OrbitReport, PointReport};

#[derive(Clone, Debug, Serialize)]
pub struct Bounds {
    pub orbit: usize,
    pub outcomes: usize,
    pub parameters: usize,
    pub rank: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CpdEntry {
    pub eigenvalue: f64,
    pub coefficients: Vec<(String, f64)>,
    pub orbit_coefficients: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub config: RunConfig,
    pub labels: Vec<String>,
    pub outcomes: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub numerical_rank: usize,
    pub dominant_count: usize,
    #[serde(rename = "traceF")]
    pub trace: f64,
    pub bounds: Bounds,
    pub orbits: Vec<Vec<String>>,
    pub cpd: Vec<CpdEntry>,
    pub warnings: Vec<String>,
}

impl AnalyzeReport {
    pub fn new(cfg: &RunConfig, p: &PointReport) -> Self {
        Self {
            config: cfg.clone(),
            labels: p.labels.clone(),
            outcomes: p.outcomes.clone(),
            probabilities: p.probabilities.clone(),
            eigenvalues: p.fim.eigenvalues().to_vec(),
            numerical_rank: p.fim.numerical_rank(),
            dominant_count: p.fim.dominant_count(),
            trace: p.fim.trace(),
            bounds: Bounds {
                orbit: p.orbit_bound(),
                outcomes: p.outcome_bound,
                parameters: p.labels.len(),
                rank: p.rank_bound(),
            },
            orbits: p
                .orbits
                .members()
                .into_iter()
                .map(|m| m.into_iter().map(|i| p.labels[i].clone()).collect())
                .collect(),
            cpd: p
                .cpd
                .components
                .iter()
                .map(|c| CpdEntry {
                    eigenvalue: c.eigenvalue,
                    coefficients: c.coefficients.clone(),
                    orbit_coefficients: c.orbit_coefficients.clone(),
                })
                .collect(),
            warnings: p.warnings.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let state = match self.config.state {
            StateConfig::Ground => "ground".to_string(),
            StateConfig::Thermal(b) => format!("beta={b}"),
        };
        let engine = match self.config.engine {
            Engine::Dense => "dense",
            Engine::Freefermion => "freefermion",
        };
        let _ = writeln!(
            s,
            "model {}  observable {}  state {state}  engine {engine}",
            self.config.model.name(),
            self.config.observable
        );
        let _ = writeln!(s, "parameters {}  outcomes {}", self.labels.len(), self.outcomes.len());
        let _ = writeln!(s, "eigenvalues:");
        for (k, z) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(s, "  zeta_{:<3} {z:.6e}", k + 1);
        }
        let _ = writeln!(
            s,
            "numerical rank {}  dominant {}  trace {:.6e}",
            self.numerical_rank, self.dominant_count, self.trace
        );
        let _ = writeln!(
            s,
            "rank bounds: orbits {}  outcomes-1 {}  parameters {}  => {}",
            self.bounds.orbit, self.bounds.outcomes, self.bounds.parameters, self.bounds.rank
        );
        for (k, c) in self.cpd.iter().enumerate() {
            let _ = writeln!(s, "dominant CPD {} (zeta {:.6e}):", k + 1, c.eigenvalue);
            match &c.orbit_coefficients {
                Some(mu) => {
                    for (orbit, m) in self.orbits.iter().zip(mu) {
                        let _ = writeln!(s, "  {m:+.6}  x {}", orbit.join(" "));
                    }
                }
                None => {
                    for (l, v) in &c.coefficients {
                        let _ = writeln!(s, "  {v:+.6}  {l}");
                    }
                }
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

pub fn orbit_text(r: &OrbitReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {}  observable {}  group order {}", r.model, r.observable, r.group_order);
    for (k, o) in r.orbits.iter().enumerate() {
        let _ = writeln!(s, "orbit {}: {}", k + 1, o.join(" "));
    }
    let _ = writeln!(
        s,
        "rank bounds: orbits {}  outcomes-1 {}  parameters {}  => {}",
        r.orbit_bound, r.outcome_bound, r.parameter_count, r.rank_bound
    );
    s
}
