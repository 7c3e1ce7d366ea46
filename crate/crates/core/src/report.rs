//! Human- and machine-readable summaries of a pipeline run.
//!
//! Every physical number here is taken from the [`RecoveredState`], i.e. from
//! recovered voltages and case data, never from solver internals.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::network::NetworkCase;
use crate::pipeline::{Outcome, SolveOutcome, Timings};
use crate::recovery::{RankDiagnostics, RecoveredState};
use crate::sdp::SolveStatus;
use crate::verifier::{ResidualReport, TightnessEntry};

/// A flow at or above this fraction of its limit is reported as binding.
pub const BINDING_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub name: String,
    pub base_mva: f64,
    pub ac_buses: usize,
    pub generators: usize,
    pub ac_lines: usize,
    pub dc_buses: usize,
    pub dc_lines: usize,
    pub acdc_converters: usize,
    pub dcdc_converters: usize,
    pub wind_mw: f64,
}

impl CaseSummary {
    pub fn of(case: &NetworkCase) -> Self {
        CaseSummary {
            name: case.name.clone(),
            base_mva: case.base_mva,
            ac_buses: case.n_ac(),
            generators: case.generators.len(),
            ac_lines: case.ac_lines.len(),
            dc_buses: case.n_dc(),
            dc_lines: case.dc_lines.len(),
            acdc_converters: case.acdc_converters.len(),
            dcdc_converters: case.dcdc_converters.len(),
            wind_mw: unsigned_zero(case.wind.iter().map(|w| w.p_wind).sum::<f64>() * case.base_mva),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Constraints implicated by an infeasibility certificate.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub offending: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcBusRow {
    pub id: usize,
    pub v_mag: f64,
    pub v_angle_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorRow {
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AcLineRow {
    pub from: usize,
    pub to: usize,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    pub limit_mva: Option<f64>,
    pub binding: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DcBusRow {
    pub id: usize,
    pub v: f64,
    pub p_mw: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DcLineRow {
    pub from: usize,
    pub to: usize,
    pub p_from_mw: f64,
    pub p_to_mw: f64,
    pub limit_mw: f64,
    pub binding: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConverterRow {
    pub ac_bus: Option<usize>,
    pub dc_bus: usize,
    pub p_ac_mw: f64,
    pub q_ac_mvar: f64,
    pub p_dc_mw: f64,
    pub capacity_mva: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DcDcRow {
    pub bus_k: usize,
    pub bus_m: usize,
    pub q_mw: f64,
    pub limit_mw: f64,
    /// Half of the converter loss, charged at each terminal.
    pub terminal_loss_mw: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub case: CaseSummary,
    pub solver: SolverSummary,
    pub outcome: Outcome,
    pub ac_rank: Option<RankDiagnostics>,
    pub dc_rank: Option<RankDiagnostics>,
    pub total_cost: Option<f64>,
    pub ac_loss_mw: Option<f64>,
    pub dc_loss_mw: Option<f64>,
    pub ac_buses: Vec<AcBusRow>,
    pub generators: Vec<GeneratorRow>,
    pub ac_lines: Vec<AcLineRow>,
    pub dc_buses: Vec<DcBusRow>,
    pub dc_lines: Vec<DcLineRow>,
    pub converters: Vec<ConverterRow>,
    pub dcdc_converters: Vec<DcDcRow>,
    pub residuals: Option<ResidualReport>,
    pub tightness: Vec<TightnessEntry>,
    pub timings: Timings,
    /// Full recovered state, accepted back by `verify`.
    pub state: Option<RecoveredState>,
}

/// Drops the sign of a negative zero so empty sums print as `0`.
fn unsigned_zero(x: f64) -> f64 {
    x + 0.0
}

fn binding(flow: f64, limit: f64) -> bool {
    flow.abs() >= BINDING_FRACTION * limit
}

impl SolveReport {
    pub fn new(out: &SolveOutcome) -> Self {
        let case = &out.case;
        let base = case.base_mva;
        let sol = &out.solution;
        let mut r = SolveReport {
            case: CaseSummary::of(case),
            solver: SolverSummary {
                status: sol.status,
                iterations: sol.iterations,
                primal_objective: sol.primal_objective,
                dual_objective: sol.dual_objective,
                relative_gap: sol.relative_gap,
                primal_infeasibility: sol.primal_infeasibility,
                dual_infeasibility: sol.dual_infeasibility,
                offending: sol.offending.iter().map(|t| t.to_string()).collect(),
            },
            outcome: out.outcome.clone(),
            ac_rank: out.ac_rank.clone(),
            dc_rank: out.dc_rank.clone(),
            total_cost: None,
            ac_loss_mw: None,
            dc_loss_mw: None,
            ac_buses: Vec::new(),
            generators: Vec::new(),
            ac_lines: Vec::new(),
            dc_buses: Vec::new(),
            dc_lines: Vec::new(),
            converters: Vec::new(),
            dcdc_converters: Vec::new(),
            residuals: out.residuals.clone(),
            tightness: out.tightness.clone(),
            timings: out.timings.clone(),
            state: out.state.clone(),
        };
        let Some(st) = &out.state else {
            return r;
        };
        r.total_cost = Some(st.total_cost);
        r.ac_loss_mw = Some(unsigned_zero(st.ac_loss_mw));
        r.dc_loss_mw = Some(unsigned_zero(st.dc_loss_mw));
        r.ac_buses = case
            .ac_buses
            .iter()
            .zip(&st.v_ac)
            .map(|(b, v)| AcBusRow {
                id: b.id,
                v_mag: v.norm(),
                v_angle_deg: v.arg().to_degrees(),
            })
            .collect();
        r.generators = case
            .generators
            .iter()
            .zip(&st.generators)
            .map(|(g, d)| GeneratorRow {
                bus: d.bus_id,
                p_mw: d.p * base,
                q_mvar: d.q * base,
                p_min_mw: g.p_min * base,
                p_max_mw: g.p_max * base,
                cost: d.cost,
            })
            .collect();
        r.ac_lines = case
            .ac_lines
            .iter()
            .zip(&st.ac_flows)
            .map(|(l, f)| {
                let limit = l.s_max.map(|s| s * base);
                let worst = f.s_from.norm().max(f.s_to.norm()) * base;
                AcLineRow {
                    from: f.from_id,
                    to: f.to_id,
                    p_from_mw: f.s_from.re * base,
                    q_from_mvar: f.s_from.im * base,
                    p_to_mw: f.s_to.re * base,
                    q_to_mvar: f.s_to.im * base,
                    limit_mva: limit,
                    binding: limit.is_some_and(|s| binding(worst, s)),
                }
            })
            .collect();
        r.dc_buses = case
            .dc_buses
            .iter()
            .enumerate()
            .map(|(k, b)| DcBusRow {
                id: b.id,
                v: st.v_dc[k],
                p_mw: st.dc_injection[k] * base,
            })
            .collect();
        r.dc_lines = case
            .dc_lines
            .iter()
            .zip(&st.dc_flows)
            .map(|(l, f)| {
                let worst = f.p_from.abs().max(f.p_to.abs()) * base;
                DcLineRow {
                    from: f.from_id,
                    to: f.to_id,
                    p_from_mw: f.p_from * base,
                    p_to_mw: f.p_to * base,
                    limit_mw: l.p_max * base,
                    binding: binding(worst, l.p_max * base),
                }
            })
            .collect();
        r.converters = case
            .acdc_converters
            .iter()
            .zip(&st.converters)
            .map(|(c, s)| ConverterRow {
                ac_bus: s.ac_bus_id,
                dc_bus: s.dc_bus_id,
                p_ac_mw: s.p_ac * base,
                q_ac_mvar: s.q_ac * base,
                p_dc_mw: s.p_dc * base,
                capacity_mva: c.s_conv * base,
            })
            .collect();
        r.dcdc_converters = case
            .dcdc_converters
            .iter()
            .zip(&st.dcdc)
            .map(|(c, s)| DcDcRow {
                bus_k: s.bus_k_id,
                bus_m: s.bus_m_id,
                q_mw: s.q * base,
                limit_mw: c.q_max * base,
                terminal_loss_mw: s.s * base,
            })
            .collect();
        r
    }

    pub fn binding_dc_lines(&self) -> impl Iterator<Item = &DcLineRow> {
        self.dc_lines.iter().filter(|l| l.binding)
    }
}

fn rank_line(out: &mut String, name: &str, d: &Option<RankDiagnostics>) {
    if let Some(d) = d {
        let _ = writeln!(
            out,
            "  {name}: effective rank {}  l1/l2 {:.3e}  l1/l3 {:.3e}",
            d.effective_rank, d.ratio_12, d.ratio_13
        );
    }
}

fn mark(b: bool) -> &'static str {
    if b {
        "  *"
    } else {
        ""
    }
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut o = String::new();
        let c = &self.case;
        let _ = writeln!(
            o,
            "case {}: {} AC buses, {} generators, {} AC lines, {} DC buses, {} DC lines, {} AC/DC, {} DC/DC, wind {:.1} MW (base {} MVA)",
            c.name, c.ac_buses, c.generators, c.ac_lines, c.dc_buses, c.dc_lines, c.acdc_converters, c.dcdc_converters, c.wind_mw, c.base_mva
        );
        let s = &self.solver;
        let _ = writeln!(
            o,
            "solver: {} after {} iterations, objective {:.6}, gap {:.2e}, pinf {:.2e}, dinf {:.2e}",
            s.status, s.iterations, s.primal_objective, s.relative_gap, s.primal_infeasibility, s.dual_infeasibility
        );
        for t in &s.offending {
            let _ = writeln!(o, "  implicated: {t}");
        }
        rank_line(&mut o, "W_AC", &self.ac_rank);
        rank_line(&mut o, "W_DC", &self.dc_rank);
        let outcome = match &self.outcome {
            Outcome::Verified => "verified".to_string(),
            Outcome::NotOptimal(st) => format!("not optimal ({st})"),
            Outcome::RecoveryFailed(e) => format!("recovery failed: {e}"),
            Outcome::VerificationFailed => "verification failed".to_string(),
        };
        let _ = writeln!(o, "outcome: {outcome}");
        if let (Some(cost), Some(acl), Some(dcl)) = (self.total_cost, self.ac_loss_mw, self.dc_loss_mw) {
            // Round-off on a cost-free case would print as -0.00.
            let cost = if cost.abs() < 5e-3 { 0.0 } else { cost };
            let _ = writeln!(o, "\ncost {cost:.2} $/h   AC loss {acl:.3} MW   DC loss {dcl:.3} MW");
        }
        if !self.generators.is_empty() {
            let _ = writeln!(o, "\ngenerators\n  {:>6} {:>10} {:>10} {:>10} {:>10}", "bus", "P MW", "Q MVAr", "Pmax MW", "$/h");
            for g in &self.generators {
                let _ = writeln!(o, "  {:>6} {:>10.3} {:>10.3} {:>10.1} {:>10.2}", g.bus, g.p_mw, g.q_mvar, g.p_max_mw, g.cost);
            }
        }
        if !self.ac_lines.is_empty() {
            let _ = writeln!(o, "\nAC lines\n  {:>5} {:>5} {:>10} {:>10} {:>10} {:>10} {:>9}", "from", "to", "P MW", "Q MVAr", "P' MW", "Q' MVAr", "limit");
            for l in &self.ac_lines {
                let lim = l.limit_mva.map_or("-".to_string(), |v| format!("{v:.1}"));
                let _ = writeln!(
                    o,
                    "  {:>5} {:>5} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>9}{}",
                    l.from, l.to, l.p_from_mw, l.q_from_mvar, l.p_to_mw, l.q_to_mvar, lim, mark(l.binding)
                );
            }
        }
        if !self.dc_buses.is_empty() {
            let _ = writeln!(o, "\nDC buses\n  {:>5} {:>9} {:>10}", "bus", "V p.u.", "P MW");
            for b in &self.dc_buses {
                let _ = writeln!(o, "  {:>5} {:>9.5} {:>10.3}", b.id, b.v, b.p_mw);
            }
        }
        if !self.dc_lines.is_empty() {
            let _ = writeln!(o, "\nDC lines\n  {:>5} {:>5} {:>10} {:>10} {:>9}", "from", "to", "P MW", "P' MW", "limit");
            for l in &self.dc_lines {
                let _ = writeln!(
                    o,
                    "  {:>5} {:>5} {:>10.4} {:>10.4} {:>9.1}{}",
                    l.from, l.to, l.p_from_mw, l.p_to_mw, l.limit_mw, mark(l.binding)
                );
            }
        }
        if !self.converters.is_empty() {
            let _ = writeln!(o, "\nAC/DC converters\n  {:>6} {:>6} {:>10} {:>10} {:>10} {:>9}", "AC", "DC", "P_ac MW", "Q_ac MVAr", "P_dc MW", "cap MVA");
            for c in &self.converters {
                let ac = c.ac_bus.map_or("-".to_string(), |b| b.to_string());
                let _ = writeln!(
                    o,
                    "  {:>6} {:>6} {:>10.3} {:>10.3} {:>10.3} {:>9.2}",
                    ac, c.dc_bus, c.p_ac_mw, c.q_ac_mvar, c.p_dc_mw, c.capacity_mva
                );
            }
        }
        if !self.dcdc_converters.is_empty() {
            let _ = writeln!(o, "\nDC/DC converters\n  {:>5} {:>5} {:>10} {:>9} {:>12}", "k", "m", "q MW", "limit", "loss/2 MW");
            for c in &self.dcdc_converters {
                let _ = writeln!(o, "  {:>5} {:>5} {:>10.4} {:>9.1} {:>12.6}", c.bus_k, c.bus_m, c.q_mw, c.limit_mw, c.terminal_loss_mw);
            }
            for t in &self.tightness {
                let _ = writeln!(o, "  loss relaxation slack {}-{}: {:.2e}{}", t.bus_k_id, t.bus_m_id, t.slack, if t.warn { "  (not tight)" } else { "" });
            }
        }
        if let Some(r) = &self.residuals {
            let _ = writeln!(
                o,
                "\nverification: {} (max residual {:.2e}, tolerance {:.0e}, {} bound violations)",
                if r.pass { "pass" } else { "FAIL" },
                r.max_residual,
                r.tolerance,
                r.violations.len()
            );
            for v in &r.violations {
                let _ = writeln!(o, "  {:?} {}: {:.6} vs limit {:.6}", v.kind, v.subject, v.value, v.limit);
            }
        }
        let t = &self.timings;
        let _ = writeln!(
            o,
            "\ntime: assemble {:.3}s, solve {:.3}s, recover {:.3}s, total {:.3}s",
            t.assemble_seconds, t.solve_seconds, t.recover_seconds, t.total_seconds
        );
        if self.dc_lines.iter().any(|l| l.binding) || self.ac_lines.iter().any(|l| l.binding) {
            let _ = writeln!(o, "* flow within 1% of its limit");
        }
        f.write_str(&o)
    }
}

/// Side-by-side cost and loss of two solved cases.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub base_case: String,
    pub other_case: String,
    pub base_cost: f64,
    pub other_cost: f64,
    pub cost_delta: f64,
    pub base_ac_loss_mw: f64,
    pub other_ac_loss_mw: f64,
    pub ac_loss_delta_mw: f64,
    pub base_dc_loss_mw: f64,
    pub other_dc_loss_mw: f64,
    pub cost_reduced: bool,
}

impl Comparison {
    pub fn new(base: &SolveReport, other: &SolveReport) -> Option<Self> {
        let (bc, ba, bd) = (base.total_cost?, base.ac_loss_mw?, base.dc_loss_mw?);
        let (oc, oa, od) = (other.total_cost?, other.ac_loss_mw?, other.dc_loss_mw?);
        Some(Comparison {
            base_case: base.case.name.clone(),
            other_case: other.case.name.clone(),
            base_cost: bc,
            other_cost: oc,
            cost_delta: oc - bc,
            base_ac_loss_mw: ba,
            other_ac_loss_mw: oa,
            ac_loss_delta_mw: oa - ba,
            base_dc_loss_mw: bd,
            other_dc_loss_mw: od,
            cost_reduced: oc < bc,
        })
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>16} {:>16} {:>14}", "", self.base_case, self.other_case, "delta")?;
        writeln!(f, "{:<16} {:>16.2} {:>16.2} {:>14.2}", "cost ($/h)", self.base_cost, self.other_cost, self.cost_delta)?;
        writeln!(
            f,
            "{:<16} {:>16.3} {:>16.3} {:>14.3}",
            "AC loss (MW)", self.base_ac_loss_mw, self.other_ac_loss_mw, self.ac_loss_delta_mw
        )?;
        writeln!(
            f,
            "{:<16} {:>16.3} {:>16.3} {:>14.3}",
            "DC loss (MW)",
            self.base_dc_loss_mw,
            self.other_dc_loss_mw,
            self.other_dc_loss_mw - self.base_dc_loss_mw
        )?;
        writeln!(f, "cost reduced: {}", if self.cost_reduced { "yes" } else { "no" })
    }
}
