//! Independent checks of a recovered operating point against the nonconvex
//! network equations, plus a brute-force oracle for very small cases.
//!
//! Nothing here reads the lifted matrices: only voltages, device outputs and
//! case data.

mod oracle;

use serde::{Deserialize, Serialize};

pub use oracle::{brute_force_opf, OracleResult};

use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::recovery::{ac_injections, ac_line_flow, dc_required_injections, RecoveredState};
use crate::relaxation::Layout;

pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const BOUND_SLACK: f64 = 1e-6;
pub const TIGHTNESS_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    AcActiveBalance,
    AcReactiveBalance,
    DcBalance,
    ConverterBalance,
    DcDcLoss,
    MasterVoltage,
    SlackAngle,
    /// Reported total cost against the generator cost curves, relative.
    CostConsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    AcVoltage,
    DcVoltage,
    GeneratorActive,
    GeneratorReactive,
    AcLineFlow,
    DcLineFlow,
    ConverterCapacity,
    DcInjection,
    DcDcFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub kind: ResidualKind,
    pub subject: String,
    /// Signed mismatch in p.u.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub kind: BoundKind,
    pub subject: String,
    pub value: f64,
    pub limit: f64,
    /// Amount by which the limit is exceeded (positive).
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<Residual>,
    pub violations: Vec<BoundViolation>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn max_of(&self, kind: ResidualKind) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.value.abs())
            .fold(0.0, f64::max)
    }
}

struct Checker {
    residuals: Vec<Residual>,
    violations: Vec<BoundViolation>,
    slack: f64,
}

impl Checker {
    fn residual(&mut self, kind: ResidualKind, subject: String, value: f64) {
        self.residuals.push(Residual { kind, subject, value });
    }

    fn upper(&mut self, kind: BoundKind, subject: impl Fn() -> String, value: f64, limit: f64) {
        let excess = value - limit;
        if !(excess <= self.slack) {
            self.violations.push(BoundViolation {
                kind,
                subject: subject(),
                value,
                limit,
                excess,
            });
        }
    }

    fn lower(&mut self, kind: BoundKind, subject: impl Fn() -> String, value: f64, limit: f64) {
        let excess = limit - value;
        if !(excess <= self.slack) {
            self.violations.push(BoundViolation {
                kind,
                subject: subject(),
                value,
                limit,
                excess,
            });
        }
    }

    fn range(&mut self, kind: BoundKind, subject: impl Fn() -> String, value: f64, lo: f64, hi: f64) {
        self.lower(kind, &subject, value, lo);
        self.upper(kind, &subject, value, hi);
    }
}

/// Confirm that a state has one entry per device of `case`.
pub fn check_shape(case: &NetworkCase, state: &RecoveredState) -> Result<()> {
    let checks = [
        ("AC voltages", state.v_ac.len(), case.n_ac()),
        ("DC voltages", state.v_dc.len(), case.n_dc()),
        ("generators", state.generators.len(), case.generators.len()),
        ("DC injections", state.dc_injection.len(), case.n_dc()),
        ("AC/DC converters", state.converters.len(), case.acdc_converters.len()),
        ("DC/DC converters", state.dcdc.len(), case.dcdc_converters.len()),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(Error::validation(format!(
                "state has {got} {what} but the case has {want}"
            )));
        }
    }
    Ok(())
}

/// Evaluate every equation and limit of the nonconvex model at `state`.
///
/// `state` must match the shape of `case` (see [`check_shape`]).
pub fn verify(case: &NetworkCase, state: &RecoveredState, tol: f64) -> ResidualReport {
    check(case, state, tol, BOUND_SLACK)
}

/// [`verify`] with an explicit allowance on bound excess.
pub(crate) fn check(case: &NetworkCase, state: &RecoveredState, tol: f64, slack: f64) -> ResidualReport {
    let mut ck = Checker {
        residuals: Vec::new(),
        violations: Vec::new(),
        slack,
    };

    let s_bus = ac_injections(case, &state.v_ac);
    let mut device_p = vec![0.0; case.n_ac()];
    let mut device_q = vec![0.0; case.n_ac()];
    for (g, d) in case.generators.iter().zip(&state.generators) {
        device_p[g.bus] += d.p;
        device_q[g.bus] += d.q;
    }
    for (c, d) in case.acdc_converters.iter().zip(&state.converters) {
        if let Some(a) = c.ac_bus {
            device_p[a] += d.p_ac;
            device_q[a] += d.q_ac;
        }
    }
    for (k, bus) in case.ac_buses.iter().enumerate() {
        let name = || format!("ac bus {}", bus.id);
        ck.residual(ResidualKind::AcActiveBalance, name(), device_p[k] - bus.p_load - s_bus[k].re);
        ck.residual(ResidualKind::AcReactiveBalance, name(), device_q[k] - bus.q_load - s_bus[k].im);
        ck.range(BoundKind::AcVoltage, name, state.v_ac[k].norm(), bus.v_min, bus.v_max);
    }
    if let Some(s) = case.slack_bus() {
        let v = state.v_ac[s];
        ck.residual(ResidualKind::SlackAngle, format!("ac bus {}", case.ac_buses[s].id), v.im);
        ck.lower(BoundKind::AcVoltage, || format!("ac bus {} (real part)", case.ac_buses[s].id), v.re, 0.0);
    }
    for (g, d) in case.generators.iter().zip(&state.generators) {
        let name = || format!("generator at ac bus {}", case.ac_buses[g.bus].id);
        ck.range(BoundKind::GeneratorActive, name, d.p, g.p_min, g.p_max);
        ck.range(BoundKind::GeneratorReactive, name, d.q, g.q_min, g.q_max);
    }
    for (i, line) in case.ac_lines.iter().enumerate() {
        let Some(s_max) = line.s_max else { continue };
        let (sf, st) = ac_line_flow(case, i, &state.v_ac);
        let name = || {
            format!(
                "ac line {}-{} #{i}",
                case.ac_buses[line.from].id, case.ac_buses[line.to].id
            )
        };
        ck.upper(BoundKind::AcLineFlow, name, sf.norm().max(st.norm()), s_max);
    }
    let total: f64 = case
        .generators
        .iter()
        .zip(&state.generators)
        .map(|(g, d)| g.cost(d.p))
        .sum();
    ck.residual(
        ResidualKind::CostConsistency,
        "total cost".into(),
        (state.total_cost - total) / total.abs().max(1.0),
    );

    if case.has_dc() {
        let q: Vec<f64> = state.dcdc.iter().map(|d| d.q).collect();
        let required = dc_required_injections(case, &state.v_dc, &q);
        for (k, bus) in case.dc_buses.iter().enumerate() {
            let name = || format!("dc bus {}", bus.id);
            let device = match case.converter_at_dc(k) {
                Some(c) => state.converters[c].p_dc,
                None => state.dc_injection[k],
            };
            ck.residual(ResidualKind::DcBalance, name(), device - required[k]);
            ck.range(BoundKind::DcInjection, name, device, bus.p_min, bus.p_max);
            ck.range(BoundKind::DcVoltage, name, state.v_dc[k], bus.v_min, bus.v_max);
            if let (true, Some(v)) = (bus.is_master, bus.v_master) {
                ck.residual(ResidualKind::MasterVoltage, name(), state.v_dc[k] - v);
            }
        }
        for line in &case.dc_lines {
            let (vf, vt) = (state.v_dc[line.from], state.v_dc[line.to]);
            let pf = line.conductance * (vf * vf - vf * vt);
            let pt = line.conductance * (vt * vt - vt * vf);
            let name = || {
                format!(
                    "dc line {}-{}",
                    case.dc_buses[line.from].id, case.dc_buses[line.to].id
                )
            };
            ck.upper(BoundKind::DcLineFlow, name, pf.abs().max(pt.abs()), line.p_max);
        }
        for (d, (conv, st)) in case.dcdc_converters.iter().zip(&state.dcdc).enumerate() {
            let name = || format!("dc/dc converter {d}");
            ck.residual(ResidualKind::DcDcLoss, name(), st.s - conv.terminal_loss(st.q));
            ck.upper(BoundKind::DcDcFlow, name, st.q.abs(), conv.q_max);
        }
    }
    for (c, (conv, st)) in case.acdc_converters.iter().zip(&state.converters).enumerate() {
        if conv.ac_bus.is_none() {
            continue;
        }
        let name = || format!("converter {c}");
        ck.residual(ResidualKind::ConverterBalance, name(), conv.efficiency * st.p_ac + st.p_dc);
        ck.upper(BoundKind::ConverterCapacity, name, st.p_ac.hypot(st.q_ac), conv.s_conv);
    }

    let max_residual = ck.residuals.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    let pass = max_residual <= tol && ck.violations.is_empty();
    ResidualReport {
        residuals: ck.residuals,
        violations: ck.violations,
        max_residual,
        tolerance: tol,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessEntry {
    pub index: usize,
    pub bus_k_id: usize,
    pub bus_m_id: usize,
    pub q: f64,
    pub s: f64,
    /// `2 s - (gamma q^2 + beta |q| + delta)`; zero when the relaxed loss is tight.
    pub slack: f64,
    pub warn: bool,
}

/// Slack of the relaxed DC/DC loss inequality at the solver's `s` and `q` values.
pub fn tightness_check(case: &NetworkCase, layout: &Layout, scalars: &[f64]) -> Vec<TightnessEntry> {
    case.dcdc_converters
        .iter()
        .enumerate()
        .map(|(d, c)| {
            let q = scalars[layout.dcdc_q[d]];
            let s = scalars[layout.dcdc_s[d]];
            let slack = 2.0 * s - (c.gamma * q * q + c.beta * q.abs() + c.delta);
            TightnessEntry {
                index: d,
                bus_k_id: case.dc_buses[c.bus_k].id,
                bus_m_id: case.dc_buses[c.bus_m].id,
                q,
                s,
                slack,
                warn: slack > TIGHTNESS_WARNING,
            }
        })
        .collect()
}
