//! Rank certification of the lifted voltage matrices and recovery of the
//! physical operating point from them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkCase;

pub const DEFAULT_RANK_THRESHOLD: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveRank {
    One,
    Two,
    Higher,
}

impl std::fmt::Display for EffectiveRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EffectiveRank::One => "1",
            EffectiveRank::Two => "2",
            EffectiveRank::Higher => "higher",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDiagnostics {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    pub ratio_12: f64,
    pub ratio_13: f64,
    pub effective_rank: EffectiveRank,
    /// `||W - X X^T||_F / ||W||_F` for the recovered (or leading rank-1) factor.
    pub reconstruction_defect: f64,
}

struct Spectrum {
    values: Vec<f64>,
    vectors: Vec<DVector<f64>>,
}

fn spectrum(w: &DMatrix<f64>) -> Result<Spectrum> {
    if w.nrows() != w.ncols() || w.nrows() == 0 {
        return Err(Error::Numerical(format!(
            "expected a non-empty square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let asym = (w - w.transpose()).abs().max();
    if asym > 1e-12 * w.abs().max().max(1.0) {
        return Err(Error::Numerical(format!("matrix is not symmetric (defect {asym:e})")));
    }
    let eig = SymmetricEigen::try_new(w.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..w.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(Spectrum {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect(),
    })
}

fn defect(w: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let norm = w.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (w - x * x.transpose()).norm() / norm
}

fn leading_factor(s: &Spectrum) -> DVector<f64> {
    &s.vectors[0] * s.values[0].max(0.0).sqrt()
}

fn classify(values: &[f64], threshold: f64) -> (f64, f64, EffectiveRank) {
    let l1 = values[0];
    if !(l1 > 0.0) {
        return (1.0, 1.0, EffectiveRank::Higher);
    }
    let floor = f64::EPSILON * l1;
    let ratio = |k: usize| l1 / values.get(k).copied().unwrap_or(0.0).max(floor);
    let (r12, r13) = (ratio(1), ratio(2));
    let rank = if r12 >= threshold {
        EffectiveRank::One
    } else if values.len() > 2 && r13 >= threshold {
        // a 2x2 block is always rank <= 2, which certifies nothing
        EffectiveRank::Two
    } else {
        EffectiveRank::Higher
    };
    (r12, r13, rank)
}

/// Eigenvalue-ratio rank test of a lifted voltage matrix.
pub fn diagnose_rank(w: &DMatrix<f64>, threshold: f64) -> Result<RankDiagnostics> {
    let s = spectrum(w)?;
    let (ratio_12, ratio_13, effective_rank) = classify(&s.values, threshold);
    Ok(RankDiagnostics {
        reconstruction_defect: defect(w, &leading_factor(&s)),
        eigenvalues: s.values,
        ratio_12,
        ratio_13,
        effective_rank,
    })
}

fn assemble_ac(x: &DVector<f64>, slack: usize) -> Result<Vec<Complex64>> {
    let n = x.len() / 2;
    let v: Vec<Complex64> = (0..n).map(|k| Complex64::new(x[k], x[k + n])).collect();
    let vs = v[slack];
    if vs.norm() < 1e-6 {
        return Err(Error::Recovery(format!(
            "slack bus voltage magnitude {:e} is too small to fix the phase",
            vs.norm()
        )));
    }
    let rot = vs.conj() / vs.norm();
    let mut out: Vec<Complex64> = v.into_iter().map(|z| z * rot).collect();
    out[slack].im = 0.0;
    Ok(out)
}

/// `V` from the leading eigenpair of an AC block, rotated so the slack bus angle is zero.
pub fn recover_rank1_ac(w: &DMatrix<f64>, slack: usize) -> Result<Vec<Complex64>> {
    if w.nrows() % 2 != 0 || slack >= w.nrows() / 2 {
        return Err(Error::Recovery("AC block must be 2n x 2n with the slack bus inside".into()));
    }
    assemble_ac(&leading_factor(&spectrum(w)?), slack)
}

/// `V` from the leading eigenpair of a DC block, signed so the master voltage is positive.
pub fn recover_rank1_dc(w: &DMatrix<f64>, master: usize) -> Result<Vec<f64>> {
    if master >= w.nrows() {
        return Err(Error::Recovery("master bus outside the DC block".into()));
    }
    let x = leading_factor(&spectrum(w)?);
    let sign = if x[master] < 0.0 { -1.0 } else { 1.0 };
    Ok(x.iter().map(|v| sign * v).collect())
}

/// Rank-2 AC recovery from `sqrt(l1) E1 +- sqrt(l2) E2`. Both signs are tried and
/// the candidate with the smaller `score` is kept; the diagnostics' defect is
/// updated to the chosen factor.
pub fn recover_rank2_ac(
    w: &DMatrix<f64>,
    slack: usize,
    diag: &mut RankDiagnostics,
    score: impl Fn(&[Complex64]) -> f64,
) -> Result<Vec<Complex64>> {
    if diag.effective_rank == EffectiveRank::Higher {
        return Err(Error::Recovery(format!(
            "effective rank is higher than 2 (l1/l2 = {:.3e}, l1/l3 = {:.3e})",
            diag.ratio_12, diag.ratio_13
        )));
    }
    if w.nrows() % 2 != 0 || slack >= w.nrows() / 2 {
        return Err(Error::Recovery("AC block must be 2n x 2n with the slack bus inside".into()));
    }
    let s = spectrum(w)?;
    let first = leading_factor(&s);
    let second = match s.vectors.get(1) {
        Some(e2) => e2 * s.values[1].max(0.0).sqrt(),
        None => DVector::zeros(first.len()),
    };
    let mut best: Option<(f64, Vec<Complex64>, f64)> = None;
    for sign in [1.0, -1.0] {
        let x = &first + &second * sign;
        let Ok(v) = assemble_ac(&x, slack) else { continue };
        let sc = score(&v);
        if best.as_ref().map_or(true, |b| sc < b.0) {
            best = Some((sc, v, defect(w, &x)));
        }
    }
    let (_, v, d) = best.ok_or_else(|| {
        Error::Recovery("slack bus voltage vanishes for both rank-2 sign choices".into())
    })?;
    diag.reconstruction_defect = d;
    Ok(v)
}

/// Real lift `X = [Re V; Im V]` with `W = X X^T`.
pub fn lift_ac(v: &[Complex64]) -> DMatrix<f64> {
    let n = v.len();
    let x = DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im });
    &x * x.transpose()
}

pub fn lift_dc(v: &[f64]) -> DMatrix<f64> {
    let x = DVector::from_column_slice(v);
    &x * x.transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDispatch {
    pub bus_id: usize,
    pub p: f64,
    pub q: f64,
    pub cost: f64,
}

/// Complex power entering the line at each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcFlow {
    pub from_id: usize,
    pub to_id: usize,
    pub s_from: Complex64,
    pub s_to: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcFlow {
    pub from_id: usize,
    pub to_id: usize,
    pub p_from: f64,
    pub p_to: f64,
}

/// AC/DC converter operating point. `p_ac`, `q_ac` are injected into the AC bus,
/// `p_dc` into the DC bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterState {
    pub ac_bus_id: Option<usize>,
    pub dc_bus_id: usize,
    pub p_ac: f64,
    pub q_ac: f64,
    pub p_dc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcDcState {
    pub bus_k_id: usize,
    pub bus_m_id: usize,
    /// Flow transferred from `bus_k` to `bus_m`.
    pub q: f64,
    /// Loss charged at each terminal.
    pub s: f64,
}

/// Physical operating point. Powers and voltages are per-unit on `base_mva`,
/// costs in $/h and the loss totals in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredState {
    pub base_mva: f64,
    pub v_ac: Vec<Complex64>,
    pub v_dc: Vec<f64>,
    pub generators: Vec<GeneratorDispatch>,
    pub ac_flows: Vec<AcFlow>,
    pub dc_flows: Vec<DcFlow>,
    /// Net injection into the DC network at each bus, including DC/DC terminal terms.
    pub dc_injection: Vec<f64>,
    pub converters: Vec<ConverterState>,
    pub dcdc: Vec<DcDcState>,
    pub total_cost: f64,
    pub ac_loss_mw: f64,
    /// DC line losses plus DC/DC converter losses.
    pub dc_loss_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac_rank: Option<RankDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_rank: Option<RankDiagnostics>,
}

impl RecoveredState {
    /// The relaxation's objective at this point: cost plus total loss in p.u.
    pub fn objective(&self) -> f64 {
        self.total_cost + (self.ac_loss_mw + self.dc_loss_mw) / self.base_mva
    }
}

/// Complex injection `V_k conj(sum_j Y_kj V_j)` at every AC bus, from case data.
pub fn ac_injections(case: &NetworkCase, v: &[Complex64]) -> Vec<Complex64> {
    let mut current = vec![Complex64::new(0.0, 0.0); v.len()];
    for l in &case.ac_lines {
        let (f, t) = (l.from, l.to);
        let i_ft = l.series_admittance * (v[f] - v[t]);
        current[f] += i_ft + l.shunt_admittance * v[f];
        current[t] += -i_ft + l.shunt_admittance * v[t];
    }
    v.iter().zip(&current).map(|(vk, ik)| vk * ik.conj()).collect()
}

pub fn ac_line_flow(case: &NetworkCase, line: usize, v: &[Complex64]) -> (Complex64, Complex64) {
    let l = &case.ac_lines[line];
    let (vf, vt) = (v[l.from], v[l.to]);
    let i_f = l.series_admittance * (vf - vt) + l.shunt_admittance * vf;
    let i_t = l.series_admittance * (vt - vf) + l.shunt_admittance * vt;
    (vf * i_f.conj(), vt * i_t.conj())
}

/// Network outflow `V_k sum_j G_kj V_j` at every DC bus.
pub fn dc_network_injections(case: &NetworkCase, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for l in &case.dc_lines {
        let (f, t) = (l.from, l.to);
        out[f] += l.conductance * (v[f] * v[f] - v[f] * v[t]);
        out[t] += l.conductance * (v[t] * v[t] - v[t] * v[f]);
    }
    out
}

/// Injection required at each DC bus: network outflow plus DC/DC terminal terms.
pub fn dc_required_injections(case: &NetworkCase, v: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = dc_network_injections(case, v);
    for (d, conv) in case.dcdc_converters.iter().enumerate() {
        let s = conv.terminal_loss(q[d]);
        out[conv.bus_k] += s + q[d];
        out[conv.bus_m] += s - q[d];
    }
    out
}

/// Every reported quantity, computed from voltages, DC/DC flows and case data.
pub fn extract_state(case: &NetworkCase, dcdc_q: &[f64], v_ac: &[Complex64], v_dc: &[f64]) -> RecoveredState {
    let s_bus = ac_injections(case, v_ac);
    let generators = case
        .generators
        .iter()
        .map(|g| {
            let b = &case.ac_buses[g.bus];
            let p = s_bus[g.bus].re + b.p_load;
            GeneratorDispatch {
                bus_id: b.id,
                p,
                q: s_bus[g.bus].im + b.q_load,
                cost: g.cost(p),
            }
        })
        .collect::<Vec<_>>();
    let ac_flows: Vec<AcFlow> = (0..case.ac_lines.len())
        .map(|i| {
            let l = &case.ac_lines[i];
            let (s_from, s_to) = ac_line_flow(case, i, v_ac);
            AcFlow {
                from_id: case.ac_buses[l.from].id,
                to_id: case.ac_buses[l.to].id,
                s_from,
                s_to,
            }
        })
        .collect();
    let dc_flows: Vec<DcFlow> = case
        .dc_lines
        .iter()
        .map(|l| {
            let (vf, vt) = (v_dc[l.from], v_dc[l.to]);
            DcFlow {
                from_id: case.dc_buses[l.from].id,
                to_id: case.dc_buses[l.to].id,
                p_from: l.conductance * (vf * vf - vf * vt),
                p_to: l.conductance * (vt * vt - vt * vf),
            }
        })
        .collect();
    let dc_injection = if case.has_dc() {
        dc_required_injections(case, v_dc, dcdc_q)
    } else {
        Vec::new()
    };
    let converters = case
        .acdc_converters
        .iter()
        .map(|c| {
            let (p_ac, q_ac) = match c.ac_bus {
                Some(a) => {
                    let b = &case.ac_buses[a];
                    (s_bus[a].re + b.p_load, s_bus[a].im + b.q_load)
                }
                None => (0.0, 0.0),
            };
            ConverterState {
                ac_bus_id: c.ac_bus.map(|a| case.ac_buses[a].id),
                dc_bus_id: case.dc_buses[c.dc_bus].id,
                p_ac,
                q_ac,
                p_dc: dc_injection[c.dc_bus],
            }
        })
        .collect();
    let dcdc: Vec<DcDcState> = case
        .dcdc_converters
        .iter()
        .zip(dcdc_q)
        .map(|(c, &q)| DcDcState {
            bus_k_id: case.dc_buses[c.bus_k].id,
            bus_m_id: case.dc_buses[c.bus_m].id,
            q,
            s: c.terminal_loss(q),
        })
        .collect();
    let ac_loss: f64 = ac_flows.iter().map(|f| f.s_from.re + f.s_to.re).sum();
    let dc_loss: f64 = dc_flows.iter().map(|f| f.p_from + f.p_to).sum::<f64>()
        + dcdc.iter().map(|d| 2.0 * d.s).sum::<f64>();
    RecoveredState {
        base_mva: case.base_mva,
        v_ac: v_ac.to_vec(),
        v_dc: v_dc.to_vec(),
        total_cost: generators.iter().map(|g| g.cost).sum(),
        generators,
        ac_flows,
        dc_flows,
        dc_injection,
        converters,
        dcdc,
        ac_loss_mw: ac_loss * case.base_mva,
        dc_loss_mw: dc_loss * case.base_mva,
        ac_rank: None,
        dc_rank: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{DcBus, DcDcConverter, DcLine};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rank_one_outer_product() {
        let v = [c(1.0, 0.0), c(0.98, -0.05), c(1.02, 0.03)];
        let d = diagnose_rank(&lift_ac(&v), DEFAULT_RANK_THRESHOLD).unwrap();
        assert_eq!(d.effective_rank, EffectiveRank::One);
        assert!(d.eigenvalues[1].abs() < 1e-14 * d.eigenvalues[0]);
        assert!(d.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
        assert!(d.reconstruction_defect < 1e-14);
    }

    #[test]
    fn identity_is_higher_rank() {
        let d = diagnose_rank(&DMatrix::identity(2, 2), DEFAULT_RANK_THRESHOLD).unwrap();
        assert_eq!(d.ratio_12, 1.0);
        assert_eq!(d.effective_rank, EffectiveRank::Higher);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(diagnose_rank(&w, 1e5), Err(Error::Numerical(_))));
    }

    #[test]
    fn dc_round_trip() {
        let v = [0.98, 0.983, 0.9915, 1.004];
        let w = lift_dc(&v);
        let got = recover_rank1_dc(&w, 0).unwrap();
        for (a, b) in got.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn vanishing_slack_is_an_error() {
        let v = [c(0.0, 0.0), c(1.0, 0.1)];
        assert!(matches!(recover_rank1_ac(&lift_ac(&v), 0), Err(Error::Recovery(_))));
    }

    #[test]
    fn rank_two_near_rank_one() {
        let v = [c(1.0, 0.0), c(0.97, -0.08)];
        let x2 = [c(0.3, 0.1), c(-0.2, 0.4)];
        let w1 = lift_ac(&v);
        let l1 = w1.trace();
        let w = &w1 + lift_ac(&x2) * (1e-9 * l1 / lift_ac(&x2).trace());
        let mut d = diagnose_rank(&w, 1e12).unwrap();
        assert_eq!(d.effective_rank, EffectiveRank::Two);
        let got = recover_rank2_ac(&w, 0, &mut d, |_| 0.0).unwrap();
        for (a, b) in got.iter().zip(&v) {
            assert!((a - b).norm() < 1e-4);
        }
        d.effective_rank = EffectiveRank::Higher;
        assert!(recover_rank2_ac(&w, 0, &mut d, |_| 0.0).is_err());
    }

    #[test]
    fn dc_flow_and_dcdc_loss() {
        let case = NetworkCase {
            base_mva: 100.0,
            dc_buses: (1..=2)
                .map(|id| DcBus {
                    id,
                    v_min: 0.9,
                    v_max: 1.1,
                    p_min: -1.0,
                    p_max: 1.0,
                    is_master: id == 1,
                    v_master: (id == 1).then_some(1.0),
                })
                .collect(),
            dc_lines: vec![DcLine {
                from: 0,
                to: 1,
                conductance: 10.0,
                p_max: 1.0,
            }],
            dcdc_converters: vec![DcDcConverter {
                bus_k: 0,
                bus_m: 1,
                delta: 0.0,
                beta: 0.05,
                gamma: 0.03,
                q_max: 2.0,
            }],
            ..Default::default()
        };
        let st = extract_state(&case, &[1.0], &[], &[1.0, 0.98]);
        assert!((st.dc_flows[0].p_from - 0.2).abs() < 1e-12);
        assert!((st.dcdc[0].s - 0.04).abs() < 1e-12);
    }
}
