//! Grid search over the control variables of a tiny case. Dependent quantities
//! (non-master DC voltages, AC angles, PQ-bus magnitudes) come from Newton
//! power-flow solves, and every candidate is screened by [`verify`]. The grid
//! winner is polished with a shrinking pattern search.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::{check, BOUND_SLACK, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::recovery::{ac_injections, dc_required_injections, extract_state, RecoveredState};

const MAX_BUSES: usize = 3;
const MAX_MOVES: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub objective: f64,
    pub state: RecoveredState,
    /// Grid points per control.
    pub resolution: usize,
    /// True when the grid spans every control's full range.
    pub exhaustive: bool,
    pub controls: Vec<String>,
    pub evaluated: usize,
    pub feasible: usize,
}

#[derive(Debug, Clone, Copy)]
enum Control {
    AcVoltage(usize),
    GenActive(usize),
    DcInjection(usize),
    DcVoltage(usize),
    DcDcFlow(usize),
}

struct Setup<'a> {
    case: &'a NetworkCase,
    controls: Vec<(Control, f64, f64)>,
}

fn newton(f: impl Fn(&[f64]) -> Vec<f64>, x0: Vec<f64>) -> Option<Vec<f64>> {
    let n = x0.len();
    let mut x = x0;
    if n == 0 {
        return Some(x);
    }
    for _ in 0..40 {
        let r = f(&x);
        let norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !norm.is_finite() {
            return None;
        }
        if norm < 1e-12 {
            return Some(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = f(&xp);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let dx = jac.lu().solve(&DVector::from_vec(r))?;
        for j in 0..n {
            x[j] -= dx[j];
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e3) {
            return None;
        }
    }
    None
}

impl<'a> Setup<'a> {
    fn new(case: &'a NetworkCase) -> Result<Self> {
        if case.n_ac() > MAX_BUSES || case.n_dc() > MAX_BUSES {
            return Err(Error::Oracle(format!(
                "oracle is limited to {MAX_BUSES} AC and {MAX_BUSES} DC buses"
            )));
        }
        let mut controls = Vec::new();
        if case.has_ac() {
            let slack = case
                .slack_bus()
                .ok_or_else(|| Error::Oracle("AC network has no slack bus".into()))?;
            if case.generator_at(slack).is_none() {
                return Err(Error::Oracle("the slack bus must host a generator".into()));
            }
            for (k, b) in case.ac_buses.iter().enumerate() {
                if case.generator_at(k).is_some() || case.converter_at_ac(k).is_some() {
                    controls.push((Control::AcVoltage(k), b.v_min, b.v_max));
                }
            }
            for (g, gen) in case.generators.iter().enumerate() {
                if gen.bus != slack {
                    controls.push((Control::GenActive(g), gen.p_min, gen.p_max));
                }
            }
        }
        if case.has_dc() {
            for (k, b) in case.dc_buses.iter().enumerate() {
                if b.is_master {
                    if b.v_master.is_none() {
                        controls.push((Control::DcVoltage(k), b.v_min, b.v_max));
                    }
                } else if b.p_min < b.p_max {
                    controls.push((Control::DcInjection(k), b.p_min, b.p_max));
                }
            }
            for (d, c) in case.dcdc_converters.iter().enumerate() {
                controls.push((Control::DcDcFlow(d), -c.q_max, c.q_max));
            }
        }
        Ok(Setup { case, controls })
    }

    fn label(&self, c: Control) -> String {
        let case = self.case;
        match c {
            Control::AcVoltage(k) => format!("|V| at ac bus {}", case.ac_buses[k].id),
            Control::GenActive(g) => format!("P of generator at ac bus {}", case.ac_buses[case.generators[g].bus].id),
            Control::DcInjection(k) => format!("injection at dc bus {}", case.dc_buses[k].id),
            Control::DcVoltage(k) => format!("voltage at dc bus {}", case.dc_buses[k].id),
            Control::DcDcFlow(d) => format!("flow of dc/dc converter {d}"),
        }
    }

    /// Operating point for a control vector, or `None` when the power flow fails.
    fn operating_point(&self, u: &[f64]) -> Option<RecoveredState> {
        let case = self.case;
        let mut ac_vm: Vec<f64> = vec![1.0; case.n_ac()];
        let mut gen_p: Vec<Option<f64>> = vec![None; case.generators.len()];
        let mut dc_p: Vec<Option<f64>> = case
            .dc_buses
            .iter()
            .map(|b| (!b.is_master && b.p_min == b.p_max).then_some(b.p_min))
            .collect();
        let mut dc_master_v = case
            .dc_buses
            .iter()
            .map(|b| b.v_master.unwrap_or(1.0))
            .collect::<Vec<_>>();
        let mut q = vec![0.0; case.dcdc_converters.len()];
        for (&(c, _, _), &v) in self.controls.iter().zip(u) {
            match c {
                Control::AcVoltage(k) => ac_vm[k] = v,
                Control::GenActive(g) => gen_p[g] = Some(v),
                Control::DcInjection(k) => dc_p[k] = Some(v),
                Control::DcVoltage(k) => dc_master_v[k] = v,
                Control::DcDcFlow(d) => q[d] = v,
            }
        }

        let mut v_dc = Vec::new();
        let mut dc_inj = Vec::new();
        if let Some(master) = case.master_bus() {
            let vm = dc_master_v[master];
            let unknown: Vec<usize> = (0..case.n_dc()).filter(|&k| k != master).collect();
            let assemble = |x: &[f64]| {
                let mut v = vec![vm; case.n_dc()];
                for (i, &k) in unknown.iter().enumerate() {
                    v[k] = x[i];
                }
                v
            };
            let sol = newton(
                |x| {
                    let v = assemble(x);
                    let req = dc_required_injections(case, &v, &q);
                    unknown.iter().map(|&k| req[k] - dc_p[k].unwrap_or(0.0)).collect()
                },
                vec![vm; unknown.len()],
            )?;
            v_dc = assemble(&sol);
            dc_inj = dc_required_injections(case, &v_dc, &q);
        }

        let mut v_ac = Vec::new();
        if let Some(slack) = case.slack_bus() {
            let n = case.n_ac();
            let mut p_spec = vec![0.0; n];
            let mut q_spec: Vec<Option<f64>> = vec![None; n];
            for (k, b) in case.ac_buses.iter().enumerate() {
                if let Some(g) = case.generator_at(k) {
                    p_spec[k] = gen_p[g].unwrap_or(0.0) - b.p_load;
                } else if let Some(c) = case.converter_at_ac(k) {
                    let conv = &case.acdc_converters[c];
                    p_spec[k] = -dc_inj[conv.dc_bus] / conv.efficiency - b.p_load;
                } else {
                    p_spec[k] = -b.p_load;
                    q_spec[k] = Some(-b.q_load);
                }
            }
            let angles: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
            let mags: Vec<usize> = (0..n).filter(|&k| q_spec[k].is_some()).collect();
            let assemble = |x: &[f64]| {
                let mut th = vec![0.0; n];
                let mut vm = ac_vm.clone();
                for (i, &k) in angles.iter().enumerate() {
                    th[k] = x[i];
                }
                for (i, &k) in mags.iter().enumerate() {
                    vm[k] = x[angles.len() + i];
                }
                (0..n).map(|k| Complex64::from_polar(vm[k], th[k])).collect::<Vec<_>>()
            };
            let mut x0 = vec![0.0; angles.len()];
            x0.extend(mags.iter().map(|_| 1.0));
            let sol = newton(
                |x| {
                    let s = ac_injections(case, &assemble(x));
                    let mut r: Vec<f64> = angles.iter().map(|&k| s[k].re - p_spec[k]).collect();
                    r.extend(mags.iter().map(|&k| s[k].im - q_spec[k].unwrap()));
                    r
                },
                x0,
            )?;
            v_ac = assemble(&sol);
        }
        Some(extract_state(case, &q, &v_ac, &v_dc))
    }

    /// Objective at `u` plus `rho` times the squared bound excess, and whether
    /// the point passes verification. `None` when the power flow fails.
    fn evaluate(&self, u: &[f64], rho: f64) -> Option<Eval> {
        let st = self.operating_point(u)?;
        let r = check(self.case, &st, DEFAULT_TOLERANCE, 0.0);
        if r.max_residual > DEFAULT_TOLERANCE {
            return None;
        }
        let excess: f64 = r.violations.iter().map(|v| v.excess * v.excess).sum();
        let objective = st.objective();
        Some(Eval {
            merit: objective + rho * excess,
            objective,
            feasible: r.violations.iter().all(|v| v.excess <= BOUND_SLACK),
            state: st,
        })
    }
}

struct Eval {
    merit: f64,
    objective: f64,
    feasible: bool,
    state: RecoveredState,
}

#[derive(Default)]
struct Incumbent {
    best: Option<(f64, Vec<f64>, RecoveredState)>,
    evaluated: usize,
    feasible: usize,
}

impl Incumbent {
    fn offer(&mut self, u: &[f64], e: &Eval) {
        if e.feasible && self.best.as_ref().map_or(true, |b| e.objective < b.0) {
            self.best = Some((e.objective, u.to_vec(), e.state.clone()));
        }
    }
}

/// Best-neighbour pattern search over all `3^d - 1` directions on the penalized
/// objective, halving the step when no neighbour improves.
fn pattern_search(
    setup: &Setup<'_>,
    mut u: Vec<f64>,
    rho: f64,
    initial: &[f64],
    inc: &mut Incumbent,
) -> Vec<f64> {
    let dims = u.len();
    let Some(mut merit) = setup.evaluate(&u, rho).map(|e| e.merit) else {
        return u;
    };
    let mut step = initial.to_vec();
    let n_dirs = 3usize.pow(dims as u32);
    let mut moves = 0;
    while moves < MAX_MOVES && step.iter().zip(initial).any(|(h, s)| *h > 1e-8 * s) {
        moves += 1;
        let mut improved: Option<(f64, Vec<f64>)> = None;
        for code in 0..n_dirs {
            let mut c = code;
            let mut trial = u.clone();
            let mut moved = false;
            for d in 0..dims {
                let dir = (c % 3) as f64 - 1.0;
                c /= 3;
                if dir != 0.0 {
                    let (_, lo, hi) = setup.controls[d];
                    trial[d] = (u[d] + dir * step[d]).clamp(lo, hi);
                    moved |= trial[d] != u[d];
                }
            }
            if !moved {
                continue;
            }
            inc.evaluated += 1;
            if let Some(e) = setup.evaluate(&trial, rho) {
                inc.offer(&trial, &e);
                if e.merit < improved.as_ref().map_or(merit, |b| b.0) {
                    improved = Some((e.merit, trial));
                }
            }
        }
        match improved {
            Some((m, t)) => {
                merit = m;
                u = t;
            }
            None => step.iter_mut().for_each(|h| *h *= 0.5),
        }
    }
    u
}

/// Exhaustive grid search with `resolution` points per control, then local
/// polish by pattern search on a quadratic-penalty objective with increasing
/// weight, so the search can slide along active limits. `seed` jitters interior
/// grid points by up to a quarter spacing.
pub fn brute_force_opf(case: &NetworkCase, resolution: usize, seed: Option<u64>) -> Result<OracleResult> {
    let setup = Setup::new(case)?;
    let resolution = resolution.max(2);
    let mut rng = seed.map(StdRng::seed_from_u64);
    let axes: Vec<Vec<f64>> = setup
        .controls
        .iter()
        .map(|&(_, lo, hi)| {
            if hi <= lo {
                return vec![lo];
            }
            let h = (hi - lo) / (resolution - 1) as f64;
            (0..resolution)
                .map(|i| {
                    let mut x = lo + h * i as f64;
                    if let Some(r) = rng.as_mut() {
                        if i > 0 && i + 1 < resolution {
                            x += h * r.gen_range(-0.25..0.25);
                        }
                    }
                    x
                })
                .collect()
        })
        .collect();

    let total: usize = axes.iter().map(Vec::len).product();
    let mut inc = Incumbent {
        evaluated: total,
        ..Default::default()
    };
    let mut u = vec![0.0; axes.len()];
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..axes.len()).rev() {
            u[d] = axes[d][rem % axes[d].len()];
            rem /= axes[d].len();
        }
        if let Some(e) = setup.evaluate(&u, 0.0) {
            if e.feasible {
                inc.feasible += 1;
            }
            // strict improvement keeps the lexicographically first of tied points
            inc.offer(&u, &e);
        }
    }
    let Some((_, start, _)) = inc.best.clone() else {
        return Err(Error::Oracle(format!(
            "no feasible point on a {resolution}-point grid over {} controls",
            axes.len()
        )));
    };

    let spacing: Vec<f64> = setup
        .controls
        .iter()
        .map(|&(_, lo, hi)| (hi - lo) / (resolution - 1) as f64)
        .collect();
    let mut u = start;
    let mut initial = spacing;
    for rho in [1e2, 1e4, 1e6, 1e8, 1e10, 1e12] {
        u = pattern_search(&setup, u, rho, &initial, &mut inc);
        initial.iter_mut().for_each(|h| *h *= 0.1);
    }
    let (objective, _, state) = inc.best.expect("grid produced a feasible point");

    Ok(OracleResult {
        objective,
        state,
        resolution,
        exhaustive: true,
        controls: setup.controls.iter().map(|&(c, _, _)| setup.label(c)).collect(),
        evaluated: inc.evaluated,
        feasible: inc.feasible,
    })
}
