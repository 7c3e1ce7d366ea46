//! Hybrid AC / multi-terminal DC network model.
//!
//! All quantities held by these types are per-unit on [`NetworkCase::base_mva`].
//! Cross references (`bus`, `from`, `dc_bus`, ...) are 0-based positions into the
//! owning collection; external bus numbers live in the `id` fields and are only
//! used for reporting and case-file I/O.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcBus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub is_slack: bool,
}

/// Dispatchable AC generator with cost `c2 P^2 + c1 P + c0` ($/h, P in p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Generator {
    pub fn cost(&self, p: f64) -> f64 {
        self.c2 * p * p + self.c1 * p + self.c0
    }
}

/// Pi-model AC line. `shunt_admittance` is the admittance to ground at *each* end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcLine {
    pub from: usize,
    pub to: usize,
    pub series_admittance: Complex64,
    pub shunt_admittance: Complex64,
    /// Apparent power limit; `None` means unlimited.
    pub s_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcBus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub is_master: bool,
    pub v_master: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcLine {
    pub from: usize,
    pub to: usize,
    pub conductance: f64,
    pub p_max: f64,
}

/// VSC terminal. `ac_bus` is `None` when the AC side is not part of the modelled
/// AC grid (an offshore wind collector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcDcConverter {
    pub ac_bus: Option<usize>,
    pub dc_bus: usize,
    pub efficiency: f64,
    pub s_conv: f64,
}

/// Controllable DC/DC link with loss `delta + beta |q| + gamma q^2`, split evenly
/// between its two terminals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcDcConverter {
    pub bus_k: usize,
    pub bus_m: usize,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub q_max: f64,
}

impl DcDcConverter {
    /// Half of the converter loss, charged at each terminal.
    pub fn terminal_loss(&self, q: f64) -> f64 {
        0.5 * (self.delta + self.beta * q.abs() + self.gamma * q * q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindInjection {
    pub dc_bus: usize,
    pub p_wind: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub ac_buses: Vec<AcBus>,
    pub generators: Vec<Generator>,
    pub ac_lines: Vec<AcLine>,
    pub dc_buses: Vec<DcBus>,
    pub dc_lines: Vec<DcLine>,
    pub acdc_converters: Vec<AcDcConverter>,
    pub dcdc_converters: Vec<DcDcConverter>,
    pub wind: Vec<WindInjection>,
}

impl NetworkCase {
    pub fn n_ac(&self) -> usize {
        self.ac_buses.len()
    }

    pub fn n_dc(&self) -> usize {
        self.dc_buses.len()
    }

    pub fn has_ac(&self) -> bool {
        !self.ac_buses.is_empty()
    }

    pub fn has_dc(&self) -> bool {
        !self.dc_buses.is_empty()
    }

    pub fn slack_bus(&self) -> Option<usize> {
        self.ac_buses.iter().position(|b| b.is_slack)
    }

    pub fn master_bus(&self) -> Option<usize> {
        self.dc_buses.iter().position(|b| b.is_master)
    }

    pub fn generator_at(&self, bus: usize) -> Option<usize> {
        self.generators.iter().position(|g| g.bus == bus)
    }

    /// Converter whose AC terminal sits on AC bus `bus`.
    pub fn converter_at_ac(&self, bus: usize) -> Option<usize> {
        self.acdc_converters.iter().position(|c| c.ac_bus == Some(bus))
    }

    pub fn converter_at_dc(&self, bus: usize) -> Option<usize> {
        self.acdc_converters.iter().position(|c| c.dc_bus == bus)
    }

    /// Net injection limits `(p_min, p_max, q_min, q_max)` at an AC bus:
    /// generator bounds minus load, the converter capacity box at coupling
    /// buses, and the fixed negative load elsewhere.
    pub fn ac_injection_bounds(&self, bus: usize) -> (f64, f64, f64, f64) {
        let b = &self.ac_buses[bus];
        if let Some(g) = self.generator_at(bus).map(|g| &self.generators[g]) {
            (
                g.p_min - b.p_load,
                g.p_max - b.p_load,
                g.q_min - b.q_load,
                g.q_max - b.q_load,
            )
        } else if let Some(c) = self.converter_at_ac(bus).map(|c| &self.acdc_converters[c]) {
            (
                -c.s_conv - b.p_load,
                c.s_conv - b.p_load,
                -c.s_conv - b.q_load,
                c.s_conv - b.q_load,
            )
        } else {
            (-b.p_load, -b.p_load, -b.q_load, -b.q_load)
        }
    }

    /// Check every structural and numerical invariant of the case.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(Error::validation("base_mva must be positive"));
        }
        if self.ac_buses.is_empty() && self.dc_buses.is_empty() {
            return Err(Error::validation("case has no buses"));
        }
        self.validate_ac()?;
        self.validate_dc()?;
        self.validate_converters()?;
        Ok(())
    }

    fn validate_ac(&self) -> Result<()> {
        let n = self.n_ac();
        unique_ids(self.ac_buses.iter().map(|b| b.id), "AC")?;
        for b in &self.ac_buses {
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(Error::validation(format!(
                    "AC bus {}: voltage bounds must satisfy 0 < v_min <= v_max",
                    b.id
                )));
            }
            if !(b.p_load.is_finite() && b.q_load.is_finite()) {
                return Err(Error::validation(format!("AC bus {}: non-finite load", b.id)));
            }
        }
        let mut gen_buses = BTreeSet::new();
        for g in &self.generators {
            if g.bus >= n {
                return Err(Error::validation("generator references a missing AC bus"));
            }
            let id = self.ac_buses[g.bus].id;
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(Error::validation(format!("generator at bus {id}: min above max")));
            }
            if g.c2 < 0.0 {
                return Err(Error::validation(format!(
                    "generator at bus {id}: quadratic cost coefficient must be >= 0"
                )));
            }
            if !gen_buses.insert(g.bus) {
                return Err(Error::validation(format!("more than one generator at AC bus {id}")));
            }
        }
        for l in &self.ac_lines {
            if l.from >= n || l.to >= n {
                return Err(Error::validation("AC line references a missing bus"));
            }
            if l.from == l.to {
                return Err(Error::validation(format!(
                    "AC line {0}-{0} connects a bus to itself",
                    self.ac_buses[l.from].id
                )));
            }
            if let Some(s) = l.s_max {
                if !(s > 0.0) {
                    return Err(Error::validation("AC line s_max must be positive"));
                }
            }
        }
        if n > 0 {
            let comps = components(n, self.ac_lines.iter().map(|l| (l.from, l.to)));
            if comps.len() != 1 {
                return Err(Error::validation(format!(
                    "AC network is disconnected ({} islands)",
                    comps.len()
                )));
            }
            let slacks = self.ac_buses.iter().filter(|b| b.is_slack).count();
            if slacks != 1 {
                return Err(Error::validation(format!(
                    "AC network needs exactly one slack bus, found {slacks}"
                )));
            }
        }
        Ok(())
    }

    fn validate_dc(&self) -> Result<()> {
        let n = self.n_dc();
        unique_ids(self.dc_buses.iter().map(|b| b.id), "DC")?;
        for b in &self.dc_buses {
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(Error::validation(format!(
                    "DC bus {}: voltage bounds must satisfy 0 < v_min <= v_max",
                    b.id
                )));
            }
            if b.p_min > b.p_max {
                return Err(Error::validation(format!("DC bus {}: p_min above p_max", b.id)));
            }
            match (b.is_master, b.v_master) {
                (true, Some(v)) if v < b.v_min || v > b.v_max => {
                    return Err(Error::validation(format!(
                        "DC bus {}: master voltage outside its bounds",
                        b.id
                    )));
                }
                (true, None) => {
                    return Err(Error::validation(format!(
                        "DC bus {}: master bus without v_master",
                        b.id
                    )));
                }
                (false, Some(_)) => {
                    return Err(Error::validation(format!(
                        "DC bus {}: v_master given on a non-master bus",
                        b.id
                    )));
                }
                _ => {}
            }
        }
        for l in &self.dc_lines {
            if l.from >= n || l.to >= n {
                return Err(Error::validation("DC line references a missing bus"));
            }
            if l.from == l.to {
                return Err(Error::validation("DC line connects a bus to itself"));
            }
            if !(l.conductance > 0.0 && l.p_max > 0.0) {
                return Err(Error::validation("DC line conductance and p_max must be positive"));
            }
        }
        for d in &self.dcdc_converters {
            if d.bus_k >= n || d.bus_m >= n || d.bus_k == d.bus_m {
                return Err(Error::validation("DC/DC converter needs two distinct DC buses"));
            }
            if d.delta < 0.0 || d.beta < 0.0 || d.gamma < 0.0 {
                return Err(Error::validation("DC/DC loss factors must be >= 0"));
            }
            if !(d.q_max > 0.0) {
                return Err(Error::validation("DC/DC q_max must be positive"));
            }
        }
        if n > 0 {
            let masters = self.dc_buses.iter().filter(|b| b.is_master).count();
            if masters != 1 {
                return Err(Error::validation(format!(
                    "DC network needs exactly one master bus, found {masters}"
                )));
            }
            let edges = self
                .dc_lines
                .iter()
                .map(|l| (l.from, l.to))
                .chain(self.dcdc_converters.iter().map(|d| (d.bus_k, d.bus_m)));
            let comps = components(n, edges);
            if comps.len() != 1 {
                return Err(Error::validation(format!(
                    "DC network is disconnected ({} islands)",
                    comps.len()
                )));
            }
        }
        Ok(())
    }

    fn validate_converters(&self) -> Result<()> {
        let mut dc_terminals = BTreeSet::new();
        let mut ac_terminals = BTreeSet::new();
        for c in &self.acdc_converters {
            if c.dc_bus >= self.n_dc() {
                return Err(Error::validation("AC/DC converter references a missing DC bus"));
            }
            if !dc_terminals.insert(c.dc_bus) {
                return Err(Error::validation(format!(
                    "DC bus {} has more than one AC/DC converter",
                    self.dc_buses[c.dc_bus].id
                )));
            }
            if !(c.efficiency > 0.0 && c.efficiency <= 1.0) {
                return Err(Error::validation("converter efficiency must lie in (0, 1]"));
            }
            if !(c.s_conv > 0.0) {
                return Err(Error::validation("converter capacity must be positive"));
            }
            if let Some(ac) = c.ac_bus {
                if ac >= self.n_ac() {
                    return Err(Error::validation("AC/DC converter references a missing AC bus"));
                }
                if !ac_terminals.insert(ac) {
                    return Err(Error::validation(format!(
                        "AC bus {} has more than one AC/DC converter",
                        self.ac_buses[ac].id
                    )));
                }
                if self.generator_at(ac).is_some() {
                    return Err(Error::validation(format!(
                        "AC bus {} hosts both a generator and a converter",
                        self.ac_buses[ac].id
                    )));
                }
            }
        }
        let mut wind_buses = BTreeSet::new();
        for w in &self.wind {
            if w.dc_bus >= self.n_dc() {
                return Err(Error::validation("wind injection references a missing DC bus"));
            }
            if !(w.p_wind >= 0.0) {
                return Err(Error::validation("wind output must be >= 0"));
            }
            if !wind_buses.insert(w.dc_bus) {
                return Err(Error::validation("more than one wind injection on a DC bus"));
            }
            if let Some(c) = self.converter_at_dc(w.dc_bus) {
                if self.acdc_converters[c].ac_bus.is_some() {
                    return Err(Error::validation(format!(
                        "wind bus {} is also coupled to the AC grid",
                        self.dc_buses[w.dc_bus].id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Express the case on another power base. Voltage bases are unchanged, so
    /// powers scale by `old/new` and admittances by `old/new` as well.
    pub fn rebase(&self, new_base: f64) -> NetworkCase {
        let k = self.base_mva / new_base;
        let mut c = self.clone();
        c.base_mva = new_base;
        for b in &mut c.ac_buses {
            b.p_load *= k;
            b.q_load *= k;
        }
        for g in &mut c.generators {
            g.p_min *= k;
            g.p_max *= k;
            g.q_min *= k;
            g.q_max *= k;
            // cost must be invariant: c2 (P/k)^2 == c2' P^2
            g.c2 /= k * k;
            g.c1 /= k;
        }
        for l in &mut c.ac_lines {
            l.series_admittance *= k;
            l.shunt_admittance *= k;
            l.s_max = l.s_max.map(|s| s * k);
        }
        for b in &mut c.dc_buses {
            b.p_min *= k;
            b.p_max *= k;
        }
        for l in &mut c.dc_lines {
            l.conductance *= k;
            l.p_max *= k;
        }
        for cv in &mut c.acdc_converters {
            cv.s_conv *= k;
        }
        for d in &mut c.dcdc_converters {
            // loss = delta + beta q + gamma q^2 in the same base as q
            d.delta *= k;
            d.gamma /= k;
            d.q_max *= k;
        }
        for w in &mut c.wind {
            w.p_wind *= k;
        }
        c
    }
}

fn unique_ids(ids: impl Iterator<Item = usize>, kind: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::validation(format!("duplicate {kind} bus id {id}")));
        }
    }
    Ok(())
}

/// Connected components by union-find; returns one representative list per component.
pub(crate) fn components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Fix DC injection bounds implied by the wind farms and pass-through buses.
///
/// A wind bus gets `p_min = p_max = eta * p_wind`, where `eta` is the efficiency of
/// the collector converter on that bus (1 when the farm feeds the DC bus
/// directly). A non-master bus with no converter, no wind and bounds that
/// straddle zero carries no power of its own and is fixed at zero.
pub fn normalize_wind(case: &NetworkCase) -> Result<NetworkCase> {
    let mut out = case.clone();
    let mut wind_buses = BTreeSet::new();
    for w in &case.wind {
        let eta = case
            .converter_at_dc(w.dc_bus)
            .map(|c| case.acdc_converters[c].efficiency)
            .unwrap_or(1.0);
        let target = eta * w.p_wind;
        let bus = &mut out.dc_buses[w.dc_bus];
        if bus.p_min == bus.p_max && (bus.p_min - target).abs() > 1e-9 * target.abs().max(1.0) {
            return Err(Error::validation(format!(
                "wind bus {} is fixed at {} p.u. but the wind farm delivers {} p.u.",
                bus.id, bus.p_min, target
            )));
        }
        bus.p_min = target;
        bus.p_max = target;
        wind_buses.insert(w.dc_bus);
    }
    for (i, bus) in out.dc_buses.iter_mut().enumerate() {
        if wind_buses.contains(&i) || case.converter_at_dc(i).is_some() || bus.is_master {
            continue;
        }
        if bus.p_min <= 0.0 && bus.p_max >= 0.0 {
            bus.p_min = 0.0;
            bus.p_max = 0.0;
        }
    }
    Ok(out)
}
