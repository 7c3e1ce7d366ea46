//! JSON case files.
//!
//! Field names mirror the model types. Powers are in MW / MVAr / MVA, cost
//! coefficients in $/MW^2h, $/MWh and $/h; voltages, admittances, DC conductances
//! and DC/DC loss factors are already per-unit. Buses are referenced by their `id`.
//! See `docs/case-format.md` for the full layout.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::*;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    #[serde(default)]
    pub ac_buses: Vec<AcBusRow>,
    #[serde(default)]
    pub generators: Vec<GeneratorRow>,
    #[serde(default)]
    pub ac_lines: Vec<AcLineRow>,
    #[serde(default)]
    pub dc_buses: Vec<DcBusRow>,
    #[serde(default)]
    pub dc_lines: Vec<DcLineRow>,
    #[serde(default)]
    pub acdc_converters: Vec<AcDcConverterRow>,
    #[serde(default)]
    pub dcdc_converters: Vec<DcDcConverterRow>,
    #[serde(default)]
    pub wind: Vec<WindRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBusRow {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default)]
    pub is_slack: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRow {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcLineRow {
    pub from: usize,
    pub to: usize,
    /// `[re, im]`, per-unit.
    pub series_admittance: [f64; 2],
    #[serde(default)]
    pub shunt_admittance: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBusRow {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default)]
    pub is_master: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_master: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcLineRow {
    pub from: usize,
    pub to: usize,
    pub conductance: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcDcConverterRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ac_bus: Option<usize>,
    pub dc_bus: usize,
    pub efficiency: f64,
    pub s_conv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcDcConverterRow {
    pub bus_k: usize,
    pub bus_m: usize,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindRow {
    pub dc_bus: usize,
    pub p_wind: f64,
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parse and validate a JSON case, converting to per-unit.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let file: CaseFile = serde_json::from_str(text).map_err(json_error)?;
    let case = file.into_case()?;
    case.validate()?;
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

/// Render a case back into the JSON file format (physical units).
pub fn serialize_case(case: &NetworkCase) -> String {
    let file = CaseFile::from_case(case);
    serde_json::to_string_pretty(&file).expect("case file is always serializable")
}

fn lookup(map: &BTreeMap<usize, usize>, id: usize, what: &str) -> Result<usize> {
    map.get(&id)
        .copied()
        .ok_or_else(|| Error::validation(format!("{what} references unknown bus id {id}")))
}

impl CaseFile {
    pub fn into_case(self) -> Result<NetworkCase> {
        let base = self.base_mva;
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::validation("base_mva must be positive"));
        }
        let ac_ids: BTreeMap<usize, usize> =
            self.ac_buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let dc_ids: BTreeMap<usize, usize> =
            self.dc_buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();

        let ac_buses = self
            .ac_buses
            .iter()
            .map(|b| AcBus {
                id: b.id,
                v_min: b.v_min,
                v_max: b.v_max,
                p_load: b.p_load / base,
                q_load: b.q_load / base,
                is_slack: b.is_slack,
            })
            .collect();
        let generators = self
            .generators
            .iter()
            .map(|g| {
                Ok(Generator {
                    bus: lookup(&ac_ids, g.bus, "generator")?,
                    p_min: g.p_min / base,
                    p_max: g.p_max / base,
                    q_min: g.q_min / base,
                    q_max: g.q_max / base,
                    c2: g.c2 * base * base,
                    c1: g.c1 * base,
                    c0: g.c0,
                })
            })
            .collect::<Result<_>>()?;
        let ac_lines = self
            .ac_lines
            .iter()
            .map(|l| {
                Ok(AcLine {
                    from: lookup(&ac_ids, l.from, "AC line")?,
                    to: lookup(&ac_ids, l.to, "AC line")?,
                    series_admittance: Complex64::new(l.series_admittance[0], l.series_admittance[1]),
                    shunt_admittance: Complex64::new(l.shunt_admittance[0], l.shunt_admittance[1]),
                    s_max: l.s_max.map(|s| s / base),
                })
            })
            .collect::<Result<_>>()?;
        let dc_buses = self
            .dc_buses
            .iter()
            .map(|b| DcBus {
                id: b.id,
                v_min: b.v_min,
                v_max: b.v_max,
                p_min: b.p_min / base,
                p_max: b.p_max / base,
                is_master: b.is_master,
                v_master: b.v_master,
            })
            .collect();
        let dc_lines = self
            .dc_lines
            .iter()
            .map(|l| {
                Ok(DcLine {
                    from: lookup(&dc_ids, l.from, "DC line")?,
                    to: lookup(&dc_ids, l.to, "DC line")?,
                    conductance: l.conductance,
                    p_max: l.p_max / base,
                })
            })
            .collect::<Result<_>>()?;
        let acdc_converters = self
            .acdc_converters
            .iter()
            .map(|c| {
                Ok(AcDcConverter {
                    ac_bus: c.ac_bus.map(|id| lookup(&ac_ids, id, "converter")).transpose()?,
                    dc_bus: lookup(&dc_ids, c.dc_bus, "converter")?,
                    efficiency: c.efficiency,
                    s_conv: c.s_conv / base,
                })
            })
            .collect::<Result<_>>()?;
        let dcdc_converters = self
            .dcdc_converters
            .iter()
            .map(|d| {
                Ok(DcDcConverter {
                    bus_k: lookup(&dc_ids, d.bus_k, "DC/DC converter")?,
                    bus_m: lookup(&dc_ids, d.bus_m, "DC/DC converter")?,
                    delta: d.delta,
                    beta: d.beta,
                    gamma: d.gamma,
                    q_max: d.q_max / base,
                })
            })
            .collect::<Result<_>>()?;
        let wind = self
            .wind
            .iter()
            .map(|w| {
                Ok(WindInjection {
                    dc_bus: lookup(&dc_ids, w.dc_bus, "wind injection")?,
                    p_wind: w.p_wind / base,
                })
            })
            .collect::<Result<_>>()?;

        Ok(NetworkCase {
            name: self.name,
            base_mva: base,
            ac_buses,
            generators,
            ac_lines,
            dc_buses,
            dc_lines,
            acdc_converters,
            dcdc_converters,
            wind,
        })
    }

    pub fn from_case(case: &NetworkCase) -> CaseFile {
        let base = case.base_mva;
        let ac_id = |i: usize| case.ac_buses[i].id;
        let dc_id = |i: usize| case.dc_buses[i].id;
        CaseFile {
            name: case.name.clone(),
            base_mva: base,
            ac_buses: case
                .ac_buses
                .iter()
                .map(|b| AcBusRow {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    p_load: b.p_load * base,
                    q_load: b.q_load * base,
                    is_slack: b.is_slack,
                })
                .collect(),
            generators: case
                .generators
                .iter()
                .map(|g| GeneratorRow {
                    bus: ac_id(g.bus),
                    p_min: g.p_min * base,
                    p_max: g.p_max * base,
                    q_min: g.q_min * base,
                    q_max: g.q_max * base,
                    c2: g.c2 / (base * base),
                    c1: g.c1 / base,
                    c0: g.c0,
                })
                .collect(),
            ac_lines: case
                .ac_lines
                .iter()
                .map(|l| AcLineRow {
                    from: ac_id(l.from),
                    to: ac_id(l.to),
                    series_admittance: [l.series_admittance.re, l.series_admittance.im],
                    shunt_admittance: [l.shunt_admittance.re, l.shunt_admittance.im],
                    s_max: l.s_max.map(|s| s * base),
                })
                .collect(),
            dc_buses: case
                .dc_buses
                .iter()
                .map(|b| DcBusRow {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    p_min: b.p_min * base,
                    p_max: b.p_max * base,
                    is_master: b.is_master,
                    v_master: b.v_master,
                })
                .collect(),
            dc_lines: case
                .dc_lines
                .iter()
                .map(|l| DcLineRow {
                    from: dc_id(l.from),
                    to: dc_id(l.to),
                    conductance: l.conductance,
                    p_max: l.p_max * base,
                })
                .collect(),
            acdc_converters: case
                .acdc_converters
                .iter()
                .map(|c| AcDcConverterRow {
                    ac_bus: c.ac_bus.map(ac_id),
                    dc_bus: dc_id(c.dc_bus),
                    efficiency: c.efficiency,
                    s_conv: c.s_conv * base,
                })
                .collect(),
            dcdc_converters: case
                .dcdc_converters
                .iter()
                .map(|d| DcDcConverterRow {
                    bus_k: dc_id(d.bus_k),
                    bus_m: dc_id(d.bus_m),
                    delta: d.delta,
                    beta: d.beta,
                    gamma: d.gamma,
                    q_max: d.q_max * base,
                })
                .collect(),
            wind: case
                .wind
                .iter()
                .map(|w| WindRow {
                    dc_bus: dc_id(w.dc_bus),
                    p_wind: w.p_wind * base,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONVERTER_ROW: &str = r#"{
        "base_mva": 100,
        "dc_buses": [
            {"id": 1, "v_min": 0.9, "v_max": 1.1, "p_min": -300, "p_max": 300,
             "is_master": true, "v_master": 0.98},
            {"id": 2, "v_min": 0.9, "v_max": 1.1, "p_min": -300, "p_max": 300}
        ],
        "dc_lines": [{"from": 1, "to": 2, "conductance": 50.0, "p_max": 300}],
        "acdc_converters": [{"dc_bus": 1, "efficiency": 1.0, "s_conv": 500}]
    }"#;

    #[test]
    fn converter_capacity_in_per_unit() {
        let case = parse_case(CONVERTER_ROW).unwrap();
        assert_eq!(case.acdc_converters[0].s_conv, 5.0);
        assert_eq!(case.dc_buses[0].p_min, -3.0);
        assert_eq!(case.dc_buses[0].p_max, 3.0);
    }

    #[test]
    fn malformed_field_reports_location() {
        let bad = CONVERTER_ROW.replace("\"conductance\": 50.0", "\"conductance\": \"fifty\"");
        match parse_case(&bad) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 8);
                assert!(message.contains("invalid type"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_bus_reference() {
        let bad = CONVERTER_ROW.replace("\"dc_bus\": 1,", "\"dc_bus\": 7,");
        assert!(matches!(parse_case(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_bus_list() {
        assert!(matches!(
            parse_case(r#"{"base_mva": 100, "ac_buses": []}"#),
            Err(Error::Validation(_))
        ));
    }
}
