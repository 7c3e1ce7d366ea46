//! Importer for MATPOWER-style `.m` case data (bus, gen, branch and an optional
//! polynomial gencost table). Only the AC side is read.
//!
//! Transformer tap ratios and phase shifts are not modelled and are ignored;
//! bus shunts are rejected.

use std::collections::BTreeMap;

use crate::case_file::{AcBusRow, AcLineRow, CaseFile, GeneratorRow};
use crate::error::{Error, Result};
use crate::network::NetworkCase;

// column indices, MATPOWER convention
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const VMAX: usize = 11;
const VMIN: usize = 12;

const GEN_BUS: usize = 0;
const QMAX: usize = 3;
const QMIN: usize = 4;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;

const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const RATE_A: usize = 5;
const BR_STATUS: usize = 10;

const REF: usize = 3;

/// Tables extracted from a `.m` file, rows as plain numbers.
#[derive(Debug, Default)]
pub struct MatpowerTables {
    pub base_mva: f64,
    pub tables: BTreeMap<String, Vec<Vec<f64>>>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: 1,
        message: message.into(),
    }
}

pub fn parse_tables(text: &str) -> Result<MatpowerTables> {
    let mut out = MatpowerTables::default();
    let mut current: Option<(String, Vec<Vec<f64>>)> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some((name, rows)) = current.as_mut() {
            let (body, closed) = match line.find(']') {
                Some(i) => (&line[..i], true),
                None => (line, false),
            };
            for chunk in body.split(';') {
                let chunk = chunk.trim();
                if chunk.is_empty() {
                    continue;
                }
                let row = chunk
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| parse_error(lineno, format!("bad number {t:?} in mpc.{name}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
            }
            if closed {
                let (name, rows) = current.take().unwrap();
                out.tables.insert(name, rows);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.") {
            let Some((name, value)) = rest.split_once('=') else {
                continue;
            };
            let name = name.trim().to_string();
            let value = value.trim();
            if name == "baseMVA" {
                out.base_mva = value
                    .trim_end_matches(';')
                    .trim()
                    .parse()
                    .map_err(|_| parse_error(lineno, "bad baseMVA"))?;
            } else if let Some(body) = value.strip_prefix('[') {
                current = Some((name, Vec::new()));
                // allow data on the opening line
                let (_, rows) = current.as_mut().unwrap();
                let (body, closed) = match body.find(']') {
                    Some(i) => (&body[..i], true),
                    None => (body, false),
                };
                for chunk in body.split(';').map(str::trim).filter(|c| !c.is_empty()) {
                    let row = chunk
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                        .map(|t| t.parse::<f64>().map_err(|_| parse_error(lineno, "bad number")))
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(row);
                }
                if closed {
                    let (name, rows) = current.take().unwrap();
                    out.tables.insert(name, rows);
                }
            }
        }
    }
    if current.is_some() {
        return Err(parse_error(text.lines().count(), "unterminated matrix"));
    }
    if !(out.base_mva > 0.0) {
        return Err(parse_error(1, "missing mpc.baseMVA"));
    }
    Ok(out)
}

fn col(row: &[f64], i: usize, table: &str) -> Result<f64> {
    row.get(i)
        .copied()
        .ok_or_else(|| Error::validation(format!("mpc.{table} row has too few columns")))
}

/// Convert MATPOWER tables into the case-file representation.
pub fn tables_to_case_file(t: &MatpowerTables, name: &str) -> Result<CaseFile> {
    let empty = Vec::new();
    let bus = t.tables.get("bus").ok_or_else(|| Error::validation("mpc.bus missing"))?;
    let gen = t.tables.get("gen").unwrap_or(&empty);
    let branch = t.tables.get("branch").unwrap_or(&empty);
    let gencost = t.tables.get("gencost");

    let mut ac_buses = Vec::with_capacity(bus.len());
    for r in bus {
        if col(r, GS, "bus")? != 0.0 || col(r, BS, "bus")? != 0.0 {
            return Err(Error::validation(format!(
                "bus {} has a shunt; bus shunts are not supported",
                r[BUS_I]
            )));
        }
        ac_buses.push(AcBusRow {
            id: col(r, BUS_I, "bus")? as usize,
            v_min: col(r, VMIN, "bus")?,
            v_max: col(r, VMAX, "bus")?,
            p_load: col(r, PD, "bus")?,
            q_load: col(r, QD, "bus")?,
            is_slack: col(r, BUS_TYPE, "bus")? as usize == REF,
        });
    }

    let mut generators = Vec::new();
    for (i, r) in gen.iter().enumerate() {
        if col(r, GEN_STATUS, "gen")? <= 0.0 {
            continue;
        }
        let (c2, c1, c0) = match gencost.and_then(|g| g.get(i)) {
            None => (0.0, 0.0, 0.0),
            Some(c) => {
                if col(c, 0, "gencost")? as usize != 2 {
                    return Err(Error::validation("only polynomial gencost (model 2) is supported"));
                }
                let n = col(c, 3, "gencost")? as usize;
                let coeffs = c.get(4..4 + n).ok_or_else(|| Error::validation("short gencost row"))?;
                match coeffs {
                    [c2, c1, c0] => (*c2, *c1, *c0),
                    [c1, c0] => (0.0, *c1, *c0),
                    [c0] => (0.0, 0.0, *c0),
                    _ => return Err(Error::validation("gencost must be at most quadratic")),
                }
            }
        };
        generators.push(GeneratorRow {
            bus: col(r, GEN_BUS, "gen")? as usize,
            p_min: col(r, PMIN, "gen")?,
            p_max: col(r, PMAX, "gen")?,
            q_min: col(r, QMIN, "gen")?,
            q_max: col(r, QMAX, "gen")?,
            c2,
            c1,
            c0,
        });
    }

    let mut ac_lines = Vec::new();
    for r in branch {
        if r.len() > BR_STATUS && r[BR_STATUS] <= 0.0 {
            continue;
        }
        let (res, x, b) = (col(r, BR_R, "branch")?, col(r, BR_X, "branch")?, col(r, BR_B, "branch")?);
        let z2 = res * res + x * x;
        if z2 == 0.0 {
            return Err(Error::validation("branch with zero impedance"));
        }
        let rate = col(r, RATE_A, "branch")?;
        ac_lines.push(AcLineRow {
            from: col(r, F_BUS, "branch")? as usize,
            to: col(r, T_BUS, "branch")? as usize,
            series_admittance: [res / z2, -x / z2],
            shunt_admittance: [0.0, b / 2.0],
            s_max: (rate > 0.0).then_some(rate),
        });
    }

    Ok(CaseFile {
        name: name.to_string(),
        base_mva: t.base_mva,
        ac_buses,
        generators,
        ac_lines,
        dc_buses: vec![],
        dc_lines: vec![],
        acdc_converters: vec![],
        dcdc_converters: vec![],
        wind: vec![],
    })
}

/// Import a MATPOWER `.m` case as a validated AC-only network.
pub fn import_matpower(text: &str, name: &str) -> Result<NetworkCase> {
    let tables = parse_tables(text)?;
    let case = tables_to_case_file(&tables, name)?.into_case()?;
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "
function mpc = tiny
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	90	30	0	0	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0.2	250	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	1500	0	3	0.11	5	150;
];
";

    #[test]
    fn imports_tables() {
        let case = import_matpower(TINY, "tiny").unwrap();
        assert_eq!(case.n_ac(), 2);
        assert!(case.ac_buses[0].is_slack);
        assert!((case.ac_buses[1].p_load - 0.9).abs() < 1e-15);
        let g = &case.generators[0];
        assert!((g.c2 - 0.11 * 1e4).abs() < 1e-9);
        assert!((g.c1 - 500.0).abs() < 1e-12);
        let l = &case.ac_lines[0];
        assert!((l.series_admittance.re - 0.01 / 0.0101).abs() < 1e-12);
        assert!((l.series_admittance.im + 0.1 / 0.0101).abs() < 1e-12);
        assert_eq!(l.shunt_admittance.im, 0.1);
        assert_eq!(l.s_max, Some(2.5));
    }

    #[test]
    fn bad_number_is_parse_error() {
        let bad = TINY.replace("0.01\t0.1", "0.01\tx0.1");
        assert!(matches!(import_matpower(&bad, "t"), Err(Error::Parse { line: 13, .. })));
    }
}
