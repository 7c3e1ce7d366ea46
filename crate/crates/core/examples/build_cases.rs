//! Regenerates the bundled large cases in `cases/` from the two MATPOWER sources.
//!
//!     cargo run -p mtdc-opf --example build_cases
//!
//! The DC line conductances, the tie-line impedance and the AC attachment points
//! of the DC grid are not part of the public test data and are chosen here.

use std::path::Path;

use anyhow::{Context, Result};
use mtdc_opf::case_file::{
    AcDcConverterRow, AcLineRow, CaseFile, DcBusRow, DcDcConverterRow, DcLineRow, WindRow,
};
use mtdc_opf::matpower::{parse_tables, tables_to_case_file};

const OFFSET: usize = 39;

/// Floor on branch resistance (p.u.). A generator behind a lossless transformer
/// leaves the relaxation with a whole face of optimal W matrices, and the
/// interior-point method returns a higher-rank point from its interior.
const MIN_R: f64 = 1e-3;

fn read_m(dir: &Path, name: &str) -> Result<CaseFile> {
    let text = std::fs::read_to_string(dir.join(format!("{name}.m")))
        .with_context(|| format!("reading {name}.m"))?;
    let mut tables = parse_tables(&text)?;
    if let Some(branch) = tables.tables.get_mut("branch") {
        for row in branch.iter_mut() {
            row[2] = row[2].max(MIN_R);
        }
    }
    Ok(tables_to_case_file(&tables, name)?)
}

/// IEEE 39 plus IEEE 9 (renumbered 40..48) joined by a 30 MVA tie line 6 - 46.
fn combined_ac(dir: &Path) -> Result<CaseFile> {
    let mut ac = read_m(dir, "case39")?;
    let small = read_m(dir, "case9")?;
    ac.name = "ieee39_9".into();
    for mut b in small.ac_buses {
        b.id += OFFSET;
        b.is_slack = false;
        ac.ac_buses.push(b);
    }
    for mut g in small.generators {
        g.bus += OFFSET;
        ac.generators.push(g);
    }
    for mut l in small.ac_lines {
        l.from += OFFSET;
        l.to += OFFSET;
        ac.ac_lines.push(l);
    }
    let (r, x) = (0.01, 0.085);
    let z2 = r * r + x * x;
    ac.ac_lines.push(AcLineRow {
        from: 6,
        to: 7 + OFFSET,
        series_admittance: [r / z2, -x / z2],
        shunt_admittance: [0.0, 0.0],
        s_max: Some(30.0),
    });
    Ok(ac)
}

fn dc_bus(id: usize, p: f64) -> DcBusRow {
    DcBusRow {
        id,
        v_min: 0.9,
        v_max: 1.1,
        p_min: -p,
        p_max: p,
        is_master: id == 1,
        v_master: (id == 1).then_some(0.98),
    }
}

/// Reduced 8-bus DC grid with a DC/DC converter between buses 3 and 8 and a
/// 700 MW wind farm behind the converter at bus 6.
fn dc_grid(attach: [Option<usize>; 5]) -> CaseFile {
    let dc_buses = vec![
        dc_bus(1, 300.0),
        dc_bus(2, 300.0),
        dc_bus(3, 300.0),
        dc_bus(4, 200.0),
        dc_bus(5, 200.0),
        DcBusRow {
            p_min: 700.0,
            p_max: 700.0,
            ..dc_bus(6, 0.0)
        },
        dc_bus(7, 0.0),
        dc_bus(8, 0.0),
    ];
    // (from, to, conductance p.u., limit MW)
    let lines = [
        (1, 6, 200.0, 300.0),
        (2, 6, 700.0, 300.0),
        (3, 6, 530.0, 300.0),
        (1, 3, 530.0, 300.0),
        (1, 4, 940.0, 90.0),
        (4, 5, 190.0, 300.0),
        (5, 7, 1000.0, 300.0),
        (7, 8, 900.0, 300.0),
        (3, 8, 500.0, 300.0),
        (1, 2, 300.0, 300.0),
    ];
    let caps = [500.0, 360.55, 224.0, 283.0, 283.0];
    let mut acdc_converters: Vec<_> = caps
        .iter()
        .zip(attach)
        .enumerate()
        .map(|(i, (&s_conv, ac_bus))| AcDcConverterRow {
            ac_bus,
            dc_bus: i + 1,
            efficiency: 1.0,
            s_conv,
        })
        .collect();
    acdc_converters.push(AcDcConverterRow {
        ac_bus: None,
        dc_bus: 6,
        efficiency: 1.0,
        s_conv: 1000.0,
    });
    CaseFile {
        name: "cigre_b4_dc8".into(),
        base_mva: 100.0,
        ac_buses: vec![],
        generators: vec![],
        ac_lines: vec![],
        dc_buses,
        dc_lines: lines
            .iter()
            .map(|&(from, to, conductance, p_max)| DcLineRow {
                from,
                to,
                conductance,
                p_max,
            })
            .collect(),
        acdc_converters,
        dcdc_converters: vec![DcDcConverterRow {
            bus_k: 3,
            bus_m: 8,
            delta: 0.0,
            beta: 0.05,
            gamma: 0.03,
            q_max: 200.0,
        }],
        wind: vec![WindRow {
            dc_bus: 6,
            p_wind: 700.0,
        }],
    }
}

fn write(dir: &Path, file: &CaseFile) -> Result<()> {
    // Round-trip through the validator before writing.
    let case = file.clone().into_case()?;
    case.validate()?;
    let path = dir.join(format!("{}.json", file.name));
    std::fs::write(&path, serde_json::to_string_pretty(file)? + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("cases");
    let ac = combined_ac(&dir)?;
    write(&dir, &ac)?;
    write(&dir, &dc_grid([None; 5]))?;

    let dc = dc_grid([Some(17), Some(2), Some(14), Some(6 + OFFSET), Some(8 + OFFSET)]);
    let hybrid = CaseFile {
        name: "hybrid_39_9_mtdc".into(),
        dc_buses: dc.dc_buses,
        dc_lines: dc.dc_lines,
        acdc_converters: dc.acdc_converters,
        dcdc_converters: dc.dcdc_converters,
        wind: dc.wind,
        ..ac
    };
    write(&dir, &hybrid)?;
    Ok(())
}
