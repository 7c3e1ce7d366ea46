//! Nodal admittance matrices and the real symmetric coefficient matrices whose
//! trace inner products with the lifted voltage matrix give bus injections,
//! squared voltage magnitudes and line flows.
//!
//! AC voltages are lifted as `X = [Re V; Im V]` (length `2n`) and `W = X X^T`;
//! DC voltages are real and `W = V V^T`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::network::NetworkCase;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Matrices for the AC side. Line vectors are indexed like `case.ac_lines`; entry
/// `[0]` is the flow measured at `from` towards `to`, `[1]` the reverse.
#[derive(Debug, Clone)]
pub struct AcCoefficients {
    pub n: usize,
    pub admittance: ComplexMatrix,
    pub bus_p: Vec<DMatrix<f64>>,
    pub bus_q: Vec<DMatrix<f64>>,
    pub bus_v: Vec<DMatrix<f64>>,
    pub line_p: Vec<[DMatrix<f64>; 2]>,
    pub line_q: Vec<[DMatrix<f64>; 2]>,
}

/// Matrices for the DC side. `line_flow[l][0]` is the flow from `from` to `to`.
#[derive(Debug, Clone)]
pub struct DcCoefficients {
    pub n: usize,
    pub conductance: DMatrix<f64>,
    pub bus_p: Vec<DMatrix<f64>>,
    pub bus_v: Vec<DMatrix<f64>>,
    pub line_flow: Vec<[DMatrix<f64>; 2]>,
}

#[derive(Debug, Clone, Default)]
pub struct CoefficientSet {
    pub ac: Option<AcCoefficients>,
    pub dc: Option<DcCoefficients>,
}

impl CoefficientSet {
    pub fn build(case: &NetworkCase) -> Self {
        CoefficientSet {
            ac: case.has_ac().then(|| build_ac_coefficients(case)),
            dc: case.has_dc().then(|| build_dc_coefficients(case)),
        }
    }
}

/// Standard nodal assembly of the complex bus admittance matrix.
pub fn build_ac_admittance(case: &NetworkCase) -> ComplexMatrix {
    let n = case.n_ac();
    let mut y = ComplexMatrix::zeros(n, n);
    for line in &case.ac_lines {
        let (l, m) = (line.from, line.to);
        let ys = line.series_admittance;
        let ysh = line.shunt_admittance;
        y[(l, l)] += ys + ysh;
        y[(m, m)] += ys + ysh;
        y[(l, m)] -= ys;
        y[(m, l)] -= ys;
    }
    y
}

pub fn build_dc_conductance(case: &NetworkCase) -> DMatrix<f64> {
    let n = case.n_dc();
    let mut g = DMatrix::zeros(n, n);
    for line in &case.dc_lines {
        let (f, t) = (line.from, line.to);
        g[(f, f)] += line.conductance;
        g[(t, t)] += line.conductance;
        g[(f, t)] -= line.conductance;
        g[(t, f)] -= line.conductance;
    }
    g
}

/// `Tr(P X X^T) = Re{V^H ...}` lift of a complex matrix `A` for active power.
pub fn lift_active(a: &ComplexMatrix) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (aij, aji) = (a[(i, j)], a[(j, i)]);
            let re_sym = 0.5 * (aij.re + aji.re);
            out[(i, j)] = re_sym;
            out[(i + n, j + n)] = re_sym;
            out[(i, j + n)] = 0.5 * (aji.im - aij.im);
            out[(i + n, j)] = 0.5 * (aij.im - aji.im);
        }
    }
    out
}

/// Reactive-power counterpart of [`lift_active`].
pub fn lift_reactive(a: &ComplexMatrix) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (aij, aji) = (a[(i, j)], a[(j, i)]);
            let im_sym = -0.5 * (aij.im + aji.im);
            out[(i, j)] = im_sym;
            out[(i + n, j + n)] = im_sym;
            out[(i, j + n)] = -0.5 * (aij.re - aji.re);
            out[(i + n, j)] = -0.5 * (aji.re - aij.re);
        }
    }
    out
}

fn row_selector(y: &ComplexMatrix, k: usize) -> ComplexMatrix {
    let n = y.nrows();
    let mut out = ComplexMatrix::zeros(n, n);
    out.set_row(k, &y.row(k));
    out
}

/// `(ybar + y) e_l e_l^T - y e_l e_m^T`
fn line_selector(n: usize, l: usize, m: usize, y: Complex64, ybar: Complex64) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(n, n);
    out[(l, l)] = ybar + y;
    out[(l, m)] = -y;
    out
}

pub fn build_ac_coefficients(case: &NetworkCase) -> AcCoefficients {
    let n = case.n_ac();
    let admittance = build_ac_admittance(case);
    let mut bus_p = Vec::with_capacity(n);
    let mut bus_q = Vec::with_capacity(n);
    let mut bus_v = Vec::with_capacity(n);
    for k in 0..n {
        let yk = row_selector(&admittance, k);
        bus_p.push(lift_active(&yk));
        bus_q.push(lift_reactive(&yk));
        let mut mk = DMatrix::zeros(2 * n, 2 * n);
        mk[(k, k)] = 1.0;
        mk[(k + n, k + n)] = 1.0;
        bus_v.push(mk);
    }
    let mut line_p = Vec::with_capacity(case.ac_lines.len());
    let mut line_q = Vec::with_capacity(case.ac_lines.len());
    for line in &case.ac_lines {
        let (y, ybar) = (line.series_admittance, line.shunt_admittance);
        let fwd = line_selector(n, line.from, line.to, y, ybar);
        let rev = line_selector(n, line.to, line.from, y, ybar);
        line_p.push([lift_active(&fwd), lift_active(&rev)]);
        line_q.push([lift_reactive(&fwd), lift_reactive(&rev)]);
    }
    AcCoefficients {
        n,
        admittance,
        bus_p,
        bus_q,
        bus_v,
        line_p,
        line_q,
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn build_dc_coefficients(case: &NetworkCase) -> DcCoefficients {
    let n = case.n_dc();
    let conductance = build_dc_conductance(case);
    let mut bus_p = Vec::with_capacity(n);
    let mut bus_v = Vec::with_capacity(n);
    for i in 0..n {
        let mut sel = DMatrix::zeros(n, n);
        sel.set_row(i, &conductance.row(i));
        bus_p.push(symmetrize(&sel));
        let mut mi = DMatrix::zeros(n, n);
        mi[(i, i)] = 1.0;
        bus_v.push(mi);
    }
    let line_flow = case
        .dc_lines
        .iter()
        .map(|l| {
            let dir = |f: usize, t: usize| {
                let mut a = DMatrix::zeros(n, n);
                a[(f, f)] = l.conductance;
                a[(f, t)] = -l.conductance;
                symmetrize(&a)
            };
            [dir(l.from, l.to), dir(l.to, l.from)]
        })
        .collect();
    DcCoefficients {
        n,
        conductance,
        bus_p,
        bus_v,
        line_flow,
    }
}

/// `Tr(A W)` for symmetric `A`.
pub fn trace_product(a: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    a.iter().zip(w.iter()).map(|(x, y)| x * y).sum()
}

/// Dense text rendering of a matrix, one row per line.
pub fn dump_matrix(name: &str, a: &DMatrix<f64>) -> String {
    let mut s = format!("{name} {}x{}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:?}", a[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Text dump of every coefficient matrix in the set.
pub fn dump_coefficients(case: &NetworkCase, set: &CoefficientSet) -> String {
    let mut out = String::new();
    if let Some(ac) = &set.ac {
        for (k, bus) in case.ac_buses.iter().enumerate() {
            out += &dump_matrix(&format!("ac_bus {} P", bus.id), &ac.bus_p[k]);
            out += &dump_matrix(&format!("ac_bus {} Q", bus.id), &ac.bus_q[k]);
            out += &dump_matrix(&format!("ac_bus {} M", bus.id), &ac.bus_v[k]);
        }
        for (i, l) in case.ac_lines.iter().enumerate() {
            let (f, t) = (case.ac_buses[l.from].id, case.ac_buses[l.to].id);
            out += &dump_matrix(&format!("ac_line {f}->{t} P"), &ac.line_p[i][0]);
            out += &dump_matrix(&format!("ac_line {f}->{t} Q"), &ac.line_q[i][0]);
            out += &dump_matrix(&format!("ac_line {t}->{f} P"), &ac.line_p[i][1]);
            out += &dump_matrix(&format!("ac_line {t}->{f} Q"), &ac.line_q[i][1]);
        }
    }
    if let Some(dc) = &set.dc {
        for (k, bus) in case.dc_buses.iter().enumerate() {
            out += &dump_matrix(&format!("dc_bus {} P", bus.id), &dc.bus_p[k]);
            out += &dump_matrix(&format!("dc_bus {} M", bus.id), &dc.bus_v[k]);
        }
        for (i, l) in case.dc_lines.iter().enumerate() {
            let (f, t) = (case.dc_buses[l.from].id, case.dc_buses[l.to].id);
            out += &dump_matrix(&format!("dc_line {f}->{t}"), &dc.line_flow[i][0]);
            out += &dump_matrix(&format!("dc_line {t}->{f}"), &dc.line_flow[i][1]);
        }
    }
    out
}
