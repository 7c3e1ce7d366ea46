//! Elimination of free variables: each one is solved out of a row it appears in
//! and substituted into the remaining rows and the objective. The eliminated
//! rows' multipliers and the free values are reconstructed afterwards.

use nalgebra::DMatrix;

use super::compile::{StandardForm, StdRow};
use crate::error::{Error, Result};
use crate::relaxation::SparseSym;

struct Step {
    var: usize,
    pivot: f64,
    row: StdRow,
    rhs: f64,
    orig_row: usize,
    column: Vec<(usize, f64)>,
    cost: f64,
}

pub(super) struct Elimination {
    steps: Vec<Step>,
    /// Original row index of every row of the reduced form.
    kept_rows: Vec<usize>,
    n_rows: usize,
    n_free: usize,
}

fn axpy_row(dst: &mut StdRow, k: f64, src: &StdRow) {
    for (b, a) in &src.psd {
        let pos = match dst.psd.iter().position(|(x, _)| x == b) {
            Some(p) => p,
            None => {
                dst.psd.push((*b, SparseSym::new(a.dim)));
                dst.psd.len() - 1
            }
        };
        let target = &mut dst.psd[pos].1;
        target.entries.extend(a.entries.iter().map(|&(i, j, v)| (i, j, k * v)));
        target.canonicalize();
    }
    dst.psd.retain(|(_, a)| !a.is_empty());
    dst.psd.sort_by_key(|(b, _)| *b);
    merge(&mut dst.lp, k, &src.lp);
    merge(&mut dst.free, k, &src.free);
}

fn merge(dst: &mut Vec<(usize, f64)>, k: f64, src: &[(usize, f64)]) {
    for &(j, v) in src {
        match dst.iter_mut().find(|e| e.0 == j) {
            Some(e) => e.1 += k * v,
            None => dst.push((j, k * v)),
        }
    }
    dst.retain(|e| e.1 != 0.0);
    dst.sort_by_key(|e| e.0);
}

fn free_coef(row: &StdRow, j: usize) -> f64 {
    row.free.iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
}

fn row_len(row: &StdRow) -> usize {
    row.psd.iter().map(|(_, a)| a.entries.len()).sum::<usize>() + row.lp.len() + row.free.len()
}

/// Reduce `form` to an equivalent problem without free variables.
pub(super) fn eliminate_free(form: &StandardForm) -> Result<(StandardForm, Elimination)> {
    let mut rows: Vec<Option<StdRow>> = form.rows.iter().cloned().map(Some).collect();
    let mut b = form.b.clone();
    let mut obj = StdRow {
        psd: form
            .c_psd
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_empty())
            .map(|(i, a)| (i, a.clone()))
            .collect(),
        lp: form.c_lp.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(j, v)| (j, *v)).collect(),
        free: form.c_free.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(j, v)| (j, *v)).collect(),
    };
    let mut c0 = form.c0;
    let mut steps = Vec::new();

    for j in 0..form.n_free {
        let occ: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, free_coef(r, j))))
            .filter(|e| e.1 != 0.0)
            .collect();
        let cost = free_coef(&obj, j);
        if occ.is_empty() {
            if cost != 0.0 {
                return Err(Error::Compile(format!(
                    "free variable {j} has a cost but appears in no constraint"
                )));
            }
            continue;
        }
        let big = occ.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        let &(r, pivot) = occ
            .iter()
            .filter(|e| e.1.abs() >= 0.1 * big)
            .min_by_key(|e| (row_len(rows[e.0].as_ref().unwrap()), e.0))
            .unwrap();
        let prow = rows[r].take().unwrap();
        let column: Vec<(usize, f64)> = occ.iter().copied().filter(|e| e.0 != r).collect();
        for &(i, f) in &column {
            let k = -f / pivot;
            let row = rows[i].as_mut().unwrap();
            axpy_row(row, k, &prow);
            row.free.retain(|e| e.0 != j);
            b[i] += k * b[r];
        }
        if cost != 0.0 {
            let k = -cost / pivot;
            axpy_row(&mut obj, k, &prow);
            obj.free.retain(|e| e.0 != j);
            c0 -= k * b[r];
        }
        steps.push(Step {
            var: j,
            pivot,
            row: prow,
            rhs: b[r],
            orig_row: r,
            column,
            cost,
        });
    }

    let mut reduced = StandardForm {
        psd_dims: form.psd_dims.clone(),
        n_lp: form.n_lp,
        n_free: 0,
        c_psd: form.psd_dims.iter().map(|&n| SparseSym::new(n)).collect(),
        c_lp: vec![0.0; form.n_lp],
        c_free: Vec::new(),
        c0,
        rows: Vec::new(),
        b: Vec::new(),
        map: Default::default(),
    };
    for (blk, a) in obj.psd {
        reduced.c_psd[blk] = a;
    }
    for (j, v) in obj.lp {
        reduced.c_lp[j] = v;
    }
    let mut kept_rows = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        let Some(r) = r else { continue };
        if row_len(&r) == 0 {
            if b[i].abs() > 1e-9 * (1.0 + form.b[i].abs()) {
                return Err(Error::Compile(format!(
                    "constraint {} is inconsistent after eliminating free variables",
                    form.map.row_tags[i]
                )));
            }
            continue;
        }
        reduced.rows.push(r);
        reduced.b.push(b[i]);
        reduced.map.row_tags.push(form.map.row_tags[i]);
        kept_rows.push(i);
    }
    Ok((
        reduced,
        Elimination {
            steps,
            kept_rows,
            n_rows: form.n_rows(),
            n_free: form.n_free,
        },
    ))
}

fn row_value(row: &StdRow, x: &[DMatrix<f64>], x_lp: &[f64], x_free: &[f64], skip: usize) -> f64 {
    row.psd.iter().map(|(b, a)| a.dot(&x[*b])).sum::<f64>()
        + row.lp.iter().map(|&(j, v)| v * x_lp[j]).sum::<f64>()
        + row.free.iter().filter(|e| e.0 != skip).map(|&(j, v)| v * x_free[j]).sum::<f64>()
}

impl Elimination {
    /// Free-variable values and full-length multipliers from a reduced solution.
    pub(super) fn restore(&self, x: &[DMatrix<f64>], x_lp: &[f64], y_reduced: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x_free = vec![0.0; self.n_free];
        let mut y = vec![0.0; self.n_rows];
        for (k, &i) in self.kept_rows.iter().enumerate() {
            y[i] = y_reduced[k];
        }
        for s in self.steps.iter().rev() {
            x_free[s.var] = (s.rhs - row_value(&s.row, x, x_lp, &x_free, s.var)) / s.pivot;
            let acc: f64 = s.column.iter().map(|&(i, f)| f * y[i]).sum();
            y[s.orig_row] = (s.cost - acc) / s.pivot;
        }
        (x_free, y)
    }
}
