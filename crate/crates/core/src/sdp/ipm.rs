//! Infeasible primal-dual path-following method with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! The data are equilibrated internally (unit-norm rows, `b` and `C` divided by
//! their norms); every reported quantity refers to the original data.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use super::presolve::{eliminate_free, Elimination};
use super::linalg::{cholesky_in_place, cholesky_solve, inner, max_step, psd_factor, symmetrize};
use super::{ConicSolution, IterationLog, RawSolution, ScalarMap, SolveStatus, SolverOptions, StandardForm};
use crate::error::{Error, Result};
use crate::relaxation::SparseSym;

const INFEAS_TOL: f64 = 1e-8;
const PIVOT_TINY: f64 = 1e-14;

struct RowTerm {
    row: usize,
    a: SparseSym,
    support: Vec<usize>,
    local: DMatrix<f64>,
}

impl RowTerm {
    fn new(row: usize, a: SparseSym) -> Self {
        let mut support: Vec<usize> = a.entries.iter().flat_map(|&(i, j, _)| [i, j]).collect();
        support.sort_unstable();
        support.dedup();
        let s = support.len();
        let mut local = DMatrix::zeros(s, s);
        for &(i, j, v) in &a.entries {
            let (p, q) = (
                support.binary_search(&i).unwrap(),
                support.binary_search(&j).unwrap(),
            );
            local[(p, q)] += v;
            if p != q {
                local[(q, p)] += v;
            }
        }
        RowTerm { row, a, support, local }
    }
}

/// Equilibrated copy of the standard form.
struct Data {
    m: usize,
    dims: Vec<usize>,
    block_rows: Vec<Vec<RowTerm>>,
    c: Vec<DMatrix<f64>>,
    lp_cols: Vec<Vec<(usize, f64)>>,
    c_lp: DVector<f64>,
    b: DVector<f64>,
    row_scale: DVector<f64>,
    b_scale: f64,
    c_scale: f64,
    c0: f64,
    b_norm: f64,
    c_norm: f64,
}

fn sparse_norm2(a: &SparseSym) -> f64 {
    a.entries
        .iter()
        .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
        .sum()
}

impl Data {
    fn new(form: &StandardForm) -> Self {
        let m = form.n_rows();
        let nb = form.psd_dims.len();
        let row_scale = DVector::from_iterator(
            m,
            form.rows.iter().map(|r| {
                let n2: f64 = r.psd.iter().map(|(_, a)| sparse_norm2(a)).sum::<f64>()
                    + r.lp.iter().map(|e| e.1 * e.1).sum::<f64>()
                    + r.free.iter().map(|e| e.1 * e.1).sum::<f64>();
                1.0 / n2.sqrt()
            }),
        );
        let b_orig = DVector::from_column_slice(&form.b);
        let b_eq = b_orig.component_mul(&row_scale);
        let b_scale = b_eq.norm().max(1.0);

        let c_dense: Vec<DMatrix<f64>> = form.c_psd.iter().map(|a| a.to_dense()).collect();
        let c_norm = (c_dense.iter().map(|c| c.norm_squared()).sum::<f64>()
            + form.c_lp.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        let c_scale = c_norm.max(1.0);

        let mut block_rows: Vec<Vec<RowTerm>> = (0..nb).map(|_| Vec::new()).collect();
        let mut lp_cols = vec![Vec::new(); form.n_lp];
        for (i, r) in form.rows.iter().enumerate() {
            let d = row_scale[i];
            for (blk, a) in &r.psd {
                let mut a = a.clone();
                a.entries.iter_mut().for_each(|e| e.2 *= d);
                block_rows[*blk].push(RowTerm::new(i, a));
            }
            for &(j, v) in &r.lp {
                lp_cols[j].push((i, v * d));
            }
        }
        Data {
            m,
            dims: form.psd_dims.clone(),
            block_rows,
            c: c_dense.into_iter().map(|c| c / c_scale).collect(),
            lp_cols,
            c_lp: DVector::from_column_slice(&form.c_lp) / c_scale,
            b: b_eq / b_scale,
            row_scale,
            b_scale,
            c_scale,
            c0: form.c0,
            b_norm: b_orig.norm(),
            c_norm,
        }
    }

    fn apply_a(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.m);
        for (blk, rows) in self.block_rows.iter().enumerate() {
            for t in rows {
                r[t.row] += t.a.dot(&x[blk]);
            }
        }
        for (j, col) in self.lp_cols.iter().enumerate() {
            for &(i, a) in col {
                r[i] += a * xl[j];
            }
        }
        r
    }

    fn apply_at(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let blocks = self
            .block_rows
            .iter()
            .zip(&self.dims)
            .map(|(rows, &n)| {
                let mut s = DMatrix::zeros(n, n);
                for t in rows {
                    let yi = y[t.row];
                    for &(i, j, v) in &t.a.entries {
                        s[(i, j)] += yi * v;
                        if i != j {
                            s[(j, i)] += yi * v;
                        }
                    }
                }
                s
            })
            .collect();
        let lp = DVector::from_iterator(
            self.lp_cols.len(),
            self.lp_cols.iter().map(|col| col.iter().map(|&(i, a)| a * y[i]).sum()),
        );
        (blocks, lp)
    }
}

/// Nesterov-Todd scaling of one block: `W = G G^T`, `G^-1 X G^-T = G^T Z G = diag(lambda)`.
struct NtScaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<NtScaling> {
    let lx = psd_factor(x);
    let lz = psd_factor(z);
    let prod = lz.transpose() * &lx;
    let svd = SVD::new(prod, true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let lambda = svd.singular_values;
    if lambda.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Numerical("iterate left the cone interior".into()));
    }
    let inv_sqrt = lambda.map(|s| 1.0 / s.sqrt());
    let g = &lx * v_t.transpose() * DMatrix::from_diagonal(&inv_sqrt);
    let g_inv = DMatrix::from_diagonal(&inv_sqrt) * u.transpose() * lz.transpose();
    let mut w = &g * g.transpose();
    symmetrize(&mut w);
    Ok(NtScaling { g, g_inv, w, lambda })
}

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    zl: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    dzl: DVector<f64>,
}

struct Residual {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdl: DVector<f64>,
}

struct Factored {
    m: DMatrix<f64>,
    l: DMatrix<f64>,
    /// Symmetric diagonal equilibration: `l` factors `D m D`.
    d: DVector<f64>,
}

impl Factored {
    /// Cholesky solve followed by two steps of iterative refinement.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let once = |r: &DVector<f64>| cholesky_solve(&self.l, &r.component_mul(&self.d)).component_mul(&self.d);
        let mut x = once(rhs);
        for _ in 0..2 {
            let r = rhs - &self.m * &x;
            x += once(&r);
        }
        x
    }
}

fn schur(data: &Data, nt: &[NtScaling], xl: &DVector<f64>, zl: &DVector<f64>) -> DMatrix<f64> {
    let m = data.m;
    let mut mat = DMatrix::zeros(m, m);
    for (blk, rows) in data.block_rows.iter().enumerate() {
        let w = &nt[blk].w;
        for (k, t) in rows.iter().enumerate() {
            let ws = w.select_columns(&t.support);
            let wa = &ws * &t.local;
            let bmat = wa * ws.transpose();
            for t2 in &rows[k..] {
                mat[(t.row, t2.row)] += t2.a.dot(&bmat);
            }
        }
    }
    for (j, col) in data.lp_cols.iter().enumerate() {
        let d = xl[j] / zl[j];
        for (p, &(i, a)) in col.iter().enumerate() {
            for &(i2, a2) in &col[p..] {
                mat[(i.min(i2), i.max(i2))] += d * a * a2;
            }
        }
    }
    for j in 0..m {
        for i in 0..j {
            mat[(j, i)] = mat[(i, j)];
        }
    }
    mat
}

fn factor(m: DMatrix<f64>) -> Result<Factored> {
    let d = DVector::from_fn(m.nrows(), |i, _| {
        let v = m[(i, i)];
        if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }
    });
    let mut l = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i] * d[j]);
    cholesky_in_place(&mut l, PIVOT_TINY);
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Schur complement factorization failed".into()));
    }
    Ok(Factored { m, l, d })
}

fn residual(data: &Data, it: &Iterate) -> Residual {
    let rp = &data.b - data.apply_a(&it.x, &it.xl);
    let (aty, atyl) = data.apply_at(&it.y);
    let rd = data
        .c
        .iter()
        .zip(aty)
        .zip(&it.z)
        .map(|((c, a), z)| c - a - z)
        .collect();
    Residual {
        rp,
        rd,
        rdl: &data.c_lp - atyl - &it.zl,
    }
}

fn direction(
    data: &Data,
    nt: &[NtScaling],
    fac: &Factored,
    it: &Iterate,
    res: &Residual,
    rc: &[DMatrix<f64>],
    rcl: &DVector<f64>,
) -> Direction {
    let dl = it.xl.component_div(&it.zl);
    let tmp: Vec<DMatrix<f64>> = rc
        .iter()
        .zip(&res.rd)
        .zip(nt)
        .map(|((r, d), s)| r - &s.w * d * &s.w)
        .collect();
    let tmpl = rcl - dl.component_mul(&res.rdl);
    let h = &res.rp - data.apply_a(&tmp, &tmpl);
    let dy = fac.solve(&h);
    let (aty, atyl) = data.apply_at(&dy);
    let mut dz: Vec<DMatrix<f64>> = res.rd.iter().zip(aty).map(|(r, a)| r - a).collect();
    let dzl = &res.rdl - atyl;
    let mut dx: Vec<DMatrix<f64>> = rc
        .iter()
        .zip(&dz)
        .zip(nt)
        .map(|((r, d), s)| r - &s.w * d * &s.w)
        .collect();
    dx.iter_mut().for_each(symmetrize);
    dz.iter_mut().for_each(symmetrize);
    let dxl = rcl - dl.component_mul(&dzl);
    Direction {
        dx,
        dxl,
        dy,
        dz,
        dzl,
    }
}

/// Scaled step matrices `G^-1 dX G^-T` and `G^T dZ G`.
fn scaled_dirs(nt: &[NtScaling], d: &Direction) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let dxt = nt
        .iter()
        .zip(&d.dx)
        .map(|(s, dx)| &s.g_inv * dx * s.g_inv.transpose())
        .collect();
    let dzt = nt.iter().zip(&d.dz).map(|(s, dz)| s.g.transpose() * dz * &s.g).collect();
    (dxt, dzt)
}

fn step_limits(nt: &[NtScaling], it: &Iterate, d: &Direction, dxt: &[DMatrix<f64>], dzt: &[DMatrix<f64>]) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for ((s, dx), dz) in nt.iter().zip(dxt).zip(dzt) {
        let n = s.lambda.len();
        let scale = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (s.lambda[i] * s.lambda[j]).sqrt());
        ap = ap.min(max_step(&scale(dx)));
        ad = ad.min(max_step(&scale(dz)));
    }
    for j in 0..it.xl.len() {
        if d.dxl[j] < 0.0 {
            ap = ap.min(-it.xl[j] / d.dxl[j]);
        }
        if d.dzl[j] < 0.0 {
            ad = ad.min(-it.zl[j] / d.dzl[j]);
        }
    }
    (ap, ad)
}

fn initial_point(data: &Data) -> Iterate {
    let mut x = Vec::new();
    let mut z = Vec::new();
    for (blk, rows) in data.block_rows.iter().enumerate() {
        let n = data.dims[blk] as f64;
        let mut xi = 10f64.max(n.sqrt());
        let mut zeta = 10f64.max(n.sqrt()).max(data.c[blk].norm());
        for t in rows {
            let an = sparse_norm2(&t.a).sqrt();
            xi = xi.max(n * (1.0 + data.b[t.row].abs()) / (1.0 + an));
            zeta = zeta.max(an);
        }
        x.push(DMatrix::identity(data.dims[blk], data.dims[blk]) * xi);
        z.push(DMatrix::identity(data.dims[blk], data.dims[blk]) * zeta);
    }
    let nl = data.lp_cols.len();
    let mut xl = DVector::zeros(nl);
    let mut zl = DVector::zeros(nl);
    for (j, col) in data.lp_cols.iter().enumerate() {
        let mut xi: f64 = 10.0;
        let mut zeta = 10f64.max(data.c_lp[j].abs());
        for &(i, a) in col {
            xi = xi.max((1.0 + data.b[i].abs()) / (1.0 + a.abs()));
            zeta = zeta.max(a.abs());
        }
        xl[j] = xi;
        zl[j] = zeta;
    }
    Iterate {
        x,
        xl,
        y: DVector::zeros(data.m),
        z,
        zl,
    }
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap: f64,
    pinf: f64,
    dinf: f64,
}

fn metrics(data: &Data, it: &Iterate, res: &Residual) -> Metrics {
    let k = data.b_scale * data.c_scale;
    let pobj_s = data.c.iter().zip(&it.x).map(|(c, x)| inner(c, x)).sum::<f64>() + data.c_lp.dot(&it.xl);
    let dobj_s = data.b.dot(&it.y);
    let pobj = k * pobj_s + data.c0;
    let dobj = k * dobj_s + data.c0;
    let rp_orig = res.rp.component_div(&data.row_scale) * data.b_scale;
    let rd2 = res.rd.iter().map(|r| r.norm_squared()).sum::<f64>() + res.rdl.norm_squared();
    Metrics {
        pobj,
        dobj,
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        pinf: rp_orig.norm() / (1.0 + data.b_norm),
        dinf: data.c_scale * rd2.sqrt() / (1.0 + data.c_norm),
    }
}

/// `pobj - dobj` minus the residual terms equals `<X, Z> >= 0` at every iterate.
fn weak_duality_slack(data: &Data, it: &Iterate, res: &Residual) -> (f64, f64) {
    let pobj = data.c.iter().zip(&it.x).map(|(c, x)| inner(c, x)).sum::<f64>() + data.c_lp.dot(&it.xl);
    let dobj = data.b.dot(&it.y);
    let resid = res.rd.iter().zip(&it.x).map(|(r, x)| inner(r, x)).sum::<f64>() + res.rdl.dot(&it.xl)
        - res.rp.dot(&it.y);
    (pobj - dobj - resid, pobj.abs() + dobj.abs() + resid.abs())
}

fn complementarity(it: &Iterate) -> f64 {
    it.x.iter().zip(&it.z).map(|(x, z)| inner(x, z)).sum::<f64>() + it.xl.dot(&it.zl)
}

/// Newton steps at fixed mu taken after the tolerances are first met. They pull
/// the iterate back towards the central path, where the distance to the optimal
/// face is O(mu) rather than O(sqrt(mu)), so the returned blocks do not depend
/// on where in the last long step the tolerances happened to be crossed.
const POLISH_STEPS: usize = 2;
const POLISH_SIGMA: f64 = 1.0;

/// Complementarity right-hand side `sigma_mu I - Lambda^2` (minus the
/// second-order term of the predictor when given), mapped back through `G`.
fn centering_rhs(s: &NtScaling, sigma_mu: f64, second_order: Option<(&DMatrix<f64>, &DMatrix<f64>)>) -> DMatrix<f64> {
    let n = s.lambda.len();
    let mut t = match second_order {
        Some((dx, dz)) => {
            let prod = dx * dz;
            -(&prod + prod.transpose()) * 0.5
        }
        None => DMatrix::zeros(n, n),
    };
    for i in 0..n {
        t[(i, i)] += sigma_mu - s.lambda[i] * s.lambda[i];
    }
    let d = DMatrix::from_fn(n, n, |i, j| 2.0 * t[(i, j)] / (s.lambda[i] + s.lambda[j]));
    let mut r = &s.g * d * s.g.transpose();
    symmetrize(&mut r);
    r
}

/// Mehrotra predictor-corrector direction.
fn predictor_corrector(
    data: &Data,
    nt: &[NtScaling],
    fac: &Factored,
    it: &Iterate,
    res: &Residual,
    mu: f64,
    nu: f64,
) -> Direction {
    let rc: Vec<DMatrix<f64>> = it.x.iter().map(|x| -x).collect();
    let rcl = -&it.xl;
    let aff = direction(data, nt, fac, it, res, &rc, &rcl);
    let (dxt_a, dzt_a) = scaled_dirs(nt, &aff);
    let (ap, ad) = step_limits(nt, it, &aff, &dxt_a, &dzt_a);
    let (ap, ad) = (ap.min(1.0), ad.min(1.0));
    let mut mu_aff = 0.0;
    for (b, (x, z)) in it.x.iter().zip(&it.z).enumerate() {
        mu_aff += inner(&(x + &aff.dx[b] * ap), &(z + &aff.dz[b] * ad));
    }
    mu_aff += (&it.xl + &aff.dxl * ap).dot(&(&it.zl + &aff.dzl * ad));
    mu_aff /= nu;
    let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

    let rc: Vec<DMatrix<f64>> = nt
        .iter()
        .enumerate()
        .map(|(b, s)| centering_rhs(s, sigma * mu, Some((&dxt_a[b], &dzt_a[b]))))
        .collect();
    let rcl = DVector::from_fn(it.xl.len(), |j, _| {
        (sigma * mu - it.xl[j] * it.zl[j] - aff.dxl[j] * aff.dzl[j]) / it.zl[j]
    });
    direction(data, nt, fac, it, res, &rc, &rcl)
}

pub fn solve(form: &StandardForm, opts: &SolverOptions) -> Result<ConicSolution> {
    let start = Instant::now();
    let (reduced, elim) = eliminate_free(form)?;
    let data = Data::new(&reduced);
    let nu = form.degree().max(1) as f64;
    let mut it = initial_point(&data);
    let mut log = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut last = (0.0, 0.0);
    let mut stalls = 0;
    // Last iterate meeting the tolerances, and how many centering steps followed it.
    let mut converged: Option<(Iterate, usize, usize)> = None;

    loop {
        let res = residual(&data, &it);
        let met = metrics(&data, &it, &res);
        let mu = complementarity(&it) / nu;
        if cfg!(debug_assertions) {
            let (slack, scale) = weak_duality_slack(&data, &it, &res);
            debug_assert!(
                slack >= -1e-9 * (1.0 + scale),
                "weak duality violated: dual objective exceeds primal beyond residual terms ({slack:e})"
            );
        }
        log.push(IterationLog {
            iteration: iterations,
            primal_objective: met.pobj,
            dual_objective: met.dobj,
            relative_gap: met.gap,
            primal_infeasibility: met.pinf,
            dual_infeasibility: met.dinf,
            mu,
            primal_step: last.0,
            dual_step: last.1,
        });
        if opts.verbose {
            eprintln!(
                "{:>4} {:>+16.9e} {:>+16.9e}  gap {:.2e}  pinf {:.2e}  dinf {:.2e}  mu {:.2e}  step {:.3} {:.3}",
                iterations, met.pobj, met.dobj, met.gap, met.pinf, met.dinf, mu, last.0, last.1
            );
        }
        if !(met.pobj.is_finite() && met.dobj.is_finite() && mu.is_finite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let within = met.gap <= opts.gap_tol && met.pinf <= opts.feas_tol && met.dinf <= opts.feas_tol;
        match (converged.as_mut(), within) {
            (Some(c), true) => {
                *c = (it.clone(), log.len(), c.2 + 1);
                if c.2 >= POLISH_STEPS {
                    status = SolveStatus::Optimal;
                    break;
                }
            }
            (Some(_), false) => {
                // centering lost the tolerances; fall back to the last good iterate
                let (good, len, _) = converged.take().expect("matched Some");
                it = good;
                log.truncate(len);
                iterations = len - 1;
                status = SolveStatus::Optimal;
                break;
            }
            (None, true) => converged = Some((it.clone(), log.len(), 0)),
            (None, false) => {}
        }
        if let Some(s) = infeasibility(&data, &it) {
            status = s;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        if stalls >= 3 {
            status = SolveStatus::NumericalFailure;
            break;
        }

        let nt = match it
            .x
            .iter()
            .zip(&it.z)
            .map(|(x, z)| nt_scaling(x, z))
            .collect::<Result<Vec<_>>>()
        {
            Ok(nt) => nt,
            Err(_) => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };
        let fac = match factor(schur(&data, &nt, &it.xl, &it.zl)) {
            Ok(f) => f,
            Err(_) => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };

        let dir = if converged.is_some() {
            let target = POLISH_SIGMA * mu;
            let rc = nt.iter().map(|s| centering_rhs(s, target, None)).collect::<Vec<_>>();
            let rcl = DVector::from_fn(it.xl.len(), |j, _| (target - it.xl[j] * it.zl[j]) / it.zl[j]);
            direction(&data, &nt, &fac, &it, &res, &rc, &rcl)
        } else {
            predictor_corrector(&data, &nt, &fac, &it, &res, mu, nu)
        };
        let (dxt, dzt) = scaled_dirs(&nt, &dir);
        let (ap, ad) = step_limits(&nt, &it, &dir, &dxt, &dzt);
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) || dir.dy.iter().any(|v| !v.is_finite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }

        for b in 0..it.x.len() {
            it.x[b] += &dir.dx[b] * ap;
            it.z[b] += &dir.dz[b] * ad;
            symmetrize(&mut it.x[b]);
            symmetrize(&mut it.z[b]);
        }
        it.xl += &dir.dxl * ap;
        it.y += &dir.dy * ad;
        it.zl += &dir.dzl * ad;
        iterations += 1;
        last = (ap, ad);
        if ap < 1e-8 && ad < 1e-8 {
            stalls += 1;
        } else {
            stalls = 0;
        }
    }

    let final_log = *log.last().expect("at least one iteration logged");
    let raw = unscale(&data, &it, &elim);
    let (blocks, scalars) = map_back(form, &raw);
    let offending = if status == SolveStatus::Infeasible {
        offending_tags(&reduced, &it.y)
    } else {
        Vec::new()
    };
    Ok(ConicSolution {
        status,
        iterations,
        primal_objective: final_log.primal_objective,
        dual_objective: final_log.dual_objective,
        relative_gap: final_log.relative_gap,
        primal_infeasibility: final_log.primal_infeasibility,
        dual_infeasibility: final_log.dual_infeasibility,
        blocks,
        scalars,
        raw,
        offending,
        log,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Farkas-type certificates on the current iterate.
fn infeasibility(data: &Data, it: &Iterate) -> Option<SolveStatus> {
    let by = data.b.dot(&it.y);
    if by > 0.0 {
        let (aty, atyl) = data.apply_at(&it.y);
        let r2 = aty
            .iter()
            .zip(&it.z)
            .map(|(a, z)| (a + z).norm_squared())
            .sum::<f64>()
            + (atyl + &it.zl).norm_squared();
        if r2.sqrt() / by < INFEAS_TOL {
            return Some(SolveStatus::Infeasible);
        }
    }
    let cx = data.c.iter().zip(&it.x).map(|(c, x)| inner(c, x)).sum::<f64>() + data.c_lp.dot(&it.xl);
    if cx < 0.0 {
        let ax = data.apply_a(&it.x, &it.xl);
        if ax.norm() / -cx < INFEAS_TOL {
            return Some(SolveStatus::Unbounded);
        }
    }
    None
}

fn unscale(data: &Data, it: &Iterate, elim: &Elimination) -> RawSolution {
    let (sb, sc) = (data.b_scale, data.c_scale);
    let x: Vec<DMatrix<f64>> = it.x.iter().map(|x| x * sb).collect();
    let x_lp: Vec<f64> = (&it.xl * sb).iter().copied().collect();
    let y_red: Vec<f64> = it.y.component_mul(&data.row_scale).iter().map(|v| v * sc).collect();
    let (x_free, y) = elim.restore(&x, &x_lp, &y_red);
    RawSolution {
        x,
        x_lp,
        x_free,
        y,
        z: it.z.iter().map(|z| z * sc).collect(),
        z_lp: (&it.zl * sc).iter().copied().collect(),
    }
}

fn map_back(form: &StandardForm, raw: &RawSolution) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let blocks = form
        .map
        .blocks
        .iter()
        .map(|bm| {
            let x = match &bm.anchor {
                Some(t) => t.expand(&raw.x[bm.std_block]),
                None => raw.x[bm.std_block].clone(),
            };
            let mut full = DMatrix::zeros(bm.dim, bm.dim);
            for (a, &i) in bm.kept.iter().enumerate() {
                for (b, &j) in bm.kept.iter().enumerate() {
                    full[(i, j)] = x[(a, b)];
                }
            }
            full
        })
        .collect();
    let scalars = form
        .map
        .scalars
        .iter()
        .map(|m| match *m {
            ScalarMap::Free(j) => raw.x_free[j],
            ScalarMap::Shifted { offset, sign, lp } => offset + sign * raw.x_lp[lp],
            ScalarMap::Fixed(v) => v,
        })
        .collect();
    (blocks, scalars)
}

fn offending_tags(form: &StandardForm, y: &DVector<f64>) -> Vec<crate::relaxation::ConstraintTag> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[b].abs().total_cmp(&y[a].abs()).then(a.cmp(&b)));
    let mut out = Vec::new();
    for i in idx {
        let tag = form.map.row_tags[i];
        if !out.contains(&tag) {
            out.push(tag);
        }
        if out.len() == 5 {
            break;
        }
    }
    out
}

/// Residuals of a standard-form point, measured on the original data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Most negative eigenvalue over the primal and dual cones (0 if inside).
    pub cone_violation: f64,
}

pub fn residuals(form: &StandardForm, raw: &RawSolution) -> Residuals {
    let m = form.n_rows();
    let mut ax = vec![0.0; m];
    let nb = form.psd_dims.len();
    let mut aty: Vec<DMatrix<f64>> = form.psd_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut atyl = vec![0.0; form.n_lp];
    let mut atyf = vec![0.0; form.n_free];
    for (i, r) in form.rows.iter().enumerate() {
        let yi = raw.y[i];
        for (b, a) in &r.psd {
            ax[i] += a.dot(&raw.x[*b]);
            for &(p, q, v) in &a.entries {
                aty[*b][(p, q)] += yi * v;
                if p != q {
                    aty[*b][(q, p)] += yi * v;
                }
            }
        }
        for &(j, v) in &r.lp {
            ax[i] += v * raw.x_lp[j];
            atyl[j] += v * yi;
        }
        for &(j, v) in &r.free {
            ax[i] += v * raw.x_free[j];
            atyf[j] += v * yi;
        }
    }
    let rp: f64 = ax.iter().zip(&form.b).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
    let mut rd2 = 0.0;
    let mut pobj = form.c0;
    let mut cone: f64 = 0.0;
    for b in 0..nb {
        let c = form.c_psd[b].to_dense();
        pobj += inner(&c, &raw.x[b]);
        rd2 += (c - &aty[b] - &raw.z[b]).norm_squared();
        for mat in [&raw.x[b], &raw.z[b]] {
            let min = SymmetricEigen::new(mat.clone()).eigenvalues.min();
            cone = cone.max(-min);
        }
    }
    for j in 0..form.n_lp {
        pobj += form.c_lp[j] * raw.x_lp[j];
        rd2 += (form.c_lp[j] - atyl[j] - raw.z_lp[j]).powi(2);
        cone = cone.max(-raw.x_lp[j]).max(-raw.z_lp[j]);
    }
    for j in 0..form.n_free {
        pobj += form.c_free[j] * raw.x_free[j];
        rd2 += (form.c_free[j] - atyf[j]).powi(2);
    }
    let dobj = form.c0 + form.b.iter().zip(&raw.y).map(|(b, y)| b * y).sum::<f64>();
    let b_norm = form.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = (form.c_psd.iter().map(|a| sparse_norm2(a)).sum::<f64>()
        + form.c_lp.iter().map(|v| v * v).sum::<f64>()
        + form.c_free.iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    Residuals {
        primal_objective: pobj,
        dual_objective: dobj,
        relative_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        primal_infeasibility: rp / (1.0 + b_norm),
        dual_infeasibility: rd2.sqrt() / (1.0 + c_norm),
        cone_violation: cone,
    }
}
