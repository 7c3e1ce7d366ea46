//! Lowering of a [`ConicProblem`] to the primal standard form
//!
//! ```text
//! min  sum_b <C_b, X_b> + c_l' x_l + c_f' x_f + c0
//! s.t. sum_b <A_ib, X_b> + a_il' x_l + f_i' x_f = b_i
//!      X_b PSD, x_l >= 0, x_f free
//! ```
//!
//! Scalars with bounds become shifted nonnegative variables, range constraints
//! get slack variables, every LMI gets its own PSD slack block. A block index
//! pinned to zero by a single diagonal equality is removed from the block
//! before anything else is lowered. A block with an index pinned to a positive
//! value is rewritten in a basis anchored at that index (see [`Anchor`]).

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::relaxation::{ConicProblem, ConstraintKind, ConstraintTag, LinearExpr, LmiSense, SparseSym};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StdRow {
    pub psd: Vec<(usize, SparseSym)>,
    pub lp: Vec<(usize, f64)>,
    pub free: Vec<(usize, f64)>,
}

impl StdRow {
    fn is_empty(&self) -> bool {
        self.psd.iter().all(|(_, a)| a.is_empty())
            && self.lp.iter().all(|e| e.1 == 0.0)
            && self.free.iter().all(|e| e.1 == 0.0)
    }

    fn add_psd(&mut self, block: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>, dim: usize) {
        let pos = match self.psd.iter().position(|(b, _)| *b == block) {
            Some(p) => p,
            None => {
                self.psd.push((block, SparseSym::new(dim)));
                self.psd.len() - 1
            }
        };
        self.psd[pos].1.entries.extend(entries);
    }

    fn add_lp(&mut self, j: usize, c: f64) {
        match self.lp.iter_mut().find(|e| e.0 == j) {
            Some(e) => e.1 += c,
            None => self.lp.push((j, c)),
        }
    }

    fn add_free(&mut self, j: usize, c: f64) {
        match self.free.iter_mut().find(|e| e.0 == j) {
            Some(e) => e.1 += c,
            None => self.free.push((j, c)),
        }
    }

    fn finish(&mut self) {
        for (_, a) in &mut self.psd {
            a.canonicalize();
        }
        self.psd.retain(|(_, a)| !a.is_empty());
        self.psd.sort_by_key(|(b, _)| *b);
        self.lp.retain(|e| e.1 != 0.0);
        self.lp.sort_by_key(|e| e.0);
        self.free.retain(|e| e.1 != 0.0);
        self.free.sort_by_key(|e| e.0);
    }
}

/// How a problem block appears in the standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMap {
    pub std_block: usize,
    pub dim: usize,
    /// Original indices kept, in order; the rest are identically zero.
    pub kept: Vec<usize>,
    pub anchor: Option<Anchor>,
}

/// Congruence `W = T W' T^T` on the kept indices, with `T e_a = 1` and
/// `T e_k = scale * e_k` for `k != a`: each voltage is written as the anchor
/// voltage plus a scaled deviation. When all entries of `W` are close to each
/// other (a stiff DC grid around a fixed master voltage) the physically
/// relevant differences are otherwise lost to cancellation inside the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    /// Position within `kept`.
    pub index: usize,
    pub scale: f64,
}

impl Anchor {
    /// Row `i` of `T` as sparse `(column, value)` pairs.
    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> {
        let dev = (i != self.index).then_some((i, self.scale));
        std::iter::once((self.index, 1.0)).chain(dev)
    }

    /// Entries of `T^T A T` for the symmetric matrix given by `entries`.
    fn transform(&self, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, j, v) in entries {
            for (p, tp) in self.row(i) {
                for (q, tq) in self.row(j) {
                    let w = v * tp * tq;
                    if i == j {
                        // (p, q) and (q, p) both appear in the double loop
                        if p <= q {
                            out.push((p, q, w));
                        }
                    } else if p == q {
                        out.push((p, p, 2.0 * w));
                    } else {
                        out.push((p.min(q), p.max(q), w));
                    }
                }
            }
        }
        let mut a = SparseSym { dim: 0, entries: out };
        a.canonicalize();
        let big = a.entries.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
        a.entries.retain(|e| e.2.abs() > 1e-14 * big);
        a.entries
    }

    /// `T W' T^T`.
    pub fn expand(&self, w: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        let n = w.nrows();
        let t = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if j == self.index {
                1.0
            } else if i == j {
                self.scale
            } else {
                0.0
            }
        });
        let mut out = &t * w * t.transpose();
        super::linalg::symmetrize(&mut out);
        out
    }
}

/// How a problem scalar is recovered from standard-form variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarMap {
    Free(usize),
    /// `offset + sign * x_l[lp]`
    Shifted { offset: f64, sign: f64, lp: usize },
    Fixed(f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompileMap {
    pub blocks: Vec<BlockMap>,
    pub scalars: Vec<ScalarMap>,
    /// Originating constraint of each row.
    pub row_tags: Vec<ConstraintTag>,
    /// Constraints consumed by presolve (zero-diagonal pins).
    pub eliminated: Vec<usize>,
    /// `(constraint index, std block)` for each LMI slack block.
    pub lmi_blocks: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardForm {
    pub psd_dims: Vec<usize>,
    pub n_lp: usize,
    pub n_free: usize,
    pub c_psd: Vec<SparseSym>,
    pub c_lp: Vec<f64>,
    pub c_free: Vec<f64>,
    pub c0: f64,
    pub rows: Vec<StdRow>,
    pub b: Vec<f64>,
    pub map: CompileMap,
}

impl StandardForm {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Barrier parameter: sum of PSD orders plus the LP dimension.
    pub fn degree(&self) -> usize {
        self.psd_dims.iter().sum::<usize>() + self.n_lp
    }
}

struct Lowering {

    form: StandardForm,
    reindex: Vec<Vec<Option<usize>>>,
}

impl Lowering {
    fn new_lp(&mut self) -> usize {
        self.form.n_lp += 1;
        self.form.c_lp.push(0.0);
        self.form.n_lp - 1
    }

    fn new_free(&mut self) -> usize {
        self.form.n_free += 1;
        self.form.c_free.push(0.0);
        self.form.n_free - 1
    }

    fn new_block(&mut self, dim: usize) -> usize {
        self.form.psd_dims.push(dim);
        self.form.c_psd.push(SparseSym::new(dim));
        self.form.psd_dims.len() - 1
    }

    /// Variable part of `expr` as a row, plus its constant.
    fn lower(&self, expr: &LinearExpr, scale: f64) -> (StdRow, f64) {
        let mut row = StdRow::default();
        let mut constant = scale * expr.constant;
        for (b, a) in &expr.traces {
            let bm = &self.form.map.blocks[*b];
            let idx = &self.reindex[*b];
            let entries = a.entries.iter().filter_map(|&(i, j, v)| match (idx[i], idx[j]) {
                (Some(ni), Some(nj)) => Some((ni.min(nj), ni.max(nj), scale * v)),
                _ => None,
            });
            match &bm.anchor {
                Some(t) => row.add_psd(bm.std_block, t.transform(entries), bm.kept.len()),
                None => row.add_psd(bm.std_block, entries, bm.kept.len()),
            }
        }
        for &(s, c) in &expr.scalars {
            let c = scale * c;
            match self.form.map.scalars[s] {
                ScalarMap::Free(j) => row.add_free(j, c),
                ScalarMap::Shifted { offset, sign, lp } => {
                    row.add_lp(lp, sign * c);
                    constant += c * offset;
                }
                ScalarMap::Fixed(v) => constant += c * v,
            }
        }
        (row, constant)
    }

    fn push_row(&mut self, mut row: StdRow, rhs: f64, tag: ConstraintTag) -> Result<()> {
        row.finish();
        if row.is_empty() {
            if rhs.abs() > 1e-9 * (1.0 + rhs.abs()) {
                return Err(Error::Compile(format!(
                    "constraint {tag} reduces to 0 = {rhs:e} after presolve"
                )));
            }
            return Ok(());
        }
        self.form.rows.push(row);
        self.form.b.push(rhs);
        self.form.map.row_tags.push(tag);
        Ok(())
    }

    /// `lower <= row + constant <= upper`.
    fn push_range(
        &mut self,
        row: StdRow,
        constant: f64,
        lower: Option<f64>,
        upper: Option<f64>,
        tag: ConstraintTag,
    ) -> Result<()> {
        match (lower, upper) {
            (Some(l), Some(u)) if l == u => self.push_row(row, l - constant, tag),
            (Some(l), Some(u)) => {
                if l > u {
                    return Err(Error::Compile(format!("constraint {tag} has lower bound above upper")));
                }
                let (s1, s2) = (self.new_lp(), self.new_lp());
                let mut r = row;
                r.add_lp(s1, -1.0);
                self.push_row(r, l - constant, tag)?;
                let mut w = StdRow::default();
                w.add_lp(s1, 1.0);
                w.add_lp(s2, 1.0);
                self.push_row(w, u - l, tag)
            }
            (Some(l), None) => {
                let s = self.new_lp();
                let mut r = row;
                r.add_lp(s, -1.0);
                self.push_row(r, l - constant, tag)
            }
            (None, Some(u)) => {
                let s = self.new_lp();
                let mut r = row;
                r.add_lp(s, 1.0);
                self.push_row(r, u - constant, tag)
            }
            (None, None) => Ok(()),
        }
    }
}

/// Indices `(block, i)` fixed to zero by `W_b[i, i] = 0` equalities, and the
/// constraints that state them.
fn zero_pins(problem: &ConicProblem) -> (BTreeSet<(usize, usize)>, Vec<usize>) {
    let mut pins = BTreeSet::new();
    let mut used = Vec::new();
    for (ci, c) in problem.constraints.iter().enumerate() {
        let ConstraintKind::Linear {
            expr,
            lower: Some(l),
            upper: Some(u),
        } = &c.kind
        else {
            continue;
        };
        if l != u || expr.scalars.iter().any(|s| s.1 != 0.0) {
            continue;
        }
        let traces: Vec<_> = expr.traces.iter().filter(|(_, a)| !a.is_empty()).collect();
        if let [(b, a)] = traces.as_slice() {
            if let [(i, j, v)] = a.entries.as_slice() {
                if i == j && *v != 0.0 && (l - expr.constant) == 0.0 {
                    pins.insert((*b, *i));
                    used.push(ci);
                }
            }
        }
    }
    (pins, used)
}

/// First index of each block fixed to a positive value by a diagonal equality.
fn anchors(problem: &ConicProblem) -> Vec<Option<usize>> {
    let mut out = vec![None; problem.blocks.len()];
    for c in &problem.constraints {
        let ConstraintKind::Linear {
            expr,
            lower: Some(l),
            upper: Some(u),
        } = &c.kind
        else {
            continue;
        };
        if l != u || expr.scalars.iter().any(|s| s.1 != 0.0) {
            continue;
        }
        let traces: Vec<_> = expr.traces.iter().filter(|(_, a)| !a.is_empty()).collect();
        if let [(b, a)] = traces.as_slice() {
            if let [(i, j, v)] = a.entries.as_slice() {
                if i == j && (l - expr.constant) / v > 0.0 && out[*b].is_none() {
                    out[*b] = Some(*i);
                }
            }
        }
    }
    out
}

/// Deviation scale of an anchored block: the reciprocal square root of the
/// largest coefficient magnitude touching the block, so that a unit deviation
/// variable carries O(1) power.
fn anchor_scale(problem: &ConicProblem, block: usize) -> f64 {
    let exprs = problem.constraints.iter().filter_map(|c| match &c.kind {
        ConstraintKind::Linear { expr, .. } => Some(expr),
        _ => None,
    });
    let big = exprs
        .chain(std::iter::once(&problem.objective))
        .flat_map(|e| e.traces.iter())
        .filter(|(b, _)| *b == block)
        .flat_map(|(_, a)| a.entries.iter().map(|e| e.2.abs()))
        .fold(1.0f64, f64::max);
    1.0 / big.sqrt()
}

pub fn compile(problem: &ConicProblem) -> Result<StandardForm> {
    let (pins, eliminated) = zero_pins(problem);
    let anchor_at = anchors(problem);
    let mut low = Lowering {
        form: StandardForm::default(),
        reindex: Vec::new(),
    };

    for (b, block) in problem.blocks.iter().enumerate() {
        let kept: Vec<usize> = (0..block.dim).filter(|i| !pins.contains(&(b, *i))).collect();
        let mut idx = vec![None; block.dim];
        for (new, &old) in kept.iter().enumerate() {
            idx[old] = Some(new);
        }
        if kept.is_empty() {
            return Err(Error::Compile(format!("block {} is pinned to zero", block.name)));
        }
        let anchor = anchor_at[b].and_then(|a| idx[a]).filter(|_| kept.len() > 1).map(|index| Anchor {
            index,
            scale: anchor_scale(problem, b),
        });
        let std_block = low.new_block(kept.len());
        low.form.map.blocks.push(BlockMap {
            std_block,
            dim: block.dim,
            kept,
            anchor,
        });
        low.reindex.push(idx);
    }
    low.form.map.eliminated = eliminated.clone();

    // scalar bounds
    let n_s = problem.scalars.len();
    let mut lo = vec![f64::NEG_INFINITY; n_s];
    let mut hi = vec![f64::INFINITY; n_s];
    let mut bound_tag: Vec<Option<ConstraintTag>> = vec![None; n_s];
    for c in &problem.constraints {
        if let ConstraintKind::ScalarBound { scalar, lower, upper } = &c.kind {
            if *scalar >= n_s {
                return Err(Error::Compile(format!("constraint {} names a missing scalar", c.tag)));
            }
            if let Some(l) = lower {
                lo[*scalar] = lo[*scalar].max(*l);
            }
            if let Some(u) = upper {
                hi[*scalar] = hi[*scalar].min(*u);
            }
            bound_tag[*scalar].get_or_insert(c.tag);
        }
    }
    let mut range_rows = Vec::new();
    for s in 0..n_s {
        let (l, u) = (lo[s], hi[s]);
        let map = if l > u {
            return Err(Error::Compile(format!(
                "scalar {} has empty bounds [{l}, {u}]",
                problem.scalars[s]
            )));
        } else if l == u {
            ScalarMap::Fixed(l)
        } else if l.is_finite() {
            let lp = low.new_lp();
            if u.is_finite() {
                range_rows.push((lp, u - l, bound_tag[s].expect("bounded scalar has a tag")));
            }
            ScalarMap::Shifted {
                offset: l,
                sign: 1.0,
                lp,
            }
        } else if u.is_finite() {
            ScalarMap::Shifted {
                offset: u,
                sign: -1.0,
                lp: low.new_lp(),
            }
        } else {
            ScalarMap::Free(low.new_free())
        };
        low.form.map.scalars.push(map);
    }
    for (lp, width, tag) in range_rows {
        let s2 = low.new_lp();
        let mut r = StdRow::default();
        r.add_lp(lp, 1.0);
        r.add_lp(s2, 1.0);
        low.push_row(r, width, tag)?;
    }

    for (ci, c) in problem.constraints.iter().enumerate() {
        if eliminated.contains(&ci) {
            continue;
        }
        match &c.kind {
            ConstraintKind::Linear { expr, lower, upper } => {
                let (row, k) = low.lower(expr, 1.0);
                low.push_range(row, k, *lower, *upper, c.tag)?;
            }
            ConstraintKind::Lmi { dim, sense, entries } => {
                let sign = match sense {
                    LmiSense::Psd => 1.0,
                    LmiSense::Nsd => -1.0,
                };
                if *dim == 1 {
                    let zero = LinearExpr::default();
                    let e = entries.iter().find(|(i, j, _)| *i == 0 && *j == 0).map_or(&zero, |e| &e.2);
                    let (row, k) = low.lower(e, sign);
                    low.push_range(row, k, Some(0.0), None, c.tag)?;
                    continue;
                }
                let blk = low.new_block(*dim);
                low.form.map.lmi_blocks.push((ci, blk));
                for j in 0..*dim {
                    for i in 0..=j {
                        // Z_ij - sign * F_ij(x) = sign * F_ij(0)
                        let e = entries
                            .iter()
                            .filter(|(a, b, _)| (*a.min(b), *a.max(b)) == (i, j))
                            .fold(LinearExpr::default(), |acc, (_, _, e)| acc.add(e.clone()));
                        let (mut row, k) = low.lower(&e, -sign);
                        let v = if i == j { 1.0 } else { 0.5 };
                        row.add_psd(blk, [(i, j, v)], *dim);
                        low.push_row(row, -k, c.tag)?;
                    }
                }
            }
            ConstraintKind::ScalarBound { .. } | ConstraintKind::Psd { .. } => {}
        }
    }

    let (obj, k) = low.lower(&problem.objective, 1.0);
    low.form.c0 = k;
    for (b, a) in obj.psd {
        let mut a = a;
        a.canonicalize();
        low.form.c_psd[b] = a;
    }
    for (j, c) in obj.lp {
        low.form.c_lp[j] += c;
    }
    for (j, c) in obj.free {
        low.form.c_free[j] += c;
    }
    Ok(low.form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxation::{ConstraintRole, Subject};

    fn tag() -> (ConstraintRole, Subject) {
        (ConstraintRole::DcVoltage, Subject::DcBus { id: 1 })
    }

    #[test]
    fn range_adds_two_slacks() {
        let mut p = ConicProblem::default();
        let b = p.add_block("W", 2);
        let (r, s) = tag();
        p.push(
            r,
            s,
            ConstraintKind::Linear {
                expr: LinearExpr::trace(b, SparseSym::unit(2, 0, 0)),
                lower: Some(0.81),
                upper: Some(1.21),
            },
        );
        let f = compile(&p).unwrap();
        assert_eq!(f.n_rows(), 2);
        assert_eq!(f.n_lp, 2);
        assert_eq!(f.b[0], 0.81);
        assert!((f.b[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_pin_removes_index() {
        let mut p = ConicProblem::default();
        let b = p.add_block("W", 3);
        let (r, s) = tag();
        p.push(
            r,
            s,
            ConstraintKind::Linear {
                expr: LinearExpr::trace(b, SparseSym::unit(3, 2, 2)),
                lower: Some(0.0),
                upper: Some(0.0),
            },
        );
        p.push(
            r,
            s,
            ConstraintKind::Linear {
                expr: LinearExpr::trace(b, SparseSym::unit(3, 0, 2)),
                lower: Some(1.0),
                upper: Some(1.0),
            },
        );
        // the second row now reads 0 = 1
        assert!(matches!(compile(&p), Err(Error::Compile(_))));
        p.constraints.pop();
        let f = compile(&p).unwrap();
        assert_eq!(f.psd_dims, vec![2]);
        assert_eq!(f.map.eliminated, vec![0]);
        assert_eq!(f.n_rows(), 0);
    }

    #[test]
    fn lmi_gets_slack_block() {
        let mut p = ConicProblem::default();
        let x = p.add_scalar("x");
        let (r, s) = tag();
        p.push(
            r,
            s,
            ConstraintKind::Lmi {
                dim: 2,
                sense: LmiSense::Psd,
                entries: vec![
                    (0, 0, LinearExpr::scalar(x, 1.0)),
                    (1, 1, LinearExpr::constant(1.0)),
                ],
            },
        );
        let f = compile(&p).unwrap();
        assert_eq!(f.psd_dims, vec![2]);
        assert_eq!(f.n_free, 1);
        // (0,0), (0,1), (1,1)
        assert_eq!(f.n_rows(), 3);
        assert_eq!(f.b, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn anchored_basis_preserves_traces() {
        let t = Anchor { index: 1, scale: 0.03 };
        let a = SparseSym {
            dim: 3,
            entries: vec![(0, 0, 2.0), (0, 1, -0.7), (1, 2, 1.3), (2, 2, 0.4), (0, 2, 5.0)],
        };
        let w2 = nalgebra::DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 0.9]);
        let transformed = SparseSym {
            dim: 3,
            entries: t.transform(a.entries.iter().copied()),
        };
        let direct = a.dot(&t.expand(&w2));
        assert!((transformed.dot(&w2) - direct).abs() < 1e-13 * direct.abs().max(1.0));
    }

    #[test]
    fn positive_pin_anchors_block() {
        let mut p = ConicProblem::default();
        let b = p.add_block("W", 3);
        let (r, s) = tag();
        p.push(
            r,
            s,
            ConstraintKind::Linear {
                expr: LinearExpr::trace(b, SparseSym::unit(3, 1, 1)),
                lower: Some(0.9604),
                upper: Some(0.9604),
            },
        );
        let f = compile(&p).unwrap();
        let anchor = f.map.blocks[0].anchor.expect("anchored");
        assert_eq!(anchor.index, 1);
        // the pin still reads W'_11 = 0.9604 in the new basis
        assert_eq!(f.rows[0].psd[0].1.entries, vec![(1, 1, 1.0)]);
    }
}
