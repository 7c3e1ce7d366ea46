//! Conic problem description: PSD matrix blocks, scalar variables, and tagged
//! linear, LMI and bound constraints built from a network case.

mod build;
mod dump;
mod lift;

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

pub use build::{assemble, build_ac_block, build_coupling, build_dc_block, Builder};
pub use dump::dump_problem;
pub use lift::lift_state;

pub type BlockId = usize;
pub type ScalarId = usize;

/// Upper-triangle entries `(i, j, v)` with `i <= j` of a symmetric matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(dim: usize) -> Self {
        SparseSym {
            dim,
            entries: Vec::new(),
        }
    }

    /// Keep nonzero entries of the upper triangle of a dense symmetric matrix.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = a[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        SparseSym { dim: n, entries }
    }

    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let (i, j) = (i.min(j), i.max(j));
        let v = if i == j { 1.0 } else { 0.5 };
        SparseSym {
            dim,
            entries: vec![(i, j, v)],
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            a[(i, j)] += v;
            if i != j {
                a[(j, i)] += v;
            }
        }
        a
    }

    /// `Tr(A W)` for symmetric `W`.
    pub fn dot(&self, w: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * w[(i, i)] } else { 2.0 * v * w[(i, j)] })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merge duplicate positions and drop zeros; entries end up column-major sorted.
    pub fn canonicalize(&mut self) {
        self.entries.sort_by_key(|&(i, j, _)| (j, i));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(i, j, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => out.push((i, j, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        self.entries = out;
    }
}

/// Affine expression `constant + sum_b Tr(A_b W_b) + sum_s c_s x_s`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearExpr {
    pub constant: f64,
    pub traces: Vec<(BlockId, SparseSym)>,
    pub scalars: Vec<(ScalarId, f64)>,
}

impl LinearExpr {
    pub fn constant(c: f64) -> Self {
        LinearExpr {
            constant: c,
            ..Default::default()
        }
    }

    pub fn trace(block: BlockId, a: SparseSym) -> Self {
        LinearExpr {
            traces: vec![(block, a)],
            ..Default::default()
        }
    }

    pub fn scalar(s: ScalarId, c: f64) -> Self {
        LinearExpr {
            scalars: vec![(s, c)],
            ..Default::default()
        }
    }

    pub fn add(mut self, other: LinearExpr) -> Self {
        self.constant += other.constant;
        for (b, a) in other.traces {
            self.add_trace(b, &a, 1.0);
        }
        for (s, c) in other.scalars {
            self.add_scalar(s, c);
        }
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.constant *= k;
        for (_, a) in &mut self.traces {
            a.entries.iter_mut().for_each(|e| e.2 *= k);
        }
        self.scalars.iter_mut().for_each(|s| s.1 *= k);
        self
    }

    pub fn add_trace(&mut self, block: BlockId, a: &SparseSym, coef: f64) {
        let scaled = a.entries.iter().map(|&(i, j, v)| (i, j, coef * v));
        match self.traces.iter_mut().find(|(b, _)| *b == block) {
            Some((_, existing)) => {
                existing.entries.extend(scaled);
                existing.canonicalize();
            }
            None => {
                let mut s = SparseSym {
                    dim: a.dim,
                    entries: scaled.collect(),
                };
                s.canonicalize();
                self.traces.push((block, s));
            }
        }
    }

    pub fn add_scalar(&mut self, s: ScalarId, c: f64) {
        match self.scalars.iter_mut().find(|(id, _)| *id == s) {
            Some(e) => e.1 += c,
            None => self.scalars.push((s, c)),
        }
    }

    pub fn evaluate(&self, blocks: &[DMatrix<f64>], scalars: &[f64]) -> f64 {
        self.constant
            + self.traces.iter().map(|(b, a)| a.dot(&blocks[*b])).sum::<f64>()
            + self.scalars.iter().map(|(s, c)| c * scalars[*s]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.traces.iter().all(|(_, a)| a.is_empty()) && self.scalars.iter().all(|s| s.1 == 0.0)
    }
}

/// Which part of the model a constraint encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintRole {
    AcActiveInjection,
    AcReactiveInjection,
    AcVoltage,
    AcLineLimitFrom,
    AcLineLimitTo,
    GenCostEpigraph,
    AcPsd,
    SlackReference,
    DcInjection,
    DcVoltage,
    DcLineLimitFrom,
    DcLineLimitTo,
    DcNodalBalance,
    DcDcLoss,
    DcDcFlowLimit,
    DcPsd,
    ConverterBalance,
    ConverterCapacity,
    AuxAbsFlow,
    AuxSquareFlow,
}

impl ConstraintRole {
    pub const ALL: [ConstraintRole; 20] = [
        ConstraintRole::AcActiveInjection,
        ConstraintRole::AcReactiveInjection,
        ConstraintRole::AcVoltage,
        ConstraintRole::AcLineLimitFrom,
        ConstraintRole::AcLineLimitTo,
        ConstraintRole::GenCostEpigraph,
        ConstraintRole::AcPsd,
        ConstraintRole::SlackReference,
        ConstraintRole::DcInjection,
        ConstraintRole::DcVoltage,
        ConstraintRole::DcLineLimitFrom,
        ConstraintRole::DcLineLimitTo,
        ConstraintRole::DcNodalBalance,
        ConstraintRole::DcDcLoss,
        ConstraintRole::DcDcFlowLimit,
        ConstraintRole::DcPsd,
        ConstraintRole::ConverterBalance,
        ConstraintRole::ConverterCapacity,
        ConstraintRole::AuxAbsFlow,
        ConstraintRole::AuxSquareFlow,
    ];

    pub fn label(self) -> &'static str {
        use ConstraintRole::*;
        match self {
            AcActiveInjection => "ac_p_injection",
            AcReactiveInjection => "ac_q_injection",
            AcVoltage => "ac_voltage",
            AcLineLimitFrom => "ac_line_limit_from",
            AcLineLimitTo => "ac_line_limit_to",
            GenCostEpigraph => "gen_cost_epigraph",
            AcPsd => "ac_psd",
            SlackReference => "slack_reference",
            DcInjection => "dc_injection",
            DcVoltage => "dc_voltage",
            DcLineLimitFrom => "dc_line_limit_from",
            DcLineLimitTo => "dc_line_limit_to",
            DcNodalBalance => "dc_nodal_balance",
            DcDcLoss => "dcdc_loss",
            DcDcFlowLimit => "dcdc_flow_limit",
            DcPsd => "dc_psd",
            ConverterBalance => "converter_balance",
            ConverterCapacity => "converter_capacity",
            AuxAbsFlow => "aux_abs_flow",
            AuxSquareFlow => "aux_square_flow",
        }
    }
}

impl fmt::Display for ConstraintRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Network element a constraint belongs to, by external id where one exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Subject {
    AcBus { id: usize },
    AcLine { index: usize, from: usize, to: usize },
    Generator { index: usize, bus: usize },
    DcBus { id: usize },
    DcLine { index: usize, from: usize, to: usize },
    AcDcConverter { index: usize },
    DcDcConverter { index: usize },
    Block { index: BlockId },
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::AcBus { id } => write!(f, "ac_bus {id}"),
            Subject::AcLine { index, from, to } => write!(f, "ac_line #{index} {from}->{to}"),
            Subject::Generator { index, bus } => write!(f, "generator #{index} at bus {bus}"),
            Subject::DcBus { id } => write!(f, "dc_bus {id}"),
            Subject::DcLine { index, from, to } => write!(f, "dc_line #{index} {from}->{to}"),
            Subject::AcDcConverter { index } => write!(f, "acdc_converter #{index}"),
            Subject::DcDcConverter { index } => write!(f, "dcdc_converter #{index}"),
            Subject::Block { index } => write!(f, "block {index}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstraintTag {
    pub role: ConstraintRole,
    pub subject: Subject,
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.role, self.subject)
    }
}

/// Whether an LMI asks for `F >= 0` or `F <= 0` in the semidefinite order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiSense {
    Psd,
    Nsd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `lower <= expr <= upper`; equal bounds make an equality.
    Linear {
        expr: LinearExpr,
        lower: Option<f64>,
        upper: Option<f64>,
    },
    /// Affine symmetric matrix given by its upper-triangle entries; absent entries are zero.
    Lmi {
        dim: usize,
        sense: LmiSense,
        entries: Vec<(usize, usize, LinearExpr)>,
    },
    ScalarBound {
        scalar: ScalarId,
        lower: Option<f64>,
        upper: Option<f64>,
    },
    Psd {
        block: BlockId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub tag: ConstraintTag,
    pub kind: ConstraintKind,
}

impl Constraint {
    /// Signed violation at a point: positive means violated. LMIs report the
    /// most negative eigenvalue of `F` (or of `-F`), negated.
    pub fn violation(&self, blocks: &[DMatrix<f64>], scalars: &[f64]) -> f64 {
        let bound_gap = |v: f64, lo: Option<f64>, hi: Option<f64>| {
            let a = lo.map_or(f64::NEG_INFINITY, |l| l - v);
            let b = hi.map_or(f64::NEG_INFINITY, |h| v - h);
            a.max(b)
        };
        match &self.kind {
            ConstraintKind::Linear { expr, lower, upper } => {
                bound_gap(expr.evaluate(blocks, scalars), *lower, *upper)
            }
            ConstraintKind::ScalarBound { scalar, lower, upper } => bound_gap(scalars[*scalar], *lower, *upper),
            ConstraintKind::Lmi { dim, sense, entries } => {
                let mut f = DMatrix::zeros(*dim, *dim);
                for (i, j, e) in entries {
                    let v = e.evaluate(blocks, scalars);
                    f[(*i, *j)] = v;
                    f[(*j, *i)] = v;
                }
                if *sense == LmiSense::Nsd {
                    f = -f;
                }
                -f.symmetric_eigenvalues().min()
            }
            ConstraintKind::Psd { block } => -blocks[*block].clone().symmetric_eigenvalues().min(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
}

/// Where the model quantities live inside a [`ConicProblem`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    pub ac_block: Option<BlockId>,
    pub dc_block: Option<BlockId>,
    /// Cost epigraph variable per generator.
    pub gen_cost: Vec<ScalarId>,
    /// Per DC/DC converter: power transfer `q`, terminal loss `s`, and the
    /// auxiliaries for `q^2` and `|q|`.
    pub dcdc_q: Vec<ScalarId>,
    pub dcdc_s: Vec<ScalarId>,
    pub dcdc_t: Vec<ScalarId>,
    pub dcdc_u: Vec<ScalarId>,
    /// Explicit injection variable for DC buses that terminate a DC/DC converter.
    pub dc_injection: Vec<Option<ScalarId>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub name: String,
    pub blocks: Vec<PsdBlock>,
    pub scalars: Vec<String>,
    pub objective: LinearExpr,
    pub constraints: Vec<Constraint>,
    pub layout: Layout,
}

impl ConicProblem {
    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> BlockId {
        self.blocks.push(PsdBlock {
            name: name.into(),
            dim,
        });
        self.blocks.len() - 1
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarId {
        self.scalars.push(name.into());
        self.scalars.len() - 1
    }

    pub fn push(&mut self, role: ConstraintRole, subject: Subject, kind: ConstraintKind) {
        self.constraints.push(Constraint {
            tag: ConstraintTag { role, subject },
            kind,
        });
    }

    pub fn objective_value(&self, blocks: &[DMatrix<f64>], scalars: &[f64]) -> f64 {
        self.objective.evaluate(blocks, scalars)
    }

    /// Largest violation over all constraints.
    pub fn max_violation(&self, blocks: &[DMatrix<f64>], scalars: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.violation(blocks, scalars))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn count_role(&self, role: ConstraintRole) -> usize {
        self.constraints.iter().filter(|c| c.tag.role == role).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_dot_matches_dense_trace() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -1.0, 0.5, 0.0, 0.5, 3.0]);
        let w = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.3, 0.1, 1.0, -0.2, 0.3, -0.2, 4.0]);
        let s = SparseSym::from_dense(&a);
        let dense: f64 = (&a * &w).trace();
        assert!((s.dot(&w) - dense).abs() < 1e-14);
        assert_eq!(s.to_dense(), a);
    }

    #[test]
    fn unit_picks_entry() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 7.0, 7.0, 2.0]);
        assert_eq!(SparseSym::unit(2, 1, 0).dot(&w), 7.0);
        assert_eq!(SparseSym::unit(2, 1, 1).dot(&w), 2.0);
    }

    #[test]
    fn expression_merges_terms() {
        let mut e = LinearExpr::trace(0, SparseSym::unit(2, 0, 0));
        e.add_trace(0, &SparseSym::unit(2, 0, 0), -1.0);
        e.add_scalar(3, 1.0);
        e.add_scalar(3, -1.0);
        assert!(e.is_constant());
    }
}
