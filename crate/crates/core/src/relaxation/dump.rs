//! Line-oriented text export of a [`ConicProblem`]. The layout is described in
//! `docs/problem-dump.md`; output is byte-identical for identical input.

use std::fmt::Write as _;

use super::{ConicProblem, ConstraintKind, LinearExpr, LmiSense};

fn bound(v: Option<f64>, missing: &str) -> String {
    v.map_or_else(|| missing.to_string(), |x| format!("{x:?}"))
}

fn write_expr(out: &mut String, indent: &str, e: &LinearExpr) {
    if e.constant != 0.0 {
        let _ = writeln!(out, "{indent}const {:?}", e.constant);
    }
    for (b, a) in &e.traces {
        for &(i, j, v) in &a.entries {
            let _ = writeln!(out, "{indent}trace {b} {i} {j} {v:?}");
        }
    }
    for (s, c) in &e.scalars {
        if *c != 0.0 {
            let _ = writeln!(out, "{indent}scalar {s} {c:?}");
        }
    }
}

pub fn dump_problem(p: &ConicProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem {}", p.name);
    for (i, b) in p.blocks.iter().enumerate() {
        let _ = writeln!(out, "block {i} {} dim {}", b.name, b.dim);
    }
    for (i, s) in p.scalars.iter().enumerate() {
        let _ = writeln!(out, "scalar {i} {s}");
    }
    let _ = writeln!(out, "objective");
    write_expr(&mut out, "  ", &p.objective);
    for (i, c) in p.constraints.iter().enumerate() {
        let _ = writeln!(out, "constraint {i} {} {}", c.tag.role, c.tag.subject);
        match &c.kind {
            ConstraintKind::Linear { expr, lower, upper } => {
                let _ = writeln!(out, "  linear {} {}", bound(*lower, "-inf"), bound(*upper, "inf"));
                write_expr(&mut out, "    ", expr);
            }
            ConstraintKind::ScalarBound { scalar, lower, upper } => {
                let _ = writeln!(
                    out,
                    "  bound {scalar} {} {}",
                    bound(*lower, "-inf"),
                    bound(*upper, "inf")
                );
            }
            ConstraintKind::Lmi { dim, sense, entries } => {
                let s = match sense {
                    LmiSense::Psd => "psd",
                    LmiSense::Nsd => "nsd",
                };
                let _ = writeln!(out, "  lmi {dim} {s}");
                for (i, j, e) in entries {
                    let _ = writeln!(out, "  entry {i} {j}");
                    write_expr(&mut out, "    ", e);
                }
            }
            ConstraintKind::Psd { block } => {
                let _ = writeln!(out, "  psd {block}");
            }
        }
    }
    out
}
