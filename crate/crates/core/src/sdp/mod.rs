//! Primal-dual interior-point solver for the mixed PSD / LP / free-variable
//! problems produced by [`compile`].

mod compile;
mod ipm;
pub mod linalg;
mod presolve;

use nalgebra::DMatrix;
use serde::Serialize;

pub use compile::{compile, Anchor, BlockMap, CompileMap, ScalarMap, StandardForm, StdRow};
pub use ipm::{residuals, solve, Residuals};

use crate::error::Result;
use crate::relaxation::{ConicProblem, ConstraintTag, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    /// Relative duality gap target.
    pub gap_tol: f64,
    /// Relative primal and dual residual target.
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
            step_fraction: 0.9,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mu: f64,
    pub primal_step: f64,
    pub dual_step: f64,
}

/// Standard-form primal and dual variables in original units.
#[derive(Debug, Clone, Default)]
pub struct RawSolution {
    pub x: Vec<DMatrix<f64>>,
    pub x_lp: Vec<f64>,
    pub x_free: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub z_lp: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Problem blocks at full size (presolved indices restored as zeros).
    pub blocks: Vec<DMatrix<f64>>,
    pub scalars: Vec<f64>,
    pub raw: RawSolution,
    /// For infeasible problems: constraints carrying the largest certificate weight.
    pub offending: Vec<ConstraintTag>,
    pub log: Vec<IterationLog>,
    pub solve_seconds: f64,
}

impl ConicSolution {
    pub fn w_ac<'a>(&'a self, layout: &Layout) -> Option<&'a DMatrix<f64>> {
        layout.ac_block.map(|b| &self.blocks[b])
    }

    pub fn w_dc<'a>(&'a self, layout: &Layout) -> Option<&'a DMatrix<f64>> {
        layout.dc_block.map(|b| &self.blocks[b])
    }
}

/// Compile and solve a conic problem.
pub fn solve_problem(problem: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution> {
    let form = compile(problem)?;
    solve(&form, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxation::{ConstraintKind, ConstraintRole, LinearExpr, LmiSense, SparseSym, Subject};

    const ROLE: ConstraintRole = ConstraintRole::DcVoltage;
    const SUBJ: Subject = Subject::DcBus { id: 1 };

    fn eq(expr: LinearExpr, v: f64) -> ConstraintKind {
        ConstraintKind::Linear {
            expr,
            lower: Some(v),
            upper: Some(v),
        }
    }

    #[test]
    fn smallest_eigenvalue() {
        let mut p = ConicProblem::default();
        let b = p.add_block("X", 2);
        let mut tr = SparseSym::new(2);
        tr.entries = vec![(0, 0, 1.0), (1, 1, 1.0)];
        p.push(ROLE, SUBJ, eq(LinearExpr::trace(b, tr), 1.0));
        let mut c = SparseSym::new(2);
        c.entries = vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)];
        p.objective = LinearExpr::trace(b, c);
        let sol = solve_problem(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expected = (5.0 - 5f64.sqrt()) / 2.0;
        assert!((sol.primal_objective - expected).abs() < 1e-7, "{}", sol.primal_objective);
    }

    #[test]
    fn free_scalar_in_lmi() {
        // min t  s.t.  [[t, 1], [1, 1]] >= 0
        let mut p = ConicProblem::default();
        let t = p.add_scalar("t");
        p.push(
            ROLE,
            SUBJ,
            ConstraintKind::Lmi {
                dim: 2,
                sense: LmiSense::Psd,
                entries: vec![
                    (0, 0, LinearExpr::scalar(t, 1.0)),
                    (0, 1, LinearExpr::constant(1.0)),
                    (1, 1, LinearExpr::constant(1.0)),
                ],
            },
        );
        p.objective = LinearExpr::scalar(t, 1.0);
        let sol = solve_problem(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.scalars[t] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn bounded_scalars() {
        // min x + 2y  s.t. x + y = 1, 0 <= x <= 0.7, y >= 0
        let mut p = ConicProblem::default();
        let x = p.add_scalar("x");
        let y = p.add_scalar("y");
        p.push(
            ROLE,
            SUBJ,
            ConstraintKind::ScalarBound {
                scalar: x,
                lower: Some(0.0),
                upper: Some(0.7),
            },
        );
        p.push(
            ROLE,
            SUBJ,
            ConstraintKind::ScalarBound {
                scalar: y,
                lower: Some(0.0),
                upper: None,
            },
        );
        p.push(ROLE, SUBJ, eq(LinearExpr::scalar(x, 1.0).add(LinearExpr::scalar(y, 1.0)), 1.0));
        p.objective = LinearExpr::scalar(x, 1.0).add(LinearExpr::scalar(y, 2.0));
        let sol = solve_problem(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_objective - 1.3).abs() < 1e-7);
        let form = compile(&p).unwrap();
        let r = residuals(&form, &sol.raw);
        assert!(r.relative_gap <= 1e-8 && r.primal_infeasibility <= 1e-8 && r.dual_infeasibility <= 1e-8);
    }

    #[test]
    fn infeasible_is_detected() {
        // X >= 0 with X_00 = -1
        let mut p = ConicProblem::default();
        let b = p.add_block("X", 2);
        p.push(ROLE, SUBJ, eq(LinearExpr::trace(b, SparseSym::unit(2, 0, 0)), -1.0));
        p.push(ROLE, SUBJ, eq(LinearExpr::trace(b, SparseSym::unit(2, 1, 1)), 1.0));
        let sol = solve_problem(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(!sol.offending.is_empty());
    }

    #[test]
    fn unbounded_is_detected() {
        // min -x  s.t. x - y = 0, x, y >= 0
        let mut p = ConicProblem::default();
        let x = p.add_scalar("x");
        let y = p.add_scalar("y");
        for s in [x, y] {
            p.push(
                ROLE,
                SUBJ,
                ConstraintKind::ScalarBound {
                    scalar: s,
                    lower: Some(0.0),
                    upper: None,
                },
            );
        }
        p.push(ROLE, SUBJ, eq(LinearExpr::scalar(x, 1.0).add(LinearExpr::scalar(y, -1.0)), 0.0));
        p.objective = LinearExpr::scalar(x, -1.0);
        let sol = solve_problem(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }
}
